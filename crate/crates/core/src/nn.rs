//! Dense feed-forward networks with reverse-mode gradients.
//!
//! A [`Network`] is a chain of affine layers, each followed by an elementwise
//! activation. [`Network::forward`] records every pre- and post-activation
//! value on a [`GradientTape`]; [`Network::backward`] replays the tape to
//! produce exact parameter and input gradients for any output cotangent.
//!
//! Panics vs. errors: shape mismatches and stale tapes are programmer errors
//! and panic. Invalid layer data (dimension conflicts, non-finite weights,
//! inverted clamp bounds) is rejected with [`NetworkError`] because it
//! typically arrives from files.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, Matrix};

/// Elementwise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// `z.clamp(lo, hi)`; requires `lo < hi`.
    Clamp { lo: f64, hi: f64 },
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Clamp { lo, hi } => z.clamp(lo, hi),
            Activation::Identity => z,
        }
    }

    /// Subgradient of [`Activation::apply`]; 0 is chosen at every kink
    /// (ReLU at 0, clamp at either bound).
    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Clamp { lo, hi } => {
                if z > lo && z < hi {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// True for activations with kinks (ReLU, clamp).
    pub fn is_piecewise(&self) -> bool {
        !matches!(self, Activation::Identity)
    }
}

/// Reasons a layer or network cannot be constructed.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkError {
    /// `detail` names the offending dimensions.
    DimensionMismatch { detail: String },
    /// A weight, bias, or clamp bound is NaN or infinite.
    NonFinite { layer: usize },
    /// Clamp bounds must satisfy `lo < hi`.
    InvalidClamp { lo: f64, hi: f64 },
    /// A network needs at least one layer.
    Empty,
}

impl core::fmt::Display for NetworkError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NetworkError::DimensionMismatch { detail } => write!(f, "dimension mismatch: {detail}"),
            NetworkError::NonFinite { layer } => write!(f, "layer {layer} has a non-finite parameter"),
            NetworkError::InvalidClamp { lo, hi } => write!(f, "clamp bounds [{lo}, {hi}] are not an interval"),
            NetworkError::Empty => write!(f, "network has no layers"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NetworkError {}

/// One affine layer (`out = act(W x + b)`) with `W` stored row-major, one
/// row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) weights: Matrix,
    pub(crate) bias: Vec<f64>,
    pub(crate) activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Layer, NetworkError> {
        if weights.rows() != bias.len() {
            return Err(NetworkError::DimensionMismatch {
                detail: alloc::format!("{} weight rows vs {} bias entries", weights.rows(), bias.len()),
            });
        }
        if let Activation::Clamp { lo, hi } = activation {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(NetworkError::NonFinite { layer: 0 });
            }
            if lo >= hi {
                return Err(NetworkError::InvalidClamp { lo, hi });
            }
        }
        if !linalg::all_finite(weights.data()) || !linalg::all_finite(&bias) {
            return Err(NetworkError::NonFinite { layer: 0 });
        }
        Ok(Layer { weights, bias, activation })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Everything [`Network::backward`] needs from one forward pass: the input
/// and every layer's pre- and post-activation vector.
#[derive(Debug, Clone)]
pub struct GradientTape {
    input: Vec<f64>,
    /// `pre[l]` is `W_l a_{l-1} + b_l`.
    pre: Vec<Vec<f64>>,
    /// `post[l]` is `act(pre[l])`; the last entry is the network output.
    post: Vec<Vec<f64>>,
    /// Network mutation counter at record time; used to reject stale tapes.
    version: u64,
}

impl GradientTape {
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn output(&self) -> &[f64] {
        self.post.last().expect("tape has at least one layer")
    }

    /// Pre-activation vector of layer `l`.
    pub fn pre_activation(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }
}

/// Parameter gradients for one layer, same shapes as the layer itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
}

/// Parameter gradients for a whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    d_weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    d_bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// `self += scale * other`. Panics on shape mismatch.
    pub fn scaled_add(&mut self, other: &Gradients, scale: f64) {
        assert!(self.layers.len() == other.layers.len(), "gradient layer counts differ");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.d_weights.scaled_add(&b.d_weights, scale);
            linalg::add_scaled(&mut a.d_bias, &b.d_bias, scale);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.d_weights.scale(s);
            for v in &mut l.d_bias {
                *v *= s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().fold(0.0_f64, |m, l| {
            m.max(l.d_weights.max_abs()).max(l.d_bias.iter().fold(0.0_f64, |b, v| b.max(v.abs())))
        })
    }
}

/// Dense feed-forward network.
#[derive(Debug, Clone)]
pub struct Network {
    pub(crate) layers: Vec<Layer>,
    /// Bumped on every parameter mutation so stale tapes can be rejected.
    version: u64,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Network, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        for i in 1..layers.len() {
            if layers[i].in_dim() != layers[i - 1].out_dim() {
                return Err(NetworkError::DimensionMismatch {
                    detail: alloc::format!(
                        "layer {} expects {} inputs but layer {} produces {}",
                        i,
                        layers[i].in_dim(),
                        i - 1,
                        layers[i - 1].out_dim()
                    ),
                });
            }
        }
        Ok(Network { layers, version: 0 })
    }

    /// Glorot-uniform MLP: ReLU hidden layers, `output_activation` on the
    /// final layer, biases zero. Deterministic in `seed`.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        n_outputs: usize,
        output_activation: Activation,
        seed: u64,
    ) -> Network {
        assert!(input_dim > 0 && n_outputs > 0, "network dimensions must be nonzero");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for (i, &width) in hidden.iter().chain(core::iter::once(&n_outputs)).enumerate() {
            assert!(width > 0, "hidden width must be nonzero");
            let bound = num_traits::Float::sqrt(6.0 / (fan_in + width) as f64);
            let mut data = Vec::with_capacity(width * fan_in);
            for _ in 0..width * fan_in {
                data.push(rng.gen_range(-bound..bound));
            }
            let act = if i == hidden.len() { output_activation } else { Activation::Relu };
            layers.push(
                Layer::new(Matrix::from_flat(width, fan_in, data), vec![0.0; width], act)
                    .expect("generated layer is valid"),
            );
            fan_in = width;
        }
        Network::new(layers).expect("generated network is valid")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("networks are non-empty").out_dim()
    }

    /// Total number of activation units across all layers.
    pub fn n_units(&self) -> usize {
        self.layers.iter().map(Layer::out_dim).sum()
    }

    pub(crate) fn bump_version(&mut self) {
        self.version = self.version.wrapping_add(1);
    }

    /// Runs the network and records a tape for [`Network::backward`].
    ///
    /// Panics if `x.len() != input_dim()` or if the output is non-finite
    /// (which cannot happen for finite parameters and inputs at sane scale,
    /// so it indicates corrupted state).
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, GradientTape) {
        assert!(
            x.len() == self.input_dim(),
            "forward: input has {} entries, network expects {}",
            x.len(),
            self.input_dim()
        );
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.matvec(&cur);
            linalg::add_scaled(&mut z, &layer.bias, 1.0);
            cur = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(cur.clone());
        }
        assert!(linalg::all_finite(&cur), "forward produced a non-finite output");
        let out = cur;
        (out.clone(), GradientTape { input: x.to_vec(), pre, post, version: self.version })
    }

    /// Output only, no tape.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert!(
            x.len() == self.input_dim(),
            "eval: input has {} entries, network expects {}",
            x.len(),
            self.input_dim()
        );
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.matvec(&cur);
            linalg::add_scaled(&mut z, &layer.bias, 1.0);
            cur = z.iter().map(|&v| layer.activation.apply(v)).collect();
        }
        assert!(linalg::all_finite(&cur), "eval produced a non-finite output");
        cur
    }

    /// Reverse-mode sweep. Given `out_grad` = ∂loss/∂output, returns the
    /// parameter gradients and ∂loss/∂input.
    ///
    /// Panics if the tape was recorded by a different network or before the
    /// most recent parameter update (stale tape), or on shape mismatch.
    pub fn backward(&self, tape: &GradientTape, out_grad: &[f64]) -> (Gradients, Vec<f64>) {
        assert!(
            tape.version == self.version && tape.pre.len() == self.layers.len(),
            "gradient tape is stale: network was mutated after forward"
        );
        assert!(
            out_grad.len() == self.output_dim(),
            "backward: cotangent has {} entries, output has {}",
            out_grad.len(),
            self.output_dim()
        );
        let mut grads = Gradients::zeros_like(self);
        let mut g = out_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let pre = &tape.pre[l];
            assert!(pre.len() == layer.out_dim(), "gradient tape is stale: layer {l} width changed");
            let mut delta = Vec::with_capacity(pre.len());
            for (i, &z) in pre.iter().enumerate() {
                delta.push(g[i] * layer.activation.derivative(z));
            }
            let below = if l == 0 { &tape.input } else { &tape.post[l - 1] };
            grads.layers[l].d_weights.add_outer(&delta, below, 1.0);
            linalg::add_scaled(&mut grads.layers[l].d_bias, &delta, 1.0);
            g = layer.weights.matvec_transpose(&delta);
        }
        (grads, g)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    assert!(!logits.is_empty(), "softmax of empty slice");
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| num_traits::Float::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy of `logits` against `label`, with its gradient
/// (`softmax(logits) - onehot(label)`).
///
/// Uses the log-sum-exp form, so it is stable for large logits. Panics if
/// `label` is out of range or the logits are non-finite.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label {label} out of range for {} logits", logits.len());
    assert!(linalg::all_finite(logits), "cross_entropy requires finite logits");
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = logits.iter().map(|&v| num_traits::Float::exp(v - max)).sum();
    let lse = max + num_traits::Float::ln(sum);
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    assert!(loss.is_finite(), "cross_entropy produced a non-finite loss");
    (loss, grad)
}
