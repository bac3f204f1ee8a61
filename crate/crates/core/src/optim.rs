//! First-order optimizers over [`Gradients`]-shaped parameter sets.

use crate::linalg::all_finite;
use crate::nn::{Gradients, Network};

/// Adam hyperparameters. Defaults match the usual small-classifier recipe:
/// learning rate 1e-4, betas (0.9, 0.999), epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    params: AdamParams,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    /// Fresh state (zero moments) shaped like `net`'s parameters.
    pub fn new(net: &Network, params: AdamParams) -> AdamState {
        assert!(params.lr > 0.0 && params.eps > 0.0, "Adam needs positive lr and eps");
        assert!((0.0..1.0).contains(&params.beta1) && (0.0..1.0).contains(&params.beta2), "Adam betas must be in [0, 1)");
        AdamState { params, step: 0, m: Gradients::zeros_like(net), v: Gradients::zeros_like(net) }
    }

    pub fn params(&self) -> &AdamParams {
        &self.params
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update of `net` in place. Panics if `grads` (or `state`) was
/// shaped for a different network, or if the update produces non-finite
/// parameters.
pub fn adam_step(state: &mut AdamState, net: &mut Network, grads: &Gradients) {
    assert!(
        grads.layers.len() == net.n_layers() && state.m.layers.len() == net.n_layers(),
        "Adam state/gradient layer counts do not match the network"
    );
    state.step += 1;
    let AdamParams { lr, beta1, beta2, eps } = state.params;
    let t = state.step as i32;
    let bc1 = 1.0 - num_traits::Float::powi(beta1, t);
    let bc2 = 1.0 - num_traits::Float::powi(beta2, t);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[l];
        assert!(
            g.d_weights.rows() == layer.weights().rows()
                && g.d_weights.cols() == layer.weights().cols()
                && g.d_bias.len() == layer.bias().len(),
            "gradient shape does not match layer {l}"
        );
        let m = &mut state.m.layers[l];
        let v = &mut state.v.layers[l];
        for ((w, &gw), (mw, vw)) in layer
            .weights
            .data_mut()
            .iter_mut()
            .zip(g.d_weights.data())
            .zip(m.d_weights.data_mut().iter_mut().zip(v.d_weights.data_mut()))
        {
            *w -= update(gw, mw, vw, beta1, beta2, bc1, bc2, lr, eps);
        }
        for ((b, &gb), (mb, vb)) in layer
            .bias
            .iter_mut()
            .zip(&g.d_bias)
            .zip(m.d_bias.iter_mut().zip(v.d_bias.iter_mut()))
        {
            *b -= update(gb, mb, vb, beta1, beta2, bc1, bc2, lr, eps);
        }
        assert!(
            all_finite(layer.weights.data()) && all_finite(&layer.bias),
            "Adam step produced non-finite parameters in layer {l}"
        );
    }
    net.bump_version();
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn update(g: f64, m: &mut f64, v: &mut f64, beta1: f64, beta2: f64, bc1: f64, bc2: f64, lr: f64, eps: f64) -> f64 {
    *m = beta1 * *m + (1.0 - beta1) * g;
    *v = beta2 * *v + (1.0 - beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    lr * m_hat / (num_traits::Float::sqrt(v_hat) + eps)
}

/// One plain SGD update (`theta -= lr * g`) of `net` in place.
pub fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64) {
    assert!(grads.layers.len() == net.n_layers(), "gradient layer count does not match the network");
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[l];
        layer.weights.scaled_add(&g.d_weights, -lr);
        crate::linalg::add_scaled(&mut layer.bias, &g.d_bias, -lr);
        assert!(
            all_finite(layer.weights.data()) && all_finite(&layer.bias),
            "SGD step produced non-finite parameters in layer {l}"
        );
    }
    net.bump_version();
}

/// Either optimizer behind one `step` call.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn adam(net: &Network, params: AdamParams) -> Optimizer {
        Optimizer::Adam(AdamState::new(net, params))
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        match self {
            Optimizer::Adam(state) => adam_step(state, net, grads),
            Optimizer::Sgd { lr } => sgd_step(net, grads, *lr),
        }
    }
}
