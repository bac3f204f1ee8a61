//! Interval bound propagation and activation patterns.
//!
//! [`ibp`] pushes a box of inputs through the network with interval
//! arithmetic, giving sound per-unit pre/post-activation bounds.
//! [`ibp_with_pattern`] additionally intersects each unit's pre-activation
//! interval with its branch-fixed phase region and reports `None` when some
//! intersection is empty (the branch contains no consistent point).

use alloc::vec;
use alloc::vec::Vec;

use crate::data::InputDomain;
use crate::linalg::all_finite;
use crate::nn::{Activation, Network};

/// Per-coordinate interval bounds; `lo[i] <= hi[i]` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> BoxBounds {
        assert!(lo.len() == hi.len(), "bound vectors differ in length");
        assert!(all_finite(&lo) && all_finite(&hi), "bounds must be finite");
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h), "lower bound exceeds upper bound");
        BoxBounds { lo, hi }
    }

    /// The one-point box at `x`.
    pub fn degenerate(x: &[f64]) -> BoxBounds {
        BoxBounds::new(x.to_vec(), x.to_vec())
    }

    /// The L-inf ball of radius `epsilon` around `center`, intersected with
    /// the input domain.
    pub fn ball(center: &[f64], epsilon: f64, domain: InputDomain) -> BoxBounds {
        assert!(epsilon >= 0.0 && epsilon.is_finite(), "epsilon must be finite and >= 0");
        let mut lo = Vec::with_capacity(center.len());
        let mut hi = Vec::with_capacity(center.len());
        for &c in center {
            let (l, h) = domain.clip_interval(c - epsilon, c + epsilon);
            lo.push(l);
            hi.push(h);
        }
        BoxBounds::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Index and width of the widest coordinate.
    pub fn widest(&self) -> (usize, f64) {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.width(i) > self.width(best) {
                best = i;
            }
        }
        (best, self.width(best))
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l - slack && v <= h + slack)
    }

    /// Splits at the midpoint of coordinate `dim`.
    pub fn split(&self, dim: usize) -> (BoxBounds, BoxBounds) {
        let mid = 0.5 * (self.lo[dim] + self.hi[dim]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[dim] = mid;
        right.lo[dim] = mid;
        (left, right)
    }

    /// Clamps `x` into the box in place.
    pub fn project(&self, x: &mut [f64]) {
        for (v, (&l, &h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(l, h);
        }
    }
}

/// Phase of one activation unit within a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Unknown,
    /// ReLU with `z >= 0` (identity on the branch).
    Active,
    /// ReLU with `z <= 0` (constant 0).
    Inactive,
    /// Clamp saturated at its lower bound (`z <= lo`).
    Low,
    /// Clamp in its linear region (`lo <= z <= hi`).
    Mid,
    /// Clamp saturated at its upper bound (`z >= hi`).
    High,
    /// Identity unit; never branched.
    Pass,
}

impl Phase {
    /// Phases a unit of the given activation can take.
    pub fn options(activation: Activation) -> &'static [Phase] {
        match activation {
            Activation::Relu => &[Phase::Active, Phase::Inactive],
            Activation::Clamp { .. } => &[Phase::Low, Phase::Mid, Phase::High],
            Activation::Identity => &[Phase::Pass],
        }
    }
}

/// Branch-fixed phases per layer and unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationPattern {
    pub phases: Vec<Vec<Phase>>,
}

impl ActivationPattern {
    /// Everything unknown except identity units, which are always `Pass`.
    pub fn unknown(net: &Network) -> ActivationPattern {
        ActivationPattern {
            phases: net
                .layers()
                .iter()
                .map(|l| {
                    let p = if matches!(l.activation(), Activation::Identity) {
                        Phase::Pass
                    } else {
                        Phase::Unknown
                    };
                    vec![p; l.out_dim()]
                })
                .collect(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.phases.iter().all(|l| l.iter().all(|&p| p != Phase::Unknown))
    }

    pub fn get(&self, layer: usize, unit: usize) -> Phase {
        self.phases[layer][unit]
    }

    pub fn set(&mut self, layer: usize, unit: usize, phase: Phase) {
        self.phases[layer][unit] = phase;
    }
}

/// Pre- and post-activation bounds of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub pre: BoxBounds,
    pub post: BoxBounds,
}

/// Interval image of one affine layer over the previous post-activation box.
fn affine_interval(net: &Network, layer: usize, below_lo: &[f64], below_hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let l = &net.layers()[layer];
    let w = l.weights();
    let mut lo = Vec::with_capacity(l.out_dim());
    let mut hi = Vec::with_capacity(l.out_dim());
    for u in 0..l.out_dim() {
        let mut zl = l.bias()[u];
        let mut zh = l.bias()[u];
        for (k, &c) in w.row(u).iter().enumerate() {
            if c >= 0.0 {
                zl += c * below_lo[k];
                zh += c * below_hi[k];
            } else {
                zl += c * below_hi[k];
                zh += c * below_lo[k];
            }
        }
        lo.push(zl);
        hi.push(zh);
    }
    (lo, hi)
}

/// Phase-restricted pre-interval and the post-interval it induces.
/// Returns `None` when the phase region misses the pre-interval entirely.
fn phase_intervals(activation: Activation, phase: Phase, zl: f64, zh: f64) -> Option<((f64, f64), (f64, f64))> {
    match (activation, phase) {
        (Activation::Relu, Phase::Unknown) => Some(((zl, zh), (zl.max(0.0), zh.max(0.0)))),
        (Activation::Relu, Phase::Active) => {
            let l = zl.max(0.0);
            (l <= zh).then_some(((l, zh), (l, zh)))
        }
        (Activation::Relu, Phase::Inactive) => {
            let h = zh.min(0.0);
            (zl <= h).then_some(((zl, h), (0.0, 0.0)))
        }
        (Activation::Clamp { lo, hi }, Phase::Unknown) => {
            Some(((zl, zh), (zl.clamp(lo, hi), zh.clamp(lo, hi))))
        }
        (Activation::Clamp { lo, .. }, Phase::Low) => {
            let h = zh.min(lo);
            (zl <= h).then_some(((zl, h), (lo, lo)))
        }
        (Activation::Clamp { lo, hi }, Phase::Mid) => {
            let l = zl.max(lo);
            let h = zh.min(hi);
            (l <= h).then_some(((l, h), (l, h)))
        }
        (Activation::Clamp { hi, .. }, Phase::High) => {
            let l = zl.max(hi);
            (l <= zh).then_some(((l, zh), (hi, hi)))
        }
        (Activation::Identity, Phase::Pass | Phase::Unknown) => Some(((zl, zh), (zl, zh))),
        (act, phase) => panic!("phase {phase:?} does not belong to activation {act:?}"),
    }
}

/// Sound interval enclosure of every pre/post-activation over `input`.
pub fn ibp(net: &Network, input: &BoxBounds) -> Vec<LayerBounds> {
    ibp_with_pattern(net, input, &ActivationPattern::unknown(net))
        .expect("unrestricted propagation cannot be infeasible")
}

/// Interval propagation with branch-fixed phases intersected in. `None`
/// means the branch is infeasible (some unit cannot realize its phase).
pub fn ibp_with_pattern(
    net: &Network,
    input: &BoxBounds,
    pattern: &ActivationPattern,
) -> Option<Vec<LayerBounds>> {
    assert!(input.dim() == net.input_dim(), "box dimension does not match the network input");
    assert!(pattern.phases.len() == net.n_layers(), "pattern layer count does not match the network");
    let mut out = Vec::with_capacity(net.n_layers());
    let mut below_lo = input.lo.clone();
    let mut below_hi = input.hi.clone();
    for (l, layer) in net.layers().iter().enumerate() {
        assert!(
            pattern.phases[l].len() == layer.out_dim(),
            "pattern layer {l} width does not match the network"
        );
        let (zlo, zhi) = affine_interval(net, l, &below_lo, &below_hi);
        let mut pre_lo = Vec::with_capacity(layer.out_dim());
        let mut pre_hi = Vec::with_capacity(layer.out_dim());
        let mut post_lo = Vec::with_capacity(layer.out_dim());
        let mut post_hi = Vec::with_capacity(layer.out_dim());
        for u in 0..layer.out_dim() {
            let ((pl, ph), (al, ah)) =
                phase_intervals(layer.activation(), pattern.get(l, u), zlo[u], zhi[u])?;
            pre_lo.push(pl);
            pre_hi.push(ph);
            post_lo.push(al);
            post_hi.push(ah);
        }
        below_lo = post_lo.clone();
        below_hi = post_hi.clone();
        out.push(LayerBounds {
            pre: BoxBounds::new(pre_lo, pre_hi),
            post: BoxBounds::new(post_lo, post_hi),
        });
    }
    Some(out)
}

/// Number of units whose phase is not decided by plain interval
/// propagation over `input` (ReLUs straddling 0, clamps straddling a bound).
pub fn unstable_count(net: &Network, input: &BoxBounds) -> usize {
    let bounds = ibp(net, input);
    let mut count = 0;
    for (l, layer) in net.layers().iter().enumerate() {
        for u in 0..layer.out_dim() {
            let zl = bounds[l].pre.lo[u];
            let zh = bounds[l].pre.hi[u];
            count += match layer.activation() {
                Activation::Relu => usize::from(zl < 0.0 && zh > 0.0),
                Activation::Clamp { lo, hi } => {
                    let phases = usize::from(zl < lo) + usize::from(zh > hi) + usize::from(zh > lo && zl < hi);
                    usize::from(phases > 1)
                }
                Activation::Identity => 0,
            };
        }
    }
    count
}
