//! Signed-gradient attacks and ball sampling.
//!
//! [`fgsm`] takes one signed step of the cross-entropy gradient; [`pgd`]
//! iterates signed steps with per-step projection onto the L-inf ball and
//! the input domain; [`property_pgd`] runs the same loop but climbs a
//! property's violation margin instead of the task loss. All stochastic
//! pieces draw from a caller-provided rng, and [`derive_seed`] gives each
//! dataset point its own stream so parallel evaluation order can never
//! change results.
//!
//! Attacks keep the perturbation as an explicit delta from the center.
//! This makes the projection exact (`clamp(delta, -eps, eps)`) and makes
//! the PGD(steps=1, step=eps, no random start) == FGSM reduction hold
//! bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::InputDomain;
use crate::linalg;
use crate::nn::{cross_entropy, Network};
use crate::properties::{self, PropertySpec, Robustness};

/// PGD hyperparameters. Defaults: 20 steps of `epsilon/10`, random start,
/// one restart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackParams {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub random_start: bool,
    pub restarts: usize,
}

impl AttackParams {
    pub fn new(epsilon: f64) -> AttackParams {
        AttackParams { epsilon, steps: 20, step_size: epsilon / 10.0, random_start: true, restarts: 1 }
    }

    /// Panics on non-positive steps/restarts or a useless step size
    /// (`step_size` may be 0 only for the degenerate `epsilon = 0` ball).
    pub fn validate(&self) {
        assert!(self.epsilon.is_finite() && self.epsilon >= 0.0, "epsilon must be finite and >= 0");
        assert!(self.steps >= 1, "PGD needs at least one step");
        assert!(self.restarts >= 1, "PGD needs at least one restart");
        assert!(
            self.step_size > 0.0 || self.epsilon == 0.0,
            "step size must be positive for a non-degenerate ball"
        );
        assert!(self.step_size.is_finite() && self.step_size >= 0.0, "step size must be finite and >= 0");
    }
}

/// `sign` with `sign(0) = 0`, so zero gradients leave points unmoved
/// (`f64::signum` maps 0 to 1, which would bias attacks).
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Deterministic per-item rng seed from a master seed (splitmix64-style
/// mix, so neighboring indices give unrelated streams).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One FGSM step: `x + epsilon * sign(grad_x cross_entropy)`, clipped to
/// the domain. A zero gradient (constant network) returns `x` unchanged.
pub fn fgsm(net: &Network, x: &[f64], label: usize, epsilon: f64, domain: InputDomain) -> Vec<f64> {
    assert!(epsilon.is_finite() && epsilon >= 0.0, "epsilon must be finite and >= 0");
    assert!(linalg::all_finite(x), "fgsm input must be finite");
    let (logits, tape) = net.forward(x);
    let (_, ce_grad) = cross_entropy(&logits, label);
    let (_, gx) = net.backward(&tape, &ce_grad);
    let mut out: Vec<f64> = x.iter().zip(&gx).map(|(&xi, &gi)| xi + epsilon * sign(gi)).collect();
    domain.clip(&mut out);
    out
}

/// Objective for the PGD loop: score and input gradient at a point.
trait Objective {
    fn eval(&mut self, net: &Network, x: &[f64]) -> (f64, Vec<f64>);
}

struct CrossEntropyObjective {
    label: usize,
}

impl Objective for CrossEntropyObjective {
    fn eval(&mut self, net: &Network, x: &[f64]) -> (f64, Vec<f64>) {
        let (logits, tape) = net.forward(x);
        let (loss, ce_grad) = cross_entropy(&logits, self.label);
        let (_, gx) = net.backward(&tape, &ce_grad);
        (loss, gx)
    }
}

/// Violation margin of a property as a PGD objective. The center's output
/// is computed once; the gradient chains the margin's output cotangent
/// through the network, plus (for Lipschitz) the direct input-space term
/// of `-L * dist_in`.
struct MarginObjective<'a> {
    spec: &'a PropertySpec,
    center: &'a [f64],
    center_out: Vec<f64>,
    label: usize,
}

impl<'a> MarginObjective<'a> {
    fn new(spec: &'a PropertySpec, net: &Network, center: &'a [f64], label: usize) -> Self {
        MarginObjective { spec, center, center_out: net.eval(center), label }
    }
}

impl Objective for MarginObjective<'_> {
    fn eval(&mut self, net: &Network, x: &[f64]) -> (f64, Vec<f64>) {
        let (out, tape) = net.forward(x);
        let dist_in = self.spec.in_metric.dist(x, self.center);
        let margin = self.spec.margin_from_outputs(&self.center_out, &out, self.label, dist_in);
        let (out_grad, _) = properties::margin_cotangents(self.spec, &self.center_out, &out, self.label);
        let (_, mut gx) = net.backward(&tape, &out_grad);
        if let Robustness::Lipschitz { lipschitz } = self.spec.robustness {
            let din = properties::dist_gradient(self.spec.in_metric, x, self.center);
            linalg::add_scaled(&mut gx, &din, -lipschitz);
        }
        (margin, gx)
    }
}

/// Shared PGD loop: ascends `objective` within the `epsilon` ball around
/// `x`, tracking the perturbation delta so projection is exact. With
/// multiple restarts, keeps the candidate with the highest score.
fn pgd_loop(
    net: &Network,
    x: &[f64],
    params: &AttackParams,
    domain: InputDomain,
    rng: &mut ChaCha8Rng,
    objective: &mut dyn Objective,
) -> Vec<f64> {
    params.validate();
    assert!(linalg::all_finite(x), "pgd input must be finite");
    let eps = params.epsilon;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..params.restarts {
        let mut delta = vec![0.0; x.len()];
        if params.random_start {
            for d in &mut delta {
                *d = eps * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        let mut cand = apply_delta(x, &delta, domain);
        for _ in 0..params.steps {
            let (_, gx) = objective.eval(net, &cand);
            for (d, &g) in delta.iter_mut().zip(&gx) {
                *d = (*d + params.step_size * sign(g)).clamp(-eps, eps);
            }
            cand = apply_delta(x, &delta, domain);
        }
        if params.restarts == 1 {
            return cand;
        }
        let (score, _) = objective.eval(net, &cand);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    best.expect("at least one restart ran").1
}

fn apply_delta(x: &[f64], delta: &[f64], domain: InputDomain) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().zip(delta).map(|(&xi, &di)| xi + di).collect();
    domain.clip(&mut out);
    out
}

/// PGD on the cross-entropy loss: iterated signed-gradient steps with
/// per-step projection onto the L-inf ball around `x` and the domain.
pub fn pgd(
    net: &Network,
    x: &[f64],
    label: usize,
    params: &AttackParams,
    domain: InputDomain,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    pgd_loop(net, x, params, domain, rng, &mut CrossEntropyObjective { label })
}

/// PGD ascent on a property's violation margin. Unlike the loss path, CR
/// is allowed: an attack only needs a margin to climb, not a loss that is
/// differentiable through argmax.
pub fn property_pgd(
    spec: &PropertySpec,
    net: &Network,
    center: &[f64],
    label: usize,
    params: &AttackParams,
    domain: InputDomain,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut objective = MarginObjective::new(spec, net, center, label);
    pgd_loop(net, center, params, domain, rng, &mut objective)
}

/// `n` i.i.d. points with each coordinate uniform in
/// `[center_i - epsilon, center_i + epsilon]`, clipped to the domain.
pub fn sample_ball(
    center: &[f64],
    epsilon: f64,
    n: usize,
    domain: InputDomain,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    assert!(n >= 1, "sample_ball needs n >= 1");
    assert!(epsilon.is_finite() && epsilon >= 0.0, "epsilon must be finite and >= 0");
    (0..n)
        .map(|_| {
            let mut p: Vec<f64> =
                center.iter().map(|&c| c + epsilon * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            domain.clip(&mut p);
            p
        })
        .collect()
}
