//! Differentiable constraint losses and the combined training objective.
//!
//! The constraint loss follows the usual logic-to-loss translation (atomic
//! `t <= t'` becomes the hinge `max(t - t', 0)`, conjunction a sum,
//! disjunction a product). Each property's right-hand side is a single
//! atomic comparison with norms as terms, so the loss collapses to the
//! hinge of the violation margin and is zero exactly when the right-hand
//! side holds.
//!
//! The combined objective is `alpha * cross_entropy + beta * L_C`, where
//! `L_C` aggregates the constraint loss over sampled ball candidates (the
//! sampler realizes the universal quantifier).

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::attack::{property_pgd, sample_ball, AttackParams};
use crate::data::InputDomain;
use crate::nn::{cross_entropy, Gradients, Network};
use crate::properties::{self, PropertyError, PropertySpec, Robustness};

/// How candidates for the constraint loss are drawn from the ball.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// Margin-ascent PGD (the adversarial choice).
    Pgd(AttackParams),
    /// Uniform ball samples.
    RandomUniform,
}

/// How per-candidate losses combine into `L_C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    /// Worst candidate (inner maximization, the default).
    Max,
    /// Average candidate.
    Mean,
}

/// Weights and sampling policy of the combined objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub samples_per_point: usize,
    pub sampler: Sampler,
    pub aggregate: Aggregate,
}

impl LossConfig {
    /// `alpha = 1, beta = 0.2`, one PGD candidate per point.
    pub fn new(epsilon: f64) -> LossConfig {
        LossConfig {
            alpha: 1.0,
            beta: 0.2,
            samples_per_point: 1,
            sampler: Sampler::Pgd(AttackParams::new(epsilon)),
            aggregate: Aggregate::Max,
        }
    }

    /// Panics on negative weights, `alpha + beta = 0`, or zero samples.
    pub fn validate(&self) {
        assert!(
            self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite(),
            "loss weights must be finite and non-negative"
        );
        assert!(self.alpha + self.beta > 0.0, "alpha + beta must be positive");
        assert!(self.samples_per_point >= 1, "need at least one sample per point");
        if let Sampler::Pgd(params) = &self.sampler {
            params.validate();
        }
    }
}

/// Hinge of the violation margin at one candidate, with exact parameter
/// gradients.
///
/// The margin of SR/LR compares `f(candidate)` against `f(center)`, and
/// both are functions of the parameters, so the gradient flows through
/// both forward passes (this is what makes finite differences over the
/// parameters match). A satisfied constraint (margin <= 0) contributes
/// zero loss and zero gradient.
///
/// CR is rejected: its satisfaction goes through argmax, which has no
/// useful gradient — train it via data augmentation or adversarial
/// training instead.
pub fn constraint_loss(
    spec: &PropertySpec,
    net: &Network,
    center: &[f64],
    label: usize,
    candidate: &[f64],
) -> Result<(f64, Gradients), PropertyError> {
    if matches!(spec.robustness, Robustness::Classification) {
        return Err(PropertyError::NotDifferentiable(
            "argmax is not differentiable; classification robustness has no constraint loss",
        ));
    }
    let dist_in = spec.in_metric.dist(center, candidate);
    if dist_in > spec.epsilon + properties::BALL_SLACK {
        return Err(PropertyError::OutsideBall { dist: dist_in, epsilon: spec.epsilon });
    }
    let (center_out, center_tape) = net.forward(center);
    let (cand_out, cand_tape) = net.forward(candidate);
    if matches!(
        spec.robustness,
        Robustness::Classification | Robustness::StrongClassification { .. }
    ) && label >= net.output_dim()
    {
        return Err(PropertyError::LabelOutOfRange { label, outputs: net.output_dim() });
    }
    let margin = spec.margin_from_outputs(&center_out, &cand_out, label, dist_in);
    if margin <= 0.0 {
        return Ok((0.0, Gradients::zeros_like(net)));
    }
    let (cand_cot, center_cot) = properties::margin_cotangents(spec, &center_out, &cand_out, label);
    let (mut grads, _) = net.backward(&cand_tape, &cand_cot);
    if center_cot.iter().any(|&v| v != 0.0) {
        let (center_grads, _) = net.backward(&center_tape, &center_cot);
        grads.scaled_add(&center_grads, 1.0);
    }
    Ok((margin, grads))
}

/// Mean over the batch of `alpha * cross_entropy + beta * L_C`, with
/// matching parameter gradients.
///
/// `spec` may be `None` only when `beta = 0` (the pure cross-entropy
/// objective); with `beta = 0` no candidate is ever sampled and no rng
/// state is consumed, so a zero-beta run is bit-identical to a baseline
/// run. The sampler draws from `rng` point by point in batch order.
pub fn combined_loss(
    cfg: &LossConfig,
    spec: Option<&PropertySpec>,
    net: &Network,
    batch: &[(&[f64], usize)],
    domain: InputDomain,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Gradients), PropertyError> {
    cfg.validate();
    assert!(!batch.is_empty(), "combined_loss needs a non-empty batch");
    let inv_b = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(net);
    for &(x, label) in batch {
        if cfg.alpha > 0.0 {
            let (logits, tape) = net.forward(x);
            let (ce, ce_grad) = cross_entropy(&logits, label);
            let (g, _) = net.backward(&tape, &ce_grad);
            total += cfg.alpha * inv_b * ce;
            grads.scaled_add(&g, cfg.alpha * inv_b);
        }
        if cfg.beta > 0.0 {
            let spec = spec.ok_or(PropertyError::UnsupportedEncoding(
                "constraint loss requires a property spec when beta > 0",
            ))?;
            let candidates: Vec<Vec<f64>> = match &cfg.sampler {
                Sampler::Pgd(params) => (0..cfg.samples_per_point)
                    .map(|_| property_pgd(spec, net, x, label, params, domain, rng))
                    .collect(),
                Sampler::RandomUniform => sample_ball(x, spec.epsilon, cfg.samples_per_point, domain, rng),
            };
            match cfg.aggregate {
                Aggregate::Max => {
                    let mut worst: Option<(f64, Gradients)> = None;
                    for cand in &candidates {
                        let (l, g) = constraint_loss(spec, net, x, label, cand)?;
                        if worst.as_ref().is_none_or(|(wl, _)| l > *wl) {
                            worst = Some((l, g));
                        }
                    }
                    let (l, g) = worst.expect("at least one candidate");
                    total += cfg.beta * inv_b * l;
                    grads.scaled_add(&g, cfg.beta * inv_b);
                }
                Aggregate::Mean => {
                    let inv_k = 1.0 / cfg.samples_per_point as f64;
                    for cand in &candidates {
                        let (l, g) = constraint_loss(spec, net, x, label, cand)?;
                        total += cfg.beta * inv_b * inv_k * l;
                        grads.scaled_add(&g, cfg.beta * inv_b * inv_k);
                    }
                }
            }
        }
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::seeded_rng;
    use crate::nn::{Activation, Layer};
    use crate::properties::Metric;
    use crate::Matrix;

    fn id_net_2() -> Network {
        Network::new(vec![Layer::new(
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn hinge_values_match_hand_computation() {
        let net = id_net_2();
        // SR with delta 0.5; candidate moves the output by 0.8: loss 0.3.
        let spec = PropertySpec::standard(1.0, 0.5).unwrap();
        let (l, _) = constraint_loss(&spec, &net, &[0.0, 0.0], 0, &[0.8, 0.0]).unwrap();
        assert!((l - 0.3).abs() < 1e-12);
        // Satisfied strictly: zero loss, zero gradient.
        let (l, g) = constraint_loss(&spec, &net, &[0.0, 0.0], 0, &[0.2, 0.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
        // SCR with the label score 0.1 below eta: loss 0.1.
        let scr = PropertySpec::strong_classification(1.0, 0.52, false).unwrap();
        let (l, _) = constraint_loss(&scr, &net, &[0.42, 0.0], 0, &[0.42, 0.0]).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
    }

    #[test]
    fn classification_loss_is_rejected() {
        let net = id_net_2();
        let spec = PropertySpec::classification(0.1).unwrap();
        assert!(matches!(
            constraint_loss(&spec, &net, &[0.5, 0.5], 0, &[0.5, 0.5]),
            Err(PropertyError::NotDifferentiable(_))
        ));
        let cfg = LossConfig::new(0.1);
        let center = [0.5, 0.5];
        let batch = [(&center[..], 0)];
        let mut rng = seeded_rng(0);
        assert!(combined_loss(&cfg, Some(&spec), &net, &batch, InputDomain::Unit, &mut rng).is_err());
    }

    #[test]
    fn sr_loss_ignores_the_label() {
        // A point the net misclassifies still has zero SR loss if the output
        // is stable: the loss compares f(candidate) to f(center), not to y.
        let net = id_net_2();
        let spec = PropertySpec::standard(0.05, 0.5).unwrap();
        let center = [0.2, 0.8]; // argmax is 1, pretend the label is 0
        let (l, g) = constraint_loss(&spec, &net, &center, 0, &[0.21, 0.8]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn combined_loss_arithmetic() {
        // alpha=1, beta=0.2, CE=0.5, worst constraint loss=1.0 -> 0.7.
        // Build the pieces explicitly: a diagonal net, a center whose CE is
        // forced to 0.5 is fiddly, so check the combination rule directly
        // on computed parts instead.
        let net = id_net_2();
        let spec = PropertySpec::standard(1.0, 0.1).unwrap();
        let center = [0.9, 0.0];
        let batch = [(&center[..], 0)];
        let mut cfg = LossConfig::new(1.0);
        cfg.sampler = Sampler::RandomUniform;
        cfg.samples_per_point = 8;
        let mut rng = seeded_rng(4);
        let (combined, _) =
            combined_loss(&cfg, Some(&spec), &net, &batch, InputDomain::Unit, &mut rng).unwrap();
        // Recompute by hand with the same rng stream.
        let mut rng = seeded_rng(4);
        let (logits, _) = net.forward(&center);
        let (ce, _) = cross_entropy(&logits, 0);
        let cands = sample_ball(&center, 1.0, 8, InputDomain::Unit, &mut rng);
        let worst = cands
            .iter()
            .map(|c| constraint_loss(&spec, &net, &center, 0, c).unwrap().0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(worst > 0.0, "radius 1 around 0.9 must violate delta=0.1 somewhere");
        assert!((combined - (ce + 0.2 * worst)).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_is_cross_entropy_and_consumes_no_rng() {
        let net = Network::mlp(2, &[5], 2, Activation::Identity, 2);
        let x = [0.3, 0.7];
        let batch = [(&x[..], 1)];
        let mut cfg = LossConfig::new(0.1);
        cfg.beta = 0.0;
        let mut rng = seeded_rng(9);
        let before = rng.clone();
        let (l, g) = combined_loss(&cfg, None, &net, &batch, InputDomain::Unit, &mut rng).unwrap();
        assert_eq!(rng, before, "no sampling may happen at beta = 0");
        let (logits, tape) = net.forward(&x);
        let (ce, ce_grad) = cross_entropy(&logits, 1);
        let (ge, _) = net.backward(&tape, &ce_grad);
        assert_eq!(l, ce);
        assert_eq!(g, ge);
    }

    #[test]
    fn alpha_zero_on_satisfied_property_is_zero() {
        let net = id_net_2();
        // Identity net moves outputs exactly as inputs: delta=1 over a 0.1
        // ball is never violated.
        let spec = PropertySpec::standard(0.1, 1.0).unwrap();
        let center = [0.5, 0.5];
        let batch = [(&center[..], 0)];
        let mut cfg = LossConfig::new(0.1);
        cfg.alpha = 0.0;
        cfg.samples_per_point = 4;
        let mut rng = seeded_rng(1);
        let (l, g) = combined_loss(&cfg, Some(&spec), &net, &batch, InputDomain::Unit, &mut rng).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn max_aggregate_bounds_mean_aggregate() {
        let net = Network::mlp(2, &[6], 2, Activation::Identity, 7);
        let spec = PropertySpec::standard(0.3, 0.01).unwrap().with_metrics(Metric::Linf, Metric::Linf);
        let x = [0.4, 0.6];
        let batch = [(&x[..], 0)];
        let mut cfg = LossConfig::new(0.3);
        cfg.alpha = 0.0;
        cfg.sampler = Sampler::RandomUniform;
        cfg.samples_per_point = 16;
        let mut rng = seeded_rng(5);
        let (max_l, _) = combined_loss(&cfg, Some(&spec), &net, &batch, InputDomain::Unit, &mut rng).unwrap();
        cfg.aggregate = Aggregate::Mean;
        let mut rng = seeded_rng(5);
        let (mean_l, _) =
            combined_loss(&cfg, Some(&spec), &net, &batch, InputDomain::Unit, &mut rng).unwrap();
        assert!(max_l >= mean_l, "max {max_l} must dominate mean {mean_l}");
    }

    #[test]
    #[should_panic(expected = "alpha + beta")]
    fn zero_weights_are_rejected() {
        let mut cfg = LossConfig::new(0.1);
        cfg.alpha = 0.0;
        cfg.beta = 0.0;
        cfg.validate();
    }
}
