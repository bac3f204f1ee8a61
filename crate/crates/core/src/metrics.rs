//! Dataset-level evaluation metrics: constraint satisfaction (verified),
//! constraint security (attacked), and constraint accuracy (sampled).
//!
//! All three share one graded point indicator: a candidate counts as
//! satisfying when its violation margin stays below [`TAU`]. The verifier's
//! `Holds` verdict certifies exactly "no margin reaches `TAU`", so the
//! per-point containments are structural: a verified point can neither be
//! broken by the attack nor by any ball sample, making satisfaction a lower
//! bound on both security and accuracy, point by point.
//!
//! Verifier timeouts are never guessed. A timed-out point is excluded from
//! `value` and the report carries the honest interval: `value` counts only
//! proven holds, `value_upper` additionally counts every timeout as if it
//! held.
//!
//! Per-point evaluations are independent; this module computes them
//! sequentially for determinism, and callers parallelize across points or
//! reports if they need to (reduction order does not matter, each point's
//! record depends only on its own derived seed).

use alloc::vec::Vec;

use crate::attack::{derive_seed, property_pgd, sample_ball, seeded_rng, AttackParams};
use crate::data::Dataset;
use crate::nn::Network;
use crate::properties::{PropertyError, PropertySpec};
use crate::verifier::{verify, Budget, VerdictStatus, TAU};

/// Which evaluation produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Verified over the whole ball (branch and bound).
    Satisfaction,
    /// Survived a PGD attack on the violation margin.
    Security,
    /// Fraction of uniform ball samples satisfying the right-hand side.
    Accuracy,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Satisfaction => "satisfaction",
            MetricKind::Security => "security",
            MetricKind::Accuracy => "accuracy",
        }
    }
}

/// One dataset point's evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub index: usize,
    /// Contribution to the metric in [0, 1]; `None` when the verifier
    /// timed out and the point is excluded from the mean.
    pub score: Option<f64>,
    /// Margin evidence: the attack's margin (security), the worst sampled
    /// margin (accuracy), or the witness margin (satisfaction, violated
    /// points only).
    pub margin: Option<f64>,
    pub time_ms: u64,
}

/// A metric over a dataset, with the per-point breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: MetricKind,
    /// The property evaluated, carrying epsilon and its parameters.
    pub spec: PropertySpec,
    pub dataset_size: usize,
    /// Mean of the per-point scores, counting excluded points as 0.
    pub value: f64,
    /// Same mean counting excluded points as 1; equals `value` when
    /// nothing timed out.
    pub value_upper: f64,
    /// Points excluded from the mean (verifier budget exhausted).
    pub timeouts: usize,
    pub points: Vec<PointRecord>,
    pub wall_ms: u64,
    /// Sampling seed; 0 for the deterministic satisfaction metric.
    pub seed: u64,
}

impl MetricReport {
    fn new(metric: MetricKind, spec: &PropertySpec, points: Vec<PointRecord>, wall_ms: u64, seed: u64) -> MetricReport {
        assert!(!points.is_empty(), "metrics need a non-empty dataset");
        let n = points.len() as f64;
        let sum: f64 = points.iter().filter_map(|p| p.score).sum();
        let timeouts = points.iter().filter(|p| p.score.is_none()).count();
        MetricReport {
            metric,
            spec: spec.clone(),
            dataset_size: points.len(),
            value: sum / n,
            value_upper: (sum + timeouts as f64) / n,
            timeouts,
            points,
            wall_ms,
            seed,
        }
    }

    /// True when every point was decided (the interval is a point).
    pub fn is_exact(&self) -> bool {
        self.timeouts == 0
    }
}

/// Graded indicator: `candidate` counts as satisfying when its violation
/// margin stays below [`TAU`], matching what `Holds` certifies.
fn satisfied(spec: &PropertySpec, net: &Network, center: &[f64], label: usize, candidate: &[f64]) -> (bool, f64) {
    let margin = spec
        .violation_margin(net, center, label, candidate)
        .expect("metric candidates stay inside the ball");
    (margin < TAU, margin)
}

fn check_shapes(spec: &PropertySpec, net: &Network, data: &Dataset) {
    assert!(!data.is_empty(), "metrics need a non-empty dataset");
    assert!(net.input_dim() == data.input_dim(), "network input does not match the dataset");
    assert!(net.output_dim() == data.n_classes, "network outputs do not match the class count");
    assert!(spec.epsilon.is_finite(), "epsilon must be finite");
}

/// Fraction of points where a PGD attack on the violation margin fails.
/// Each point attacks from its own stream derived from `seed`.
pub fn constraint_security(
    spec: &PropertySpec,
    net: &Network,
    data: &Dataset,
    params: &AttackParams,
    seed: u64,
) -> MetricReport {
    check_shapes(spec, net, data);
    assert!(params.epsilon == spec.epsilon, "attack radius must match the property ball");
    let clock = crate::verifier::Clock::start();
    let points = (0..data.len())
        .map(|i| {
            let point_clock = crate::verifier::Clock::start();
            let (x, y) = data.point(i);
            let mut rng = seeded_rng(derive_seed(seed, i as u64));
            let adv = property_pgd(spec, net, x, y, params, data.domain, &mut rng);
            let (ok, margin) = satisfied(spec, net, x, y, &adv);
            PointRecord {
                index: i,
                score: Some(f64::from(u8::from(ok))),
                margin: Some(margin),
                time_ms: point_clock.elapsed_ms(),
            }
        })
        .collect();
    MetricReport::new(MetricKind::Security, spec, points, clock.elapsed_ms(), seed)
}

/// Mean fraction of uniform ball samples satisfying the right-hand side,
/// `n_samples` per point.
pub fn constraint_accuracy(
    spec: &PropertySpec,
    net: &Network,
    data: &Dataset,
    n_samples: usize,
    seed: u64,
) -> MetricReport {
    check_shapes(spec, net, data);
    assert!(n_samples >= 1, "constraint accuracy needs at least one sample");
    let clock = crate::verifier::Clock::start();
    let points = (0..data.len())
        .map(|i| {
            let point_clock = crate::verifier::Clock::start();
            let (x, y) = data.point(i);
            let mut rng = seeded_rng(derive_seed(seed, i as u64));
            let samples = sample_ball(x, spec.epsilon, n_samples, data.domain, &mut rng);
            let mut hits = 0usize;
            let mut worst = f64::NEG_INFINITY;
            for s in &samples {
                let (ok, margin) = satisfied(spec, net, x, y, s);
                hits += usize::from(ok);
                worst = worst.max(margin);
            }
            PointRecord {
                index: i,
                score: Some(hits as f64 / n_samples as f64),
                margin: Some(worst),
                time_ms: point_clock.elapsed_ms(),
            }
        })
        .collect();
    MetricReport::new(MetricKind::Accuracy, spec, points, clock.elapsed_ms(), seed)
}

/// Fraction of points where the property is verified over the whole ball.
/// Timeouts are excluded from `value` and widen the report interval.
pub fn constraint_satisfaction(
    spec: &PropertySpec,
    net: &Network,
    data: &Dataset,
    budget: &Budget,
) -> Result<MetricReport, PropertyError> {
    check_shapes(spec, net, data);
    let clock = crate::verifier::Clock::start();
    let mut points = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (x, y) = data.point(i);
        let verdict = verify(spec, net, x, y, budget, data.domain)?;
        let (score, margin) = match verdict.status {
            VerdictStatus::Holds => (Some(1.0), None),
            VerdictStatus::Violated => (Some(0.0), verdict.witness_margin),
            VerdictStatus::Timeout => (None, None),
        };
        points.push(PointRecord { index: i, score, margin, time_ms: verdict.stats.wall_ms });
    }
    Ok(MetricReport::new(MetricKind::Satisfaction, spec, points, clock.elapsed_ms(), 0))
}
