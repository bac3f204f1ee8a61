//! Robustness properties over an input ball and their constraint encodings.
//!
//! Every property quantifies over the ball `B(center, epsilon)` in the input
//! metric and asserts a right-hand side about the network output at a
//! candidate point:
//!
//! * standard robustness: `dist_out(f(cand), f(center)) <= delta`
//! * classification robustness: `argmax f(cand) == label` (strictly)
//! * strong classification robustness: `f(cand)[label] >= eta`
//! * Lipschitz robustness: `dist_out <= lipschitz * dist_in`
//!
//! [`PropertySpec::violation_margin`] turns the right-hand side into a signed
//! score (`> 0` iff violated) that losses and attacks can climb, and
//! [`PropertySpec::to_constraint`] compiles the *violation* condition into a
//! linear [`Constraint`] over input and output variables for the verifier.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{softmax, Network};

/// Distance between two equal-length vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Linf,
    L1,
    L2,
}

impl Metric {
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        assert!(a.len() == b.len(), "metric over vectors of lengths {} and {}", a.len(), b.len());
        match self {
            Metric::Linf => a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())),
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::L2 => {
                let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                num_traits::Float::sqrt(s)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Linf => "linf",
            Metric::L1 => "l1",
            Metric::L2 => "l2",
        }
    }
}

/// Which right-hand side a [`PropertySpec`] asserts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Robustness {
    /// Output moves at most `delta`.
    Standard { delta: f64 },
    /// Predicted class stays `label` (ties count as violations).
    Classification,
    /// Score of `label` stays at least `eta`. With `probability` set the
    /// score is `softmax(f(cand))[label]`, otherwise the raw output.
    StrongClassification { eta: f64, probability: bool },
    /// Output moves at most `lipschitz` times the input distance.
    Lipschitz { lipschitz: f64 },
}

/// Coarse tag for dispatch, reporting, and file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropertyKind {
    Sr,
    Cr,
    Scr,
    Lr,
}

impl PropertyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PropertyKind::Sr => "sr",
            PropertyKind::Cr => "cr",
            PropertyKind::Scr => "scr",
            PropertyKind::Lr => "lr",
        }
    }
}

/// Why a property could not be built or evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyError {
    /// `what` names the parameter, `value` its rejected value.
    InvalidParameter { what: &'static str, value: f64 },
    /// The candidate lies outside the `epsilon`-ball around the center.
    OutsideBall { dist: f64, epsilon: f64 },
    /// The property has no linear encoding (the reason says what is missing).
    UnsupportedEncoding(&'static str),
    /// The property's satisfaction function has no useful gradient.
    NotDifferentiable(&'static str),
    /// `label` does not index the network output.
    LabelOutOfRange { label: usize, outputs: usize },
}

impl core::fmt::Display for PropertyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PropertyError::InvalidParameter { what, value } => write!(f, "invalid {what}: {value}"),
            PropertyError::OutsideBall { dist, epsilon } => {
                write!(f, "candidate is {dist} from the center, outside the {epsilon}-ball")
            }
            PropertyError::UnsupportedEncoding(why) => write!(f, "no linear encoding: {why}"),
            PropertyError::NotDifferentiable(why) => write!(f, "not differentiable: {why}"),
            PropertyError::LabelOutOfRange { label, outputs } => {
                write!(f, "label {label} out of range for {outputs} outputs")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PropertyError {}

/// Non-fatal advice produced by the constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    /// With `eta <= 0.5`, a score above `eta` no longer forces the label to
    /// win the argmax, so strong classification robustness stops implying
    /// classification robustness (even for probability outputs).
    EtaNotDominant { eta: f64 },
}

/// Ball-membership slack: candidates may exceed `epsilon` by this much, so
/// points produced by clipped attacks and samplers are never rejected for
/// rounding reasons.
pub const BALL_SLACK: f64 = 1e-9;

/// A robustness property: ball radius, metrics, and right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertySpec {
    pub robustness: Robustness,
    pub epsilon: f64,
    pub in_metric: Metric,
    pub out_metric: Metric,
}

impl PropertySpec {
    fn validated(self) -> Result<PropertySpec, PropertyError> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(PropertyError::InvalidParameter { what: "epsilon", value: self.epsilon });
        }
        match self.robustness {
            Robustness::Standard { delta } => {
                if !(delta.is_finite() && delta >= 0.0) {
                    return Err(PropertyError::InvalidParameter { what: "delta", value: delta });
                }
            }
            Robustness::StrongClassification { eta, .. } => {
                if !eta.is_finite() {
                    return Err(PropertyError::InvalidParameter { what: "eta", value: eta });
                }
            }
            Robustness::Lipschitz { lipschitz } => {
                if !(lipschitz.is_finite() && lipschitz > 0.0) {
                    return Err(PropertyError::InvalidParameter { what: "lipschitz", value: lipschitz });
                }
            }
            Robustness::Classification => {}
        }
        Ok(self)
    }

    /// Standard robustness with L-inf metrics.
    pub fn standard(epsilon: f64, delta: f64) -> Result<PropertySpec, PropertyError> {
        PropertySpec {
            robustness: Robustness::Standard { delta },
            epsilon,
            in_metric: Metric::Linf,
            out_metric: Metric::Linf,
        }
        .validated()
    }

    /// Classification robustness with an L-inf ball.
    pub fn classification(epsilon: f64) -> Result<PropertySpec, PropertyError> {
        PropertySpec {
            robustness: Robustness::Classification,
            epsilon,
            in_metric: Metric::Linf,
            out_metric: Metric::Linf,
        }
        .validated()
    }

    /// Strong classification robustness on raw outputs (set `probability`
    /// for softmax semantics).
    pub fn strong_classification(epsilon: f64, eta: f64, probability: bool) -> Result<PropertySpec, PropertyError> {
        PropertySpec {
            robustness: Robustness::StrongClassification { eta, probability },
            epsilon,
            in_metric: Metric::Linf,
            out_metric: Metric::Linf,
        }
        .validated()
    }

    /// Lipschitz robustness with L-inf metrics.
    pub fn lipschitz(epsilon: f64, lipschitz: f64) -> Result<PropertySpec, PropertyError> {
        PropertySpec {
            robustness: Robustness::Lipschitz { lipschitz },
            epsilon,
            in_metric: Metric::Linf,
            out_metric: Metric::Linf,
        }
        .validated()
    }

    pub fn with_metrics(mut self, in_metric: Metric, out_metric: Metric) -> PropertySpec {
        self.in_metric = in_metric;
        self.out_metric = out_metric;
        self
    }

    pub fn kind(&self) -> PropertyKind {
        match self.robustness {
            Robustness::Standard { .. } => PropertyKind::Sr,
            Robustness::Classification => PropertyKind::Cr,
            Robustness::StrongClassification { .. } => PropertyKind::Scr,
            Robustness::Lipschitz { .. } => PropertyKind::Lr,
        }
    }

    /// Advisory findings about the chosen parameters.
    pub fn warnings(&self) -> Vec<Warning> {
        let mut out = Vec::new();
        if let Robustness::StrongClassification { eta, .. } = self.robustness {
            if eta <= 0.5 {
                out.push(Warning::EtaNotDominant { eta });
            }
        }
        out
    }

    /// Signed violation score from already-computed outputs.
    ///
    /// Positive means the right-hand side is violated at the candidate;
    /// `rhs_holds` is exactly `margin <= 0`. `dist_in` is the input-metric
    /// distance between candidate and center (only Lipschitz uses it).
    pub fn margin_from_outputs(&self, center_out: &[f64], cand_out: &[f64], label: usize, dist_in: f64) -> f64 {
        match self.robustness {
            Robustness::Standard { delta } => self.out_metric.dist(cand_out, center_out) - delta,
            Robustness::Classification => {
                assert!(label < cand_out.len(), "label {label} out of range");
                // Margin of the strongest competing class; -inf when the
                // network has a single output and nothing can compete.
                let mut worst = f64::NEG_INFINITY;
                for (j, &v) in cand_out.iter().enumerate() {
                    if j != label {
                        worst = worst.max(v - cand_out[label]);
                    }
                }
                worst
            }
            Robustness::StrongClassification { eta, probability } => {
                assert!(label < cand_out.len(), "label {label} out of range");
                let score = if probability { softmax(cand_out)[label] } else { cand_out[label] };
                eta - score
            }
            Robustness::Lipschitz { lipschitz } => {
                self.out_metric.dist(cand_out, center_out) - lipschitz * dist_in
            }
        }
    }

    /// Does the right-hand side hold for `candidate`?
    ///
    /// Errors if the candidate leaves the ball (beyond [`BALL_SLACK`]) or
    /// `label` is out of range; the ball membership is a precondition, not
    /// part of the property.
    pub fn rhs_holds(
        &self,
        net: &Network,
        center: &[f64],
        label: usize,
        candidate: &[f64],
    ) -> Result<bool, PropertyError> {
        Ok(self.violation_margin(net, center, label, candidate)? <= 0.0)
    }

    /// Signed violation score for `candidate` (`> 0` iff the right-hand side
    /// fails). Same preconditions as [`PropertySpec::rhs_holds`].
    pub fn violation_margin(
        &self,
        net: &Network,
        center: &[f64],
        label: usize,
        candidate: &[f64],
    ) -> Result<f64, PropertyError> {
        let dist_in = self.in_metric.dist(center, candidate);
        if dist_in > self.epsilon + BALL_SLACK {
            return Err(PropertyError::OutsideBall { dist: dist_in, epsilon: self.epsilon });
        }
        if matches!(
            self.robustness,
            Robustness::Classification | Robustness::StrongClassification { .. }
        ) && label >= net.output_dim()
        {
            return Err(PropertyError::LabelOutOfRange { label, outputs: net.output_dim() });
        }
        let center_out = net.eval(center);
        let cand_out = net.eval(candidate);
        Ok(self.margin_from_outputs(&center_out, &cand_out, label, dist_in))
    }

    /// Compiles the violation condition into a [`Constraint`] over input
    /// variables and output variables, folding `f(center)` into constants.
    ///
    /// The result is a disjunction of conjunctions of linear atoms; a point
    /// satisfying it violates the property. Only L-inf output metrics have a
    /// linear encoding (and Lipschitz additionally needs an L-inf input
    /// metric); softmax semantics are not linear.
    pub fn to_constraint(&self, net: &Network, center: &[f64], label: usize) -> Result<Constraint, PropertyError> {
        let m = net.output_dim();
        let center_out = net.eval(center);
        match self.robustness {
            Robustness::Standard { delta } => {
                if self.out_metric != Metric::Linf {
                    return Err(PropertyError::UnsupportedEncoding(
                        "standard robustness violations are linear only under the L-inf output metric",
                    ));
                }
                // dist_out > delta  <=>  some output coordinate escapes
                // [c_j - delta, c_j + delta].
                let mut disjuncts = Vec::with_capacity(2 * m);
                for j in 0..m {
                    for s in [1.0, -1.0] {
                        disjuncts.push(Constraint::Atom(Atom {
                            expr: LinExpr {
                                constant: -s * center_out[j] - delta,
                                terms: vec![(Var::Output(j), s)],
                            },
                            strict: true,
                        }));
                    }
                }
                Ok(Constraint::Or(disjuncts))
            }
            Robustness::Classification => {
                if label >= m {
                    return Err(PropertyError::LabelOutOfRange { label, outputs: m });
                }
                // Some other class ties or beats the label.
                let mut disjuncts = Vec::with_capacity(m.saturating_sub(1));
                for j in 0..m {
                    if j != label {
                        disjuncts.push(Constraint::Atom(Atom {
                            expr: LinExpr {
                                constant: 0.0,
                                terms: vec![(Var::Output(j), 1.0), (Var::Output(label), -1.0)],
                            },
                            strict: false,
                        }));
                    }
                }
                if disjuncts.is_empty() {
                    return Err(PropertyError::UnsupportedEncoding(
                        "classification robustness needs at least two outputs",
                    ));
                }
                Ok(Constraint::Or(disjuncts))
            }
            Robustness::StrongClassification { eta, probability } => {
                if probability {
                    return Err(PropertyError::UnsupportedEncoding(
                        "softmax score is not linear; use raw-output semantics for verification",
                    ));
                }
                if label >= m {
                    return Err(PropertyError::LabelOutOfRange { label, outputs: m });
                }
                Ok(Constraint::Or(vec![Constraint::Atom(Atom {
                    expr: LinExpr { constant: eta, terms: vec![(Var::Output(label), -1.0)] },
                    strict: true,
                })]))
            }
            Robustness::Lipschitz { lipschitz } => {
                if self.in_metric != Metric::Linf || self.out_metric != Metric::Linf {
                    return Err(PropertyError::UnsupportedEncoding(
                        "Lipschitz violations are linear only under L-inf input and output metrics",
                    ));
                }
                let n = net.input_dim();
                if center.len() != n {
                    return Err(PropertyError::UnsupportedEncoding("center does not match the input dimension"));
                }
                // s*(f_j(x) - c_j) > L * |x_i - c_i| for every input i,
                // for some output j and sign s.
                let mut disjuncts = Vec::with_capacity(2 * m);
                for j in 0..m {
                    for s in [1.0, -1.0] {
                        let mut atoms = Vec::with_capacity(2 * n);
                        for i in 0..n {
                            for t in [1.0, -1.0] {
                                atoms.push(Constraint::Atom(Atom {
                                    expr: LinExpr {
                                        constant: -s * center_out[j] + t * lipschitz * center[i],
                                        terms: vec![
                                            (Var::Output(j), s),
                                            (Var::Input(i), -t * lipschitz),
                                        ],
                                    },
                                    strict: true,
                                }));
                            }
                        }
                        disjuncts.push(Constraint::And(atoms));
                    }
                }
                Ok(Constraint::Or(disjuncts))
            }
        }
    }
}

/// Subgradient of `dist(a, b)` with respect to `a`. L-inf and L1 use the
/// deterministic first-argmax / sign convention; L2 at `a == b` returns 0.
pub(crate) fn dist_gradient(metric: Metric, a: &[f64], b: &[f64]) -> Vec<f64> {
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let mut g = vec![0.0; a.len()];
    match metric {
        Metric::Linf => {
            let mut best = 0;
            for i in 1..a.len() {
                if (a[i] - b[i]).abs() > (a[best] - b[best]).abs() {
                    best = i;
                }
            }
            g[best] = sign(a[best] - b[best]);
        }
        Metric::L1 => {
            for i in 0..a.len() {
                g[i] = sign(a[i] - b[i]);
            }
        }
        Metric::L2 => {
            let d = Metric::L2.dist(a, b);
            if d > 0.0 {
                for i in 0..a.len() {
                    g[i] = (a[i] - b[i]) / d;
                }
            }
        }
    }
    g
}

/// Cotangents of [`PropertySpec::margin_from_outputs`] with respect to the
/// candidate's and the center's output vectors (the `dist_in` argument has
/// no output dependence). Subgradients at kinks follow [`dist_gradient`].
pub(crate) fn margin_cotangents(
    spec: &PropertySpec,
    center_out: &[f64],
    cand_out: &[f64],
    label: usize,
) -> (Vec<f64>, Vec<f64>) {
    match spec.robustness {
        Robustness::Standard { .. } | Robustness::Lipschitz { .. } => {
            let g = dist_gradient(spec.out_metric, cand_out, center_out);
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            (g, neg)
        }
        Robustness::Classification => {
            // Strongest competitor minus the label score.
            let mut best = usize::MAX;
            for j in 0..cand_out.len() {
                if j != label && (best == usize::MAX || cand_out[j] > cand_out[best]) {
                    best = j;
                }
            }
            let mut g = vec![0.0; cand_out.len()];
            if best != usize::MAX {
                g[best] = 1.0;
                g[label] = -1.0;
            }
            (g, vec![0.0; center_out.len()])
        }
        Robustness::StrongClassification { probability, .. } => {
            let mut g = vec![0.0; cand_out.len()];
            if probability {
                // d(-p_label)/d z_j = -p_label * (1[j==label] - p_j).
                let p = softmax(cand_out);
                for j in 0..cand_out.len() {
                    g[j] = -p[label] * ((j == label) as u8 as f64 - p[j]);
                }
            } else {
                g[label] = -1.0;
            }
            (g, vec![0.0; center_out.len()])
        }
    }
}

/// A variable a linear atom can mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Input(usize),
    Output(usize),
}

/// `constant + sum(coeff * var)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(Var, f64)>,
}

impl LinExpr {
    pub fn eval(&self, input: &[f64], output: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(var, c) in &self.terms {
            v += c * match var {
                Var::Input(i) => input[i],
                Var::Output(j) => output[j],
            };
        }
        v
    }
}

/// One linear comparison: the atom holds when `expr > 0` (strict) or
/// `expr >= 0` (non-strict).
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub expr: LinExpr,
    pub strict: bool,
}

impl Atom {
    pub fn holds(&self, input: &[f64], output: &[f64]) -> bool {
        let v = self.expr.eval(input, output);
        if self.strict {
            v > 0.0
        } else {
            v >= 0.0
        }
    }
}

/// Conjunction/disjunction tree over linear atoms.
///
/// Margins mirror the hinge translation of logical connectives: an atom's
/// margin is its expression value, a conjunction takes the minimum over its
/// children, a disjunction the maximum. The margin is positive when the
/// constraint (i.e. the encoded violation) is satisfied with slack.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Atom(Atom),
    And(Vec<Constraint>),
    Or(Vec<Constraint>),
}

impl Constraint {
    pub fn eval(&self, input: &[f64], output: &[f64]) -> bool {
        match self {
            Constraint::Atom(a) => a.holds(input, output),
            Constraint::And(cs) => cs.iter().all(|c| c.eval(input, output)),
            Constraint::Or(cs) => cs.iter().any(|c| c.eval(input, output)),
        }
    }

    pub fn margin(&self, input: &[f64], output: &[f64]) -> f64 {
        match self {
            Constraint::Atom(a) => a.expr.eval(input, output),
            Constraint::And(cs) => {
                cs.iter().map(|c| c.margin(input, output)).fold(f64::INFINITY, f64::min)
            }
            Constraint::Or(cs) => {
                cs.iter().map(|c| c.margin(input, output)).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Number of atoms in the tree.
    pub fn n_atoms(&self) -> usize {
        match self {
            Constraint::Atom(_) => 1,
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().map(Constraint::n_atoms).sum(),
        }
    }

    /// Flattens a translation result into disjuncts of atom conjunctions.
    ///
    /// Supports exactly the shapes [`PropertySpec::to_constraint`] produces
    /// (Or over Atom/And-of-Atom children); anything deeper panics.
    pub fn dnf(&self) -> Vec<Vec<Atom>> {
        fn clause(c: &Constraint) -> Vec<Atom> {
            match c {
                Constraint::Atom(a) => vec![a.clone()],
                Constraint::And(cs) => cs
                    .iter()
                    .map(|c| match c {
                        Constraint::Atom(a) => a.clone(),
                        _ => panic!("constraint is not in two-level disjunctive form"),
                    })
                    .collect(),
                Constraint::Or(_) => panic!("constraint is not in two-level disjunctive form"),
            }
        }
        match self {
            Constraint::Or(cs) => cs.iter().map(clause).collect(),
            other => vec![clause(other)],
        }
    }
}
