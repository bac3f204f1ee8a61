//! Complete verification of robustness properties by branch and bound.
//!
//! [`verify`] decides whether a property holds over the full input ball by
//! splitting the ball region into activation regions. Interval propagation
//! prunes regions that cannot violate any disjunct of the compiled
//! violation condition; once every unit's phase is fixed, the region is an
//! exact polytope and a feasibility LP settles it. Strictness is graded by
//! [`TAU`]: `Violated` certifies a concrete point whose violation margin is
//! at least `TAU` (re-checked by forward evaluation and asserted), `Holds`
//! certifies that no point violates with margin `TAU` or more. Violations
//! with smaller margins, including exact argmax ties, count as holding.
//!
//! The search is depth-first, branching on the unit with the widest
//! pre-activation interval (two phases for ReLU, three for clamp). A region
//! whose LP stalls numerically is bisected along its widest input
//! coordinate instead, which preserves completeness: boxes shrink until
//! interval propagation alone decides them. Budgets bound the work; an
//! exhausted budget yields `Timeout` with the partial statistics.
//!
//! A single `verify` call runs on one thread and is deterministic; callers
//! parallelize across queries.

mod ibp;
mod lp;

pub use ibp::{ibp, ibp_with_pattern, unstable_count, ActivationPattern, BoxBounds, LayerBounds, Phase};
pub use lp::{lp_feasible, LinRow, LinearProgram, LpOutcome, LP_TOL};

use alloc::vec;
use alloc::vec::Vec;

use crate::data::InputDomain;
use crate::nn::{Activation, Network};
use crate::properties::{Atom, Metric, PropertyError, PropertySpec, Robustness, Var, BALL_SLACK};
use lp::{lp_maximize, LpMaxOutcome};

/// Violation slack: the verifier certifies a violation only when its margin
/// reaches `TAU`, and `Holds` means no violation of margin `TAU` or more.
pub const TAU: f64 = 1e-6;

/// Boxes narrower than this are settled by evaluating their center point.
const POINT_WIDTH: f64 = 1e-12;

/// Work limits for one [`verify`] call. `max_millis` needs a wall clock and
/// is ignored without the `std` feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Budget {
    pub max_nodes: u64,
    pub max_millis: Option<u64>,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget { max_nodes: 100_000, max_millis: Some(30_000) }
    }
}

/// Search counters reported with every verdict.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifierStats {
    /// Branch-and-bound nodes expanded.
    pub nodes: u64,
    /// Linear programs solved.
    pub lps: u64,
    /// Deepest node expanded.
    pub max_depth: usize,
    /// Wall time in milliseconds (0 without the `std` feature).
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    Holds,
    Violated,
    Timeout,
}

/// Outcome of a verification query. `Violated` carries a witness inside the
/// verified region together with its re-checked violation margin.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifierVerdict {
    pub status: VerdictStatus,
    pub witness: Option<Vec<f64>>,
    pub witness_margin: Option<f64>,
    pub stats: VerifierStats,
}

/// Wall clock that degrades to zero readings without the `std` feature.
#[cfg(feature = "std")]
pub(crate) struct Clock {
    start: std::time::Instant,
}

#[cfg(not(feature = "std"))]
pub(crate) struct Clock;

impl Clock {
    pub(crate) fn start() -> Clock {
        #[cfg(feature = "std")]
        {
            Clock { start: std::time::Instant::now() }
        }
        #[cfg(not(feature = "std"))]
        {
            Clock
        }
    }

    pub(crate) fn elapsed_ms(&self) -> u64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_millis() as u64
        }
        #[cfg(not(feature = "std"))]
        {
            0
        }
    }
}

/// Variable layout of the leaf encoding: network inputs first, then each
/// layer's pre-activations followed by its post-activations.
struct VarMap {
    n_inputs: usize,
    pre: Vec<usize>,
    post: Vec<usize>,
    total: usize,
}

impl VarMap {
    fn new(net: &Network) -> VarMap {
        let mut pre = Vec::with_capacity(net.n_layers());
        let mut post = Vec::with_capacity(net.n_layers());
        let mut next = net.input_dim();
        for layer in net.layers() {
            pre.push(next);
            next += layer.out_dim();
            post.push(next);
            next += layer.out_dim();
        }
        VarMap { n_inputs: net.input_dim(), pre, post, total: next }
    }

    fn input(&self, i: usize) -> usize {
        debug_assert!(i < self.n_inputs);
        i
    }

    fn pre(&self, layer: usize, unit: usize) -> usize {
        self.pre[layer] + unit
    }

    fn post(&self, layer: usize, unit: usize) -> usize {
        self.post[layer] + unit
    }

    /// Variable holding the value feeding layer `layer`, coordinate `k`.
    fn below(&self, layer: usize, k: usize) -> usize {
        if layer == 0 {
            self.input(k)
        } else {
            self.post(layer - 1, k)
        }
    }
}

fn atom_row(map: &VarMap, net: &Network, atom: &Atom) -> LinRow {
    // expr >= TAU  <=>  -sum(c*v) <= constant - TAU.
    let last = net.n_layers() - 1;
    let coeffs = atom
        .expr
        .terms
        .iter()
        .map(|&(var, c)| {
            let j = match var {
                Var::Input(i) => map.input(i),
                Var::Output(o) => map.post(last, o),
            };
            (j, -c)
        })
        .collect();
    LinRow::new(coeffs, atom.expr.constant - TAU)
}

/// Encodes the exact feasible set of one fully-fixed activation region
/// intersected with one violation disjunct: every atom is required to reach
/// [`TAU`]. Variable bounds come from plain interval propagation; phase
/// conditions are rows, so a pattern contradicting the box yields an
/// infeasible program rather than a panic.
pub fn encode_leaf(
    net: &Network,
    input: &BoxBounds,
    pattern: &ActivationPattern,
    disjunct: &[Atom],
) -> LinearProgram {
    assert!(pattern.is_complete(), "leaf encoding needs every phase fixed");
    let layer_bounds = ibp(net, input);
    let map = VarMap::new(net);
    let mut bounds = vec![(0.0, 0.0); map.total];
    for i in 0..map.n_inputs {
        bounds[map.input(i)] = (input.lo[i], input.hi[i]);
    }
    for (l, lb) in layer_bounds.iter().enumerate() {
        for u in 0..lb.pre.dim() {
            bounds[map.pre(l, u)] = (lb.pre.lo[u], lb.pre.hi[u]);
            bounds[map.post(l, u)] = (lb.post.lo[u], lb.post.hi[u]);
        }
    }
    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        for u in 0..layer.out_dim() {
            // Affine row: pre - W . below = bias.
            let mut coeffs = vec![(map.pre(l, u), 1.0)];
            for (k, &w) in layer.weights().row(u).iter().enumerate() {
                if w != 0.0 {
                    coeffs.push((map.below(l, k), -w));
                }
            }
            equalities.push(LinRow::new(coeffs, layer.bias()[u]));
            let z = map.pre(l, u);
            let a = map.post(l, u);
            match (layer.activation(), pattern.get(l, u)) {
                (Activation::Relu, Phase::Active) => {
                    equalities.push(LinRow::new(vec![(a, 1.0), (z, -1.0)], 0.0));
                    inequalities.push(LinRow::new(vec![(z, -1.0)], 0.0));
                }
                (Activation::Relu, Phase::Inactive) => {
                    equalities.push(LinRow::new(vec![(a, 1.0)], 0.0));
                    inequalities.push(LinRow::new(vec![(z, 1.0)], 0.0));
                }
                (Activation::Clamp { lo, .. }, Phase::Low) => {
                    equalities.push(LinRow::new(vec![(a, 1.0)], lo));
                    inequalities.push(LinRow::new(vec![(z, 1.0)], lo));
                }
                (Activation::Clamp { lo, hi }, Phase::Mid) => {
                    equalities.push(LinRow::new(vec![(a, 1.0), (z, -1.0)], 0.0));
                    inequalities.push(LinRow::new(vec![(z, -1.0)], -lo));
                    inequalities.push(LinRow::new(vec![(z, 1.0)], hi));
                }
                (Activation::Clamp { hi, .. }, Phase::High) => {
                    equalities.push(LinRow::new(vec![(a, 1.0)], hi));
                    inequalities.push(LinRow::new(vec![(z, -1.0)], -hi));
                }
                (Activation::Identity, Phase::Pass) => {
                    equalities.push(LinRow::new(vec![(a, 1.0), (z, -1.0)], 0.0));
                }
                (act, phase) => panic!("phase {phase:?} does not fix activation {act:?}"),
            }
        }
    }
    for atom in disjunct {
        inequalities.push(atom_row(&map, net, atom));
    }
    LinearProgram { n_vars: map.total, bounds, equalities, inequalities }
}

/// What deciding one fully-fixed region established.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafOutcome {
    /// A point in the region violating the property with margin `>= TAU`
    /// under exact forward evaluation.
    Violation { witness: Vec<f64>, margin: f64 },
    /// No tried disjunct admits a `TAU`-margin violation in the region.
    Closed,
    /// The LP stalled or disagreed with forward evaluation at the `TAU`
    /// boundary; the caller must split the region and retry.
    Undecided,
}

/// Decides one fully-fixed activation region against the given disjuncts.
/// This is the exact rule the branch-and-bound search applies at its
/// leaves, exposed so exhaustive enumerations can reuse it verbatim.
/// Returns the outcome and the number of LPs solved.
pub fn decide_leaf(
    spec: &PropertySpec,
    net: &Network,
    center: &[f64],
    label: usize,
    region: &BoxBounds,
    pattern: &ActivationPattern,
    disjuncts: &[&[Atom]],
) -> (LeafOutcome, u64) {
    let mut lps = 0;
    let recheck = |x: &[f64]| {
        spec.violation_margin(net, center, label, x)
            .expect("leaf regions stay inside the verified ball")
    };
    for disjunct in disjuncts {
        let program = encode_leaf(net, region, pattern, disjunct);
        lps += 1;
        match lp_feasible(&program) {
            LpOutcome::Infeasible => continue,
            LpOutcome::Suspect => return (LeafOutcome::Undecided, lps),
            LpOutcome::Feasible(point) => {
                let mut x = point[..net.input_dim()].to_vec();
                region.project(&mut x);
                let margin = recheck(&x);
                if margin >= TAU {
                    return (LeafOutcome::Violation { witness: x, margin }, lps);
                }
                // The solver stopped at an arbitrary feasible vertex whose
                // forward margin fell short; push the smallest atom value as
                // high as the polytope allows and re-check there.
                lps += 1;
                match maximize_min_atom(&program, disjunct.len()) {
                    Some(point) => {
                        let mut best = point[..net.input_dim()].to_vec();
                        region.project(&mut best);
                        let margin = recheck(&best);
                        if margin >= TAU {
                            return (LeafOutcome::Violation { witness: best, margin }, lps);
                        }
                        return (LeafOutcome::Undecided, lps);
                    }
                    None => return (LeafOutcome::Undecided, lps),
                }
            }
        }
    }
    (LeafOutcome::Closed, lps)
}

/// Maximizes an auxiliary variable `t` bounded above by each atom slack row
/// of `program` (its last `n_atoms` inequality rows). Returns the input
/// coordinates of the optimum.
fn maximize_min_atom(program: &LinearProgram, n_atoms: usize) -> Option<Vec<f64>> {
    let t = program.n_vars;
    let mut augmented = program.clone();
    augmented.n_vars += 1;
    // t ranges over the atom slack values; anything reachable lies within
    // the row bound magnitudes, padded by one.
    let pad = program
        .inequalities
        .iter()
        .rev()
        .take(n_atoms)
        .map(|r| r.rhs.abs() + r.coeffs.iter().map(|&(j, c)| c.abs() * program.bounds[j].0.abs().max(program.bounds[j].1.abs())).sum::<f64>())
        .fold(1.0, f64::max);
    augmented.bounds.push((-pad, pad));
    let n_rows = program.inequalities.len();
    for k in n_rows - n_atoms..n_rows {
        // Atom row is -expr <= constant - TAU; adding t yields t <= expr - TAU + ...
        // i.e. t - expr <= constant - TAU, so t stays below every atom slack.
        let row = &program.inequalities[k];
        let mut coeffs = row.coeffs.clone();
        coeffs.push((t, 1.0));
        augmented.inequalities.push(LinRow::new(coeffs, row.rhs));
    }
    let mut obj = vec![0.0; augmented.n_vars];
    obj[t] = 1.0;
    match lp_maximize(&augmented, &obj) {
        LpMaxOutcome::Optimal { point, .. } => Some(point[..program.n_vars].to_vec()),
        _ => None,
    }
}

/// Fixes every unknown phase that the refined bounds already decide.
fn stabilize(net: &Network, pattern: &mut ActivationPattern, bounds: &[LayerBounds]) {
    for (l, layer) in net.layers().iter().enumerate() {
        for u in 0..layer.out_dim() {
            if pattern.get(l, u) != Phase::Unknown {
                continue;
            }
            let zl = bounds[l].pre.lo[u];
            let zh = bounds[l].pre.hi[u];
            let fixed = match layer.activation() {
                Activation::Relu => {
                    if zl >= 0.0 {
                        Some(Phase::Active)
                    } else if zh <= 0.0 {
                        Some(Phase::Inactive)
                    } else {
                        None
                    }
                }
                Activation::Clamp { lo, hi } => {
                    if zh <= lo {
                        Some(Phase::Low)
                    } else if zl >= hi {
                        Some(Phase::High)
                    } else if zl >= lo && zh <= hi {
                        Some(Phase::Mid)
                    } else {
                        None
                    }
                }
                Activation::Identity => Some(Phase::Pass),
            };
            if let Some(p) = fixed {
                pattern.set(l, u, p);
            }
        }
    }
}

/// Interval enclosure of an atom expression over the current region.
fn atom_interval(atom: &Atom, input: &BoxBounds, output: &BoxBounds) -> (f64, f64) {
    let mut lo = atom.expr.constant;
    let mut hi = atom.expr.constant;
    for &(var, c) in &atom.expr.terms {
        let (vl, vh) = match var {
            Var::Input(i) => (input.lo[i], input.hi[i]),
            Var::Output(j) => (output.lo[j], output.hi[j]),
        };
        if c >= 0.0 {
            lo += c * vl;
            hi += c * vh;
        } else {
            lo += c * vh;
            hi += c * vl;
        }
    }
    (lo, hi)
}

/// Disjuncts that interval bounds cannot rule out, most promising first
/// (largest room above `TAU` in their most-binding atom).
fn viable_disjuncts<'a>(
    dnf: &'a [Vec<Atom>],
    input: &BoxBounds,
    output: &BoxBounds,
) -> Vec<&'a [Atom]> {
    let mut scored: Vec<(f64, usize)> = Vec::new();
    for (k, disjunct) in dnf.iter().enumerate() {
        let room = disjunct
            .iter()
            .map(|a| atom_interval(a, input, output).1 - TAU)
            .fold(f64::INFINITY, f64::min);
        if room >= 0.0 {
            scored.push((room, k));
        }
    }
    // Descending by room; index breaks ties so the order is deterministic.
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, k)| dnf[k].as_slice()).collect()
}

struct Node {
    pattern: ActivationPattern,
    region: BoxBounds,
    depth: usize,
}

/// Decides whether the property holds over the whole `epsilon`-ball around
/// `center`, intersected with the input domain.
///
/// Sound and complete up to the [`TAU`] grading and LP tolerance within the
/// budget: `Holds` means no point violates with margin `TAU` or more,
/// `Violated` carries a witness whose ball membership and re-evaluated
/// margin are asserted before returning. Requires an L-inf input metric
/// (the ball must be a box) and a property with a linear violation
/// encoding; anything else is an `UnsupportedEncoding` error.
pub fn verify(
    spec: &PropertySpec,
    net: &Network,
    center: &[f64],
    label: usize,
    budget: &Budget,
    domain: InputDomain,
) -> Result<VerifierVerdict, PropertyError> {
    assert!(center.len() == net.input_dim(), "center dimension does not match the network input");
    if spec.in_metric != Metric::Linf {
        return Err(PropertyError::UnsupportedEncoding("the input ball is a box only under the L-inf metric"));
    }
    if matches!(spec.robustness, Robustness::Classification | Robustness::StrongClassification { .. })
        && label >= net.output_dim()
    {
        return Err(PropertyError::LabelOutOfRange { label, outputs: net.output_dim() });
    }
    let constraint = spec.to_constraint(net, center, label)?;
    let dnf = constraint.dnf();
    let clock = Clock::start();
    let mut stats = VerifierStats::default();
    let mut stack = vec![Node {
        pattern: ActivationPattern::unknown(net),
        region: BoxBounds::ball(center, spec.epsilon, domain),
        depth: 0,
    }];
    let violated = |witness: Vec<f64>, margin: f64, mut stats: VerifierStats| {
        // Witness validity is part of the verdict contract; these checks
        // are asserted unconditionally.
        assert!(
            spec.in_metric.dist(center, &witness) <= spec.epsilon + BALL_SLACK,
            "witness left the input ball"
        );
        assert!(domain.contains(&witness, BALL_SLACK), "witness left the input domain");
        assert!(margin >= TAU, "witness margin {margin} fell below the violation slack");
        stats.wall_ms = clock.elapsed_ms();
        Ok(VerifierVerdict {
            status: VerdictStatus::Violated,
            witness: Some(witness),
            witness_margin: Some(margin),
            stats,
        })
    };
    while let Some(node) = stack.pop() {
        stats.nodes += 1;
        stats.max_depth = stats.max_depth.max(node.depth);
        let out_of_time = budget.max_millis.is_some_and(|m| clock.elapsed_ms() > m);
        if stats.nodes > budget.max_nodes || out_of_time {
            stats.wall_ms = clock.elapsed_ms();
            return Ok(VerifierVerdict {
                status: VerdictStatus::Timeout,
                witness: None,
                witness_margin: None,
                stats,
            });
        }
        let Some(bounds) = ibp_with_pattern(net, &node.region, &node.pattern) else {
            continue;
        };
        let mut pattern = node.pattern;
        stabilize(net, &mut pattern, &bounds);
        let output = &bounds.last().expect("networks are non-empty").post;
        let disjuncts = viable_disjuncts(&dnf, &node.region, output);
        if disjuncts.is_empty() {
            continue;
        }
        if pattern.is_complete() {
            let (outcome, lps) = decide_leaf(spec, net, center, label, &node.region, &pattern, &disjuncts);
            stats.lps += lps;
            match outcome {
                LeafOutcome::Violation { witness, margin } => return violated(witness, margin, stats),
                LeafOutcome::Closed => continue,
                LeafOutcome::Undecided => {
                    let (dim, width) = node.region.widest();
                    if width <= POINT_WIDTH {
                        // Point-like region: settle it by direct evaluation.
                        let x = node.region.center();
                        let margin = spec
                            .violation_margin(net, center, label, &x)
                            .expect("region centers stay inside the verified ball");
                        if margin >= TAU {
                            return violated(x, margin, stats);
                        }
                        continue;
                    }
                    let (a, b) = node.region.split(dim);
                    stack.push(Node { pattern: pattern.clone(), region: b, depth: node.depth + 1 });
                    stack.push(Node { pattern, region: a, depth: node.depth + 1 });
                }
            }
        } else {
            // Branch on the unknown unit with the widest pre-activation
            // interval; its phases partition the region.
            let mut widest = None;
            for (l, layer) in net.layers().iter().enumerate() {
                for u in 0..layer.out_dim() {
                    if pattern.get(l, u) == Phase::Unknown {
                        let w = bounds[l].pre.hi[u] - bounds[l].pre.lo[u];
                        if widest.map_or(true, |(_, _, bw)| w > bw) {
                            widest = Some((l, u, w));
                        }
                    }
                }
            }
            let (l, u, _) = widest.expect("incomplete patterns have an unknown unit");
            for &phase in Phase::options(net.layers()[l].activation()).iter().rev() {
                let mut child = pattern.clone();
                child.set(l, u, phase);
                stack.push(Node { pattern: child, region: node.region.clone(), depth: node.depth + 1 });
            }
        }
    }
    stats.wall_ms = clock.elapsed_ms();
    Ok(VerifierVerdict { status: VerdictStatus::Holds, witness: None, witness_margin: None, stats })
}
