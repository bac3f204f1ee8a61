//! Dense phase-1/phase-2 simplex for the leaf feasibility queries.
//!
//! Every variable carries finite box bounds, so the standard form is: shift
//! each variable by its lower bound, add its upper bound as an inequality
//! row, give every inequality a slack, and give every row an artificial
//! variable. Phase 1 minimizes the artificial sum with Bland's rule (lowest
//! eligible index, lowest basis index on ratio ties), which cannot cycle in
//! exact arithmetic; a pivot cap catches float-induced stalling and reports
//! [`LpOutcome::Suspect`] so the caller can fall back to box bisection.

use alloc::vec;
use alloc::vec::Vec;

/// Comparison tolerance for reduced costs, pivots, and feasibility.
pub const LP_TOL: f64 = 1e-7;

/// One linear row: `sum coeffs[k].1 * x[coeffs[k].0]` compared to `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinRow {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> LinRow {
        assert!(coeffs.iter().all(|&(_, c)| c.is_finite()) && rhs.is_finite(), "row entries must be finite");
        LinRow { coeffs, rhs }
    }
}

/// Feasibility query over box-bounded variables. `equalities` hold with
/// `=`, `inequalities` with `<=`. There is no objective; the leaf query
/// only asks whether the region is nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub n_vars: usize,
    /// Finite `(lo, hi)` per variable.
    pub bounds: Vec<(f64, f64)>,
    pub equalities: Vec<LinRow>,
    pub inequalities: Vec<LinRow>,
}

/// Result of a feasibility solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    /// A point satisfying every row and bound (up to [`LP_TOL`]).
    Feasible(Vec<f64>),
    Infeasible,
    /// The pivot cap was hit; the answer is unknown.
    Suspect,
}

/// Result of maximizing a linear objective over the same region.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpMaxOutcome {
    Optimal { point: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    Suspect,
}

/// Dense simplex tableau in standard form over shifted variables `y >= 0`.
/// Column layout: structural `y`, then slacks, then artificials; the last
/// column is the right-hand side.
struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_slack: usize,
    n_art: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

enum Pivot {
    Optimal,
    Done,
    Unbounded,
    Capped,
}

impl Tableau {
    /// Builds the standard form, or `None` when some variable's bound pair
    /// is already contradictory.
    fn build(lp: &LinearProgram) -> Option<Tableau> {
        assert!(lp.n_vars > 0, "linear program has no variables");
        assert!(lp.bounds.len() == lp.n_vars, "one bound pair per variable required");
        for &(l, h) in &lp.bounds {
            assert!(l.is_finite() && h.is_finite(), "variable bounds must be finite");
            if l > h {
                return None;
            }
        }
        let lo: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = lp.bounds.iter().map(|b| b.1).collect();
        // Shifted rows: coefficients over y = x - lo, flag for equality.
        let mut raw: Vec<(Vec<f64>, f64, bool)> = Vec::new();
        for (rows, is_eq) in [(&lp.equalities, true), (&lp.inequalities, false)] {
            for row in rows.iter() {
                let mut dense = vec![0.0; lp.n_vars];
                let mut rhs = row.rhs;
                for &(j, c) in &row.coeffs {
                    assert!(j < lp.n_vars, "row references variable {j} of {}", lp.n_vars);
                    dense[j] += c;
                    rhs -= c * lo[j];
                }
                raw.push((dense, rhs, is_eq));
            }
        }
        for j in 0..lp.n_vars {
            let mut dense = vec![0.0; lp.n_vars];
            dense[j] = 1.0;
            raw.push((dense, hi[j] - lo[j], false));
        }
        let n_struct = lp.n_vars;
        let n_slack = raw.iter().filter(|r| !r.2).count();
        let n_art = raw.len();
        let n_total = n_struct + n_slack + n_art;
        let mut rows = Vec::with_capacity(raw.len());
        let mut basis = Vec::with_capacity(raw.len());
        let mut slack = 0;
        for (r, (dense, rhs, is_eq)) in raw.into_iter().enumerate() {
            let mut full = vec![0.0; n_total + 1];
            full[..n_struct].copy_from_slice(&dense);
            if !is_eq {
                full[n_struct + slack] = 1.0;
                slack += 1;
            }
            full[n_total] = rhs;
            if rhs < 0.0 {
                for v in full.iter_mut() {
                    *v = -*v;
                }
            }
            full[n_struct + n_slack + r] = 1.0;
            basis.push(n_struct + n_slack + r);
            rows.push(full);
        }
        Some(Tableau { rows, basis, n_struct, n_slack, n_art, lo, hi })
    }

    fn n_total(&self) -> usize {
        self.n_struct + self.n_slack + self.n_art
    }

    fn rhs(&self, r: usize) -> f64 {
        let n = self.n_total();
        self.rows[r][n]
    }

    /// Reduced cost of column `j` under cost vector `cost` (minimization).
    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut z = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                z += cb * row[j];
            }
        }
        cost[j] - z
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.n_total();
        let p = self.rows[r][j];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        for rr in 0..self.rows.len() {
            if rr != r {
                let f = self.rows[rr][j];
                if f != 0.0 {
                    for k in 0..=n {
                        self.rows[rr][k] -= f * self.rows[r][k];
                    }
                }
            }
        }
        self.basis[r] = j;
    }

    /// Runs Bland-rule simplex minimizing `cost` until optimal, unbounded,
    /// or the pivot cap. `allow` masks which columns may enter.
    fn run(&mut self, cost: &[f64], allow: &dyn Fn(usize) -> bool) -> Pivot {
        let cap = 2000 + 50 * (self.rows.len() + self.n_total());
        for _ in 0..cap {
            let mut entering = None;
            for j in 0..self.n_total() {
                if allow(j) && self.reduced_cost(cost, j) < -LP_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return Pivot::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][j];
                if a > LP_TOL {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || ((ratio - lratio).abs() <= 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Pivot::Unbounded;
            };
            self.pivot(r, j);
        }
        Pivot::Capped
    }

    /// Minimizes the artificial sum. `Done` means a basic feasible point of
    /// the real region exists.
    fn phase1(&mut self) -> Pivot {
        let mut cost = vec![0.0; self.n_total()];
        for j in self.n_struct + self.n_slack..self.n_total() {
            cost[j] = 1.0;
        }
        match self.run(&cost, &|_| true) {
            Pivot::Optimal => {
                let art_sum: f64 =
                    (0..self.rows.len()).filter(|&r| self.basis[r] >= self.n_struct + self.n_slack).map(|r| self.rhs(r)).sum();
                if art_sum <= LP_TOL {
                    Pivot::Done
                } else {
                    Pivot::Optimal
                }
            }
            other => other,
        }
    }

    /// Pivots residual artificials out of the basis; rows where that is
    /// impossible are redundant and get dropped.
    fn purge_artificials(&mut self) {
        let art_start = self.n_struct + self.n_slack;
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= art_start {
                let mut pivoted = false;
                for j in 0..art_start {
                    if self.rows[r][j].abs() > LP_TOL {
                        self.pivot(r, j);
                        pivoted = true;
                        break;
                    }
                }
                if !pivoted {
                    self.rows.remove(r);
                    self.basis.remove(r);
                    continue;
                }
            }
            r += 1;
        }
    }

    /// Current point in the original (unshifted) coordinates, projected
    /// onto the variable bounds to absorb round-off.
    fn extract(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n_struct];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                y[b] = self.rhs(r);
            }
        }
        (0..self.n_struct).map(|j| (self.lo[j] + y[j]).clamp(self.lo[j], self.hi[j])).collect()
    }
}

/// Decides whether the program's region is nonempty.
pub fn lp_feasible(lp: &LinearProgram) -> LpOutcome {
    let Some(mut t) = Tableau::build(lp) else {
        return LpOutcome::Infeasible;
    };
    match t.phase1() {
        Pivot::Done => LpOutcome::Feasible(t.extract()),
        Pivot::Optimal => LpOutcome::Infeasible,
        Pivot::Unbounded => unreachable!("artificial sum is bounded below by zero"),
        Pivot::Capped => LpOutcome::Suspect,
    }
}

/// Maximizes `obj . x` over the program's region.
pub(crate) fn lp_maximize(lp: &LinearProgram, obj: &[f64]) -> LpMaxOutcome {
    assert!(obj.len() == lp.n_vars, "objective length does not match the variable count");
    let Some(mut t) = Tableau::build(lp) else {
        return LpMaxOutcome::Infeasible;
    };
    match t.phase1() {
        Pivot::Done => {}
        Pivot::Optimal => return LpMaxOutcome::Infeasible,
        Pivot::Unbounded => unreachable!("artificial sum is bounded below by zero"),
        Pivot::Capped => return LpMaxOutcome::Suspect,
    }
    t.purge_artificials();
    // Maximize obj.x = minimize -obj.y (the shift only moves the constant).
    let mut cost = vec![0.0; t.n_total()];
    cost[..t.n_struct].copy_from_slice(&obj.iter().map(|c| -c).collect::<Vec<f64>>());
    let art_start = t.n_struct + t.n_slack;
    match t.run(&cost, &|j| j < art_start) {
        Pivot::Optimal | Pivot::Done => {
            let point = t.extract();
            let value = obj.iter().zip(&point).map(|(c, x)| c * x).sum();
            LpMaxOutcome::Optimal { point, value }
        }
        Pivot::Unbounded => LpMaxOutcome::Unbounded,
        Pivot::Capped => LpMaxOutcome::Suspect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        vec![(lo, hi); n]
    }

    #[test]
    fn contradictory_halflines_are_infeasible() {
        // x >= 1 and x <= 0 within [-10, 10].
        let lp = LinearProgram {
            n_vars: 1,
            bounds: bounds(1, -10.0, 10.0),
            equalities: vec![],
            inequalities: vec![
                LinRow::new(vec![(0, -1.0)], -1.0),
                LinRow::new(vec![(0, 1.0)], 0.0),
            ],
        };
        assert_eq!(lp_feasible(&lp), LpOutcome::Infeasible);
    }

    #[test]
    fn interval_with_halfline_is_feasible() {
        // x in [0, 1] with x >= 0.5.
        let lp = LinearProgram {
            n_vars: 1,
            bounds: bounds(1, 0.0, 1.0),
            equalities: vec![],
            inequalities: vec![LinRow::new(vec![(0, -1.0)], -0.5)],
        };
        match lp_feasible(&lp) {
            LpOutcome::Feasible(x) => assert!(x[0] >= 0.5 - LP_TOL && x[0] <= 1.0 + LP_TOL),
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn equalities_pin_the_solution() {
        // x + y = 1, x - y = 0 within [0, 1]^2: unique point (0.5, 0.5).
        let lp = LinearProgram {
            n_vars: 2,
            bounds: bounds(2, 0.0, 1.0),
            equalities: vec![
                LinRow::new(vec![(0, 1.0), (1, 1.0)], 1.0),
                LinRow::new(vec![(0, 1.0), (1, -1.0)], 0.0),
            ],
            inequalities: vec![],
        };
        match lp_feasible(&lp) {
            LpOutcome::Feasible(x) => {
                assert!((x[0] - 0.5).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lp = LinearProgram {
            n_vars: 1,
            bounds: vec![(1.0, 0.0)],
            equalities: vec![],
            inequalities: vec![],
        };
        assert_eq!(lp_feasible(&lp), LpOutcome::Infeasible);
    }

    #[test]
    fn maximize_over_a_polytope() {
        // max x + y subject to x + 2y <= 2 in [0, 1]^2: optimum (1, 0.5).
        let lp = LinearProgram {
            n_vars: 2,
            bounds: bounds(2, 0.0, 1.0),
            equalities: vec![],
            inequalities: vec![LinRow::new(vec![(0, 1.0), (1, 2.0)], 2.0)],
        };
        match lp_maximize(&lp, &[1.0, 1.0]) {
            LpMaxOutcome::Optimal { point, value } => {
                assert!((value - 1.5).abs() < 1e-9);
                assert!((point[0] - 1.0).abs() < 1e-9 && (point[1] - 0.5).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn negative_shifted_bounds_round_trip() {
        // Feasible system with negative lower bounds: x - y <= -1 in [-3, 3]^2.
        let lp = LinearProgram {
            n_vars: 2,
            bounds: bounds(2, -3.0, 3.0),
            equalities: vec![],
            inequalities: vec![LinRow::new(vec![(0, 1.0), (1, -1.0)], -1.0)],
        };
        match lp_feasible(&lp) {
            LpOutcome::Feasible(x) => assert!(x[0] - x[1] <= -1.0 + 1e-7),
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn redundant_equalities_survive_phase_two() {
        // x + y = 1 stated twice; maximize x: optimum (1, 0).
        let lp = LinearProgram {
            n_vars: 2,
            bounds: bounds(2, 0.0, 1.0),
            equalities: vec![
                LinRow::new(vec![(0, 1.0), (1, 1.0)], 1.0),
                LinRow::new(vec![(0, 1.0), (1, 1.0)], 1.0),
            ],
            inequalities: vec![],
        };
        match lp_maximize(&lp, &[1.0, 0.0]) {
            LpMaxOutcome::Optimal { point, value } => {
                assert!((value - 1.0).abs() < 1e-9);
                assert!((point[1] - 0.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }
}
