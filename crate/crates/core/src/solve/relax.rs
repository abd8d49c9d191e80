//! McCormick LP relaxation of the decomposed problem over a column box.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lp::{Direction, LinearProgram, LpError, LpSolution};
use crate::miblp::{mccormick_envelope, square_cuts, DecomposedProblem, EnvelopeInequality, Sense};

/// Tangent `cos θ·I^r + sin θ·I^i ≤ limit` of one transformer-phase limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentCut {
    pub limit: usize,
    pub theta: f64,
}

/// Relaxation points violating a limit by more than this get a new tangent.
pub const CUT_VIOLATION: f64 = 1e-7;
const INITIAL_DIRECTIONS: usize = 8;
const MAX_CUT_ROUNDS: usize = 25;

#[derive(Clone, Debug)]
pub enum RelaxObjective {
    /// Maximize the siting objective.
    Siting,
    /// Minimize (`false`) or maximize (`true`) one column.
    Column { column: usize, maximize: bool },
}

#[derive(Clone, Debug)]
pub struct RelaxationSpec<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub cuts: &'a [TangentCut],
    /// Keep `Σ w·z ≥ value` in the relaxation.
    pub objective_cut: Option<f64>,
    /// Keep binaries and integers integral (each solve becomes a MILP).
    pub integral: bool,
    pub objective: RelaxObjective,
}

/// Assembles the LP for `spec`. Columns of the LP coincide with the
/// columns of `problem`.
pub fn build_relaxation(problem: &DecomposedProblem, spec: &RelaxationSpec) -> LinearProgram {
    let direction = match spec.objective {
        RelaxObjective::Siting | RelaxObjective::Column { maximize: true, .. } => Direction::Maximize,
        RelaxObjective::Column { maximize: false, .. } => Direction::Minimize,
    };
    let mut lp = LinearProgram::new(direction);
    for j in 0..problem.columns() {
        if spec.integral && problem.integer[j] {
            lp.add_integer_column(spec.lower[j], spec.upper[j], 0.0);
        } else {
            lp.add_column(spec.lower[j], spec.upper[j], 0.0);
        }
    }
    match spec.objective {
        RelaxObjective::Siting => lp.set_objective(&problem.problem.objective),
        RelaxObjective::Column { column, .. } => lp.set_objective(&[(column, 1.0)]),
    }
    for r in &problem.rows {
        lp.add_row(&r.terms, r.sense, r.rhs);
    }
    for b in &problem.bilinear {
        let lb = (spec.lower[b.left], spec.upper[b.left]);
        let rb = (spec.lower[b.right], spec.upper[b.right]);
        let mut ineqs: Vec<EnvelopeInequality> = mccormick_envelope(lb, rb).expect("validated column box").to_vec();
        if b.left == b.right {
            ineqs.extend(square_cuts(lb).expect("validated column box"));
        }
        for e in ineqs {
            // e on (t, l, r) with t = s − n_r·l − n_l·r − n_l·n_r
            let terms = [
                (b.product, e.product),
                (b.left, e.left - e.product * b.right_nominal),
                (b.right, e.right - e.product * b.left_nominal),
            ];
            lp.add_row(&terms, Sense::Le, e.rhs + e.product * b.left_nominal * b.right_nominal);
        }
    }
    for (k, q) in problem.problem.quadratic.iter().enumerate() {
        for d in 0..INITIAL_DIRECTIONS {
            let theta = 2.0 * PI * d as f64 / INITIAL_DIRECTIONS as f64;
            lp.add_row(&[(q.real, theta.cos()), (q.imag, theta.sin())], Sense::Le, q.limit);
        }
        for c in spec.cuts.iter().filter(|c| c.limit == k) {
            lp.add_row(&[(q.real, c.theta.cos()), (q.imag, c.theta.sin())], Sense::Le, q.limit);
        }
    }
    if let Some(v) = spec.objective_cut {
        lp.add_row(&problem.problem.objective, Sense::Ge, v - 1e-9);
    }
    lp
}

/// Tangents at relaxation points that break a transformer limit.
pub fn violated_tangents(problem: &DecomposedProblem, cols: &[f64]) -> Vec<TangentCut> {
    problem
        .problem
        .quadratic
        .iter()
        .enumerate()
        .filter(|(_, q)| cols[q.real].hypot(cols[q.imag]) > q.limit + CUT_VIOLATION)
        .map(|(k, q)| TangentCut { limit: k, theta: cols[q.imag].atan2(cols[q.real]) })
        .collect()
}

/// Solves the relaxation, adding tangent cuts to `pool` until the
/// transformer limits hold to [`CUT_VIOLATION`].
pub fn solve_lp_relaxation(problem: &DecomposedProblem, spec: &RelaxationSpec, pool: &mut Vec<TangentCut>) -> Result<LpSolution, LpError> {
    solve_with_cuts(problem, spec, pool).map(|(sol, _)| sol)
}

/// As [`solve_lp_relaxation`], also returning a bound on the continuous
/// relaxation's optimum that holds even if the LP solver stopped early
/// (upper when maximizing, lower when minimizing).
pub fn certified_relaxation(problem: &DecomposedProblem, spec: &RelaxationSpec, pool: &mut Vec<TangentCut>) -> Result<(LpSolution, f64), LpError> {
    let (sol, lp) = solve_with_cuts(problem, spec, pool)?;
    let bound = lp.safe_bound()?;
    Ok((sol, bound))
}

fn solve_with_cuts(problem: &DecomposedProblem, spec: &RelaxationSpec, pool: &mut Vec<TangentCut>) -> Result<(LpSolution, LinearProgram), LpError> {
    let mut own: Vec<TangentCut> = spec.cuts.to_vec();
    own.extend(pool.iter().copied().filter(|c| !spec.cuts.contains(c)));
    for _ in 0..MAX_CUT_ROUNDS {
        let s = RelaxationSpec { cuts: &own, ..spec.clone() };
        let lp = build_relaxation(problem, &s);
        let sol = lp.solve()?;
        let fresh = violated_tangents(problem, &sol.values);
        if fresh.is_empty() {
            return Ok((sol, lp));
        }
        own.extend(&fresh);
        pool.extend(fresh);
    }
    let s = RelaxationSpec { cuts: &own, ..spec.clone() };
    let lp = build_relaxation(problem, &s);
    Ok((lp.solve()?, lp))
}
