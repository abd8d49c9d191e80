//! Thin LP/MILP front end over `microlp`: deduplicated sparse rows, bound
//! checks, and a uniform result type.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

use crate::miblp::Sense;

#[derive(Clone, Debug, PartialEq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    Numerical(String),
}

impl std::fmt::Display for LpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpError::Infeasible => f.write_str("infeasible"),
            LpError::Unbounded => f.write_str("unbounded"),
            LpError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for LpError {}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub values: Vec<f64>,
    /// False when a MILP stopped without proving optimality.
    pub proven: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug)]
struct Column {
    lower: f64,
    upper: f64,
    objective: f64,
    integer: bool,
}

#[derive(Clone, Debug)]
struct Row {
    terms: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

/// Allowed mismatch between the solver's objective and `c·x` (relative).
const CONSISTENCY_TOL: f64 = 1e-9;
/// Largest row violation accepted from the solver.
const FEASIBILITY_TOL: f64 = 1e-7;
/// Row tolerance for constraints whose every coefficient vanished.
const EMPTY_ROW_TOL: f64 = 1e-9;
/// Lagrangian value (normalized rows, unit multipliers) taken as proof of
/// infeasibility.
const INFEASIBILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct LinearProgram {
    direction: Direction,
    columns: Vec<Column>,
    rows: Vec<Row>,
    infeasible_empty_row: bool,
}

impl LinearProgram {
    pub fn new(direction: Direction) -> Self {
        Self { direction, columns: Vec::new(), rows: Vec::new(), infeasible_empty_row: false }
    }

    pub fn add_column(&mut self, lower: f64, upper: f64, objective: f64) -> usize {
        self.columns.push(Column { lower, upper, objective, integer: false });
        self.columns.len() - 1
    }

    pub fn add_integer_column(&mut self, lower: f64, upper: f64, objective: f64) -> usize {
        let j = self.add_column(lower, upper, objective);
        self.columns[j].integer = true;
        j
    }

    pub fn set_objective(&mut self, objective: &[(usize, f64)]) {
        for c in &mut self.columns {
            c.objective = 0.0;
        }
        for &(j, a) in objective {
            self.columns[j].objective += a;
        }
    }

    pub fn columns(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds `Σ a_j x_j (sense) rhs`. Repeated columns are merged and zero
    /// coefficients dropped; an empty row is checked on the spot.
    pub fn add_row(&mut self, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut t: Vec<(usize, f64)> = terms.to_vec();
        t.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(t.len());
        for (j, a) in t {
            match merged.last_mut() {
                Some((k, b)) if *k == j => *b += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        if merged.is_empty() {
            let ok = match sense {
                Sense::Le => 0.0 <= rhs + EMPTY_ROW_TOL,
                Sense::Ge => 0.0 >= rhs - EMPTY_ROW_TOL,
                Sense::Eq => rhs.abs() <= EMPTY_ROW_TOL,
            };
            self.infeasible_empty_row |= !ok;
            return;
        }
        let scale = merged.iter().fold(0.0_f64, |m, &(_, a)| m.max(a.abs()));
        for (_, a) in &mut merged {
            *a /= scale;
        }
        self.rows.push(Row { terms: merged, sense, rhs: rhs / scale });
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self.columns.iter().zip(x).map(|(c, &v)| (c.lower - v).max(v - c.upper).max(0.0));
        let rows = self.rows.iter().map(|r| {
            let a: f64 = r.terms.iter().map(|&(j, c)| c * x[j]).sum();
            match r.sense {
                Sense::Le => (a - r.rhs).max(0.0),
                Sense::Ge => (r.rhs - a).max(0.0),
                Sense::Eq => (a - r.rhs).abs(),
            }
        });
        let empty = if self.infeasible_empty_row { f64::INFINITY } else { 0.0 };
        bounds.chain(rows).fold(empty, f64::max)
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        if self.infeasible_empty_row {
            return Err(LpError::Infeasible);
        }
        for c in &self.columns {
            if !(c.lower.is_finite() && c.upper.is_finite()) {
                return Err(LpError::Numerical("column without finite bounds".into()));
            }
            if c.lower > c.upper {
                return Err(LpError::Infeasible);
            }
        }
        let dir = match self.direction {
            Direction::Maximize => OptimizationDirection::Maximize,
            Direction::Minimize => OptimizationDirection::Minimize,
        };
        let mut p = Problem::new(dir);
        let vars: Vec<_> = self
            .columns
            .iter()
            .map(|c| {
                if c.integer {
                    let lo = (c.lower - 1e-9).ceil();
                    let hi = (c.upper + 1e-9).floor();
                    p.add_integer_var(c.objective, (lo as i32, hi as i32))
                } else {
                    p.add_var(c.objective, (c.lower, c.upper))
                }
            })
            .collect();
        for r in &self.rows {
            let mut e = LinearExpr::empty();
            for &(j, a) in &r.terms {
                e.add(vars[j], a);
            }
            let op = match r.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            p.add_constraint(e, op, r.rhs);
        }
        let integral = self.columns.iter().any(|c| c.integer);
        let outcome = p.solve().map_err(|e| match e {
            // a pure LP's emptiness claim is only trusted with a certificate
            microlp::Error::Infeasible if integral || self.proves_infeasible() => LpError::Infeasible,
            microlp::Error::Infeasible => LpError::Numerical("unconfirmed infeasibility".into()),
            microlp::Error::Unbounded => LpError::Unbounded,
            other => LpError::Numerical(other.to_string()),
        })?;
        let proven = outcome.is_optimal();
        let sol = outcome.solution().ok_or_else(|| LpError::Numerical("solve interrupted without a solution".into()))?;
        let values: Vec<f64> = vars.iter().map(|&v| sol.var_value_raw(v)).collect();
        // microlp occasionally hands back a vertex that disagrees with its
        // own objective; such an answer cannot be used as a bound
        let objective: f64 = self.columns.iter().zip(&values).map(|(c, x)| c.objective * x).sum();
        let scale = 1.0 + objective.abs().max(sol.objective().abs());
        if (objective - sol.objective()).abs() > CONSISTENCY_TOL * scale {
            return Err(LpError::Numerical(format!("solution value {objective} disagrees with reported objective {}", sol.objective())));
        }
        let violation = self.max_violation(&values);
        if violation > FEASIBILITY_TOL {
            return Err(LpError::Numerical(format!("solution violates a row by {violation:e}")));
        }
        Ok(LpSolution { objective, values, proven })
    }

    /// Bound on the optimum of the continuous relaxation that does not rely
    /// on the solver being optimal: a lower bound when minimizing, an upper
    /// bound when maximizing. Row multipliers come from the dual LP and are
    /// only used through [`Self::lagrangian`], so a poor dual loosens the
    /// bound without invalidating it.
    pub fn safe_bound(&self) -> Result<f64, LpError> {
        let sign = match self.direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let c: Vec<f64> = self.columns.iter().map(|c| sign * c.objective).collect();
        Ok(sign * self.lagrangian(&c, None)?)
    }

    /// True when the continuous relaxation is provably empty: some
    /// multipliers in `[-1, 1]` give a positive Lagrangian for the zero
    /// objective.
    pub fn proves_infeasible(&self) -> bool {
        if self.infeasible_empty_row || self.columns.iter().any(|c| c.lower > c.upper) {
            return true;
        }
        let zero = vec![0.0; self.columns.len()];
        self.lagrangian(&zero, Some(1.0)).is_ok_and(|b| b > INFEASIBILITY_MARGIN)
    }

    /// Best `yᵀb + Σ min(d_j l_j, d_j u_j)`, `d = c − Aᵀy`, found by solving
    /// the dual of `min cᵀx` (optionally with `|y| ≤ cap`) and then
    /// re-evaluated from the projected multipliers. Any sign-feasible `y`
    /// makes this a lower bound on `min cᵀx` over the box.
    fn lagrangian(&self, c: &[f64], cap: Option<f64>) -> Result<f64, LpError> {
        if self.infeasible_empty_row {
            return Err(LpError::Infeasible);
        }
        for col in &self.columns {
            if !(col.lower.is_finite() && col.upper.is_finite()) {
                return Err(LpError::Numerical("column without finite bounds".into()));
            }
            if col.lower > col.upper {
                return Err(LpError::Infeasible);
            }
        }
        let cap = cap.unwrap_or(f64::INFINITY);
        // dual: max yᵀb + lᵀp − uᵀq, Aᵀy + p − q = c, p, q ≥ 0
        let mut p = Problem::new(OptimizationDirection::Maximize);
        let ys: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                let range = match r.sense {
                    Sense::Ge => (0.0, cap),
                    Sense::Le => (-cap, 0.0),
                    Sense::Eq => (-cap, cap),
                };
                p.add_var(r.rhs, range)
            })
            .collect();
        let mut by_column: Vec<LinearExpr> = (0..self.columns.len()).map(|_| LinearExpr::empty()).collect();
        for (r, &y) in self.rows.iter().zip(&ys) {
            for &(j, a) in &r.terms {
                by_column[j].add(y, a);
            }
        }
        for ((col, mut e), &cj) in self.columns.iter().zip(by_column).zip(c) {
            e.add(p.add_var(col.lower, (0.0, f64::INFINITY)), 1.0);
            e.add(p.add_var(-col.upper, (0.0, f64::INFINITY)), -1.0);
            p.add_constraint(e, ComparisonOp::Eq, cj);
        }
        let outcome = p.solve().map_err(|e| LpError::Numerical(format!("dual: {e}")))?;
        let sol = outcome.solution().ok_or_else(|| LpError::Numerical("dual solve interrupted".into()))?;
        let mut d = c.to_vec();
        let mut bound = 0.0;
        for (r, &v) in self.rows.iter().zip(&ys) {
            let y = sol.var_value_raw(v);
            let y = match r.sense {
                Sense::Ge => y.max(0.0),
                Sense::Le => y.min(0.0),
                Sense::Eq => y,
            };
            bound += y * r.rhs;
            for &(j, a) in &r.terms {
                d[j] -= y * a;
            }
        }
        bound += self.columns.iter().zip(&d).map(|(col, &dj)| (dj * col.lower).min(dj * col.upper)).sum::<f64>();
        if !bound.is_finite() {
            return Err(LpError::Numerical("dual bound is not finite".into()));
        }
        Ok(bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(Direction::Maximize);
        let z = lp.add_column(0.0, 10.0, 1.0);
        lp.add_row(&[(z, 1.0)], Sense::Le, 3.0);
        assert!((lp.solve().unwrap().objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unit_square_budget() {
        let mut lp = LinearProgram::new(Direction::Maximize);
        let a = lp.add_column(0.0, 1.0, 1.0);
        let b = lp.add_column(0.0, 1.0, 1.0);
        lp.add_row(&[(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        assert!((lp.solve().unwrap().objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_terms_merge() {
        let mut lp = LinearProgram::new(Direction::Maximize);
        let a = lp.add_column(0.0, 5.0, 1.0);
        lp.add_row(&[(a, 1.0), (a, 1.0), (a, 0.0)], Sense::Le, 4.0);
        assert!((lp.solve().unwrap().objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasibility_detected() {
        let mut lp = LinearProgram::new(Direction::Maximize);
        let a = lp.add_column(0.0, 1.0, 1.0);
        lp.add_row(&[(a, 1.0)], Sense::Ge, 2.0);
        assert_eq!(lp.solve(), Err(LpError::Infeasible));
        let mut lp = LinearProgram::new(Direction::Maximize);
        lp.add_column(0.0, 1.0, 1.0);
        lp.add_row(&[], Sense::Ge, 1.0);
        assert_eq!(lp.solve(), Err(LpError::Infeasible));
    }

    #[test]
    fn integer_columns() {
        let mut lp = LinearProgram::new(Direction::Maximize);
        let a = lp.add_integer_column(0.0, 10.0, 1.0);
        lp.add_row(&[(a, 2.0)], Sense::Le, 5.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-9 && s.proven);
    }

    #[test]
    fn safe_bound_brackets_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = 6;
            for direction in [Direction::Maximize, Direction::Minimize] {
                let mut lp = LinearProgram::new(direction);
                let cols: Vec<usize> = (0..n).map(|_| lp.add_column(rng.gen_range(-2.0..0.0), rng.gen_range(0.0..2.0), rng.gen_range(-1.0..1.0))).collect();
                for _ in 0..5 {
                    let terms: Vec<(usize, f64)> = cols.iter().map(|&j| (j, rng.gen_range(-1.0..1.0))).collect();
                    let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..3)];
                    let rhs = if sense == Sense::Eq { 0.0 } else { rng.gen_range(-0.5..0.5) };
                    lp.add_row(&terms, sense, rhs);
                }
                let (Ok(s), Ok(b)) = (lp.solve(), lp.safe_bound()) else { continue };
                // valid side, and tight at a genuine optimum
                match direction {
                    Direction::Maximize => assert!(b >= s.objective - 1e-9, "{b} < {}", s.objective),
                    Direction::Minimize => assert!(b <= s.objective + 1e-9, "{b} > {}", s.objective),
                }
                assert!((b - s.objective).abs() <= 1e-7, "{b} vs {}", s.objective);
            }
        }
    }

    #[test]
    fn infeasibility_certificate() {
        let mut lp = LinearProgram::new(Direction::Minimize);
        let a = lp.add_column(0.0, 1.0, 1.0);
        let b = lp.add_column(0.0, 1.0, 0.0);
        lp.add_row(&[(a, 1.0), (b, 1.0)], Sense::Ge, 1.5);
        assert!(!lp.proves_infeasible());
        lp.add_row(&[(a, 1.0), (b, -1.0)], Sense::Ge, 0.75);
        assert!(lp.proves_infeasible());
        assert_eq!(lp.solve(), Err(LpError::Infeasible));
    }

    #[test]
    fn safe_bound_of_box_only_problem() {
        let mut lp = LinearProgram::new(Direction::Minimize);
        lp.add_column(-1.0, 3.0, 2.0);
        lp.add_column(-4.0, 1.0, -1.0);
        assert!((lp.safe_bound().unwrap() - (-3.0)).abs() < 1e-12);
    }

    /// Textbook dense tableau simplex for `max cᵀx, Ax ≤ b, x ≥ 0` with
    /// `b ≥ 0` (slack basis feasible), Bland's rule.
    fn tableau_simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
        let (m, n) = (a.len(), c.len());
        let w = n + m + 1;
        let mut t = vec![vec![0.0; w]; m + 1];
        for i in 0..m {
            t[i][..n].copy_from_slice(&a[i]);
            t[i][n + i] = 1.0;
            t[i][w - 1] = b[i];
        }
        for j in 0..n {
            t[m][j] = -c[j];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();
        loop {
            let Some(enter) = (0..w - 1).find(|&j| t[m][j] < -1e-12) else { break };
            let mut leave = None;
            let mut best = f64::INFINITY;
            for i in 0..m {
                if t[i][enter] > 1e-12 {
                    let r = t[i][w - 1] / t[i][enter];
                    if r < best - 1e-12 || (r < best + 1e-12 && leave.map_or(true, |l: usize| basis[i] < basis[l])) {
                        best = r;
                        leave = Some(i);
                    }
                }
            }
            let l = leave?;
            let piv = t[l][enter];
            for v in t[l].iter_mut() {
                *v /= piv;
            }
            for i in 0..=m {
                if i != l && t[i][enter] != 0.0 {
                    let f = t[i][enter];
                    let row = t[l].clone();
                    for (x, y) in t[i].iter_mut().zip(row) {
                        *x -= f * y;
                    }
                }
            }
            basis[l] = enter;
        }
        Some(t[m][w - 1])
    }

    #[test]
    fn random_lps_match_tableau_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (m, n) = (10, 10);
            let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..3.0)).collect()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(1.0..10.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let oracle = tableau_simplex(&a, &b, &c);
            let mut lp = LinearProgram::new(Direction::Maximize);
            // a generous finite box stands in for x ≥ 0
            let cols: Vec<usize> = (0..n).map(|j| lp.add_column(0.0, 1e4, c[j])).collect();
            for i in 0..m {
                let terms: Vec<(usize, f64)> = cols.iter().map(|&j| (j, a[i][j])).collect();
                lp.add_row(&terms, Sense::Le, b[i]);
            }
            match (oracle, lp.solve()) {
                (Some(o), Ok(s)) if s.values.iter().all(|v| *v < 1e4 - 1.0) => {
                    assert!((o - s.objective).abs() <= 1e-7 * (1.0 + o.abs()), "{o} vs {}", s.objective)
                }
                (None, Ok(s)) => assert!(s.values.iter().any(|v| *v > 1e4 - 1.0)),
                (o, s) => panic!("oracle {o:?} solver {s:?}"),
            }
        }
    }
}
