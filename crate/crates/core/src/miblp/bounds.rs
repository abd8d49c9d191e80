//! Interval arithmetic and feasibility-based bound propagation over the
//! decomposed problem (linear rows plus bilinear definitions).

use thiserror::Error;

use super::decompose::DecomposedProblem;
use super::Sense;

pub type Interval = (f64, f64);

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("bounds of column {column} crossed ({lower} > {upper})")]
    Empty { column: usize, lower: f64, upper: f64 },
}

pub fn interval_mul(a: Interval, b: Interval) -> Interval {
    let c = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn interval_sq(a: Interval) -> Interval {
    let hi = (a.0 * a.0).max(a.1 * a.1);
    let lo = if a.0 <= 0.0 && a.1 >= 0.0 { 0.0 } else { (a.0 * a.0).min(a.1 * a.1) };
    (lo, hi)
}

/// `a / b`, or `None` when `b` contains zero.
pub fn interval_div(a: Interval, b: Interval) -> Option<Interval> {
    if b.0 <= 0.0 && b.1 >= 0.0 {
        return None;
    }
    Some(interval_mul(a, (1.0 / b.1, 1.0 / b.0)))
}

pub(crate) fn intersect(a: Interval, b: Interval) -> Option<Interval> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo <= hi).then_some((lo, hi))
}

/// Outward pad against rounding in derived bounds.
fn pad(v: f64) -> f64 {
    1e-10 * (1.0 + v.abs())
}

/// Only changes larger than this are worth another round.
const MIN_GAIN: f64 = 1e-7;

struct Tightener<'a> {
    lower: &'a mut [f64],
    upper: &'a mut [f64],
    integer: &'a [bool],
    changed: bool,
}

impl Tightener<'_> {
    fn raise(&mut self, j: usize, mut v: f64) -> Result<(), PropagationError> {
        v -= pad(v);
        if self.integer[j] {
            v = (v - 1e-6).ceil();
        }
        if v > self.lower[j] {
            if v > self.lower[j] + MIN_GAIN * (1.0 + v.abs()) {
                self.changed = true;
            }
            self.lower[j] = v;
        }
        self.check(j)
    }

    fn lower_to(&mut self, j: usize, mut v: f64) -> Result<(), PropagationError> {
        v += pad(v);
        if self.integer[j] {
            v = (v + 1e-6).floor();
        }
        if v < self.upper[j] {
            if v < self.upper[j] - MIN_GAIN * (1.0 + v.abs()) {
                self.changed = true;
            }
            self.upper[j] = v;
        }
        self.check(j)
    }

    fn narrow(&mut self, j: usize, iv: Interval) -> Result<(), PropagationError> {
        self.raise(j, iv.0)?;
        self.lower_to(j, iv.1)
    }

    fn check(&mut self, j: usize) -> Result<(), PropagationError> {
        let (l, u) = (self.lower[j], self.upper[j]);
        if l > u {
            if l - u <= 1e-9 * (1.0 + l.abs()) {
                let m = 0.5 * (l + u);
                self.lower[j] = m;
                self.upper[j] = m;
            } else {
                return Err(PropagationError::Empty { column: j, lower: l, upper: u });
            }
        }
        Ok(())
    }

    /// `Σ a_j y_j ≤ rhs`: each `a_j y_j ≤ rhs − min Σ_{k≠j} a_k y_k`.
    fn row_le(&mut self, terms: &[(usize, f64)], rhs: f64, sign: f64) -> Result<(), PropagationError> {
        let min_term = |t: &Tightener, j: usize, a: f64| (a * t.lower[j]).min(a * t.upper[j]);
        let total: f64 = terms.iter().map(|&(j, a)| min_term(self, j, sign * a)).sum();
        for &(j, a0) in terms {
            let a = sign * a0;
            if a == 0.0 {
                continue;
            }
            let rest = total - min_term(self, j, a);
            let bound = (sign * rhs - rest) / a;
            if a > 0.0 {
                self.lower_to(j, bound)?;
            } else {
                self.raise(j, bound)?;
            }
        }
        Ok(())
    }
}

/// Tightens column bounds of `problem` in place: linear rows in both
/// directions, product ranges from factor ranges, factor ranges from
/// product ranges (division and square roots), integer rounding. Sound:
/// no point satisfying the constraints inside the input box is removed.
pub fn propagate_bounds(problem: &DecomposedProblem, lower: &mut [f64], upper: &mut [f64], max_rounds: usize) -> Result<(), PropagationError> {
    let mut t = Tightener { lower, upper, integer: &problem.integer, changed: true };
    for j in 0..t.lower.len() {
        t.check(j)?;
    }
    let mut rounds = 0;
    while t.changed && rounds < max_rounds {
        t.changed = false;
        rounds += 1;
        for row in &problem.rows {
            match row.sense {
                Sense::Le => t.row_le(&row.terms, row.rhs, 1.0)?,
                Sense::Ge => t.row_le(&row.terms, row.rhs, -1.0)?,
                Sense::Eq => {
                    t.row_le(&row.terms, row.rhs, 1.0)?;
                    t.row_le(&row.terms, row.rhs, -1.0)?;
                }
            }
        }
        for bl in &problem.bilinear {
            let left = (bl.left_nominal + t.lower[bl.left], bl.left_nominal + t.upper[bl.left]);
            let right = (bl.right_nominal + t.lower[bl.right], bl.right_nominal + t.upper[bl.right]);
            let s = bl.product;
            if bl.left == bl.right {
                t.narrow(s, interval_sq(left))?;
                // |v| ≤ √s^U, and v stays on one side of ±√s^L
                let r_hi = t.upper[s].max(0.0).sqrt();
                let r_lo = t.lower[s].max(0.0).sqrt();
                let (mut lo, mut hi) = (left.0.max(-r_hi), left.1.min(r_hi));
                if lo > -r_lo {
                    lo = lo.max(r_lo);
                }
                if hi < r_lo {
                    hi = hi.min(-r_lo);
                }
                t.narrow(bl.left, (lo - bl.left_nominal, hi - bl.left_nominal))?;
            } else {
                t.narrow(s, interval_mul(left, right))?;
                let prod = (t.lower[s], t.upper[s]);
                if let Some(iv) = interval_div(prod, right) {
                    t.narrow(bl.left, (iv.0 - bl.left_nominal, iv.1 - bl.left_nominal))?;
                }
                let left = (bl.left_nominal + t.lower[bl.left], bl.left_nominal + t.upper[bl.left]);
                if let Some(iv) = interval_div(prod, left) {
                    t.narrow(bl.right, (iv.0 - bl.right_nominal, iv.1 - bl.right_nominal))?;
                }
            }
        }
    }
    Ok(())
}
