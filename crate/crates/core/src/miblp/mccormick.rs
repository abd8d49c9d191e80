use serde::{Deserialize, Serialize};

use super::bounds::Interval;
use super::BuildError;

/// `product·s + left·v1 + right·v2 ≤ rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeInequality {
    pub product: f64,
    pub left: f64,
    pub right: f64,
    pub rhs: f64,
}

impl EnvelopeInequality {
    pub fn slack(&self, s: f64, v1: f64, v2: f64) -> f64 {
        self.rhs - (self.product * s + self.left * v1 + self.right * v2)
    }
}

fn check(b: Interval) -> Result<(), BuildError> {
    if !(b.0.is_finite() && b.1.is_finite()) || b.0 > b.1 {
        return Err(BuildError::InvertedBounds { lower: b.0, upper: b.1 });
    }
    Ok(())
}

/// The four McCormick inequalities of `s = v1·v2` over `b1 × b2`: two
/// under-estimators (rows 0–1) and two over-estimators (rows 2–3).
pub fn mccormick_envelope(b1: Interval, b2: Interval) -> Result<[EnvelopeInequality; 4], BuildError> {
    check(b1)?;
    check(b2)?;
    let ((l1, u1), (l2, u2)) = (b1, b2);
    Ok([
        EnvelopeInequality { product: -1.0, left: u2, right: u1, rhs: u1 * u2 },
        EnvelopeInequality { product: -1.0, left: l2, right: l1, rhs: l1 * l2 },
        EnvelopeInequality { product: 1.0, left: -l2, right: -u1, rhs: -u1 * l2 },
        EnvelopeInequality { product: 1.0, left: -u2, right: -l1, rhs: -l1 * u2 },
    ])
}

/// Extra cuts for `s = v²` on `[l, u]`: the secant over-estimator and the
/// tangent at the midpoint. Coefficients of `v` sit in `left`.
pub fn square_cuts(b: Interval) -> Result<[EnvelopeInequality; 2], BuildError> {
    check(b)?;
    let (l, u) = b;
    let m = 0.5 * (l + u);
    Ok([
        EnvelopeInequality { product: 1.0, left: -(l + u), right: 0.0, rhs: -l * u },
        EnvelopeInequality { product: -1.0, left: 2.0 * m, right: 0.0, rhs: m * m },
    ])
}
