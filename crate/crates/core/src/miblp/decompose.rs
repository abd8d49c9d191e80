use serde::{Deserialize, Serialize};

use super::{LinearConstraint, MiblpProblem, VarKind};
use crate::feeder::SlackSource;

/// Bilinear entry in column space. With column values `l`, `r` the product
/// column equals `(n_l + l)·(n_r + r)`, i.e. the "dev form"
/// `s − n_r·l − n_l·r − n_l·n_r = l·r`: a pure deviation product plus a
/// linear remainder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevBilinear {
    pub product: usize,
    pub left: usize,
    pub right: usize,
    pub left_nominal: f64,
    pub right_nominal: f64,
}

impl DevBilinear {
    /// Linear remainder `(terms, constant)` such that
    /// `l·r = Σ terms + constant`.
    pub fn linear_part(&self) -> ([(usize, f64); 3], f64) {
        (
            [(self.product, 1.0), (self.left, -self.right_nominal), (self.right, -self.left_nominal)],
            -self.left_nominal * self.right_nominal,
        )
    }
}

/// The lifted problem with every filtered variable written as
/// `nominal + deviation`. Unfiltered columns have nominal 0 and so keep
/// their original values; "column space" below means this mixed space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposedProblem {
    pub problem: MiblpProblem,
    pub nominal: Vec<f64>,
    pub filtered: Vec<usize>,
    pub unfiltered: Vec<usize>,
    /// Linear rows over columns (right-hand sides shifted by nominals).
    pub rows: Vec<LinearConstraint>,
    pub bilinear: Vec<DevBilinear>,
    /// Column-space boxes.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
}

impl DecomposedProblem {
    pub fn columns(&self) -> usize {
        self.nominal.len()
    }

    pub fn to_columns(&self, point: &[f64]) -> Vec<f64> {
        point.iter().zip(&self.nominal).map(|(v, n)| v - n).collect()
    }

    pub fn from_columns(&self, cols: &[f64]) -> Vec<f64> {
        cols.iter().zip(&self.nominal).map(|(c, n)| c + n).collect()
    }

    /// Deviation bounds `(Δy_f^l, Δy_f^u)` of the filtered variables.
    pub fn deviation_bounds(&self, lower: &[f64], upper: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.filtered.iter().map(|&j| lower[j]).collect(), self.filtered.iter().map(|&j| upper[j]).collect())
    }

    /// Largest violation of the column-space system (rows, bilinear
    /// definitions) at a column vector.
    pub fn max_violation(&self, cols: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(cols));
        let bl = self.bilinear.iter().map(|b| {
            (cols[b.product] - (b.left_nominal + cols[b.left]) * (b.right_nominal + cols[b.right])).abs()
        });
        rows.chain(bl).fold(0.0, f64::max)
    }
}

/// Splits the variables into filtered voltages and unfiltered dependents
/// and rewrites the system around the slack's nominal phasors
/// `V_k∠θ_p`.
pub fn filter_and_decompose(miblp: &MiblpProblem, slack: &SlackSource) -> DecomposedProblem {
    let n = miblp.variables.len();
    let mut nominal = vec![0.0; n];
    for tv in &miblp.terminals {
        let (nr, ni) = slack.nominal_voltage(tv.phase);
        nominal[tv.vr] = nr;
        nominal[tv.vi] = ni;
    }
    let (filtered, unfiltered): (Vec<usize>, Vec<usize>) = (0..n).partition(|&j| miblp.variables[j].role.is_filtered());
    let rows = miblp
        .constraints
        .iter()
        .map(|c| {
            let shift: f64 = c.terms.iter().map(|&(j, a)| a * nominal[j]).sum();
            LinearConstraint { terms: c.terms.clone(), sense: c.sense, rhs: c.rhs - shift, tag: c.tag }
        })
        .collect();
    let bilinear = miblp
        .bilinear
        .iter()
        .map(|b| DevBilinear {
            product: b.product,
            left: b.left,
            right: b.right,
            left_nominal: nominal[b.left],
            right_nominal: nominal[b.right],
        })
        .collect();
    let lower = miblp.variables.iter().zip(&nominal).map(|(v, nv)| v.lower - nv).collect();
    let upper = miblp.variables.iter().zip(&nominal).map(|(v, nv)| v.upper - nv).collect();
    let integer = miblp.variables.iter().map(|v| v.kind != VarKind::Continuous).collect();
    DecomposedProblem { problem: miblp.clone(), nominal, filtered, unfiltered, rows, bilinear, lower, upper, integer }
}
