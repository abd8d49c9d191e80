use num_complex::Complex64;
use serde::Serialize;

use super::{FeederError, FeederModel};

/// Sparse nodal admittance over terminals, row-major with sorted columns.
///
/// Row `k` gives the line-current injection at terminal `k` as
/// `Σ_j Y[k][j]·V[j]`, i.e. both the real and imaginary current are linear
/// in the rectangular terminal voltages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Admittance {
    n: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

pub(super) struct AdmittanceBuilder {
    n: usize,
    rows: Vec<std::collections::BTreeMap<usize, Complex64>>,
}

impl AdmittanceBuilder {
    pub(super) fn new(n: usize) -> Self {
        Self { n, rows: vec![Default::default(); n] }
    }

    fn add(&mut self, i: usize, j: usize, y: Complex64) {
        *self.rows[i].entry(j).or_default() += y;
    }

    /// Stamps one phase-pair entry `y` of a series branch between terminals
    /// (fi, fj) at the sending end and (ti, tj) at the receiving end.
    pub(super) fn stamp_series(&mut self, fi: usize, fj: usize, ti: usize, tj: usize, y: Complex64) {
        self.add(fi, fj, y);
        self.add(ti, tj, y);
        self.add(fi, tj, -y);
        self.add(ti, fj, -y);
    }

    pub(super) fn finish(self) -> Admittance {
        Admittance {
            n: self.n,
            rows: self.rows.into_iter().map(|r| r.into_iter().collect()).collect(),
        }
    }
}

impl Admittance {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self.rows[i].binary_search_by_key(&j, |(c, _)| *c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Line current injections `(I^r, I^i)` for rectangular voltages.
    pub fn apply(&self, vr: &[f64], vi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ir = vec![0.0; self.n];
        let mut ii = vec![0.0; self.n];
        for (k, row) in self.rows.iter().enumerate() {
            for &(j, y) in row {
                ir[k] += y.re * vr[j] - y.im * vi[j];
                ii[k] += y.re * vi[j] + y.im * vr[j];
            }
        }
        (ir, ii)
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut d = vec![vec![Complex64::new(0.0, 0.0); self.n]; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, y) in row {
                d[i][j] = y;
            }
        }
        d
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.rows[i].iter().all(|&(j, y)| (self.get(j, i) - y).norm() <= tol))
    }
}

/// Nodal admittance of the feeder (lines and transformers as series
/// branches). Degenerate zero-admittance branches are rejected when the
/// model is validated, so a model in hand always has one.
pub fn assemble_admittance(model: &FeederModel) -> Result<Admittance, FeederError> {
    Ok(model.admittance().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{FeederFile, FeederModel, Line, Node, PerUnitBase, Phase, SlackSource};

    fn node(id: &str, lon: f64) -> Node {
        Node { id: id.into(), phases: vec![Phase::A], latitude: 0.0, longitude: lon, v_min: 0.9, v_max: 1.1 }
    }

    fn line(id: &str, g: f64) -> Line {
        Line { id: id.into(), from: "1".into(), to: "2".into(), phases: vec![Phase::A], g: vec![vec![g]], b: vec![vec![0.0]] }
    }

    fn model(lines: Vec<Line>) -> FeederModel {
        FeederModel::new(FeederFile {
            version: 1,
            base: PerUnitBase { s_kva: 100.0, v_kv: 7.2 },
            nodes: vec![node("1", 0.0), node("2", 0.001)],
            lines,
            transformers: vec![],
            loads: vec![],
            slack: SlackSource::new("1", 1.0),
        })
        .unwrap()
    }

    #[test]
    fn two_node_stamp() {
        let y = assemble_admittance(&model(vec![line("L", 10.0)])).unwrap();
        assert_eq!(y.get(0, 0), Complex64::new(10.0, 0.0));
        assert_eq!(y.get(1, 1), Complex64::new(10.0, 0.0));
        assert_eq!(y.get(0, 1), Complex64::new(-10.0, 0.0));
        assert_eq!(y.get(1, 0), Complex64::new(-10.0, 0.0));
    }

    #[test]
    fn parallel_lines_superpose() {
        let y = assemble_admittance(&model(vec![line("L1", 10.0), line("L2", 4.0)])).unwrap();
        assert_eq!(y.get(0, 1), Complex64::new(-14.0, 0.0));
        assert_eq!(y.get(0, 0), Complex64::new(14.0, 0.0));
    }
}
