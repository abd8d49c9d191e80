//! Grid-impact prioritization of candidate charger sites.
//!
//! Each candidate gets a perturbation power flow with one charger's draw
//! added at its terminal. Voltage and transformer-current deviations from
//! the base case (plus penalties for limit excursions) give `f_v` and `f_c`;
//! their normalized, self-weighted blend is the GI index `f_g`, and a
//! softmax of `-f_g` yields the priority weights used in the objective.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acpf::{self, InjectionOverlay, PowerFlowOptions, PowerFlowState};
use crate::feeder::{FeederModel, Phase};

#[derive(Debug, Error)]
pub enum GiError {
    #[error("invalid GI configuration: {0}")]
    InvalidConfig(String),
    #[error("perturbed power flow failed at {site}: {source}")]
    Perturbation {
        site: String,
        #[source]
        source: acpf::PowerFlowError,
    },
    #[error("impact vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no candidates to weight")]
    Empty,
    #[error("every candidate has an infinite grid-impact index")]
    NoUsableCandidate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GiConfig {
    /// Perturbation draw in kW (converted with the feeder's per-unit base).
    pub delta_p_kw: f64,
    pub pf: f64,
    pub gamma: f64,
    #[serde(skip)]
    pub powerflow: PowerFlowOptions,
}

impl Default for GiConfig {
    fn default() -> Self {
        Self { delta_p_kw: 7.2, pf: 0.985, gamma: 10.0, powerflow: PowerFlowOptions::default() }
    }
}

impl GiConfig {
    pub fn validate(&self) -> Result<(), GiError> {
        if !(self.delta_p_kw > 0.0) || !self.delta_p_kw.is_finite() {
            return Err(GiError::InvalidConfig("perturbation power must be positive".into()));
        }
        if !(self.pf > 0.0 && self.pf <= 1.0) {
            return Err(GiError::InvalidConfig("power factor must lie in (0, 1]".into()));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(GiError::InvalidConfig("gamma must be non-negative".into()));
        }
        Ok(())
    }

    /// Complex per-unit perturbation `δS`.
    pub fn delta_s(&self, model: &FeederModel) -> Complex64 {
        let p = model.base.kw_to_pu(self.delta_p_kw);
        Complex64::new(p, p * self.pf.acos().tan())
    }
}

/// One candidate `(node, phase)` site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node: String,
    pub phase: Phase,
    pub land_cost: f64,
    pub z_min: u32,
    pub z_max: u32,
    pub latitude: f64,
    pub longitude: f64,
    /// Remaining upstream transformer capacity in the base case (per-unit).
    #[serde(default)]
    pub headroom: f64,
    #[serde(default)]
    pub f_v: f64,
    #[serde(default)]
    pub f_c: f64,
    #[serde(default)]
    pub f_g: f64,
    #[serde(default)]
    pub weight: f64,
}

impl Candidate {
    pub fn label(&self) -> String {
        format!("{}.{}", self.node, self.phase)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(entries: Vec<Candidate>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|c| c.weight).collect()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate serialization cannot fail")
    }

    /// Ranked CSV `node,phase,f_v,f_c,f_g,weight` (highest weight first,
    /// ties in set order).
    pub fn to_ranked_csv(&self) -> String {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.entries[b].weight.total_cmp(&self.entries[a].weight).then(a.cmp(&b)));
        let mut out = String::from("node,phase,f_v,f_c,f_g,weight\n");
        for i in order {
            let c = &self.entries[i];
            out.push_str(&format!("{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n", c.node, c.phase, c.f_v, c.f_c, c.f_g, c.weight));
        }
        out
    }
}

/// Per-terminal deviation `|V̂ − V| + γ·|min(0, V̂ − V^L) + min(0, V^U − V̂)|`.
pub fn voltage_deviation(v_hat: f64, v: f64, v_min: f64, v_max: f64, gamma: f64) -> f64 {
    (v_hat - v).abs() + gamma * ((v_hat - v_min).min(0.0) + (v_max - v_hat).min(0.0)).abs()
}

/// Per-transformer-phase deviation `|Î − I| + γ·|min(0, I^rat − Î)|`.
pub fn current_deviation(i_hat: f64, i: f64, rating: f64, gamma: f64) -> f64 {
    (i_hat - i).abs() + gamma * (rating - i_hat).min(0.0).abs()
}

fn perturbed_state(
    model: &FeederModel,
    base_state: &PowerFlowState,
    candidate: &Candidate,
    cfg: &GiConfig,
) -> Result<PowerFlowState, GiError> {
    cfg.validate()?;
    let mut overlay = InjectionOverlay::new();
    overlay
        .add_at(model, &candidate.node, candidate.phase, cfg.delta_s(model))
        .map_err(|source| GiError::Perturbation { site: candidate.label(), source })?;
    for (t, s) in base_overlay(base_state) {
        overlay.add(t, s);
    }
    acpf::solve_powerflow_from(model, &overlay, &cfg.powerflow, Some(base_state))
        .map_err(|source| GiError::Perturbation { site: candidate.label(), source })
}

/// Draws already present in the base state (e.g. existing chargers) stay
/// in the perturbed case.
fn base_overlay(state: &PowerFlowState) -> Vec<(usize, Complex64)> {
    (0..state.p_ch.len())
        .filter(|&t| state.p_ch[t] != 0.0 || state.q_ch[t] != 0.0)
        .map(|t| (t, Complex64::new(state.p_ch[t], state.q_ch[t])))
        .collect()
}

fn voltage_sum(model: &FeederModel, base: &PowerFlowState, pert: &PowerFlowState, gamma: f64) -> f64 {
    model
        .terminals()
        .iter()
        .enumerate()
        .map(|(t, term)| {
            let node = &model.nodes[term.node];
            voltage_deviation(pert.magnitude(t), base.magnitude(t), node.v_min, node.v_max, gamma)
        })
        .sum()
}

fn current_sum(model: &FeederModel, base: &PowerFlowState, pert: &PowerFlowState, gamma: f64) -> f64 {
    let before = acpf::transformer_currents(model, base);
    let after = acpf::transformer_currents(model, pert);
    before
        .iter()
        .zip(&after)
        .map(|(b, a)| current_deviation(a.magnitude(), b.magnitude(), model.transformers[a.transformer].i_rated, gamma))
        .sum()
}

/// Voltage impact `f^v` of one charger's draw at `candidate`.
pub fn voltage_impact(model: &FeederModel, base_state: &PowerFlowState, candidate: &Candidate, cfg: &GiConfig) -> Result<f64, GiError> {
    let pert = perturbed_state(model, base_state, candidate, cfg)?;
    Ok(voltage_sum(model, base_state, &pert, cfg.gamma) / cfg.delta_s(model).norm())
}

/// Transformer-current impact `f^c` of one charger's draw at `candidate`.
pub fn current_impact(model: &FeederModel, base_state: &PowerFlowState, candidate: &Candidate, cfg: &GiConfig) -> Result<f64, GiError> {
    let pert = perturbed_state(model, base_state, candidate, cfg)?;
    Ok(current_sum(model, base_state, &pert, cfg.gamma) / cfg.delta_s(model).norm())
}

/// Both impacts from a single perturbation solve; a diverged solve gives
/// `(+∞, +∞)`.
pub fn impacts(model: &FeederModel, base_state: &PowerFlowState, candidate: &Candidate, cfg: &GiConfig) -> Result<(f64, f64), GiError> {
    match perturbed_state(model, base_state, candidate, cfg) {
        Ok(pert) => {
            let ds = cfg.delta_s(model).norm();
            Ok((voltage_sum(model, base_state, &pert, cfg.gamma) / ds, current_sum(model, base_state, &pert, cfg.gamma) / ds))
        }
        Err(GiError::Perturbation { site, source }) => {
            log::warn!("excluding candidate {site}: {source}");
            Ok((f64::INFINITY, f64::INFINITY))
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridImpact {
    pub f_g: Vec<f64>,
    /// Weight on the normalized voltage index.
    pub a: Vec<f64>,
    /// Weight on the normalized current index.
    pub b: Vec<f64>,
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().filter(|x| x.is_finite()).fold(0.0_f64, f64::max);
    v.iter()
        .map(|&x| {
            if !x.is_finite() {
                f64::INFINITY
            } else if max > 0.0 {
                x / max
            } else {
                0.0
            }
        })
        .collect()
}

/// Combines the impact vectors into the GI index. An all-zero component
/// normalizes to zero everywhere, so its weight is zero; a location where
/// both normalized indices vanish gets `a = b = 0` and `f_g = 0`.
pub fn grid_impact(f_v: &[f64], f_c: &[f64]) -> Result<GridImpact, GiError> {
    if f_v.len() != f_c.len() {
        return Err(GiError::LengthMismatch(f_v.len(), f_c.len()));
    }
    if f_v.iter().chain(f_c).any(|x| x.is_nan() || *x < 0.0) {
        return Err(GiError::InvalidConfig("impact indices must be non-negative".into()));
    }
    let nv = normalize(f_v);
    let nc = normalize(f_c);
    let mut out = GridImpact { f_g: Vec::new(), a: Vec::new(), b: Vec::new() };
    for (v, c) in nv.into_iter().zip(nc) {
        if !v.is_finite() || !c.is_finite() {
            out.f_g.push(f64::INFINITY);
            out.a.push(0.0);
            out.b.push(0.0);
            continue;
        }
        let s = v + c;
        let (a, b) = if s > 0.0 { (v / s, c / s) } else { (0.0, 0.0) };
        out.f_g.push(a * v + b * c);
        out.a.push(a);
        out.b.push(b);
    }
    Ok(out)
}

/// Softmax of `-f_g`. Infinite entries get weight zero.
pub fn priority_weights(f_g: &[f64]) -> Result<Vec<f64>, GiError> {
    if f_g.is_empty() {
        return Err(GiError::Empty);
    }
    if f_g.iter().any(|x| x.is_nan()) {
        return Err(GiError::InvalidConfig("GI index is NaN".into()));
    }
    let min = f_g.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(GiError::NoUsableCandidate);
    }
    let e: Vec<f64> = f_g.iter().map(|&g| if g.is_finite() { (min - g).exp() } else { 0.0 }).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / total).collect())
}

/// Runs the perturbation study for every candidate (concurrently, gathered
/// by index) and fills in `f_v`, `f_c`, `f_g` and `weight`.
pub fn prioritize(model: &FeederModel, base_state: &PowerFlowState, candidates: &CandidateSet, cfg: &GiConfig) -> Result<CandidateSet, GiError> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(GiError::Empty);
    }
    let raw: Vec<(f64, f64)> = candidates
        .entries
        .par_iter()
        .map(|c| impacts(model, base_state, c, cfg))
        .collect::<Result<_, _>>()?;
    let (f_v, f_c): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
    let gi = grid_impact(&f_v, &f_c)?;
    let w = priority_weights(&gi.f_g)?;
    let mut out = candidates.clone();
    for (i, c) in out.entries.iter_mut().enumerate() {
        c.f_v = f_v[i];
        c.f_c = f_c[i];
        c.f_g = gi.f_g[i];
        c.weight = w[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn voltage_deviation_hand_value() {
        let d = voltage_deviation(0.94, 0.96, 0.95, 1.05, 10.0);
        assert!((d - 0.12).abs() < 1e-12);
    }

    #[test]
    fn current_deviation_hand_value() {
        let d = current_deviation(1.2, 1.0, 1.1, 10.0);
        assert!((d - 1.2).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_rejected() {
        let cfg = GiConfig { delta_p_kw: 0.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(GiError::InvalidConfig(_))));
    }

    #[test]
    fn grid_impact_hand_value() {
        // maxima 1.0 elsewhere keep the normalized values at 0.6 and 0.3
        let gi = grid_impact(&[0.6, 1.0], &[0.3, 1.0]).unwrap();
        assert!((gi.a[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((gi.b[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((gi.f_g[0] - 0.5).abs() < 1e-12);
        assert!((gi.f_g[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_components_split_evenly() {
        let f = [0.2, 0.5, 0.8];
        let gi = grid_impact(&f, &f).unwrap();
        for i in 0..3 {
            assert!((gi.a[i] - 0.5).abs() < 1e-15 && (gi.b[i] - 0.5).abs() < 1e-15);
            assert!((gi.f_g[i] - f[i] / 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_current_component_has_zero_weight() {
        let gi = grid_impact(&[0.5, 1.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(gi.b, vec![0.0, 0.0, 0.0]);
        assert_eq!(gi.a, vec![1.0, 1.0, 0.0]);
        assert_eq!(gi.f_g, vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn softmax_hand_values() {
        let w = priority_weights(&[0.0, 2f64.ln()]).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let w = priority_weights(&[0.7; 4]).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
        assert!(matches!(priority_weights(&[]), Err(GiError::Empty)));
    }

    #[test]
    fn infinite_index_gets_zero_weight() {
        let w = priority_weights(&[0.1, f64::INFINITY, 0.1]).unwrap();
        assert_eq!(w[1], 0.0);
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant_and_order_reversing(
            f in proptest::collection::vec(0.0..5.0f64, 1..8),
            shift in -3.0..3.0f64,
        ) {
            let w = priority_weights(&f).unwrap();
            let shifted: Vec<f64> = f.iter().map(|x| x + shift).collect();
            let ws = priority_weights(&shifted).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for i in 0..f.len() {
                prop_assert!((w[i] - ws[i]).abs() <= 1e-12);
                for j in 0..f.len() {
                    if f[i] < f[j] {
                        prop_assert!(w[i] > w[j]);
                    }
                }
            }
        }

        #[test]
        fn blend_weights_sum_to_one(
            pairs in proptest::collection::vec((0.0..3.0f64, 0.0..3.0f64), 1..8),
        ) {
            let (v, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let gi = grid_impact(&v, &c).unwrap();
            for i in 0..v.len() {
                prop_assert!(gi.f_g[i] >= 0.0);
                if gi.a[i] + gi.b[i] > 0.0 {
                    prop_assert!((gi.a[i] + gi.b[i] - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
