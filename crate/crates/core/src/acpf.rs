//! Three-phase unbalanced power flow in rectangular current-injection form.
//!
//! Unknowns are the rectangular voltages `(V^r, V^i)` of every non-slack
//! terminal. The residual at a terminal is the KCL sum of line, load and
//! charger currents; constant-power devices enter through their surrogate
//! conductance/susceptance `G = P/|V|²`, `B = -Q/|V|²`, so the device
//! current is `(G + jB)·V`. Newton's method with step halving drives the
//! residual below the tolerance from a flat (or warm) start.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::{FeederModel, Phase};

/// Iterates whose squared magnitude falls below this at a loaded terminal
/// are rejected (the surrogate G/B divide by it).
pub const MIN_VSQ: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64, state: Box<PowerFlowState> },
    #[error("singular Jacobian at iteration {iteration}: network is ill-conditioned")]
    SingularJacobian { iteration: usize },
    #[error("state dimension {got} does not match model terminal count {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid power flow input: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iter: 50 }
    }
}

/// Extra constant-power draws (per-unit, positive = consumption) on top of
/// the model's loads, keyed by terminal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InjectionOverlay {
    draws: BTreeMap<usize, Complex64>,
}

impl InjectionOverlay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, terminal: usize, s: Complex64) {
        *self.draws.entry(terminal).or_default() += s;
    }

    /// Adds a draw at `(node_id, phase)`, checking the reference.
    pub fn add_at(&mut self, model: &FeederModel, node_id: &str, phase: Phase, s: Complex64) -> Result<(), PowerFlowError> {
        let t = model
            .find_terminal(node_id, phase)
            .map_err(|e| PowerFlowError::Invalid(e.to_string()))?;
        self.add(t, s);
        Ok(())
    }

    pub fn get(&self, terminal: usize) -> Complex64 {
        self.draws.get(&terminal).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.draws.iter().map(|(k, v)| (*k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    fn validate(&self, model: &FeederModel) -> Result<(), PowerFlowError> {
        for (&t, s) in &self.draws {
            if t >= model.terminal_count() {
                return Err(PowerFlowError::Invalid(format!("overlay references terminal {t} outside the model")));
            }
            if !(s.re.is_finite() && s.im.is_finite()) {
                return Err(PowerFlowError::Invalid("overlay draw is not finite".into()));
            }
        }
        Ok(())
    }
}

/// Real and imaginary KCL mismatch per terminal. Slack terminals carry
/// zero: the source balances them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KclResidual {
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
}

impl KclResidual {
    pub fn max_abs(&self) -> f64 {
        self.real.iter().chain(&self.imag).fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Rectangular voltages and the device quantities they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowState {
    pub v_real: Vec<f64>,
    pub v_imag: Vec<f64>,
    pub g_load: Vec<f64>,
    pub b_load: Vec<f64>,
    pub g_ch: Vec<f64>,
    pub b_ch: Vec<f64>,
    /// Charger (overlay) active/reactive draw per terminal.
    pub p_ch: Vec<f64>,
    pub q_ch: Vec<f64>,
    pub i_load_real: Vec<f64>,
    pub i_load_imag: Vec<f64>,
    pub i_line_real: Vec<f64>,
    pub i_line_imag: Vec<f64>,
    pub i_ch_real: Vec<f64>,
    pub i_ch_imag: Vec<f64>,
    pub residual: KclResidual,
    pub iterations: usize,
}

impl PowerFlowState {
    /// Builds the state implied by rectangular voltages under the model's
    /// loads plus `overlay`.
    pub fn from_voltages(model: &FeederModel, overlay: &InjectionOverlay, v_real: Vec<f64>, v_imag: Vec<f64>) -> Result<Self, PowerFlowError> {
        let n = model.terminal_count();
        if v_real.len() != n || v_imag.len() != n {
            return Err(PowerFlowError::DimensionMismatch { expected: n, got: v_real.len().min(v_imag.len()) });
        }
        let (i_line_real, i_line_imag) = model.admittance().apply(&v_real, &v_imag);
        let mut s = PowerFlowState {
            g_load: vec![0.0; n],
            b_load: vec![0.0; n],
            g_ch: vec![0.0; n],
            b_ch: vec![0.0; n],
            p_ch: vec![0.0; n],
            q_ch: vec![0.0; n],
            i_load_real: vec![0.0; n],
            i_load_imag: vec![0.0; n],
            i_line_real,
            i_line_imag,
            i_ch_real: vec![0.0; n],
            i_ch_imag: vec![0.0; n],
            residual: KclResidual { real: vec![0.0; n], imag: vec![0.0; n] },
            iterations: 0,
            v_real,
            v_imag,
        };
        for t in 0..n {
            let vsq = s.v_sq(t);
            let (p, q) = model.terminal_load(t);
            let ch = overlay.get(t);
            s.p_ch[t] = ch.re;
            s.q_ch[t] = ch.im;
            if vsq > 0.0 {
                s.g_load[t] = p / vsq;
                s.b_load[t] = -q / vsq;
                s.g_ch[t] = ch.re / vsq;
                s.b_ch[t] = -ch.im / vsq;
            }
            let (vr, vi) = (s.v_real[t], s.v_imag[t]);
            s.i_load_real[t] = s.g_load[t] * vr - s.b_load[t] * vi;
            s.i_load_imag[t] = s.g_load[t] * vi + s.b_load[t] * vr;
            s.i_ch_real[t] = s.g_ch[t] * vr - s.b_ch[t] * vi;
            s.i_ch_imag[t] = s.g_ch[t] * vi + s.b_ch[t] * vr;
            if !model.is_slack_terminal(t) {
                s.residual.real[t] = s.i_load_real[t] + s.i_line_real[t] + s.i_ch_real[t];
                s.residual.imag[t] = s.i_load_imag[t] + s.i_line_imag[t] + s.i_ch_imag[t];
            }
        }
        Ok(s)
    }

    /// Flat profile: every terminal at its slack-angle nominal voltage.
    pub fn flat(model: &FeederModel, overlay: &InjectionOverlay) -> Self {
        let (vr, vi) = flat_voltages(model);
        Self::from_voltages(model, overlay, vr, vi).expect("flat start has model dimensions")
    }

    pub fn v_sq(&self, t: usize) -> f64 {
        self.v_real[t] * self.v_real[t] + self.v_imag[t] * self.v_imag[t]
    }

    pub fn magnitude(&self, t: usize) -> f64 {
        self.v_sq(t).sqrt()
    }

    pub fn angle(&self, t: usize) -> f64 {
        self.v_imag[t].atan2(self.v_real[t])
    }
}

fn flat_voltages(model: &FeederModel) -> (Vec<f64>, Vec<f64>) {
    (0..model.terminal_count()).map(|t| model.nominal_voltage(t)).unzip()
}

/// KCL mismatch (Σ load + line + charger currents) at every terminal.
pub fn kcl_residual(model: &FeederModel, state: &PowerFlowState) -> Result<KclResidual, PowerFlowError> {
    let n = model.terminal_count();
    for len in [state.v_real.len(), state.v_imag.len(), state.p_ch.len(), state.q_ch.len()] {
        if len != n {
            return Err(PowerFlowError::DimensionMismatch { expected: n, got: len });
        }
    }
    let overlay = overlay_of(state);
    kcl_mismatch(model, &overlay, &state.v_real, &state.v_imag)
}

fn overlay_of(state: &PowerFlowState) -> InjectionOverlay {
    let mut o = InjectionOverlay::new();
    for t in 0..state.p_ch.len() {
        if state.p_ch[t] != 0.0 || state.q_ch[t] != 0.0 {
            o.add(t, Complex64::new(state.p_ch[t], state.q_ch[t]));
        }
    }
    o
}

/// KCL mismatch for explicit voltages.
pub fn kcl_mismatch(model: &FeederModel, overlay: &InjectionOverlay, vr: &[f64], vi: &[f64]) -> Result<KclResidual, PowerFlowError> {
    let s = PowerFlowState::from_voltages(model, overlay, vr.to_vec(), vi.to_vec())?;
    Ok(s.residual)
}

/// Non-slack terminals in unknown order; unknown `u` occupies entries
/// `2u` (real part) and `2u + 1` (imaginary part).
pub fn unknown_terminals(model: &FeederModel) -> Vec<usize> {
    (0..model.terminal_count()).filter(|&t| !model.is_slack_terminal(t)).collect()
}

/// Analytic Jacobian of the non-slack KCL residual with respect to the
/// non-slack rectangular voltages, in [`unknown_terminals`] order.
pub fn kcl_jacobian(model: &FeederModel, overlay: &InjectionOverlay, vr: &[f64], vi: &[f64]) -> DMatrix<f64> {
    let unknowns = unknown_terminals(model);
    let mut pos = vec![usize::MAX; model.terminal_count()];
    for (u, &t) in unknowns.iter().enumerate() {
        pos[t] = u;
    }
    let m = unknowns.len();
    let y = model.admittance();
    let mut jac = DMatrix::zeros(2 * m, 2 * m);
    for (a, &t) in unknowns.iter().enumerate() {
        for &(j, yv) in y.row(t) {
            let b = pos[j];
            if b == usize::MAX {
                continue;
            }
            jac[(2 * a, 2 * b)] += yv.re;
            jac[(2 * a, 2 * b + 1)] -= yv.im;
            jac[(2 * a + 1, 2 * b)] += yv.im;
            jac[(2 * a + 1, 2 * b + 1)] += yv.re;
        }
        let (pl, ql) = model.terminal_load(t);
        let ch = overlay.get(t);
        let (p, q) = (pl + ch.re, ql + ch.im);
        if p == 0.0 && q == 0.0 {
            continue;
        }
        let (x, w) = (vr[t], vi[t]);
        let msq = x * x + w * w;
        let m2 = msq * msq;
        let nr = p * x + q * w; // msq · I^r
        let ni = p * w - q * x; // msq · I^i
        jac[(2 * a, 2 * a)] += (p * msq - nr * 2.0 * x) / m2;
        jac[(2 * a, 2 * a + 1)] += (q * msq - nr * 2.0 * w) / m2;
        jac[(2 * a + 1, 2 * a)] += (-q * msq - ni * 2.0 * x) / m2;
        jac[(2 * a + 1, 2 * a + 1)] += (p * msq - ni * 2.0 * w) / m2;
    }
    jac
}

fn stacked_residual(res: &KclResidual, unknowns: &[usize]) -> DVector<f64> {
    let mut f = DVector::zeros(2 * unknowns.len());
    for (a, &t) in unknowns.iter().enumerate() {
        f[2 * a] = res.real[t];
        f[2 * a + 1] = res.imag[t];
    }
    f
}

/// Solves the power flow from a flat start.
pub fn solve_powerflow(model: &FeederModel, overlay: &InjectionOverlay, options: &PowerFlowOptions) -> Result<PowerFlowState, PowerFlowError> {
    solve_powerflow_from(model, overlay, options, None)
}

/// Solves the power flow, optionally warm-started from `initial` (slack
/// voltages are always reset to their fixed values).
pub fn solve_powerflow_from(
    model: &FeederModel,
    overlay: &InjectionOverlay,
    options: &PowerFlowOptions,
    initial: Option<&PowerFlowState>,
) -> Result<PowerFlowState, PowerFlowError> {
    if !(options.tolerance > 0.0) {
        return Err(PowerFlowError::Invalid("tolerance must be positive".into()));
    }
    overlay.validate(model)?;
    let (flat_r, flat_i) = flat_voltages(model);
    let (mut vr, mut vi) = match initial {
        Some(s) if s.v_real.len() == flat_r.len() => (s.v_real.clone(), s.v_imag.clone()),
        _ => (flat_r.clone(), flat_i.clone()),
    };
    for t in 0..model.terminal_count() {
        if model.is_slack_terminal(t) {
            vr[t] = flat_r[t];
            vi[t] = flat_i[t];
        }
    }
    let unknowns = unknown_terminals(model);
    let loaded: Vec<bool> = (0..model.terminal_count())
        .map(|t| {
            let (p, q) = model.terminal_load(t);
            p != 0.0 || q != 0.0 || overlay.get(t) != Complex64::default()
        })
        .collect();

    let mut res = kcl_mismatch(model, overlay, &vr, &vi)?;
    let mut iter = 0;
    loop {
        let norm_inf = res.max_abs();
        if norm_inf <= options.tolerance {
            let mut state = PowerFlowState::from_voltages(model, overlay, vr, vi)?;
            state.iterations = iter;
            return Ok(state);
        }
        if iter >= options.max_iter || !norm_inf.is_finite() {
            let mut state = PowerFlowState::from_voltages(model, overlay, vr, vi)?;
            state.iterations = iter;
            return Err(PowerFlowError::NonConvergence { iterations: iter, residual: norm_inf, state: Box::new(state) });
        }
        iter += 1;
        let f = stacked_residual(&res, &unknowns);
        let jac = kcl_jacobian(model, overlay, &vr, &vi);
        let dx = jac
            .lu()
            .solve(&(-&f))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or(PowerFlowError::SingularJacobian { iteration: iter })?;

        let norm2 = f.norm();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let (mut tr, mut ti) = (vr.clone(), vi.clone());
            for (a, &t) in unknowns.iter().enumerate() {
                tr[t] += alpha * dx[2 * a];
                ti[t] += alpha * dx[2 * a + 1];
            }
            let degenerate = unknowns.iter().any(|&t| loaded[t] && tr[t] * tr[t] + ti[t] * ti[t] < MIN_VSQ);
            if !degenerate {
                let trial = kcl_mismatch(model, overlay, &tr, &ti)?;
                let n2 = stacked_residual(&trial, &unknowns).norm();
                if n2.is_finite() && n2 < norm2 {
                    accepted = Some((tr, ti, trial));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((tr, ti, trial)) => {
                vr = tr;
                vi = ti;
                res = trial;
            }
            None => {
                let mut state = PowerFlowState::from_voltages(model, overlay, vr, vi)?;
                state.iterations = iter;
                return Err(PowerFlowError::NonConvergence { iterations: iter, residual: norm_inf, state: Box::new(state) });
            }
        }
    }
}

/// Series current through one transformer phase, from sending to receiving end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchCurrent {
    pub transformer: usize,
    pub phase: Phase,
    pub real: f64,
    pub imag: f64,
}

impl BranchCurrent {
    pub fn magnitude(&self) -> f64 {
        self.real.hypot(self.imag)
    }
}

/// Per-phase transformer currents `y_p·(V_from,p − V_to,p)`.
pub fn transformer_currents(model: &FeederModel, state: &PowerFlowState) -> Vec<BranchCurrent> {
    let mut out = Vec::new();
    for (ti, tr) in model.transformers.iter().enumerate() {
        for (k, (phase, f, t)) in model.transformer_terminals(ti).into_iter().enumerate() {
            let y = Complex64::new(tr.g[k], tr.b[k]);
            let dv = Complex64::new(state.v_real[f] - state.v_real[t], state.v_imag[f] - state.v_imag[t]);
            let i = y * dv;
            out.push(BranchCurrent { transformer: ti, phase, real: i.re, imag: i.im });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoltageBound {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub node: String,
    pub phase: Phase,
    pub magnitude: f64,
    pub bound: VoltageBound,
    pub limit: f64,
    /// Excess beyond the limit in per-unit magnitude.
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalViolation {
    pub transformer: String,
    pub phase: Phase,
    pub current: f64,
    pub rating: f64,
    pub amount: f64,
}

/// Every voltage or transformer-current limit violation of a state, with
/// the worst margins seen (negative margin = violation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub voltage: Vec<VoltageViolation>,
    pub thermal: Vec<ThermalViolation>,
    pub min_voltage_margin: f64,
    pub min_thermal_margin: f64,
}

impl LimitReport {
    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty() && self.thermal.is_empty()
    }

    pub fn worst_violation(&self) -> f64 {
        self.voltage.iter().map(|v| v.amount).chain(self.thermal.iter().map(|t| t.amount)).fold(0.0, f64::max)
    }

    /// True when no violation exceeds `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_violation() <= tol
    }
}

/// Checks `(V^L)² ≤ |V|² ≤ (V^U)²` at every terminal and
/// `|I_τ,p| ≤ I_τ^rat` on every transformer phase.
pub fn check_limits(model: &FeederModel, state: &PowerFlowState) -> LimitReport {
    let mut report = LimitReport {
        voltage: Vec::new(),
        thermal: Vec::new(),
        min_voltage_margin: f64::INFINITY,
        min_thermal_margin: f64::INFINITY,
    };
    for (t, term) in model.terminals().iter().enumerate() {
        let node = &model.nodes[term.node];
        let mag = state.magnitude(t);
        report.min_voltage_margin = report.min_voltage_margin.min(mag - node.v_min).min(node.v_max - mag);
        if mag < node.v_min {
            report.voltage.push(VoltageViolation {
                node: node.id.clone(),
                phase: term.phase,
                magnitude: mag,
                bound: VoltageBound::Lower,
                limit: node.v_min,
                amount: node.v_min - mag,
            });
        } else if mag > node.v_max {
            report.voltage.push(VoltageViolation {
                node: node.id.clone(),
                phase: term.phase,
                magnitude: mag,
                bound: VoltageBound::Upper,
                limit: node.v_max,
                amount: mag - node.v_max,
            });
        }
    }
    for c in transformer_currents(model, state) {
        let tr = &model.transformers[c.transformer];
        let mag = c.magnitude();
        report.min_thermal_margin = report.min_thermal_margin.min(tr.i_rated - mag);
        if mag > tr.i_rated {
            report.thermal.push(ThermalViolation {
                transformer: tr.id.clone(),
                phase: c.phase,
                current: mag,
                rating: tr.i_rated,
                amount: mag - tr.i_rated,
            });
        }
    }
    report
}

/// Row of the JSON state dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalVoltage {
    pub node: String,
    pub phase: Phase,
    pub v_real: f64,
    pub v_imag: f64,
    pub magnitude: f64,
}

pub fn voltage_table(model: &FeederModel, state: &PowerFlowState) -> Vec<TerminalVoltage> {
    model
        .terminals()
        .iter()
        .enumerate()
        .map(|(t, term)| TerminalVoltage {
            node: model.nodes[term.node].id.clone(),
            phase: term.phase,
            v_real: state.v_real[t],
            v_imag: state.v_imag[t],
            magnitude: state.magnitude(t),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn zero_load_gives_flat_profile() {
        let model = fixtures::twelve_node_feeder().with_scaled_loads(0.0).unwrap();
        let s = solve_powerflow(&model, &InjectionOverlay::new(), &PowerFlowOptions::default()).unwrap();
        for t in 0..model.terminal_count() {
            let (r, i) = model.nominal_voltage(t);
            assert!((s.v_real[t] - r).abs() < 1e-12 && (s.v_imag[t] - i).abs() < 1e-12);
        }
        assert!(s.residual.max_abs() < 1e-12);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn two_bus_matches_closed_form() {
        // V² − V + 0.01 = 0 for a 1.0 pu source, g = 10, P = 0.1
        let oracle = (1.0 + (1.0 - 0.04_f64).sqrt()) / 2.0;
        let model = fixtures::two_bus_feeder(10.0, 0.1);
        let s = solve_powerflow(&model, &InjectionOverlay::new(), &PowerFlowOptions::default()).unwrap();
        assert!((s.magnitude(1) - oracle).abs() < 1e-9);
        assert!((oracle - 0.98990).abs() < 1e-5);
    }

    #[test]
    fn flat_profile_residual_is_load_current() {
        let model = fixtures::two_bus_feeder(10.0, 0.1);
        let flat = PowerFlowState::flat(&model, &InjectionOverlay::new());
        let r = kcl_residual(&model, &flat).unwrap();
        // line current vanishes at the flat profile; load current is P/|V| = 0.1
        assert!((r.real[1] - 0.1).abs() < 1e-15);
        assert!(r.imag[1].abs() < 1e-15);
        assert_eq!(r.real[0], 0.0);
    }

    #[test]
    fn residual_dimension_mismatch() {
        let model = fixtures::two_bus_feeder(10.0, 0.1);
        let mut flat = PowerFlowState::flat(&model, &InjectionOverlay::new());
        flat.v_real.pop();
        assert!(matches!(kcl_residual(&model, &flat), Err(PowerFlowError::DimensionMismatch { .. })));
    }

    #[test]
    fn perturbed_voltage_moves_residual_along_jacobian() {
        let model = fixtures::twelve_node_feeder();
        let overlay = InjectionOverlay::new();
        let s = solve_powerflow(&model, &overlay, &PowerFlowOptions::default()).unwrap();
        let unknowns = unknown_terminals(&model);
        let jac = kcl_jacobian(&model, &overlay, &s.v_real, &s.v_imag);
        let (u, t) = (3, unknowns[3]);
        let mut vr = s.v_real.clone();
        vr[t] += 1e-3;
        let r1 = kcl_mismatch(&model, &overlay, &vr, &s.v_imag).unwrap();
        let f1 = stacked_residual(&r1, &unknowns);
        let f0 = stacked_residual(&s.residual, &unknowns);
        let predicted = jac.column(2 * u) * 1e-3;
        let err = (&f1 - &f0 - predicted).amax();
        assert!(err < 1e-4, "first-order mismatch {err}");
    }

    #[test]
    fn limit_report_on_two_bus() {
        // heavier load drops the receiving end below 0.95
        let model = fixtures::two_bus_feeder(10.0, 0.6);
        let s = solve_powerflow(&model, &InjectionOverlay::new(), &PowerFlowOptions::default()).unwrap();
        let mag = s.magnitude(1);
        assert!(mag < 0.95);
        let rep = check_limits(&model, &s);
        assert_eq!(rep.voltage.len(), 1);
        assert!((rep.voltage[0].amount - (0.95 - mag)).abs() < 1e-15);
        assert!(rep.thermal.is_empty());
    }

    #[test]
    fn flat_profile_within_limits_reports_nothing() {
        let model = fixtures::twelve_node_feeder().with_scaled_loads(0.0).unwrap();
        let flat = PowerFlowState::flat(&model, &InjectionOverlay::new());
        let rep = check_limits(&model, &flat);
        assert!(rep.is_empty());
        assert!(rep.passes(0.0));
    }

    #[test]
    fn overlay_rejects_unknown_terminal() {
        let model = fixtures::two_bus_feeder(10.0, 0.1);
        let mut o = InjectionOverlay::new();
        assert!(o.add_at(&model, "2", Phase::B, Complex64::new(0.1, 0.0)).is_err());
        o.add(99, Complex64::new(0.1, 0.0));
        assert!(matches!(solve_powerflow(&model, &o, &PowerFlowOptions::default()), Err(PowerFlowError::Invalid(_))));
    }

    #[test]
    fn collapse_is_reported_as_nonconvergence() {
        // beyond the nose of the P–V curve (P > g/4) no solution exists
        let model = fixtures::two_bus_feeder(10.0, 3.0);
        let err = solve_powerflow(&model, &InjectionOverlay::new(), &PowerFlowOptions::default()).unwrap_err();
        assert!(matches!(err, PowerFlowError::NonConvergence { .. }), "{err}");
    }
}
