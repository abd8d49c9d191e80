//! Independent AC check of an integral placement.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acpf::{self, InjectionOverlay, LimitReport, PowerFlowError, PowerFlowOptions, PowerFlowState};
use crate::feeder::{haversine_distance, FeederModel};
use crate::gi::CandidateSet;
use crate::miblp::CostConfig;

use super::SolveError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub powerflow: PowerFlowOptions,
    /// Limit violations up to this size are accepted.
    pub limit_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { powerflow: PowerFlowOptions::default(), limit_tolerance: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityStatus {
    Pass,
    LimitViolation,
    NonConvergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub status: FeasibilityStatus,
    /// Final KCL residual (inf-norm, per-unit).
    pub residual: f64,
    pub iterations: usize,
    /// `None` when the power flow diverged.
    pub limits: Option<LimitReport>,
    /// Smallest voltage margin (negative = violation); `None` if unknown.
    pub worst_voltage_margin: Option<f64>,
    pub worst_thermal_margin: Option<f64>,
    pub message: Option<String>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.status == FeasibilityStatus::Pass
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Station draws `P = z·rating`, `Q = P·tan φ` as an overlay.
pub fn charger_overlay(model: &FeederModel, candidates: &CandidateSet, z: &[u32], cost: &CostConfig) -> Result<InjectionOverlay, SolveError> {
    if z.len() != candidates.len() {
        return Err(SolveError::Input(format!("{} charger counts for {} candidates", z.len(), candidates.len())));
    }
    let rating = cost.charger_pu(model);
    let mut overlay = InjectionOverlay::new();
    for (c, &zk) in candidates.entries.iter().zip(z) {
        if zk == 0 {
            continue;
        }
        let t = model.find_terminal(&c.node, c.phase).map_err(|e| SolveError::Input(e.to_string()))?;
        let p = rating * zk as f64;
        overlay.add(t, Complex64::new(p, p * cost.tan_phi()));
    }
    Ok(overlay)
}

/// Runs the full power flow with the placement's draws and checks voltage
/// and transformer limits. Returns the converged state when there is one.
pub fn verify_ac_feasibility(
    model: &FeederModel,
    candidates: &CandidateSet,
    z: &[u32],
    cost: &CostConfig,
    options: &VerifyOptions,
) -> Result<(FeasibilityReport, Option<PowerFlowState>), SolveError> {
    let overlay = charger_overlay(model, candidates, z, cost)?;
    match acpf::solve_powerflow(model, &overlay, &options.powerflow) {
        Ok(state) => {
            let limits = acpf::check_limits(model, &state);
            let ok = limits.passes(options.limit_tolerance);
            let report = FeasibilityReport {
                status: if ok { FeasibilityStatus::Pass } else { FeasibilityStatus::LimitViolation },
                residual: state.residual.max_abs(),
                iterations: state.iterations,
                worst_voltage_margin: finite(limits.min_voltage_margin),
                worst_thermal_margin: finite(limits.min_thermal_margin),
                message: (!ok).then(|| describe(&limits)),
                limits: Some(limits),
            };
            Ok((report, Some(state)))
        }
        Err(PowerFlowError::NonConvergence { iterations, residual, .. }) => Ok((
            FeasibilityReport {
                status: FeasibilityStatus::NonConvergence,
                residual,
                iterations,
                limits: None,
                worst_voltage_margin: None,
                worst_thermal_margin: None,
                message: Some(format!("power flow diverged after {iterations} iterations")),
            },
            None,
        )),
        Err(PowerFlowError::SingularJacobian { iteration }) => Ok((
            FeasibilityReport {
                status: FeasibilityStatus::NonConvergence,
                residual: f64::NAN,
                iterations: iteration,
                limits: None,
                worst_voltage_margin: None,
                worst_thermal_margin: None,
                message: Some(format!("singular Jacobian at iteration {iteration}")),
            },
            None,
        )),
        Err(e) => Err(SolveError::Input(e.to_string())),
    }
}

fn describe(limits: &LimitReport) -> String {
    let mut parts: Vec<String> = limits
        .voltage
        .iter()
        .map(|v| format!("voltage {}.{} = {:.6} ({:?} limit {})", v.node, v.phase, v.magnitude, v.bound, v.limit))
        .collect();
    parts.extend(limits.thermal.iter().map(|t| format!("transformer {}.{} current {:.6} > rating {:.6}", t.transformer, t.phase, t.current, t.rating)));
    parts.join("; ")
}

/// Violations of the discrete rules (charger bounds, demand, budget,
/// anti-clustering). Empty when the placement satisfies all of them.
pub fn discrete_violations(candidates: &CandidateSet, x: &[bool], z: &[u32], demand: u32, cost: &CostConfig) -> Vec<String> {
    let mut out = Vec::new();
    if x.len() != candidates.len() || z.len() != candidates.len() {
        out.push(format!("placement length {}/{} does not match {} candidates", x.len(), z.len(), candidates.len()));
        return out;
    }
    let mut spend = 0.0;
    for (k, c) in candidates.entries.iter().enumerate() {
        let (lo, hi) = if x[k] { (c.z_min, c.z_max) } else { (0, 0) };
        if z[k] < lo || z[k] > hi {
            out.push(format!("{} hosts {} chargers outside [{lo}, {hi}]", c.label(), z[k]));
        }
        if x[k] {
            spend += c.land_cost;
        }
        spend += cost.charger_cost * z[k] as f64;
    }
    let total: u64 = z.iter().map(|&v| v as u64).sum();
    if total < demand as u64 {
        out.push(format!("{total} chargers below demand {demand}"));
    }
    if spend > cost.budget * (1.0 + 1e-12) {
        out.push(format!("cost {spend} exceeds budget {}", cost.budget));
    }
    for i in 0..candidates.len() {
        for j in i + 1..candidates.len() {
            let (a, b) = (&candidates.entries[i], &candidates.entries[j]);
            if !(x[i] && x[j]) || a.node == b.node {
                continue;
            }
            let d = haversine_distance(a.latitude, a.longitude, b.latitude, b.longitude);
            if d <= 2.0 * cost.service_radius_m {
                out.push(format!("{} and {} are {d:.2} m apart", a.label(), b.label()));
            }
        }
    }
    out
}
