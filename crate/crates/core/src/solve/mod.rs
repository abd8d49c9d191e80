//! Relaxation, presolve, branch-and-bound and verification of the siting
//! problem.

pub mod bnb;
pub mod incumbent;
pub mod lp;
pub mod relax;
pub mod sbt;
pub mod verify;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bnb::{branch_and_bound, relative_gap, BnbConfig, BnbNode, BnbResult, BnbStatus, NodeTrace};
pub use incumbent::{local_incumbent, Incumbent, VerifyCache};
pub use lp::{Direction, LinearProgram, LpError, LpSolution};
pub use relax::{build_relaxation, certified_relaxation, solve_lp_relaxation, RelaxObjective, RelaxationSpec, TangentCut};
pub use sbt::{sbt_presolve, IntegralityMode, SbtOptions, SbtOutcome, SbtState, SweepRecord};
pub use verify::{charger_overlay, discrete_violations, verify_ac_feasibility, FeasibilityReport, FeasibilityStatus, VerifyOptions};

use crate::acpf::{self, PowerFlowError, TerminalVoltage};
use crate::feeder::{FeederModel, Phase};
use crate::gi::CandidateSet;
use crate::miblp::{build_minlp_with, filter_and_decompose, lift_to_miblp, BuildError, BuildOptions, CostConfig, DecomposedProblem};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

/// `MIBLP` solves the lifted problem directly; `S-MIBLP` first finds a
/// heuristic incumbent and runs bound tightening.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "MIBLP")]
    Miblp,
    #[default]
    #[serde(rename = "S-MIBLP")]
    SMiblp,
}

impl Approach {
    pub fn label(&self) -> &'static str {
        match self {
            Approach::Miblp => "MIBLP",
            Approach::SMiblp => "S-MIBLP",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub approach: Approach,
    pub sbt: SbtOptions,
    pub bnb: BnbConfig,
    pub verify: VerifyOptions,
    pub build: BuildOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    LimitReached,
    LimitNoIncumbent,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedSite {
    pub node: String,
    pub phase: Phase,
    pub chargers: u32,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    pub x: Vec<bool>,
    pub z: Vec<u32>,
    pub objective: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time_s: f64,
    pub sites: Vec<PlacedSite>,
    pub voltages: Vec<TerminalVoltage>,
    pub feasibility: FeasibilityReport,
}

impl PlacementSolution {
    pub fn total_evcs(&self) -> usize {
        self.x.iter().filter(|&&b| b).count()
    }

    pub fn total_chargers(&self) -> u64 {
        self.z.iter().map(|&v| v as u64).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub presolve_s: f64,
    pub solve_s: f64,
    pub verify_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresolveSummary {
    pub heuristic_value: Option<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub certificate: Option<String>,
    pub sweep_log: Vec<SweepRecord>,
    /// Mean width of the filtered deviation boxes before and after.
    pub mean_width_before: f64,
    pub mean_width_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub approach: Approach,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes: usize,
    pub unresolved_nodes: usize,
    pub timings: PhaseTimes,
    pub presolve: Option<PresolveSummary>,
    pub solution: Option<PlacementSolution>,
    #[serde(skip)]
    pub trace: Vec<NodeTrace>,
}

impl SolveReport {
    /// Relative gap in percent with four decimals; `-` when undefined.
    pub fn gap_pct_string(&self) -> String {
        match self.gap {
            Some(g) if g.is_finite() => format!("{:.4}", 100.0 * g),
            _ => "-".into(),
        }
    }
}

/// Builds, lifts and decomposes the problem for a placement study.
pub fn prepare(model: &FeederModel, candidates: &CandidateSet, demand: u32, cost: &CostConfig, build: &BuildOptions) -> Result<DecomposedProblem, SolveError> {
    let minlp = build_minlp_with(model, candidates, demand, cost, build)?;
    let miblp = lift_to_miblp(&minlp)?;
    Ok(filter_and_decompose(&miblp, &model.slack))
}

fn mean_width(l: &[f64], u: &[f64]) -> f64 {
    if l.is_empty() {
        0.0
    } else {
        u.iter().zip(l).map(|(a, b)| a - b).sum::<f64>() / l.len() as f64
    }
}

/// End-to-end solve: build, optional heuristic + bound tightening,
/// branch-and-bound, independent verification of the answer.
pub fn solve_placement(model: &FeederModel, candidates: &CandidateSet, demand: u32, cost: &CostConfig, config: &SolverConfig) -> Result<SolveReport, SolveError> {
    let problem = prepare(model, candidates, demand, cost, &config.build)?;
    solve_prepared(model, candidates, &problem, cost, config)
}

pub fn solve_prepared(
    model: &FeederModel,
    candidates: &CandidateSet,
    problem: &DecomposedProblem,
    cost: &CostConfig,
    config: &SolverConfig,
) -> Result<SolveReport, SolveError> {
    let mut cache = VerifyCache::new(model, candidates, cost, &config.verify);
    let mut pool: Vec<TangentCut> = Vec::new();
    let mut times = PhaseTimes::default();
    let mut presolve = None;
    let mut incumbent = None;
    let (mut lower, mut upper) = (problem.lower.clone(), problem.upper.clone());

    let t0 = Instant::now();
    if config.approach == Approach::SMiblp {
        incumbent = local_incumbent(problem, candidates, cost, &mut cache, &mut pool)?;
        let f_nlp = incumbent.as_ref().map(|i| i.value);
        let outcome = sbt_presolve(problem, f_nlp, &config.sbt, &pool);
        let st = outcome.state();
        let (l0, u0) = problem.deviation_bounds(&problem.lower, &problem.upper);
        let mut summary = PresolveSummary {
            heuristic_value: f_nlp,
            sweeps: st.sweeps,
            converged: st.converged(),
            certificate: None,
            sweep_log: st.log.clone(),
            mean_width_before: mean_width(&l0, &u0),
            mean_width_after: mean_width(&st.lower, &st.upper),
        };
        match outcome {
            SbtOutcome::Tightened { lower: l, upper: u, .. } => {
                lower = l;
                upper = u;
            }
            SbtOutcome::Certificate { reason, .. } => {
                summary.certificate = Some(reason);
                times.presolve_s = t0.elapsed().as_secs_f64();
                presolve = Some(summary);
                return finish(model, candidates, cost, config, incumbent, None, 0, 0, Vec::new(), times, presolve, false);
            }
        }
        presolve = Some(summary);
    }
    times.presolve_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let result = branch_and_bound(problem, &lower, &upper, incumbent, &config.bnb, &mut cache, &mut pool)?;
    times.solve_s = t1.elapsed().as_secs_f64();
    let limit = matches!(result.status, BnbStatus::LimitReached | BnbStatus::LimitNoIncumbent);
    let bound = result.best_bound.is_finite().then_some(result.best_bound);
    finish(model, candidates, cost, config, result.incumbent, bound, result.nodes, result.unresolved, result.trace, times, presolve, limit)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &FeederModel,
    candidates: &CandidateSet,
    cost: &CostConfig,
    config: &SolverConfig,
    incumbent: Option<Incumbent>,
    best_bound: Option<f64>,
    nodes: usize,
    unresolved: usize,
    trace: Vec<NodeTrace>,
    mut times: PhaseTimes,
    presolve: Option<PresolveSummary>,
    limit: bool,
) -> Result<SolveReport, SolveError> {
    let status = match (&incumbent, limit) {
        (Some(_), false) => SolveStatus::Optimal,
        (Some(_), true) => SolveStatus::LimitReached,
        (None, true) => SolveStatus::LimitNoIncumbent,
        (None, false) => SolveStatus::Infeasible,
    };
    let wall = times.presolve_s + times.solve_s;
    let Some(inc) = incumbent else {
        return Ok(SolveReport {
            approach: config.approach,
            status,
            objective: None,
            best_bound,
            gap: None,
            nodes,
            unresolved_nodes: unresolved,
            timings: times,
            presolve,
            solution: None,
            trace,
        });
    };
    let bound = best_bound.unwrap_or(inc.value).max(inc.value);
    let gap = relative_gap(bound, inc.value);
    let t = Instant::now();
    let (feasibility, state) = verify_ac_feasibility(model, candidates, &inc.z, cost, &config.verify)?;
    times.verify_s = t.elapsed().as_secs_f64();
    let voltages = state.as_ref().map(|s| acpf::voltage_table(model, s)).unwrap_or_default();
    let sites = candidates
        .entries
        .iter()
        .zip(inc.x.iter().zip(&inc.z))
        .filter(|(_, (&x, _))| x)
        .map(|(c, (_, &z))| PlacedSite { node: c.node.clone(), phase: c.phase, chargers: z, weight: c.weight })
        .collect();
    let solution = PlacementSolution {
        x: inc.x,
        z: inc.z,
        objective: inc.value,
        gap,
        nodes,
        wall_time_s: wall,
        sites,
        voltages,
        feasibility,
    };
    Ok(SolveReport {
        approach: config.approach,
        status,
        objective: Some(solution.objective),
        best_bound: Some(bound),
        gap: Some(gap),
        nodes,
        unresolved_nodes: unresolved,
        timings: times,
        presolve,
        solution: Some(solution),
        trace,
    })
}
