//! Sequential bound tightening of the voltage deviations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lp::LpError;
use super::relax::{certified_relaxation, solve_lp_relaxation, RelaxObjective, RelaxationSpec, TangentCut};
use crate::miblp::{propagate_bounds, DecomposedProblem};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralityMode {
    /// Subproblems are LPs.
    #[default]
    Relaxed,
    /// Subproblems keep binary and integer columns (small MILPs).
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbtOptions {
    pub epsilon: f64,
    pub max_sweeps: usize,
    pub mode: IntegralityMode,
    pub workers: usize,
}

impl Default for SbtOptions {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_sweeps: 25, mode: IntegralityMode::Relaxed, workers: 1 }
    }
}

/// Widening of each solved bound against floating-point summation error.
const SAFETY: f64 = 1e-7;
const FBBT_ROUNDS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    /// L2 change of the lower and upper deviation vectors.
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub subproblems: usize,
    /// Filtered columns whose box shrank during the sweep.
    pub tightened: usize,
    pub mean_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbtState {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub prev_lower: Vec<f64>,
    pub prev_upper: Vec<f64>,
    pub f_nlp: Option<f64>,
    pub epsilon: f64,
    pub sweeps: usize,
    pub log: Vec<SweepRecord>,
    /// Deviation boxes after each sweep (index 0 = before the first).
    pub history: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SbtState {
    fn deltas(&self) -> (f64, f64) {
        (l2(&self.lower, &self.prev_lower), l2(&self.upper, &self.prev_upper))
    }

    pub fn converged(&self) -> bool {
        let (a, b) = self.deltas();
        a <= self.epsilon && b <= self.epsilon
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SbtOutcome {
    /// Column-space boxes for every column, tightened.
    Tightened { lower: Vec<f64>, upper: Vec<f64>, state: SbtState },
    /// The region cut off by the objective bound is empty: the incumbent
    /// is optimal (or, without an incumbent, the problem is infeasible).
    Certificate { state: SbtState, reason: String },
}

impl SbtOutcome {
    pub fn state(&self) -> &SbtState {
        match self {
            SbtOutcome::Tightened { state, .. } | SbtOutcome::Certificate { state, .. } => state,
        }
    }
}

enum Probe {
    Value(f64),
    Empty,
    Unknown,
}

fn probe(problem: &DecomposedProblem, spec: &RelaxationSpec, pool: &[TangentCut]) -> Probe {
    let RelaxObjective::Column { column, .. } = spec.objective else { unreachable!() };
    let mut local = pool.to_vec();
    if !spec.integral {
        return match certified_relaxation(problem, spec, &mut local) {
            Ok((_, bound)) => Probe::Value(bound),
            Err(LpError::Infeasible) => Probe::Empty,
            Err(_) => Probe::Unknown,
        };
    }
    match solve_lp_relaxation(problem, spec, &mut local) {
        Ok(s) if s.proven => Probe::Value(s.values[column]),
        Ok(_) => {
            // unproven MILP: fall back to the LP bound, which is weaker but valid
            let relaxed = RelaxationSpec { integral: false, ..spec.clone() };
            probe(problem, &relaxed, pool)
        }
        Err(LpError::Infeasible) => Probe::Empty,
        Err(_) => Probe::Unknown,
    }
}

/// Tightens the filtered deviation boxes by solving min/max of each over
/// the relaxation intersected with `Σ w·z ≥ f_nlp`, sweeping until both
/// bound vectors move by at most `epsilon` (L2) or `max_sweeps` is hit.
/// Dependent columns are refreshed by bound propagation after each sweep.
pub fn sbt_presolve(problem: &DecomposedProblem, f_nlp: Option<f64>, options: &SbtOptions, pool: &[TangentCut]) -> SbtOutcome {
    let nf = problem.filtered.len();
    let mut lower = problem.lower.clone();
    let mut upper = problem.upper.clone();
    let mut state = SbtState {
        lower: vec![0.0; nf],
        upper: vec![0.0; nf],
        prev_lower: vec![0.0; nf],
        prev_upper: vec![0.0; nf],
        f_nlp,
        epsilon: options.epsilon,
        sweeps: 0,
        log: Vec::new(),
        history: Vec::new(),
    };
    let sync = |state: &mut SbtState, lower: &[f64], upper: &[f64]| {
        let (l, u) = problem.deviation_bounds(lower, upper);
        state.lower = l;
        state.upper = u;
    };
    if let Err(e) = propagate_bounds(problem, &mut lower, &mut upper, FBBT_ROUNDS) {
        sync(&mut state, &problem.lower, &problem.upper);
        return SbtOutcome::Certificate { state, reason: e.to_string() };
    }
    sync(&mut state, &lower, &upper);
    state.history.push((state.lower.clone(), state.upper.clone()));
    let threads = rayon::ThreadPoolBuilder::new().num_threads(options.workers.max(1)).build().expect("thread pool");

    while !state.converged() && state.sweeps < options.max_sweeps {
        state.prev_lower = state.lower.clone();
        state.prev_upper = state.upper.clone();
        state.sweeps += 1;
        let jobs: Vec<(usize, bool)> = problem
            .filtered
            .iter()
            .filter(|&&j| upper[j] - lower[j] > 1e-12)
            .flat_map(|&j| [(j, false), (j, true)])
            .collect();
        let (lo_ref, hi_ref) = (&lower, &upper);
        let results: Vec<Probe> = threads.install(|| {
            jobs.par_iter()
                .map(|&(column, maximize)| {
                    let spec = RelaxationSpec {
                        lower: lo_ref,
                        upper: hi_ref,
                        cuts: &[],
                        objective_cut: f_nlp,
                        integral: options.mode == IntegralityMode::Exact,
                        objective: RelaxObjective::Column { column, maximize },
                    };
                    probe(problem, &spec, pool)
                })
                .collect()
        });
        let mut new_lower = lower.clone();
        let mut new_upper = upper.clone();
        for (&(j, maximize), r) in jobs.iter().zip(&results) {
            match *r {
                Probe::Empty => {
                    sync(&mut state, &lower, &upper);
                    return SbtOutcome::Certificate { state, reason: format!("relaxation with the objective cut is empty (column {j})") };
                }
                Probe::Unknown => {}
                Probe::Value(v) if maximize => new_upper[j] = new_upper[j].min(v + SAFETY),
                Probe::Value(v) => new_lower[j] = new_lower[j].max(v - SAFETY),
            }
        }
        for &j in &problem.filtered {
            if new_lower[j] > new_upper[j] {
                let m = 0.5 * (new_lower[j] + new_upper[j]);
                new_lower[j] = m.clamp(lower[j], upper[j]);
                new_upper[j] = new_lower[j];
            }
        }
        let tightened = problem.filtered.iter().filter(|&&j| new_lower[j] > lower[j] || new_upper[j] < upper[j]).count();
        lower = new_lower;
        upper = new_upper;
        if let Err(e) = propagate_bounds(problem, &mut lower, &mut upper, FBBT_ROUNDS) {
            sync(&mut state, &lower, &upper);
            return SbtOutcome::Certificate { state, reason: e.to_string() };
        }
        sync(&mut state, &lower, &upper);
        let (dl, du) = state.deltas();
        let mean_width = if nf == 0 { 0.0 } else { state.upper.iter().zip(&state.lower).map(|(u, l)| u - l).sum::<f64>() / nf as f64 };
        log::debug!("sbt sweep {}: dl={dl:.3e} du={du:.3e} tightened={tightened} width={mean_width:.4e}", state.sweeps);
        state.log.push(SweepRecord { sweep: state.sweeps, delta_lower: dl, delta_upper: du, subproblems: jobs.len(), tightened, mean_width });
        state.history.push((state.lower.clone(), state.upper.clone()));
    }
    SbtOutcome::Tightened { lower, upper, state }
}
