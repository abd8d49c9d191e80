//! Rounding heuristic that produces a verified feasible placement.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::relax::{solve_lp_relaxation, RelaxObjective, RelaxationSpec, TangentCut};
use super::verify::{verify_ac_feasibility, FeasibilityReport, VerifyOptions};
use super::SolveError;
use crate::acpf::PowerFlowState;
use crate::feeder::FeederModel;
use crate::gi::CandidateSet;
use crate::miblp::{anti_clustering_constraints, propagate_bounds, CostConfig, DecomposedProblem};

/// A placement that passed the full AC check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Incumbent {
    pub x: Vec<bool>,
    pub z: Vec<u32>,
    pub value: f64,
    pub report: FeasibilityReport,
    #[serde(skip)]
    pub state: Option<PowerFlowState>,
}

/// Memoized AC verification keyed by charger counts.
pub struct VerifyCache<'a> {
    model: &'a FeederModel,
    candidates: &'a CandidateSet,
    cost: CostConfig,
    options: VerifyOptions,
    seen: HashMap<Vec<u32>, (FeasibilityReport, Option<PowerFlowState>)>,
    pub calls: usize,
}

impl<'a> VerifyCache<'a> {
    pub fn new(model: &'a FeederModel, candidates: &'a CandidateSet, cost: &CostConfig, options: &VerifyOptions) -> Self {
        Self { model, candidates, cost: *cost, options: *options, seen: HashMap::new(), calls: 0 }
    }

    pub fn check(&mut self, z: &[u32]) -> Result<&(FeasibilityReport, Option<PowerFlowState>), SolveError> {
        if !self.seen.contains_key(z) {
            self.calls += 1;
            let r = verify_ac_feasibility(self.model, self.candidates, z, &self.cost, &self.options)?;
            self.seen.insert(z.to_vec(), r);
        }
        Ok(&self.seen[z])
    }

    pub fn incumbent(&mut self, x: &[bool], z: &[u32], value: f64) -> Result<Option<Incumbent>, SolveError> {
        let (report, state) = self.check(z)?;
        Ok(report.passed().then(|| Incumbent { x: x.to_vec(), z: z.to_vec(), value, report: report.clone(), state: state.clone() }))
    }
}

/// Orders sites by the root relaxation (sites the LP opens first, then by
/// weight), opens them greedily with the largest charger count that keeps
/// the budget and passes the AC check, and retries with the top-ranked
/// sites excluded. Returns the best placement meeting the demand.
pub fn local_incumbent(
    problem: &DecomposedProblem,
    candidates: &CandidateSet,
    cost: &CostConfig,
    cache: &mut VerifyCache,
    pool: &mut Vec<TangentCut>,
) -> Result<Option<Incumbent>, SolveError> {
    let miblp = &problem.problem;
    let n = miblp.candidates.len();
    let demand = miblp.demand as u64;
    let mut lower = problem.lower.clone();
    let mut upper = problem.upper.clone();
    if propagate_bounds(problem, &mut lower, &mut upper, 20).is_err() {
        return Ok(None);
    }
    let spec = RelaxationSpec { lower: &lower, upper: &upper, cuts: &[], objective_cut: None, integral: false, objective: RelaxObjective::Siting };
    let root = match solve_lp_relaxation(problem, &spec, pool) {
        Ok(s) => s,
        Err(_) => return Ok(None),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let opened = |k: usize| root.values[miblp.candidates[k].x] >= 0.5;
    order.sort_by(|&a, &b| opened(b).cmp(&opened(a)).then(miblp.candidates[b].weight.total_cmp(&miblp.candidates[a].weight)).then(a.cmp(&b)));
    let conflicts: BTreeSet<(usize, usize)> =
        anti_clustering_constraints(candidates, cost.service_radius_m).iter().flat_map(|p| [(p.first, p.second), (p.second, p.first)]).collect();

    let mut best: Option<Incumbent> = None;
    let consider = |inc: Option<Incumbent>, best: &mut Option<Incumbent>| {
        if let Some(i) = inc {
            if best.as_ref().map_or(true, |b| i.value > b.value) {
                *best = Some(i);
            }
        }
    };
    if demand == 0 {
        let inc = cache.incumbent(&vec![false; n], &vec![0; n], 0.0)?;
        consider(inc, &mut best);
    }
    for skip in 0..n {
        let mut x = vec![false; n];
        let mut z = vec![0u32; n];
        let mut spend = 0.0;
        for &k in &order[skip..] {
            if (0..n).any(|j| x[j] && conflicts.contains(&(j, k))) {
                continue;
            }
            let e = &candidates.entries[k];
            for zk in (e.z_min.max(1)..=e.z_max).rev() {
                let c = e.land_cost + cost.charger_cost * zk as f64;
                if spend + c > cost.budget {
                    continue;
                }
                z[k] = zk;
                if cache.check(&z)?.0.passed() {
                    x[k] = true;
                    spend += c;
                    break;
                }
                z[k] = 0;
            }
        }
        let total: u64 = z.iter().map(|&v| v as u64).sum();
        if total >= demand && (total > 0 || demand == 0) {
            let value = miblp.site_value(&x, &z);
            let inc = cache.incumbent(&x, &z, value)?;
            consider(inc, &mut best);
        }
    }
    Ok(best)
}
