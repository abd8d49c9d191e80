//! Spatial branch-and-bound over McCormick relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::incumbent::{Incumbent, VerifyCache};
use super::lp::{LpError, LpSolution};
use super::relax::{certified_relaxation, RelaxObjective, RelaxationSpec, TangentCut};
use super::SolveError;
use crate::miblp::{propagate_bounds, DecomposedProblem, VarRole};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbConfig {
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub workers: usize,
    /// Record every explored node's box and bound.
    pub trace: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self { gap_tol: 1e-6, node_limit: Some(200_000), time_limit: None, workers: 1, trace: false }
    }
}

pub const INTEGRALITY_TOL: f64 = 1e-6;
pub const BILINEAR_TOL: f64 = 1e-7;
const MIN_SPLIT_WIDTH: f64 = 1e-8;
const FBBT_ROUNDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchDecision {
    pub column: usize,
    /// `true` for the child above the split.
    pub up: bool,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnbNode {
    pub id: usize,
    pub depth: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lineage: Vec<BranchDecision>,
    /// Relaxation bound inherited from the parent.
    pub bound: f64,
}

struct Queued(BnbNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.bound.total_cmp(&other.0.bound).then(self.0.depth.cmp(&other.0.depth)).then(other.0.id.cmp(&self.0.id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub id: usize,
    pub depth: usize,
    /// Box after propagation (column space); `None` bound = infeasible.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bound: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    LimitReached,
    LimitNoIncumbent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub incumbent: Option<Incumbent>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    /// Nodes whose relaxation point satisfied every bilinear equality but
    /// whose placement failed the AC check by a tolerance-sized margin.
    pub unresolved: usize,
    pub trace: Vec<NodeTrace>,
    pub elapsed_s: f64,
}

pub fn relative_gap(bound: f64, incumbent: f64) -> f64 {
    ((bound - incumbent) / incumbent.abs().max(1.0)).max(0.0)
}

enum Evaluated {
    Pruned { lower: Vec<f64>, upper: Vec<f64> },
    Solved { lower: Vec<f64>, upper: Vec<f64>, lp: LpSolution, bound: f64, cuts: Vec<TangentCut> },
    Failed { lower: Vec<f64>, upper: Vec<f64> },
}

fn evaluate(problem: &DecomposedProblem, node: &BnbNode, pool: &[TangentCut]) -> Evaluated {
    let mut lower = node.lower.clone();
    let mut upper = node.upper.clone();
    if propagate_bounds(problem, &mut lower, &mut upper, FBBT_ROUNDS).is_err() {
        return Evaluated::Pruned { lower, upper };
    }
    let mut local = pool.to_vec();
    let spec = RelaxationSpec { lower: &lower, upper: &upper, cuts: &[], objective_cut: None, integral: false, objective: RelaxObjective::Siting };
    match certified_relaxation(problem, &spec, &mut local) {
        Ok((lp, bound)) => {
            let cuts = local.split_off(pool.len());
            Evaluated::Solved { lower, upper, lp, bound, cuts }
        }
        Err(LpError::Infeasible) => Evaluated::Pruned { lower, upper },
        Err(_) => Evaluated::Failed { lower, upper },
    }
}

/// Terminal whose voltage drives a dependent factor.
fn terminal_of(problem: &DecomposedProblem, column: usize) -> Option<usize> {
    match problem.problem.variables[column].role {
        VarRole::VoltageSq { terminal } | VarRole::LoadG { terminal } | VarRole::LoadB { terminal } => Some(terminal),
        VarRole::ChargerG { candidate } | VarRole::ChargerB { candidate } => Some(problem.problem.candidates[candidate].terminal),
        _ => None,
    }
}

/// Filtered column to split for the most violated bilinear term.
fn spatial_choice(problem: &DecomposedProblem, cols: &[f64], lower: &[f64], upper: &[f64]) -> (f64, Option<usize>) {
    let mut terms: Vec<(f64, usize)> = problem
        .bilinear
        .iter()
        .enumerate()
        .map(|(k, b)| ((cols[b.product] - (b.left_nominal + cols[b.left]) * (b.right_nominal + cols[b.right])).abs(), k))
        .collect();
    terms.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let worst = terms.first().map_or(0.0, |t| t.0);
    for &(viol, k) in &terms {
        if viol <= BILINEAR_TOL {
            break;
        }
        let b = &problem.bilinear[k];
        let mut options = Vec::new();
        for f in [b.left, b.right] {
            if problem.problem.variables[f].role.is_filtered() {
                options.push(f);
            } else if let Some(t) = terminal_of(problem, f) {
                let tv = &problem.problem.terminals[t];
                options.extend([tv.vr, tv.vi]);
            }
        }
        let best = options
            .into_iter()
            .filter(|&j| upper[j] - lower[j] > MIN_SPLIT_WIDTH)
            .max_by(|&a, &b| (upper[a] - lower[a]).total_cmp(&(upper[b] - lower[b])).then(b.cmp(&a)));
        if best.is_some() {
            return (worst, best);
        }
    }
    (worst, None)
}

fn widest_filtered(problem: &DecomposedProblem, lower: &[f64], upper: &[f64]) -> Option<usize> {
    problem
        .filtered
        .iter()
        .copied()
        .filter(|&j| upper[j] - lower[j] > MIN_SPLIT_WIDTH)
        .max_by(|&a, &b| (upper[a] - lower[a]).total_cmp(&(upper[b] - lower[b])).then(b.cmp(&a)))
}

struct Search {
    heap: BinaryHeap<Queued>,
    next_id: usize,
}

impl Search {
    fn push(&mut self, parent: &BnbNode, lower: Vec<f64>, upper: Vec<f64>, decision: BranchDecision, bound: f64) {
        let mut lineage = parent.lineage.clone();
        lineage.push(decision);
        let node = BnbNode { id: self.next_id, depth: parent.depth + 1, lower, upper, lineage, bound };
        self.next_id += 1;
        self.heap.push(Queued(node));
    }

    /// Integer split `y ≤ ⌊v⌋` / `y ≥ ⌊v⌋ + 1`.
    fn branch_integer(&mut self, node: &BnbNode, lower: &[f64], upper: &[f64], j: usize, v: f64, bound: f64) {
        let f = v.floor();
        let mut u = upper.to_vec();
        u[j] = f;
        let mut l = lower.to_vec();
        l[j] = f + 1.0;
        self.push(node, lower.to_vec(), u, BranchDecision { column: j, up: false, value: f }, bound);
        self.push(node, l, upper.to_vec(), BranchDecision { column: j, up: true, value: f + 1.0 }, bound);
    }

    fn branch_spatial(&mut self, node: &BnbNode, lower: &[f64], upper: &[f64], j: usize, v: f64, bound: f64) {
        let w = upper[j] - lower[j];
        let at = v.clamp(lower[j] + 0.2 * w, upper[j] - 0.2 * w);
        let mut u = upper.to_vec();
        u[j] = at;
        let mut l = lower.to_vec();
        l[j] = at;
        self.push(node, lower.to_vec(), u, BranchDecision { column: j, up: false, value: at }, bound);
        self.push(node, l, upper.to_vec(), BranchDecision { column: j, up: true, value: at }, bound);
    }
}

/// Best-bound spatial branch-and-bound from the box `(lower, upper)`.
/// Placements are accepted as incumbents only after the AC check.
pub fn branch_and_bound(
    problem: &DecomposedProblem,
    lower: &[f64],
    upper: &[f64],
    incumbent: Option<Incumbent>,
    config: &BnbConfig,
    cache: &mut VerifyCache,
    pool: &mut Vec<TangentCut>,
) -> Result<BnbResult, SolveError> {
    let start = Instant::now();
    let miblp = &problem.problem;
    let mut inc = incumbent;
    let mut search = Search { heap: BinaryHeap::new(), next_id: 1 };
    let root = BnbNode { id: 0, depth: 0, lower: lower.to_vec(), upper: upper.to_vec(), lineage: Vec::new(), bound: f64::INFINITY };
    search.heap.push(Queued(root));
    let threads = rayon::ThreadPoolBuilder::new().num_threads(config.workers.max(1)).build().expect("thread pool");
    let mut nodes = 0usize;
    let mut unresolved = 0usize;
    let mut trace = Vec::new();
    let mut limit_hit = false;
    // largest bound of any node closed by the gap test
    let mut pruned_bound = f64::NEG_INFINITY;

    let close_enough = |bound: f64, inc: &Option<Incumbent>| match inc {
        Some(i) => bound <= i.value + config.gap_tol * i.value.abs().max(1.0),
        None => false,
    };

    loop {
        if let Some(top) = search.heap.peek() {
            if close_enough(top.0.bound, &inc) {
                pruned_bound = pruned_bound.max(top.0.bound);
                search.heap.clear();
            }
        }
        if search.heap.is_empty() {
            break;
        }
        if config.node_limit.is_some_and(|n| nodes >= n) || config.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() >= t) {
            limit_hit = true;
            break;
        }
        let mut batch = Vec::new();
        let room = config.node_limit.map_or(usize::MAX, |n| n - nodes);
        while batch.len() < config.workers.max(1).min(room) {
            match search.heap.pop() {
                Some(q) if !close_enough(q.0.bound, &inc) => batch.push(q.0),
                Some(q) => pruned_bound = pruned_bound.max(q.0.bound),
                None => break,
            }
        }
        let snapshot = pool.clone();
        let evals: Vec<Evaluated> = if batch.len() > 1 {
            threads.install(|| batch.par_iter().map(|n| evaluate(problem, n, &snapshot)).collect())
        } else {
            batch.iter().map(|n| evaluate(problem, n, &snapshot)).collect()
        };

        for (node, ev) in batch.into_iter().zip(evals) {
            nodes += 1;
            let (lo, hi, lp, lp_bound) = match ev {
                Evaluated::Pruned { lower, upper } => {
                    if config.trace {
                        trace.push(NodeTrace { id: node.id, depth: node.depth, lower, upper, bound: None });
                    }
                    continue;
                }
                Evaluated::Failed { lower, upper } => {
                    log::warn!("relaxation failed numerically at node {}; splitting", node.id);
                    if config.trace {
                        trace.push(NodeTrace { id: node.id, depth: node.depth, lower: lower.clone(), upper: upper.clone(), bound: Some(node.bound) });
                    }
                    match widest_filtered(problem, &lower, &upper) {
                        Some(j) => search.branch_spatial(&node, &lower, &upper, j, 0.5 * (lower[j] + upper[j]), node.bound),
                        None => unresolved += 1,
                    }
                    continue;
                }
                Evaluated::Solved { lower, upper, lp, bound, cuts } => {
                    pool.extend(cuts);
                    (lower, upper, lp, bound)
                }
            };
            let bound = lp_bound.min(node.bound);
            if config.trace {
                trace.push(NodeTrace { id: node.id, depth: node.depth, lower: lo.clone(), upper: hi.clone(), bound: Some(bound) });
            }
            if close_enough(bound, &inc) {
                pruned_bound = pruned_bound.max(bound);
                continue;
            }
            let v = &lp.values;
            let frac = |j: usize| (v[j] - v[j].round()).abs() > INTEGRALITY_TOL;
            let mut by_weight: Vec<usize> = (0..miblp.candidates.len()).collect();
            by_weight.sort_by(|&a, &b| miblp.candidates[b].weight.total_cmp(&miblp.candidates[a].weight).then(a.cmp(&b)));
            if let Some(&k) = by_weight.iter().find(|&&k| frac(miblp.candidates[k].x)) {
                let j = miblp.candidates[k].x;
                search.branch_integer(&node, &lo, &hi, j, v[j], bound);
                continue;
            }
            if let Some(&k) = by_weight.iter().find(|&&k| frac(miblp.candidates[k].z)) {
                let j = miblp.candidates[k].z;
                search.branch_integer(&node, &lo, &hi, j, v[j], bound);
                continue;
            }
            let x: Vec<bool> = miblp.candidates.iter().map(|c| v[c.x] > 0.5).collect();
            let z: Vec<u32> = miblp.candidates.iter().map(|c| v[c.z].round().max(0.0) as u32).collect();
            let value = miblp.site_value(&x, &z);
            if cache.check(&z)?.0.passed() {
                if inc.as_ref().map_or(true, |i| value > i.value) {
                    inc = cache.incumbent(&x, &z, value)?;
                    log::debug!("node {}: incumbent {value:.6}", node.id);
                }
                // the relaxation optimum is this placement, so nothing in the
                // node beats it
                if value >= bound - config.gap_tol * value.abs().max(1.0) {
                    continue;
                }
            }
            match spatial_choice(problem, v, &lo, &hi) {
                (_, Some(j)) => search.branch_spatial(&node, &lo, &hi, j, v[j], bound),
                (worst, None) => {
                    log::debug!("node {}: no split left (bilinear violation {worst:.2e}); discarded", node.id);
                    unresolved += 1;
                }
            }
        }
    }

    let open_bound = search.heap.peek().map(|q| q.0.bound);
    let inc_value = inc.as_ref().map(|i| i.value);
    let (status, best_bound) = match (limit_hit, inc_value) {
        (false, Some(iv)) => (BnbStatus::Optimal, pruned_bound.max(iv)),
        (false, None) => (BnbStatus::Infeasible, f64::NEG_INFINITY),
        (true, Some(iv)) => (BnbStatus::LimitReached, open_bound.map_or(iv, |b| b.max(iv)).max(pruned_bound)),
        (true, None) => (BnbStatus::LimitNoIncumbent, open_bound.unwrap_or(f64::INFINITY)),
    };
    let gap = inc_value.map_or(f64::INFINITY, |iv| relative_gap(best_bound, iv));
    Ok(BnbResult { status, incumbent: inc, best_bound, gap, nodes, unresolved, trace, elapsed_s: start.elapsed().as_secs_f64() })
}
