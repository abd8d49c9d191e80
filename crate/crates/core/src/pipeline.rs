//! Output formats shared by the CLI and the benchmark harness.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::gi::CandidateSet;
use crate::miblp::CostConfig;
use crate::solve::{solve_placement, Approach, SolveReport, SolveStatus, SolverConfig};
use crate::suite::SuiteInstance;

/// Point features `{node, phase, weight, selected, chargers}`, one per
/// candidate.
pub fn candidates_geojson(candidates: &CandidateSet, placement: Option<(&[bool], &[u32])>) -> Value {
    let features: Vec<Value> = candidates
        .entries
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let (selected, chargers) = placement.map_or((false, 0), |(x, z)| (x[k], z[k]));
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [c.longitude, c.latitude] },
                "properties": {
                    "node": c.node,
                    "phase": c.phase.to_string(),
                    "weight": c.weight,
                    "selected": selected,
                    "chargers": chargers,
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// A stored solve: the report plus the inputs needed to re-check it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub demand: u32,
    pub cost: CostConfig,
    pub report: SolveReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub case: String,
    pub approach: String,
    pub objective: Option<f64>,
    pub time_s: f64,
    pub sbnb_nodes: usize,
    pub gap_pct: String,
    pub total_evcs: usize,
    pub total_chargers: u64,
    /// `optimal`, `limit_reached`, `limit_no_incumbent`, `infeasible` or
    /// `error: ...`.
    pub status: String,
}

pub const BENCH_HEADER: &str = "case,approach,objective,time_s,sbnb_nodes,gap_pct,total_evcs,total_chargers,status";

impl BenchRow {
    pub fn from_report(case: &str, report: &SolveReport, time_s: f64) -> Self {
        let status = serde_json::to_value(report.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        Self {
            case: case.into(),
            approach: report.approach.label().into(),
            objective: report.objective,
            time_s,
            sbnb_nodes: report.nodes,
            gap_pct: report.gap_pct_string(),
            total_evcs: report.solution.as_ref().map_or(0, |s| s.total_evcs()),
            total_chargers: report.solution.as_ref().map_or(0, |s| s.total_chargers()),
            status,
        }
    }

    pub fn csv_line(&self) -> String {
        let obj = self.objective.map_or(String::new(), |v| format!("{v:.6}"));
        let status = if self.status.contains(',') { format!("\"{}\"", self.status.replace('"', "'")) } else { self.status.clone() };
        format!(
            "{},{},{obj},{:.3},{},{},{},{},{status}",
            self.case, self.approach, self.time_s, self.sbnb_nodes, self.gap_pct, self.total_evcs, self.total_chargers
        )
    }

    pub fn within_gap(&self, gap_tol: f64) -> bool {
        self.gap_pct.parse::<f64>().is_ok_and(|g| g / 100.0 <= gap_tol + 1e-12)
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

/// Both approaches on every instance with the same limits. A failing run
/// becomes an `error` row.
pub fn run_bench(instances: &[SuiteInstance], config: &SolverConfig) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for inst in instances {
        for approach in [Approach::Miblp, Approach::SMiblp] {
            let cfg = SolverConfig { approach, ..*config };
            let t = std::time::Instant::now();
            let row = match solve_placement(&inst.feeder, &inst.candidates, inst.demand, &inst.cost, &cfg) {
                Ok(r) => BenchRow::from_report(&inst.name, &r, t.elapsed().as_secs_f64()),
                Err(e) => BenchRow {
                    case: inst.name.clone(),
                    approach: approach.label().into(),
                    objective: None,
                    time_s: t.elapsed().as_secs_f64(),
                    sbnb_nodes: 0,
                    gap_pct: "-".into(),
                    total_evcs: 0,
                    total_chargers: 0,
                    status: format!("error: {e}"),
                },
            };
            log::info!("{} {}: {}", row.case, row.approach, row.status);
            rows.push(row);
        }
    }
    rows
}

/// S-MIBLP / MIBLP node ratios per case (cases where either run errored
/// or the raw run explored no node are skipped).
pub fn node_ratios(rows: &[BenchRow]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for raw in rows.iter().filter(|r| r.approach == "MIBLP" && !r.status.starts_with("error")) {
        if let Some(s) = rows.iter().find(|r| r.case == raw.case && r.approach == "S-MIBLP" && !r.status.starts_with("error")) {
            if raw.sbnb_nodes > 0 {
                out.push((raw.case.clone(), s.sbnb_nodes as f64 / raw.sbnb_nodes as f64));
            }
        }
    }
    out
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Whether a status counts as a clean finish for the bench summary.
pub fn is_terminal(status: SolveStatus) -> bool {
    matches!(status, SolveStatus::Optimal | SolveStatus::Infeasible)
}
