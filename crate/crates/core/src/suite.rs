//! Seeded generator of small benchmark feeders with known-tractable
//! enumeration, and their on-disk format.

use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acpf::{self, InjectionOverlay, PowerFlowOptions};
use crate::feeder::{FeederFile, FeederModel, Line, Load, Node, Phase, SlackSource};
use crate::fixtures::{base, coupled_line, transformer, SEATTLE};
use crate::gi::{prioritize, Candidate, CandidateSet, GiConfig};
use crate::miblp::CostConfig;
use crate::solve::{discrete_violations, verify_ac_feasibility, VerifyOptions};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance {0}: {1}")]
    Format(String, String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteInstance {
    pub name: String,
    pub seed: u64,
    pub feeder: FeederModel,
    pub candidates: CandidateSet,
    pub demand: u32,
    pub cost: CostConfig,
}

impl SuiteInstance {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(name: &str, text: &str) -> Result<Self, SuiteError> {
        serde_json::from_str(text).map_err(|e| SuiteError::Format(name.into(), e.to_string()))
    }

    /// Every charger-count vector `z` with `z_k ∈ {0} ∪ [z_min, z_max]`.
    pub fn configurations(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new()];
        for c in &self.candidates.entries {
            let choices: Vec<u32> = std::iter::once(0).chain(c.z_min.max(1)..=c.z_max).collect();
            out = out.iter().flat_map(|p| choices.iter().map(move |&v| [p.as_slice(), &[v]].concat())).collect();
        }
        out
    }
}

/// Smallest limit margin closer to zero than this makes an instance
/// numerically ambiguous and it is redrawn.
pub const MARGIN_GUARD: f64 = 1e-4;
const CHARGER_KW: f64 = 7.2;

fn draw_feeder(rng: &mut ChaCha8Rng) -> Option<FeederFile> {
    let abc = [Phase::A, Phase::B, Phase::C];
    let n = rng.gen_range(4..=8);
    let (lat0, lon0) = SEATTLE;
    let mut nodes = vec![
        Node { id: "s".into(), phases: abc.to_vec(), latitude: lat0, longitude: lon0, v_min: 0.95, v_max: 1.05 },
        Node { id: "1".into(), phases: abc.to_vec(), latitude: lat0 + 0.0005, longitude: lon0, v_min: 0.95, v_max: 1.05 },
    ];
    let mut lines: Vec<Line> = Vec::new();
    for k in 2..n {
        let parent = rng.gen_range(1..k);
        let pp = nodes[parent].phases.clone();
        let phases = if pp.len() == 3 && rng.gen_bool(0.3) { pp.clone() } else { vec![*pp.choose(rng).unwrap()] };
        let r = rng.gen_range(0.02..0.06);
        let zs = Complex64::new(r, 2.0 * r);
        let zm = if phases.len() > 1 { zs * 0.3 } else { Complex64::default() };
        let id = k.to_string();
        let (plat, plon) = (nodes[parent].latitude, nodes[parent].longitude);
        let dist = rng.gen_range(0.0008..0.0030);
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        nodes.push(Node {
            id: id.clone(),
            phases: phases.clone(),
            latitude: plat + dist * ang.sin(),
            longitude: plon + dist * ang.cos(),
            v_min: 0.95,
            v_max: 1.05,
        });
        lines.push(coupled_line(&format!("L{}-{id}", nodes[parent].id), &nodes[parent].id, &id, &phases, zs, zm));
    }
    let mut loads = Vec::new();
    for nd in nodes.iter().skip(1) {
        for &p in &nd.phases {
            if rng.gen_bool(0.7) {
                let pl: f64 = rng.gen_range(0.02..0.15);
                loads.push(Load { node: nd.id.clone(), phase: p, p_load: pl, q_load: 0.3 * pl });
            }
        }
    }
    if loads.is_empty() {
        return None;
    }
    let v = if rng.gen_bool(0.5) { 1.0 } else { 1.02 };
    Some(FeederFile {
        version: 1,
        base: base(),
        nodes,
        lines,
        transformers: vec![transformer("T1", "s", "1", &abc, Complex64::new(0.005, 0.02), 10.0)],
        loads,
        slack: SlackSource::new("s", v),
    })
}

/// Draws one instance; `None` when the draw is rejected (no loads, base
/// case infeasible, a configuration whose power flow diverges or whose
/// worst limit margin is within [`MARGIN_GUARD`] of zero).
pub fn generate_instance(seed: u64) -> Option<SuiteInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut file = draw_feeder(&mut rng)?;
    let probe = FeederModel::new(file.clone()).ok()?;
    let state = acpf::solve_powerflow(&probe, &InjectionOverlay::new(), &PowerFlowOptions::default()).ok()?;
    let base_max = acpf::transformer_currents(&probe, &state).iter().map(|c| c.magnitude()).fold(0.0, f64::max);
    let unit = base().kw_to_pu(CHARGER_KW);
    file.transformers[0].i_rated = base_max + unit * (rng.gen_range(0..=4) as f64 + 0.5);
    let model = FeederModel::new(file).ok()?;
    let base_state = acpf::solve_powerflow(&model, &InjectionOverlay::new(), &PowerFlowOptions::default()).ok()?;

    let mut loaded: Vec<usize> = (0..model.nodes.len()).filter(|&i| i != model.slack_node() && model.loads.iter().any(|l| l.node == model.nodes[i].id)).collect();
    loaded.shuffle(&mut rng);
    let k = rng.gen_range(2..=4).min(loaded.len());
    if k < 2 {
        return None;
    }
    loaded.truncate(k);
    loaded.sort_unstable();
    let entries: Vec<Candidate> = loaded
        .iter()
        .map(|&i| {
            let nd = &model.nodes[i];
            Candidate {
                node: nd.id.clone(),
                phase: *nd.phases.choose(&mut rng).unwrap(),
                land_cost: (rng.gen_range(5_000.0..40_000.0f64) / 100.0).round() * 100.0,
                z_min: 1,
                z_max: rng.gen_range(1..=3),
                latitude: nd.latitude,
                longitude: nd.longitude,
                headroom: 0.0,
                f_v: 0.0,
                f_c: 0.0,
                f_g: 0.0,
                weight: 0.0,
            }
        })
        .collect();
    let candidates = prioritize(&model, &base_state, &CandidateSet::new(entries), &GiConfig::default()).ok()?;
    if candidates.entries.iter().any(|c| !(c.weight > 0.0)) {
        return None;
    }
    let full: f64 = candidates.entries.iter().map(|c| c.land_cost + 8600.0 * c.z_max as f64).sum();
    let budget = if rng.gen_bool(0.5) { 1.0e6 } else { (rng.gen_range(0.35..0.8) * full / 1000.0).round() * 1000.0 };
    let radius = if rng.gen_bool(0.5) { 100.0 } else { 200.0 };
    let cost = CostConfig { charger_kw: CHARGER_KW, pf: 0.985, charger_cost: 8600.0, budget, service_radius_m: radius };
    let cap: u32 = candidates.entries.iter().map(|c| c.z_max).sum();
    let demand = rng.gen_range(0..=3u32).min(cap);
    let inst = SuiteInstance { name: format!("case-{seed}"), seed, feeder: model, candidates, demand, cost };

    let opts = VerifyOptions::default();
    let mut any_violation = false;
    let mut any_feasible = false;
    for z in inst.configurations() {
        let (report, _) = verify_ac_feasibility(&inst.feeder, &inst.candidates, &z, &inst.cost, &opts).ok()?;
        let margin = report.worst_voltage_margin?.min(report.worst_thermal_margin?);
        if margin.abs() < MARGIN_GUARD {
            return None;
        }
        any_violation |= margin < 0.0;
        if z.iter().all(|&v| v == 0) && margin < 0.0 {
            return None;
        }
        let x: Vec<bool> = z.iter().map(|&v| v > 0).collect();
        any_feasible |= margin > 0.0 && discrete_violations(&inst.candidates, &x, &z, inst.demand, &inst.cost).is_empty();
    }
    // keep feasible instances on which the grid limits bind
    (any_violation && any_feasible).then_some(inst)
}

/// `count` accepted instances, drawing seeds `seed, seed + 1, ...`.
pub fn generate_suite(count: usize, seed: u64) -> Vec<SuiteInstance> {
    let mut out = Vec::with_capacity(count);
    let mut s = seed;
    while out.len() < count {
        if let Some(i) = generate_instance(s) {
            out.push(i);
        }
        s += 1;
    }
    out
}

pub fn write_suite(dir: impl AsRef<Path>, instances: &[SuiteInstance]) -> Result<(), SuiteError> {
    std::fs::create_dir_all(&dir)?;
    for i in instances {
        std::fs::write(dir.as_ref().join(format!("{}.json", i.name)), i.to_json())?;
    }
    Ok(())
}

/// Instances of a directory in file-name order.
pub fn read_suite(dir: impl AsRef<Path>) -> Result<Vec<SuiteInstance>, SuiteError> {
    let mut paths: Vec<_> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            SuiteInstance::from_json(&p.display().to_string(), &text)
        })
        .collect()
}
