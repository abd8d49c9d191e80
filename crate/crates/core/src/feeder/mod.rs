//! Three-phase feeder description: nodes, branches, loads and the slack source.
//!
//! A [`FeederModel`] is built from the versioned JSON schema (see
//! [`load_feeder`]) and validated on construction. Once built it is
//! immutable, carries its assembled nodal admittance, and can be shared
//! read-only between solver workers.

mod admittance;
mod candidates;
mod geo;

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admittance::{assemble_admittance, Admittance};
pub use candidates::{select_candidates, CandidateSelection, SiteCatalog, SiteSpec};
pub use geo::{haversine_distance, EARTH_RADIUS_M};

/// Current version of the feeder JSON schema.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("failed to read feeder file: {0}")]
    Io(#[from] std::io::Error),
    #[error("feeder schema violation: {0}")]
    Schema(String),
    #[error("feeder topology error: {0}")]
    Topology(String),
    #[error("feeder reference error: {0}")]
    Reference(String),
    #[error("invalid feeder data: {0}")]
    Invalid(String),
    #[error("degenerate branch {0}: zero series admittance")]
    DegenerateBranch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    /// Nominal angle of the phase in radians: 0, -2π/3, +2π/3.
    pub fn nominal_angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * PI / 3.0,
            Phase::C => 2.0 * PI / 3.0,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Phase {
    type Err = FeederError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Phase::A),
            "B" | "b" => Ok(Phase::B),
            "C" | "c" => Ok(Phase::C),
            other => Err(FeederError::Schema(format!("unknown phase {other:?}"))),
        }
    }
}

/// Per-unit base declared in the file header. `s_kva` is the per-phase
/// power base; every electrical quantity in the file is already per-unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    pub s_kva: f64,
    pub v_kv: f64,
}

impl PerUnitBase {
    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / self.s_kva
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub phases: Vec<Phase>,
    pub latitude: f64,
    pub longitude: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Node {
    pub fn has_phase(&self, phase: Phase) -> bool {
        self.phases.contains(&phase)
    }
}

/// Series branch with a symmetric phase-coupled admittance block.
/// `g[i][j]`, `b[i][j]` index into `phases`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: Vec<Phase>,
    pub g: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

/// Transformer modelled as an uncoupled per-phase series admittance with a
/// per-phase thermal current limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: Vec<Phase>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub i_rated: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub node: String,
    pub phase: Phase,
    pub p_load: f64,
    pub q_load: f64,
}

fn default_angles() -> [f64; 3] {
    [Phase::A.nominal_angle(), Phase::B.nominal_angle(), Phase::C.nominal_angle()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackSource {
    pub node: String,
    pub v_nominal: f64,
    #[serde(default = "default_angles")]
    pub angles: [f64; 3],
}

impl SlackSource {
    pub fn new(node: impl Into<String>, v_nominal: f64) -> Self {
        Self { node: node.into(), v_nominal, angles: default_angles() }
    }

    pub fn angle(&self, phase: Phase) -> f64 {
        self.angles[phase.index()]
    }

    /// Nominal rectangular voltage `V∠θ_p` of a phase.
    pub fn nominal_voltage(&self, phase: Phase) -> (f64, f64) {
        let theta = self.angle(phase);
        (self.v_nominal * theta.cos(), self.v_nominal * theta.sin())
    }
}

/// On-disk layout of a feeder; [`FeederModel`] is its validated form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederFile {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub base: PerUnitBase,
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub transformers: Vec<Transformer>,
    #[serde(default)]
    pub loads: Vec<Load>,
    pub slack: SlackSource,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// One (node, phase) pair of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Terminal {
    pub node: usize,
    pub phase: Phase,
}

/// A series element as seen by the topology: a line or a transformer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchRef {
    Line(usize),
    Transformer(usize),
}

#[derive(Clone, Debug)]
struct Topology {
    node_index: HashMap<String, usize>,
    terminals: Vec<Terminal>,
    terminal_index: HashMap<(usize, Phase), usize>,
    slack_node: usize,
    /// Branch through which each node is reached from the slack in a BFS tree.
    parent: Vec<Option<(usize, BranchRef)>>,
    p_load: Vec<f64>,
    q_load: Vec<f64>,
}

/// Validated, immutable feeder.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "FeederFile", into = "FeederFile")]
pub struct FeederModel {
    pub base: PerUnitBase,
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub transformers: Vec<Transformer>,
    pub loads: Vec<Load>,
    pub slack: SlackSource,
    topo: Topology,
    admittance: Arc<Admittance>,
}

impl PartialEq for FeederModel {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
            && self.nodes == other.nodes
            && self.lines == other.lines
            && self.transformers == other.transformers
            && self.loads == other.loads
            && self.slack == other.slack
    }
}

impl From<FeederModel> for FeederFile {
    fn from(m: FeederModel) -> Self {
        FeederFile {
            version: SCHEMA_VERSION,
            base: m.base,
            nodes: m.nodes,
            lines: m.lines,
            transformers: m.transformers,
            loads: m.loads,
            slack: m.slack,
        }
    }
}

impl TryFrom<FeederFile> for FeederModel {
    type Error = FeederError;

    fn try_from(file: FeederFile) -> Result<Self, Self::Error> {
        FeederModel::new(file)
    }
}

/// Reads and validates a feeder JSON file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederModel, FeederError> {
    let text = std::fs::read_to_string(path)?;
    FeederModel::from_json(&text)
}

fn check_finite(what: &str, v: f64) -> Result<(), FeederError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(FeederError::Invalid(format!("{what} is not finite")))
    }
}

impl FeederModel {
    pub fn from_json(text: &str) -> Result<Self, FeederError> {
        let file: FeederFile =
            serde_json::from_str(text).map_err(|e| FeederError::Schema(e.to_string()))?;
        Self::new(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FeederFile::from(self.clone()))
            .expect("feeder serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FeederError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn new(file: FeederFile) -> Result<Self, FeederError> {
        if file.version != SCHEMA_VERSION {
            return Err(FeederError::Schema(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                file.version
            )));
        }
        if !(file.base.s_kva > 0.0 && file.base.v_kv > 0.0) {
            return Err(FeederError::Invalid("per-unit base must be positive".into()));
        }
        if file.nodes.is_empty() {
            return Err(FeederError::Topology("feeder has no nodes".into()));
        }

        let mut node_index = HashMap::new();
        for (i, n) in file.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(FeederError::Invalid(format!("duplicate node id {}", n.id)));
            }
            if n.phases.is_empty() {
                return Err(FeederError::Invalid(format!("node {} has no phases", n.id)));
            }
            let mut ph = n.phases.clone();
            ph.sort();
            ph.dedup();
            if ph.len() != n.phases.len() {
                return Err(FeederError::Invalid(format!("node {} repeats a phase", n.id)));
            }
            if !(n.v_min > 0.0 && n.v_min < n.v_max) || !n.v_max.is_finite() {
                return Err(FeederError::Invalid(format!(
                    "node {}: voltage limits must satisfy 0 < v_min < v_max",
                    n.id
                )));
            }
            if !(-90.0..=90.0).contains(&n.latitude) || !(-180.0..=180.0).contains(&n.longitude) {
                return Err(FeederError::Invalid(format!("node {}: coordinates out of range", n.id)));
            }
        }
        let lookup = |id: &str, what: &str| -> Result<usize, FeederError> {
            node_index
                .get(id)
                .copied()
                .ok_or_else(|| FeederError::Reference(format!("{what} references unknown node {id:?}")))
        };

        let slack_node = lookup(&file.slack.node, "slack")?;
        check_finite("slack voltage", file.slack.v_nominal)?;
        if file.slack.v_nominal <= 0.0 {
            return Err(FeederError::Invalid("slack voltage must be positive".into()));
        }
        for k in 0..3 {
            let d = (file.slack.angles[(k + 1) % 3] - file.slack.angles[k]).rem_euclid(2.0 * PI);
            let ok = (d - 2.0 * PI / 3.0).abs() < 1e-9 || (d - 4.0 * PI / 3.0).abs() < 1e-9;
            if !ok {
                return Err(FeederError::Invalid("slack phase angles must be mutually 2π/3 apart".into()));
            }
        }

        let mut adjacency: Vec<Vec<(usize, BranchRef)>> = vec![Vec::new(); file.nodes.len()];
        for (li, line) in file.lines.iter().enumerate() {
            let f = lookup(&line.from, &format!("line {}", line.id))?;
            let t = lookup(&line.to, &format!("line {}", line.id))?;
            if f == t {
                return Err(FeederError::Topology(format!("line {} is a self-loop", line.id)));
            }
            let n = line.phases.len();
            if n == 0 || line.g.len() != n || line.b.len() != n {
                return Err(FeederError::Schema(format!("line {}: admittance blocks must be {n}x{n}", line.id)));
            }
            for p in &line.phases {
                if !file.nodes[f].has_phase(*p) || !file.nodes[t].has_phase(*p) {
                    return Err(FeederError::Reference(format!(
                        "line {} uses phase {p} absent at an endpoint",
                        line.id
                    )));
                }
            }
            for i in 0..n {
                if line.g[i].len() != n || line.b[i].len() != n {
                    return Err(FeederError::Schema(format!("line {}: admittance rows must have {n} entries", line.id)));
                }
                for j in 0..n {
                    check_finite("line admittance", line.g[i][j])?;
                    check_finite("line admittance", line.b[i][j])?;
                    let scale = 1.0 + line.g[i][j].abs().max(line.b[i][j].abs());
                    if (line.g[i][j] - line.g[j][i]).abs() > 1e-12 * scale
                        || (line.b[i][j] - line.b[j][i]).abs() > 1e-12 * scale
                    {
                        return Err(FeederError::Invalid(format!("line {}: admittance block is not symmetric", line.id)));
                    }
                }
            }
            adjacency[f].push((t, BranchRef::Line(li)));
            adjacency[t].push((f, BranchRef::Line(li)));
        }
        for (ti, tr) in file.transformers.iter().enumerate() {
            let f = lookup(&tr.from, &format!("transformer {}", tr.id))?;
            let t = lookup(&tr.to, &format!("transformer {}", tr.id))?;
            if f == t {
                return Err(FeederError::Topology(format!("transformer {} is a self-loop", tr.id)));
            }
            let n = tr.phases.len();
            if n == 0 || tr.g.len() != n || tr.b.len() != n {
                return Err(FeederError::Schema(format!(
                    "transformer {}: per-phase admittance must have {n} entries",
                    tr.id
                )));
            }
            for p in &tr.phases {
                if !file.nodes[f].has_phase(*p) || !file.nodes[t].has_phase(*p) {
                    return Err(FeederError::Reference(format!(
                        "transformer {} uses phase {p} absent at an endpoint",
                        tr.id
                    )));
                }
            }
            if !(tr.i_rated > 0.0) || !tr.i_rated.is_finite() {
                return Err(FeederError::Invalid(format!("transformer {}: i_rated must be positive", tr.id)));
            }
            adjacency[f].push((t, BranchRef::Transformer(ti)));
            adjacency[t].push((f, BranchRef::Transformer(ti)));
        }

        // BFS from the slack; every node must be reached.
        let mut parent = vec![None; file.nodes.len()];
        let mut seen = vec![false; file.nodes.len()];
        seen[slack_node] = true;
        let mut queue = VecDeque::from([slack_node]);
        while let Some(u) = queue.pop_front() {
            for &(v, br) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, br));
                    queue.push_back(v);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(FeederError::Topology(format!(
                "node {} is not connected to the slack",
                file.nodes[i].id
            )));
        }

        let mut terminals = Vec::new();
        let mut terminal_index = HashMap::new();
        for (i, n) in file.nodes.iter().enumerate() {
            for &p in Phase::ALL.iter().filter(|p| n.has_phase(**p)) {
                terminal_index.insert((i, p), terminals.len());
                terminals.push(Terminal { node: i, phase: p });
            }
        }

        let mut p_load = vec![0.0; terminals.len()];
        let mut q_load = vec![0.0; terminals.len()];
        for load in &file.loads {
            let ni = lookup(&load.node, "load")?;
            let t = terminal_index.get(&(ni, load.phase)).ok_or_else(|| {
                FeederError::Reference(format!("load on node {} references absent phase {}", load.node, load.phase))
            })?;
            check_finite("load power", load.p_load)?;
            check_finite("load power", load.q_load)?;
            if load.p_load < 0.0 {
                return Err(FeederError::Invalid(format!("load on node {} has negative p_load", load.node)));
            }
            p_load[*t] += load.p_load;
            q_load[*t] += load.q_load;
        }

        let topo = Topology { node_index, terminals, terminal_index, slack_node, parent, p_load, q_load };
        let admittance = assemble_admittance_parts(&file.lines, &file.transformers, &topo)?;

        Ok(FeederModel {
            base: file.base,
            nodes: file.nodes,
            lines: file.lines,
            transformers: file.transformers,
            loads: file.loads,
            slack: file.slack,
            topo,
            admittance: Arc::new(admittance),
        })
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.topo.node_index.get(id).copied()
    }

    pub fn terminals(&self) -> &[Terminal] {
        &self.topo.terminals
    }

    pub fn terminal_count(&self) -> usize {
        self.topo.terminals.len()
    }

    pub fn terminal_index(&self, node: usize, phase: Phase) -> Option<usize> {
        self.topo.terminal_index.get(&(node, phase)).copied()
    }

    /// Terminal lookup by node id; errors name the missing reference.
    pub fn find_terminal(&self, node_id: &str, phase: Phase) -> Result<usize, FeederError> {
        let ni = self
            .node_index(node_id)
            .ok_or_else(|| FeederError::Reference(format!("unknown node {node_id:?}")))?;
        self.terminal_index(ni, phase)
            .ok_or_else(|| FeederError::Reference(format!("node {node_id} has no phase {phase}")))
    }

    pub fn slack_node(&self) -> usize {
        self.topo.slack_node
    }

    pub fn is_slack_terminal(&self, t: usize) -> bool {
        self.topo.terminals[t].node == self.topo.slack_node
    }

    pub fn terminal_label(&self, t: usize) -> String {
        let term = self.topo.terminals[t];
        format!("{}.{}", self.nodes[term.node].id, term.phase)
    }

    /// Aggregated constant-power load per terminal.
    pub fn terminal_load(&self, t: usize) -> (f64, f64) {
        (self.topo.p_load[t], self.topo.q_load[t])
    }

    pub fn has_load(&self, t: usize) -> bool {
        self.loads.iter().any(|l| {
            self.node_index(&l.node) == Some(self.topo.terminals[t].node) && l.phase == self.topo.terminals[t].phase
        })
    }

    pub fn admittance(&self) -> &Admittance {
        &self.admittance
    }

    /// Transformers on the BFS path from the slack down to `node`.
    pub fn upstream_transformers(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = node;
        while let Some((p, br)) = self.topo.parent[cur] {
            if let BranchRef::Transformer(t) = br {
                out.push(t);
            }
            cur = p;
        }
        out
    }

    pub fn transformer_terminals(&self, tr: usize) -> Vec<(Phase, usize, usize)> {
        let t = &self.transformers[tr];
        let f = self.topo.node_index[&t.from];
        let to = self.topo.node_index[&t.to];
        t.phases
            .iter()
            .map(|&p| (p, self.topo.terminal_index[&(f, p)], self.topo.terminal_index[&(to, p)]))
            .collect()
    }

    /// Flat-start voltage of a terminal: slack magnitude at the phase's slack angle.
    pub fn nominal_voltage(&self, t: usize) -> (f64, f64) {
        self.slack.nominal_voltage(self.topo.terminals[t].phase)
    }

    /// Returns a copy with every load scaled by `factor`.
    pub fn with_scaled_loads(&self, factor: f64) -> Result<FeederModel, FeederError> {
        let mut file = FeederFile::from(self.clone());
        for l in &mut file.loads {
            l.p_load *= factor;
            l.q_load *= factor;
        }
        FeederModel::new(file)
    }

    pub fn to_file(&self) -> FeederFile {
        FeederFile::from(self.clone())
    }
}

fn assemble_admittance_parts(
    lines: &[Line],
    transformers: &[Transformer],
    topo: &Topology,
) -> Result<Admittance, FeederError> {
    let mut builder = admittance::AdmittanceBuilder::new(topo.terminals.len());
    for line in lines {
        let f = topo.node_index[&line.from];
        let t = topo.node_index[&line.to];
        let all_zero = line.g.iter().flatten().chain(line.b.iter().flatten()).all(|v| *v == 0.0);
        if all_zero {
            return Err(FeederError::DegenerateBranch(line.id.clone()));
        }
        for (i, pi) in line.phases.iter().enumerate() {
            for (j, pj) in line.phases.iter().enumerate() {
                let y = num_complex::Complex64::new(line.g[i][j], line.b[i][j]);
                let fi = topo.terminal_index[&(f, *pi)];
                let fj = topo.terminal_index[&(f, *pj)];
                let ti = topo.terminal_index[&(t, *pi)];
                let tj = topo.terminal_index[&(t, *pj)];
                builder.stamp_series(fi, fj, ti, tj, y);
            }
        }
    }
    for tr in transformers {
        let f = topo.node_index[&tr.from];
        let t = topo.node_index[&tr.to];
        for (i, p) in tr.phases.iter().enumerate() {
            let y = num_complex::Complex64::new(tr.g[i], tr.b[i]);
            if y.norm() == 0.0 {
                return Err(FeederError::DegenerateBranch(tr.id.clone()));
            }
            let fi = topo.terminal_index[&(f, *p)];
            let ti = topo.terminal_index[&(t, *p)];
            builder.stamp_series(fi, fi, ti, ti, y);
        }
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_json(load_phase: &str) -> String {
        format!(
            r#"{{
  "version": 1,
  "base": {{"s_kva": 100.0, "v_kv": 7.2}},
  "nodes": [
    {{"id": "1", "phases": ["A"], "latitude": 47.6, "longitude": -122.3, "v_min": 0.95, "v_max": 1.05}},
    {{"id": "2", "phases": ["A"], "latitude": 47.601, "longitude": -122.3, "v_min": 0.95, "v_max": 1.05}}
  ],
  "lines": [{{"id": "L1", "from": "1", "to": "2", "phases": ["A"], "g": [[10.0]], "b": [[0.0]]}}],
  "loads": [{{"node": "2", "phase": "{load_phase}", "p_load": 0.1, "q_load": 0.0}}],
  "slack": {{"node": "1", "v_nominal": 1.0}}
}}"#
        )
    }

    #[test]
    fn minimal_two_node_file() {
        let m = FeederModel::from_json(&two_node_json("A")).unwrap();
        assert_eq!(m.nodes.len(), 2);
        assert_eq!(m.lines.len(), 1);
        assert_eq!(m.terminal_count(), 2);
        assert_eq!(m.terminal_load(1), (0.1, 0.0));
    }

    #[test]
    fn load_on_absent_phase_is_reference_error() {
        let err = FeederModel::from_json(&two_node_json("B")).unwrap_err();
        assert!(matches!(err, FeederError::Reference(_)), "{err}");
    }

    #[test]
    fn missing_field_is_schema_error() {
        let text = two_node_json("A").replace(r#""v_nominal": 1.0"#, r#""v_nominal": "high""#);
        assert!(matches!(FeederModel::from_json(&text), Err(FeederError::Schema(_))));
        let text = two_node_json("A").replace(r#""base": {"s_kva": 100.0, "v_kv": 7.2},"#, "");
        assert!(matches!(FeederModel::from_json(&text), Err(FeederError::Schema(_))));
    }

    #[test]
    fn disconnected_graph_is_topology_error() {
        let text = two_node_json("A").replace(
            r#""lines": [{"id": "L1", "from": "1", "to": "2", "phases": ["A"], "g": [[10.0]], "b": [[0.0]]}],"#,
            "",
        );
        assert!(matches!(FeederModel::from_json(&text), Err(FeederError::Topology(_))));
    }

    #[test]
    fn unknown_slack_is_reference_error() {
        let text = two_node_json("A").replace(r#""node": "1", "v_nominal""#, r#""node": "9", "v_nominal""#);
        assert!(matches!(FeederModel::from_json(&text), Err(FeederError::Reference(_))));
    }

    #[test]
    fn asymmetric_line_block_rejected() {
        let text = r#"{
  "base": {"s_kva": 100.0, "v_kv": 7.2},
  "nodes": [
    {"id": "1", "phases": ["A","B"], "latitude": 0, "longitude": 0, "v_min": 0.9, "v_max": 1.1},
    {"id": "2", "phases": ["A","B"], "latitude": 0, "longitude": 0.001, "v_min": 0.9, "v_max": 1.1}
  ],
  "lines": [{"id": "L", "from": "1", "to": "2", "phases": ["A","B"], "g": [[10,1],[2,10]], "b": [[0,0],[0,0]]}],
  "slack": {"node": "1", "v_nominal": 1.0}
}"#;
        assert!(matches!(FeederModel::from_json(text), Err(FeederError::Invalid(_))));
    }

    #[test]
    fn slack_angles_must_be_spaced() {
        let text = two_node_json("A").replace(r#""v_nominal": 1.0"#, r#""v_nominal": 1.0, "angles": [0.0, 1.0, 2.0]"#);
        assert!(matches!(FeederModel::from_json(&text), Err(FeederError::Invalid(_))));
    }

    #[test]
    fn invalid_voltage_limits_rejected() {
        let text = two_node_json("A").replacen(r#""v_min": 0.95, "v_max": 1.05"#, r#""v_min": 1.1, "v_max": 1.05"#, 1);
        assert!(matches!(FeederModel::from_json(&text), Err(FeederError::Invalid(_))));
    }

    #[test]
    fn zero_admittance_line_is_degenerate() {
        let text = two_node_json("A").replace(r#""g": [[10.0]]"#, r#""g": [[0.0]]"#);
        assert!(matches!(FeederModel::from_json(&text), Err(FeederError::DegenerateBranch(_))));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let m = FeederModel::from_json(&two_node_json("A")).unwrap();
        let again = FeederModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, again);
    }
}
