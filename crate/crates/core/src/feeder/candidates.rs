use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeederError, FeederModel, Phase};
use crate::acpf::{self, PowerFlowState};
use crate::gi::{Candidate, CandidateSet};

/// Per-site economics and parking capacity, one row per pole node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub node: String,
    pub land_cost: f64,
    pub z_min: u32,
    pub z_max: u32,
}

/// Site list plus defaults for load-bearing nodes that the list omits.
/// An empty list means "every load-bearing non-slack node".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteCatalog {
    pub sites: Vec<SiteSpec>,
    pub default_land_cost: f64,
    pub default_z_min: u32,
    pub default_z_max: u32,
}

impl Default for SiteCatalog {
    fn default() -> Self {
        Self { sites: Vec::new(), default_land_cost: 20_000.0, default_z_min: 1, default_z_max: 3 }
    }
}

impl SiteCatalog {
    /// Reads `node,land_cost,z_min,z_max` rows.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, FeederError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| FeederError::Schema(e.to_string()))?;
        let mut sites = Vec::new();
        for row in rdr.deserialize() {
            let s: SiteSpec = row.map_err(|e| FeederError::Schema(e.to_string()))?;
            sites.push(s);
        }
        Ok(Self { sites, ..Default::default() })
    }

    fn specs(&self, model: &FeederModel) -> Result<Vec<SiteSpec>, FeederError> {
        if self.sites.is_empty() {
            let mut nodes: Vec<usize> = model
                .loads
                .iter()
                .filter_map(|l| model.node_index(&l.node))
                .filter(|&n| n != model.slack_node())
                .collect();
            nodes.sort_unstable();
            nodes.dedup();
            return Ok(nodes
                .into_iter()
                .map(|n| SiteSpec {
                    node: model.nodes[n].id.clone(),
                    land_cost: self.default_land_cost,
                    z_min: self.default_z_min,
                    z_max: self.default_z_max,
                })
                .collect());
        }
        for s in &self.sites {
            if model.node_index(&s.node).is_none() {
                return Err(FeederError::Reference(format!("site references unknown node {:?}", s.node)));
            }
            if s.z_max < s.z_min || s.z_max == 0 {
                return Err(FeederError::Invalid(format!("site {}: need 0 < z_max and z_min <= z_max", s.node)));
            }
            if !(s.land_cost >= 0.0) || !s.land_cost.is_finite() {
                return Err(FeederError::Invalid(format!("site {}: land cost must be non-negative", s.node)));
            }
        }
        Ok(self.sites.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CandidateSelection {
    Candidates(CandidateSet),
    /// No site keeps the requested transformer margin.
    NoHeadroom,
}

impl CandidateSelection {
    pub fn into_set(self) -> Option<CandidateSet> {
        match self {
            CandidateSelection::Candidates(c) => Some(c),
            CandidateSelection::NoHeadroom => None,
        }
    }
}

/// Base-case headroom of every `(node, phase)`: the smallest
/// `I^rat − |I|` over upstream transformers carrying that phase
/// (`+∞` when none does).
pub fn terminal_headroom(model: &FeederModel, base_state: &PowerFlowState, node: usize, phase: Phase) -> f64 {
    let currents = acpf::transformer_currents(model, base_state);
    model
        .upstream_transformers(node)
        .into_iter()
        .flat_map(|tr| currents.iter().filter(move |c| c.transformer == tr && c.phase == phase))
        .map(|c| model.transformers[c.transformer].i_rated - c.magnitude())
        .fold(f64::INFINITY, f64::min)
}

/// Candidate `(node, phase)` sites, one per present phase of every site
/// node, kept when the upstream transformers leave positive headroom of at
/// least `headroom_threshold`.
pub fn select_candidates(
    model: &FeederModel,
    base_state: &PowerFlowState,
    catalog: &SiteCatalog,
    headroom_threshold: f64,
) -> Result<CandidateSelection, FeederError> {
    if base_state.v_real.len() != model.terminal_count() {
        return Err(FeederError::Invalid("base state does not match the feeder".into()));
    }
    let mut entries = Vec::new();
    for spec in catalog.specs(model)? {
        let ni = model.node_index(&spec.node).expect("checked by catalog");
        let node = &model.nodes[ni];
        for &phase in Phase::ALL.iter().filter(|p| node.has_phase(**p)) {
            let headroom = terminal_headroom(model, base_state, ni, phase);
            if headroom > 0.0 && headroom >= headroom_threshold {
                entries.push(Candidate {
                    node: node.id.clone(),
                    phase,
                    land_cost: spec.land_cost,
                    z_min: spec.z_min,
                    z_max: spec.z_max,
                    latitude: node.latitude,
                    longitude: node.longitude,
                    headroom,
                    f_v: 0.0,
                    f_c: 0.0,
                    f_g: 0.0,
                    weight: 0.0,
                });
            }
        }
    }
    if entries.is_empty() {
        log::warn!("no candidate site keeps a transformer margin of {headroom_threshold}");
        return Ok(CandidateSelection::NoHeadroom);
    }
    Ok(CandidateSelection::Candidates(CandidateSet::new(entries)))
}
