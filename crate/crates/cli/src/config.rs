use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gridsite_core::gi::GiConfig;
use gridsite_core::miblp::CostConfig;
use gridsite_core::solve::{Approach, BnbConfig, IntegralityMode, SbtOptions, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Presolve {
    None,
    Sbt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Integrality {
    Relaxed,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub presolve: Presolve,
    pub integrality: Integrality,
    pub gap_tol: f64,
    pub epsilon: f64,
    pub max_sweeps: usize,
    pub node_limit: Option<usize>,
    /// Seconds.
    pub time_limit: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            presolve: Presolve::Sbt,
            integrality: Integrality::Relaxed,
            gap_tol: 1e-6,
            epsilon: 1e-4,
            max_sweeps: 25,
            node_limit: Some(200_000),
            time_limit: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub feeder: Option<PathBuf>,
    pub blocks: Option<PathBuf>,
    /// Site catalog CSV `node,land_cost,z_min,z_max`.
    pub sites: Option<PathBuf>,
    /// Prioritized candidates JSON.
    pub candidates: Option<PathBuf>,
    pub suite: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub alpha: f64,
    pub budget_ports: u64,
    /// Chargers to place; defaults to 0 when no allocation is given.
    pub demand: Option<u32>,
    /// Minimum base-case transformer headroom (per-unit) for a candidate.
    pub headroom_threshold: f64,
    pub gi: GiConfig,
    pub cost: CostConfig,
    pub solver: SolverSection,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            workers: 1,
            out: PathBuf::from("out"),
            alpha: 0.85,
            budget_ports: 3085,
            demand: None,
            headroom_threshold: 0.0,
            gi: GiConfig::default(),
            cost: CostConfig::default(),
            solver: SolverSection::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML or JSON document (chosen by extension).
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if !self.alpha.is_finite() {
            bail!("alpha must be finite");
        }
        if !(self.solver.gap_tol >= 0.0) || !(self.solver.epsilon > 0.0) {
            bail!("gap_tol must be non-negative and epsilon positive");
        }
        if self.solver.time_limit.is_some_and(|t| !(t > 0.0)) {
            bail!("time_limit must be positive");
        }
        if !(self.headroom_threshold >= 0.0) {
            bail!("headroom_threshold must be non-negative");
        }
        self.gi.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.cost.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            approach: match s.presolve {
                Presolve::Sbt => Approach::SMiblp,
                Presolve::None => Approach::Miblp,
            },
            sbt: SbtOptions {
                epsilon: s.epsilon,
                max_sweeps: s.max_sweeps,
                mode: match s.integrality {
                    Integrality::Relaxed => IntegralityMode::Relaxed,
                    Integrality::Exact => IntegralityMode::Exact,
                },
                workers: self.workers,
            },
            bnb: BnbConfig { gap_tol: s.gap_tol, node_limit: s.node_limit, time_limit: s.time_limit, workers: self.workers, trace: false },
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_with_defaults() {
        let cfg: RunConfig = toml::from_str("alpha = 0.5\n[solver]\npresolve = \"none\"\n[cost]\nbudget = 50000.0\n").unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.solver.presolve, Presolve::None);
        assert_eq!(cfg.cost.budget, 50000.0);
        assert_eq!(cfg.cost.charger_cost, 8600.0);
        assert_eq!(cfg.budget_ports, 3085);
        let back: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("alhpa = 0.5").is_err());
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.workers = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.cost.pf = 1.5;
        assert!(cfg.validate().is_err());
    }
}
