//! Siting problem construction: the nonlinear model, its exact bilinear
//! lifting, the nominal/deviation decomposition, McCormick envelopes and
//! anti-clustering cuts.

mod bounds;
mod build;
mod cluster;
mod decompose;
mod lift;
mod mccormick;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::Phase;

pub use bounds::{interval_div, interval_mul, interval_sq, propagate_bounds, Interval, PropagationError};
pub use build::{build_minlp, build_minlp_with, Affine, BuildOptions, CostConfig, MinlpProblem, NonlinearConstraint};
pub use cluster::{anti_clustering_constraints, AntiClusterPair};
pub use decompose::{filter_and_decompose, DecomposedProblem, DevBilinear};
pub use lift::lift_to_miblp;
pub use mccormick::{mccormick_envelope, square_cuts, EnvelopeInequality};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("structurally infeasible: {0}")]
    Structural(String),
    #[error("invalid cost configuration: {0}")]
    InvalidCost(String),
    #[error("candidate {0} does not reference a feeder terminal")]
    Reference(String),
    #[error("variable {0} has an unbounded box")]
    Unbounded(String),
    #[error("inverted bounds [{lower}, {upper}]")]
    InvertedBounds { lower: f64, upper: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

/// What a variable stands for; indices refer to terminals, candidates or
/// transformer phases of the source model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRole {
    VoltageReal { terminal: usize },
    VoltageImag { terminal: usize },
    VoltageSq { terminal: usize },
    LoadG { terminal: usize },
    LoadB { terminal: usize },
    ChargerG { candidate: usize },
    ChargerB { candidate: usize },
    ChargerP { candidate: usize },
    ChargerQ { candidate: usize },
    TransformerReal { transformer: usize, phase: Phase },
    TransformerImag { transformer: usize, phase: Phase },
    /// Lifted product `s_k`, index into the bilinear registry.
    Product { term: usize },
    Site { candidate: usize },
    Chargers { candidate: usize },
}

impl VarRole {
    /// Rectangular voltages are the filtered (independent) variables.
    pub fn is_filtered(&self) -> bool {
        matches!(self, VarRole::VoltageReal { .. } | VarRole::VoltageImag { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub role: VarRole,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    KclReal { terminal: usize },
    KclImag { terminal: usize },
    SlackFix { terminal: usize },
    TransformerCurrent { transformer: usize, phase: Phase },
    /// `V^sq = s_rr + s_ii`.
    VoltageSqDef { terminal: usize },
    /// Lifted surrogate relation `s = P` or `s = −Q`.
    Surrogate { term: usize },
    Demand,
    SiteLink { candidate: usize },
    Rating { candidate: usize },
    PowerFactor { candidate: usize },
    Budget,
    AntiCluster { first: usize, second: usize },
}

/// `Σ coef·var (sense) rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: RowTag,
}

impl LinearConstraint {
    pub fn activity(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * point[j]).sum()
    }

    /// Amount by which `point` violates the row (0 when satisfied).
    pub fn violation(&self, point: &[f64]) -> f64 {
        let lhs = self.activity(point);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Registry entry `product = left · right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilinearTerm {
    pub product: usize,
    pub left: usize,
    pub right: usize,
}

impl BilinearTerm {
    pub fn is_square(&self) -> bool {
        self.left == self.right
    }

    pub fn violation(&self, point: &[f64]) -> f64 {
        (point[self.product] - point[self.left] * point[self.right]).abs()
    }
}

/// Convex limit `real² + imag² ≤ limit²` on one transformer phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLimit {
    pub real: usize,
    pub imag: usize,
    pub limit: f64,
    pub transformer: usize,
    pub phase: Phase,
}

impl QuadraticLimit {
    pub fn excess(&self, point: &[f64]) -> f64 {
        point[self.real].hypot(point[self.imag]) - self.limit
    }
}

/// Candidate-level variable indices shared by every problem stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateVars {
    pub terminal: usize,
    pub x: usize,
    pub z: usize,
    pub g: usize,
    pub b: usize,
    pub p: usize,
    pub q: usize,
    pub weight: f64,
    pub z_min: u32,
    pub z_max: u32,
}

/// Terminal-level variable indices. `vsq` is set once lifted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalVars {
    pub phase: Phase,
    pub vr: usize,
    pub vi: usize,
    pub vsq: Option<usize>,
    pub load: Option<(usize, usize)>,
    pub slack: bool,
    pub nominal: (f64, f64),
    pub v_min: f64,
    pub v_max: f64,
}

/// Mixed-integer bilinear program (maximization of `objective`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiblpProblem {
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinearConstraint>,
    pub bilinear: Vec<BilinearTerm>,
    pub quadratic: Vec<QuadraticLimit>,
    pub objective: Vec<(usize, f64)>,
    pub terminals: Vec<TerminalVars>,
    pub candidates: Vec<CandidateVars>,
    pub demand: u32,
    pub cost: CostConfig,
    pub options: BuildOptions,
}

/// Debug/bench dump of a problem.
#[derive(Serialize)]
struct ProblemDump<'a> {
    variables: &'a [Variable],
    /// `(row, column, coefficient)` triplets.
    triplets: Vec<(usize, usize, f64)>,
    senses: Vec<Sense>,
    rhs: Vec<f64>,
    bilinear: &'a [BilinearTerm],
    quadratic: &'a [QuadraticLimit],
    objective: Vec<f64>,
}

impl MiblpProblem {
    pub fn objective_value(&self, point: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, w)| w * point[j]).sum()
    }

    /// Largest violation of any linear row, bilinear equality, quadratic
    /// limit or variable bound at `point`.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(point));
        let bl = self.bilinear.iter().map(|t| t.violation(point));
        let quad = self.quadratic.iter().map(|q| q.excess(point).max(0.0));
        let boxes = self.variables.iter().enumerate().map(|(j, v)| (v.lower - point[j]).max(point[j] - v.upper).max(0.0));
        rows.chain(bl).chain(quad).chain(boxes).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        let mut triplets = Vec::new();
        for (i, c) in self.constraints.iter().enumerate() {
            triplets.extend(c.terms.iter().map(|&(j, a)| (i, j, a)));
        }
        let mut objective = vec![0.0; self.variables.len()];
        for &(j, w) in &self.objective {
            objective[j] += w;
        }
        let dump = ProblemDump {
            variables: &self.variables,
            triplets,
            senses: self.constraints.iter().map(|c| c.sense).collect(),
            rhs: self.constraints.iter().map(|c| c.rhs).collect(),
            bilinear: &self.bilinear,
            quadratic: &self.quadratic,
            objective,
        };
        serde_json::to_string_pretty(&dump).expect("problem dump cannot fail")
    }

    pub fn site_value(&self, x: &[bool], z: &[u32]) -> f64 {
        self.candidates.iter().zip(x.iter().zip(z)).map(|(c, (&xi, &zi))| if xi { c.weight * zi as f64 } else { 0.0 }).sum()
    }
}
