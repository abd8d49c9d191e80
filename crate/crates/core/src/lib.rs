//! Grid-aware siting of EV charging stations on unbalanced three-phase
//! distribution feeders.
//!
//! The pipeline runs demand allocation ([`demand`]), candidate screening
//! and grid-impact prioritization ([`feeder`], [`gi`]), builds the bilinear
//! siting program ([`miblp`]) and solves it to certified optimality with
//! bound tightening and spatial branch-and-bound ([`solve`]). Every answer
//! is re-checked with the full nonlinear power flow ([`acpf`]).

pub mod acpf;
pub mod demand;
pub mod feeder;
pub mod fixtures;
pub mod gi;
pub mod miblp;
pub mod solve;
pub mod suite;
pub mod pipeline;
