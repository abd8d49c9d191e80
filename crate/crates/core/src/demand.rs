//! Port allocation across census blocks.
//!
//! The allocation maximizes `Σ d_i·((1−α)·μ_i + α·ε_i)` subject to
//! `0 ≤ d_i ≤ c_i` and `Σ d_i = b`. With a single cardinality constraint
//! and boxes, filling blocks in descending coefficient order is optimal.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("capacity short of budget by {shortfall} ports")]
    Infeasible { shortfall: u64 },
    #[error("invalid block {id}: {reason}")]
    InvalidBlock { id: String, reason: String },
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("allocation has {got} entries for {expected} blocks")]
    LengthMismatch { expected: usize, got: usize },
    #[error("block file: {0}")]
    Csv(#[from] csv::Error),
    #[error("block file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusBlock {
    pub id: String,
    pub mu: f64,
    pub eps: f64,
    pub cap: u32,
    pub lat: f64,
    pub lon: f64,
    #[serde(deserialize_with = "flag")]
    pub in_feeder: bool,
}

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" | "" => Ok(false),
        other => Err(serde::de::Error::custom(format!("invalid in_feeder flag {other:?}"))),
    }
}

impl CensusBlock {
    fn validate(&self) -> Result<(), DemandError> {
        let bad = |reason: &str| Err(DemandError::InvalidBlock { id: self.id.clone(), reason: reason.into() });
        if !(0.0..=1.0).contains(&self.mu) {
            return bad("mu outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return bad("eps outside [0, 1]");
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return bad("centroid outside valid coordinates");
        }
        Ok(())
    }

    pub fn coefficient(&self, alpha: f64) -> f64 {
        (1.0 - alpha) * self.mu + alpha * self.eps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandAllocation {
    pub ids: Vec<String>,
    pub d: Vec<u32>,
    pub objective_value: f64,
    pub alpha: f64,
    pub budget_ports: u64,
}

impl DemandAllocation {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,d\n");
        for (id, d) in self.ids.iter().zip(&self.d) {
            out.push_str(&format!("{id},{d}\n"));
        }
        out
    }
}

/// Numeric ids compare numerically, otherwise lexicographically.
fn id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

pub fn objective(blocks: &[CensusBlock], d: &[u32], alpha: f64) -> f64 {
    blocks.iter().zip(d).map(|(b, &di)| di as f64 * b.coefficient(alpha)).sum()
}

pub fn allocate_ports(blocks: &[CensusBlock], alpha: f64, budget_ports: u64) -> Result<DemandAllocation, DemandError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DemandError::InvalidAlpha(alpha));
    }
    for b in blocks {
        b.validate()?;
    }
    let capacity: u64 = blocks.iter().map(|b| b.cap as u64).sum();
    if capacity < budget_ports {
        return Err(DemandError::Infeasible { shortfall: budget_ports - capacity });
    }
    let coef: Vec<f64> = blocks.iter().map(|b| b.coefficient(alpha)).collect();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&i, &j| coef[j].total_cmp(&coef[i]).then_with(|| id_order(&blocks[i].id, &blocks[j].id)));

    let mut d = vec![0u32; blocks.len()];
    let mut left = budget_ports;
    for i in order {
        if left == 0 {
            break;
        }
        let take = left.min(blocks[i].cap as u64);
        d[i] = take as u32;
        left -= take;
    }
    Ok(DemandAllocation {
        ids: blocks.iter().map(|b| b.id.clone()).collect(),
        objective_value: objective(blocks, &d, alpha),
        d,
        alpha,
        budget_ports,
    })
}

/// Ports allocated to blocks served by the feeder.
pub fn feeder_demand(allocation: &DemandAllocation, blocks: &[CensusBlock]) -> Result<u64, DemandError> {
    if allocation.d.len() != blocks.len() {
        return Err(DemandError::LengthMismatch { expected: blocks.len(), got: allocation.d.len() });
    }
    Ok(blocks.iter().zip(&allocation.d).filter(|(b, _)| b.in_feeder).map(|(_, &d)| d as u64).sum())
}

/// Reads `id,mu,eps,cap,lat,lon,in_feeder` rows.
pub fn read_blocks(path: impl AsRef<Path>) -> Result<Vec<CensusBlock>, DemandError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let b: CensusBlock = row?;
        b.validate()?;
        out.push(b);
    }
    Ok(out)
}

pub fn write_blocks(path: impl AsRef<Path>, blocks: &[CensusBlock]) -> Result<(), DemandError> {
    let mut out = String::from("id,mu,eps,cap,lat,lon,in_feeder\n");
    for b in blocks {
        out.push_str(&format!("{},{},{},{},{},{},{}\n", b.id, b.mu, b.eps, b.cap, b.lat, b.lon, b.in_feeder));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn block(id: &str, mu: f64, eps: f64, cap: u32, in_feeder: bool) -> CensusBlock {
        CensusBlock { id: id.into(), mu, eps, cap, lat: 47.6, lon: -122.3, in_feeder }
    }

    /// Exhaustive search over every integer vector with `Σd = b`, `d ≤ c`.
    fn brute_force(blocks: &[CensusBlock], alpha: f64, b: u32) -> Option<f64> {
        fn rec(blocks: &[CensusBlock], alpha: f64, left: u32, acc: f64, best: &mut Option<f64>) {
            if blocks.is_empty() {
                if left == 0 {
                    *best = Some(best.map_or(acc, |x: f64| x.max(acc)));
                }
                return;
            }
            for di in 0..=blocks[0].cap.min(left) {
                rec(&blocks[1..], alpha, left - di, acc + di as f64 * blocks[0].coefficient(alpha), best);
            }
        }
        let mut best = None;
        rec(blocks, alpha, b, 0.0, &mut best);
        best
    }

    #[test]
    fn dominant_block_takes_everything() {
        let blocks = [block("1", 1.0, 0.0, 5, true), block("2", 0.5, 0.0, 5, true)];
        let a = allocate_ports(&blocks, 0.0, 5).unwrap();
        assert_eq!(a.d, vec![5, 0]);
    }

    #[test]
    fn three_block_reference() {
        let blocks = [block("1", 0.2, 0.8, 3, true), block("2", 0.9, 0.1, 4, false), block("3", 0.5, 0.5, 2, true)];
        let a = allocate_ports(&blocks, 0.85, 6).unwrap();
        assert_eq!(a.d, vec![3, 1, 2]);
        assert!((a.objective_value - 3.35).abs() < 1e-12);
        assert!((brute_force(&blocks, 0.85, 6).unwrap() - 3.35).abs() < 1e-12);
        assert_eq!(feeder_demand(&a, &blocks).unwrap(), 5);
    }

    #[test]
    fn shortfall_reported() {
        let blocks = [block("1", 0.5, 0.5, 2, true)];
        match allocate_ports(&blocks, 0.5, 5) {
            Err(DemandError::Infeasible { shortfall }) => assert_eq!(shortfall, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ties_go_to_lower_id() {
        let blocks = [block("10", 0.5, 0.5, 3, true), block("2", 0.5, 0.5, 3, true)];
        let a = allocate_ports(&blocks, 0.3, 2).unwrap();
        assert_eq!(a.d, vec![0, 2]);
    }

    #[test]
    fn no_feeder_blocks_means_zero_demand() {
        let blocks = [block("1", 0.5, 0.5, 3, false)];
        let a = allocate_ports(&blocks, 0.3, 2).unwrap();
        assert_eq!(feeder_demand(&a, &blocks).unwrap(), 0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blocks.csv");
        let blocks = vec![block("1", 0.2, 0.8, 3, true), block("2", 0.9, 0.1, 4, false)];
        write_blocks(&path, &blocks).unwrap();
        assert_eq!(read_blocks(&path).unwrap(), blocks);
    }

    fn instance() -> impl Strategy<Value = (Vec<CensusBlock>, f64, u32)> {
        (proptest::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 0u32..5), 1..=6), 0.0..=1.0f64).prop_flat_map(|(raw, alpha)| {
            let cap: u32 = raw.iter().map(|r| r.2).sum();
            let blocks: Vec<CensusBlock> =
                raw.iter().enumerate().map(|(i, r)| block(&i.to_string(), r.0, r.1, r.2, i % 2 == 0)).collect();
            (Just(blocks), Just(alpha), 0..=cap.min(12))
        })
    }

    proptest! {
        #[test]
        fn greedy_matches_brute_force((blocks, alpha, b) in instance()) {
            let a = allocate_ports(&blocks, alpha, b as u64).unwrap();
            let best = brute_force(&blocks, alpha, b).unwrap();
            prop_assert!((a.objective_value - best).abs() <= 1e-9);
            prop_assert_eq!(a.d.iter().map(|&x| x as u64).sum::<u64>(), b as u64);
            for (d, blk) in a.d.iter().zip(&blocks) {
                prop_assert!(*d <= blk.cap);
            }
        }

        #[test]
        fn no_improving_unit_swap((blocks, alpha, b) in instance()) {
            let a = allocate_ports(&blocks, alpha, b as u64).unwrap();
            for i in 0..blocks.len() {
                for j in 0..blocks.len() {
                    if a.d[i] > 0 && a.d[j] < blocks[j].cap {
                        prop_assert!(blocks[j].coefficient(alpha) <= blocks[i].coefficient(alpha) + 1e-15);
                    }
                }
            }
        }

        #[test]
        fn equity_grows_with_alpha((blocks, _alpha, b) in instance(), a1 in 0.0..=1.0f64, a2 in 0.0..=1.0f64) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let eq = |alpha: f64| {
                let a = allocate_ports(&blocks, alpha, b as u64).unwrap();
                blocks.iter().zip(&a.d).map(|(blk, &d)| d as f64 * blk.eps).sum::<f64>()
            };
            prop_assert!(eq(hi) >= eq(lo) - 1e-9);
        }
    }
}
