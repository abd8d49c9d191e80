use serde::{Deserialize, Serialize};

use crate::feeder::haversine_distance;
use crate::gi::CandidateSet;

/// Pair of candidates that may not both host a station: `x_first + x_second ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntiClusterPair {
    pub first: usize,
    pub second: usize,
    pub distance_m: f64,
}

/// One pair per unordered couple of candidates at different nodes whose
/// great-circle distance is at most `2R`. Phases of the same node belong to
/// the same station and are never paired.
pub fn anti_clustering_constraints(candidates: &CandidateSet, radius_m: f64) -> Vec<AntiClusterPair> {
    let e = &candidates.entries;
    let mut out = Vec::new();
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            if e[i].node == e[j].node {
                continue;
            }
            let d = haversine_distance(e[i].latitude, e[i].longitude, e[j].latitude, e[j].longitude);
            if d <= 2.0 * radius_m {
                out.push(AntiClusterPair { first: i, second: j, distance_m: d });
            }
        }
    }
    out
}
