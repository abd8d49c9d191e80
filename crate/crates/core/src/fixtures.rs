//! Small hand-built feeders used by tests, examples and the CLI smoke runs.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::feeder::{FeederFile, FeederModel, Line, Load, Node, PerUnitBase, Phase, SlackSource, Transformer};
use crate::gi::{Candidate, CandidateSet};

pub const SEATTLE: (f64, f64) = (47.6062, -122.3321);

pub fn base() -> PerUnitBase {
    PerUnitBase { s_kva: 100.0, v_kv: 7.2 }
}

pub fn node(id: &str, phases: &[Phase], lat: f64, lon: f64) -> Node {
    Node { id: id.into(), phases: phases.to_vec(), latitude: lat, longitude: lon, v_min: 0.95, v_max: 1.05 }
}

/// Line whose series impedance matrix has `z_self` on the diagonal and
/// `z_mutual` elsewhere; the admittance block is its inverse.
pub fn coupled_line(id: &str, from: &str, to: &str, phases: &[Phase], z_self: Complex64, z_mutual: Complex64) -> Line {
    let n = phases.len();
    let z = DMatrix::from_fn(n, n, |i, j| if i == j { z_self } else { z_mutual });
    let y = z.try_inverse().expect("impedance matrix must be invertible");
    // the inverse of a symmetric matrix is symmetric up to round-off
    let sym = |i: usize, j: usize| 0.5 * (y[(i, j)] + y[(j, i)]);
    Line {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        phases: phases.to_vec(),
        g: (0..n).map(|i| (0..n).map(|j| sym(i, j).re).collect()).collect(),
        b: (0..n).map(|i| (0..n).map(|j| sym(i, j).im).collect()).collect(),
    }
}

pub fn transformer(id: &str, from: &str, to: &str, phases: &[Phase], z: Complex64, i_rated: f64) -> Transformer {
    let y = z.inv();
    Transformer {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        phases: phases.to_vec(),
        g: vec![y.re; phases.len()],
        b: vec![y.im; phases.len()],
        i_rated,
    }
}

pub fn load(node: &str, phase: Phase, p: f64, q: f64) -> Load {
    Load { node: node.into(), phase, p_load: p, q_load: q }
}

fn build(file: FeederFile) -> FeederModel {
    FeederModel::new(file).expect("fixture feeder is valid")
}

/// Single-phase source at 1.0 pu feeding one load of `p` over a purely
/// conductive line `g`.
pub fn two_bus_feeder(g: f64, p: f64) -> FeederModel {
    let (lat, lon) = SEATTLE;
    build(FeederFile {
        version: 1,
        base: base(),
        nodes: vec![node("1", &[Phase::A], lat, lon), node("2", &[Phase::A], lat + 0.001, lon)],
        lines: vec![Line { id: "L12".into(), from: "1".into(), to: "2".into(), phases: vec![Phase::A], g: vec![vec![g]], b: vec![vec![0.0]] }],
        transformers: Vec::new(),
        loads: vec![load("2", Phase::A, p, 0.0)],
        slack: SlackSource::new("1", 1.0),
    })
}

/// Three-phase feeder with identical self and mutual impedances on every
/// segment and identical loads per phase.
pub fn balanced_feeder() -> FeederModel {
    let (lat, lon) = SEATTLE;
    let abc = [Phase::A, Phase::B, Phase::C];
    let zs = Complex64::new(0.03, 0.06);
    let zm = Complex64::new(0.01, 0.02);
    let mut loads = Vec::new();
    for p in abc {
        loads.push(load("3", p, 0.10, 0.03));
        loads.push(load("4", p, 0.08, 0.024));
    }
    build(FeederFile {
        version: 1,
        base: base(),
        nodes: vec![
            node("1", &abc, lat, lon),
            node("2", &abc, lat + 0.001, lon),
            node("3", &abc, lat + 0.002, lon),
            node("4", &abc, lat + 0.003, lon),
        ],
        lines: vec![coupled_line("L23", "2", "3", &abc, zs, zm), coupled_line("L34", "3", "4", &abc, zs, zm)],
        transformers: vec![transformer("T1", "1", "2", &abc, Complex64::new(0.01, 0.04), 2.0)],
        loads,
        slack: SlackSource::new("1", 1.0),
    })
}

fn site(node: &str, phase: Phase, lat: f64, lon: f64, land_cost: f64, z_max: u32) -> Candidate {
    Candidate {
        node: node.into(),
        phase,
        land_cost,
        z_min: 1,
        z_max,
        latitude: lat,
        longitude: lon,
        headroom: 0.0,
        f_v: 0.0,
        f_c: 0.0,
        f_g: 0.0,
        weight: 0.0,
    }
}

/// Two electrically identical single-phase laterals hanging off the same
/// bus, one candidate at the end of each.
pub fn symmetric_two_candidate() -> (FeederModel, CandidateSet) {
    let (lat, lon) = SEATTLE;
    let abc = [Phase::A, Phase::B, Phase::C];
    let zs = Complex64::new(0.04, 0.08);
    let model = build(FeederFile {
        version: 1,
        base: base(),
        nodes: vec![
            node("1", &abc, lat, lon),
            node("2", &abc, lat + 0.001, lon),
            node("3a", &[Phase::A], lat + 0.002, lon - 0.004),
            node("3b", &[Phase::A], lat + 0.002, lon + 0.004),
        ],
        lines: vec![
            coupled_line("L23a", "2", "3a", &[Phase::A], zs, Complex64::default()),
            coupled_line("L23b", "2", "3b", &[Phase::A], zs, Complex64::default()),
        ],
        transformers: vec![transformer("T1", "1", "2", &abc, Complex64::new(0.01, 0.04), 1.0)],
        loads: vec![load("3a", Phase::A, 0.05, 0.015), load("3b", Phase::A, 0.05, 0.015)],
        slack: SlackSource::new("1", 1.0),
    });
    let cands = CandidateSet::new(vec![
        site("3a", Phase::A, lat + 0.002, lon - 0.004, 20_000.0, 3),
        site("3b", Phase::A, lat + 0.002, lon + 0.004, 20_000.0, 3),
    ]);
    (model, cands)
}

/// Twelve nodes: a three-phase trunk behind substation transformer `T1`,
/// single-phase laterals on A and B, a two-phase spur, and a heavily
/// loaded phase-C lateral behind the small transformer `T2`.
pub fn twelve_node_feeder() -> FeederModel {
    let (lat, lon) = SEATTLE;
    let abc = [Phase::A, Phase::B, Phase::C];
    let ab = [Phase::A, Phase::B];
    let zs = Complex64::new(0.03, 0.06);
    let zm = Complex64::new(0.01, 0.02);
    let zl = Complex64::new(0.05, 0.07);
    let d = 0.0015;
    let nodes = vec![
        node("1", &abc, lat, lon),
        node("2", &abc, lat + d, lon),
        node("3", &abc, lat + 2.0 * d, lon),
        node("4", &abc, lat + 3.0 * d, lon),
        node("5", &abc, lat + 4.0 * d, lon),
        node("6", &[Phase::A], lat + 2.0 * d, lon + d),
        node("7", &[Phase::A], lat + 2.0 * d, lon + 2.0 * d),
        node("8", &[Phase::B], lat + 3.0 * d, lon - d),
        node("9", &[Phase::B], lat + 3.0 * d, lon - 2.0 * d),
        node("10", &[Phase::C], lat + 5.0 * d, lon + d),
        node("11", &[Phase::C], lat + 6.0 * d, lon + d),
        node("12", &ab, lat + 5.0 * d, lon - d),
    ];
    let lines = vec![
        coupled_line("L23", "2", "3", &abc, zs, zm),
        coupled_line("L34", "3", "4", &abc, zs, zm),
        coupled_line("L45", "4", "5", &abc, zs, zm),
        coupled_line("L36", "3", "6", &[Phase::A], zl, zm),
        coupled_line("L67", "6", "7", &[Phase::A], zl, zm),
        coupled_line("L48", "4", "8", &[Phase::B], zl, zm),
        coupled_line("L89", "8", "9", &[Phase::B], zl, zm),
        coupled_line("L1011", "10", "11", &[Phase::C], zl, zm),
        coupled_line("L512", "5", "12", &ab, zs, zm),
    ];
    let loads = vec![
        load("3", Phase::A, 0.05, 0.015),
        load("3", Phase::B, 0.05, 0.015),
        load("3", Phase::C, 0.05, 0.015),
        load("5", Phase::A, 0.04, 0.012),
        load("5", Phase::B, 0.04, 0.012),
        load("6", Phase::A, 0.06, 0.018),
        load("7", Phase::A, 0.08, 0.024),
        load("8", Phase::B, 0.05, 0.015),
        load("9", Phase::B, 0.07, 0.021),
        load("10", Phase::C, 0.15, 0.045),
        load("11", Phase::C, 0.12, 0.036),
        load("12", Phase::A, 0.03, 0.009),
        load("12", Phase::B, 0.04, 0.012),
    ];
    build(FeederFile {
        version: 1,
        base: base(),
        nodes,
        lines,
        transformers: vec![
            transformer("T1", "1", "2", &abc, Complex64::new(0.005, 0.02), 2.0),
            // rated just above the lateral's own base current
            transformer("T2", "5", "10", &[Phase::C], Complex64::new(0.01, 0.03), 0.30),
        ],
        loads,
        slack: SlackSource::new("1", 1.0),
    })
}
