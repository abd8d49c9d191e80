use gridsite_core::acpf::{self, InjectionOverlay, PowerFlowOptions};
use gridsite_core::feeder::{select_candidates, Phase, SiteCatalog};
use gridsite_core::fixtures;
use gridsite_core::gi::{prioritize, CandidateSet, GiConfig};
use gridsite_core::miblp::{build_minlp, propagate_bounds, BuildOptions, CostConfig, VarRole};
use gridsite_core::solve::{discrete_violations, prepare, verify_ac_feasibility, VerifyOptions};
use proptest::prelude::*;

fn twelve_node() -> (gridsite_core::feeder::FeederModel, CandidateSet) {
    let model = fixtures::twelve_node_feeder();
    let base = acpf::solve_powerflow(&model, &InjectionOverlay::new(), &PowerFlowOptions::default()).unwrap();
    let cands = select_candidates(&model, &base, &SiteCatalog::default(), 0.0).unwrap().into_set().unwrap();
    let cands = prioritize(&model, &base, &cands, &GiConfig::default()).unwrap();
    (model, cands)
}

#[test]
fn charger_draw_arithmetic() {
    let cost = CostConfig::default();
    let q = 7.2 * (0.985_f64.acos()).tan();
    assert!((cost.charger_kvar() - q).abs() < 1e-12);
    assert!((cost.charger_kvar() - 1.2612).abs() < 1e-3);
    assert!((cost.station_kw(157) - 1130.4).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn feasible_states_lift_exactly(picks in proptest::collection::vec((0usize..64, 1u32..=2), 1..=3)) {
        let (model, cands) = twelve_node();
        let cost = CostConfig::default();
        let mut z = vec![0u32; cands.len()];
        for (k, n) in picks {
            z[k % cands.len()] = n;
        }
        let x: Vec<bool> = z.iter().map(|&n| n > 0).collect();
        let demand: u32 = z.iter().sum();
        prop_assume!(discrete_violations(&cands, &x, &z, demand, &cost).is_empty());
        let (report, state) = verify_ac_feasibility(&model, &cands, &z, &cost, &VerifyOptions::default()).unwrap();
        prop_assume!(report.passed());

        let minlp = build_minlp(&model, &cands, demand, &cost).unwrap();
        let point = minlp.point_from_state(&model, &state.unwrap(), &x, &z);
        let decomposed = prepare(&model, &cands, demand, &cost, &BuildOptions::default()).unwrap();
        let lifted = decomposed.problem.lift_point(&point);
        prop_assert!(decomposed.problem.max_violation(&lifted) <= 1e-10);

        // substituting the deviations back recovers the same point
        let cols = decomposed.to_columns(&lifted);
        let back = decomposed.from_columns(&cols);
        for (a, b) in back.iter().zip(&lifted) {
            prop_assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
        }
        prop_assert!(decomposed.max_violation(&cols) <= 1e-10);
    }
}

#[test]
fn squared_magnitude_bounds_follow_the_deviation_box() {
    let (model, cands) = twelve_node();
    let problem = prepare(&model, &cands, 1, &CostConfig::default(), &BuildOptions::default()).unwrap();
    let t = model.find_terminal("3", Phase::B).unwrap();
    let col = |role: VarRole| problem.problem.variables.iter().position(|v| v.role == role).unwrap();
    let (jr, ji, js) = (col(VarRole::VoltageReal { terminal: t }), col(VarRole::VoltageImag { terminal: t }), col(VarRole::VoltageSq { terminal: t }));

    let (mut lower, mut upper) = (problem.lower.clone(), problem.upper.clone());
    for j in [jr, ji] {
        lower[j] = lower[j].max(-0.05);
        upper[j] = upper[j].min(0.05);
    }
    let initial = [(lower[jr], upper[jr]), (lower[ji], upper[ji])];
    propagate_bounds(&problem, &mut lower, &mut upper, 20).unwrap();

    // (n_r + Δr)² + (n_i + Δi)² is separable, so its range over a box is
    // the sum of the two one-dimensional ranges
    let (nr, ni) = model.nominal_voltage(t);
    let sq_range = |n: f64, (lo, hi): (f64, f64)| {
        let (a, b) = ((n + lo).powi(2), (n + hi).powi(2));
        let min = if n + lo <= 0.0 && n + hi >= 0.0 { 0.0 } else { a.min(b) };
        (min, a.max(b))
    };
    let range = |r: (f64, f64), i: (f64, f64)| {
        let (a, b) = (sq_range(nr, r), sq_range(ni, i));
        (a.0 + b.0, a.1 + b.1)
    };
    // the column starts at the squared voltage limits (with the limit tolerance)
    let limits = (problem.lower[js], problem.upper[js]);
    let node = &model.nodes[model.terminals()[t].node];
    assert!((limits.0 - node.v_min.powi(2)).abs() < 1e-5 && (limits.1 - node.v_max.powi(2)).abs() < 1e-5);
    let outer = range(initial[0], initial[1]);
    let inner = range((lower[jr], upper[jr]), (lower[ji], upper[ji]));

    let (lo, hi) = (lower[js], upper[js]);
    // never excludes a reachable value of the final box
    assert!(lo <= inner.0.max(limits.0) + 1e-9 && hi >= inner.1.min(limits.1) - 1e-9, "[{lo}, {hi}] vs {inner:?}");
    // and is no looser than the starting box allows
    assert!(lo >= outer.0.max(limits.0) - 1e-9 && hi <= outer.1.min(limits.1) + 1e-9, "[{lo}, {hi}] vs {outer:?}");
}
