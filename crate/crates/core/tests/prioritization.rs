use gridsite_core::acpf::{self, InjectionOverlay, PowerFlowOptions, PowerFlowState};
use gridsite_core::feeder::{select_candidates, FeederModel, Phase, SiteCatalog};
use gridsite_core::fixtures;
use gridsite_core::gi::{current_impact, prioritize, voltage_impact, Candidate, CandidateSet, GiConfig};
use proptest::prelude::*;

fn base_state(model: &FeederModel) -> PowerFlowState {
    acpf::solve_powerflow(model, &InjectionOverlay::new(), &PowerFlowOptions::default()).unwrap()
}

fn perturbed(model: &FeederModel, c: &Candidate, cfg: &GiConfig) -> PowerFlowState {
    let mut overlay = InjectionOverlay::new();
    overlay.add(model.find_terminal(&c.node, c.phase).unwrap(), cfg.delta_s(model));
    acpf::solve_powerflow(model, &overlay, &PowerFlowOptions::default()).unwrap()
}

/// Unscaled voltage term written out per terminal.
fn voltage_term(model: &FeederModel, base: &PowerFlowState, pert: &PowerFlowState, gamma: f64) -> f64 {
    (0..model.terminal_count())
        .map(|t| {
            let n = &model.nodes[model.terminals()[t].node];
            let (v, vh) = (base.magnitude(t), pert.magnitude(t));
            (vh - v).abs() + gamma * ((n.v_min - vh).max(0.0) + (vh - n.v_max).max(0.0))
        })
        .sum()
}

fn twelve_node_candidates(model: &FeederModel, base: &PowerFlowState) -> CandidateSet {
    select_candidates(model, base, &SiteCatalog::default(), 0.0).unwrap().into_set().unwrap()
}

#[test]
fn symmetric_candidates_have_equal_voltage_impact() {
    let (model, cands) = fixtures::symmetric_two_candidate();
    let base = base_state(&model);
    let cfg = GiConfig::default();
    let ds = cfg.delta_s(&model).norm();
    let by_hand: Vec<f64> = cands.entries.iter().map(|c| voltage_term(&model, &base, &perturbed(&model, c, &cfg), cfg.gamma) / ds).collect();
    assert!(by_hand[0] > 0.0);
    assert!((by_hand[0] - by_hand[1]).abs() <= 1e-12 * by_hand[0]);
    for (c, h) in cands.entries.iter().zip(&by_hand) {
        let f_v = voltage_impact(&model, &base, c, &cfg).unwrap();
        // both sides carry the Newton tolerance, amplified by 1/|δS|
        assert!((f_v - h).abs() <= 1e-8, "{f_v} vs {h}");
    }
}

#[test]
fn downstream_candidate_loads_its_transformer_more() {
    let model = fixtures::twelve_node_feeder();
    let base = base_state(&model);
    let cfg = GiConfig::default();
    let cands = twelve_node_candidates(&model, &base);
    let find = |label: &str| cands.entries.iter().find(|c| c.label() == label).unwrap().clone();
    let (down, up) = (find("11.C"), find("3.C"));

    let t2 = model.transformers.iter().position(|t| t.id == "T2").unwrap();
    let rating = model.transformers[t2].i_rated;
    let t2_current = |s: &PowerFlowState| acpf::transformer_currents(&model, s).into_iter().find(|c| c.transformer == t2).unwrap().magnitude();
    let contribution = |c: &Candidate| {
        let (i, ih) = (t2_current(&base), t2_current(&perturbed(&model, c, &cfg)));
        (ih - i).abs() + cfg.gamma * (ih - rating).max(0.0)
    };
    assert!(contribution(&down) > contribution(&up) + 1e-6, "{} vs {}", contribution(&down), contribution(&up));
    assert!(current_impact(&model, &base, &down, &cfg).unwrap() > current_impact(&model, &base, &up, &cfg).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn indices_ignore_candidate_order(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let model = fixtures::twelve_node_feeder();
        let base = base_state(&model);
        let cfg = GiConfig::default();
        let cands = twelve_node_candidates(&model, &base);
        let mut shuffled = cands.clone();
        shuffled.entries.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = prioritize(&model, &base, &cands, &cfg).unwrap();
        let b = prioritize(&model, &base, &shuffled, &cfg).unwrap();
        for c in &a.entries {
            let d = b.entries.iter().find(|d| d.label() == c.label()).unwrap();
            prop_assert!((c.f_v - d.f_v).abs() < 1e-12 && (c.f_c - d.f_c).abs() < 1e-12);
            prop_assert!((c.f_g - d.f_g).abs() < 1e-12 && (c.weight - d.weight).abs() < 1e-12);
        }
    }
}

#[test]
fn candidates_on_each_present_phase() {
    let model = fixtures::twelve_node_feeder();
    let base = base_state(&model);
    let cands = twelve_node_candidates(&model, &base);
    let phases: Vec<Phase> = cands.entries.iter().filter(|c| c.node == "12").map(|c| c.phase).collect();
    assert_eq!(phases, vec![Phase::A, Phase::B]);
}
