use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridsite_core::fixtures::symmetric_two_candidate;
use serde_json::Value;
use tempfile::TempDir;

fn gridsite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsite")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const BLOCKS: &str = "\
id,mu,eps,cap,lat,lon,in_feeder
1,0.9,0.2,4,47.60,-122.33,true
2,0.1,0.8,5,47.61,-122.33,false
3,0.5,0.5,3,47.62,-122.33,1
4,0.3,0.9,2,47.63,-122.33,no
";

#[test]
fn demand_columns_sum_to_budget() {
    let dir = TempDir::new().unwrap();
    let blocks = dir.path().join("blocks.csv");
    std::fs::write(&blocks, BLOCKS).unwrap();
    let out_dir = dir.path().join("out");
    let out = gridsite(&["demand", "--blocks", p(&blocks), "--alpha", "0.85", "--budget-ports", "9", "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("allocation.csv")).unwrap();
    let total: u32 = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u32>().unwrap()).sum();
    assert_eq!(total, 9);
    // coefficients: 2 → 0.695, 4 → 0.81, 3 → 0.5, 1 → 0.305
    assert_eq!(csv, "id,d\n1,0\n2,5\n3,2\n4,2\n");
    assert!(stdout(&out).contains("feeder demand D = 2"));
}

#[test]
fn demand_shortfall_and_missing_file() {
    let dir = TempDir::new().unwrap();
    let blocks = dir.path().join("blocks.csv");
    std::fs::write(&blocks, BLOCKS).unwrap();
    let out = gridsite(&["demand", "--blocks", p(&blocks), "--budget-ports", "3085", "--out", p(dir.path())]);
    assert_eq!(code(&out), 3);
    let out = gridsite(&["demand", "--blocks", p(&dir.path().join("nope.csv")), "--out", p(dir.path())]);
    assert_eq!(code(&out), 4);
    assert!(!out.stderr.is_empty());
}

#[test]
fn config_file_values_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let blocks = dir.path().join("blocks.csv");
    std::fs::write(&blocks, BLOCKS).unwrap();
    let out_dir = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("budget_ports = 4\nout = {:?}\n[paths]\nblocks = {:?}\n", p(&out_dir), p(&blocks))).unwrap();
    let out = gridsite(&["--config", p(&cfg), "demand"]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_to_string(out_dir.join("allocation.csv")).unwrap(), "id,d\n1,0\n2,2\n3,0\n4,2\n");
    let out = gridsite(&["--config", p(&cfg), "demand", "--budget-ports", "14"]);
    assert_eq!(code(&out), 0);
    assert!(std::fs::read_to_string(out_dir.join("allocation.csv")).unwrap().starts_with("id,d\n1,4\n2,5\n"));
    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(code(&gridsite(&["--config", p(&cfg), "demand"])), 4);
}

fn symmetric_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let (model, cands) = symmetric_two_candidate();
    let feeder = dir.join("feeder.json");
    model.save(&feeder).unwrap();
    let candidates = dir.join("candidates.json");
    std::fs::write(&candidates, cands.to_json()).unwrap();
    (feeder, candidates)
}

#[test]
fn prioritize_symmetric_fixture_is_even_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let (feeder, _) = symmetric_inputs(dir.path());
    let mut runs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("run{k}"));
        let out = gridsite(&["prioritize", "--feeder", p(&feeder), "--out", p(&out_dir), "--workers", "1"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(["candidates.csv", "candidates.json", "candidates.geojson"].map(|f| std::fs::read(out_dir.join(f)).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let csv = String::from_utf8(runs[0][0].clone()).unwrap();
    assert!(csv.starts_with("node,phase,f_v,f_c,f_g,weight\n"));
    let weights: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(weights.len(), 2);
    for w in weights {
        assert!((w - 0.5).abs() < 1e-9, "{w}");
    }
    let geo: Value = serde_json::from_slice(&runs[0][2]).unwrap();
    let f = &geo["features"][0];
    assert_eq!(f["geometry"]["type"], "Point");
    assert!(f["properties"]["weight"].is_number());
    assert_eq!(f["properties"]["selected"], false);
}

#[test]
fn prioritize_without_headroom_exits_infeasible() {
    let dir = TempDir::new().unwrap();
    let (feeder, _) = symmetric_inputs(dir.path());
    let out = gridsite(&["prioritize", "--feeder", p(&feeder), "--headroom-threshold", "5", "--out", p(dir.path())]);
    assert_eq!(code(&out), 3);
}

#[test]
fn solve_with_nothing_to_place_is_zero() {
    let dir = TempDir::new().unwrap();
    let (feeder, candidates) = symmetric_inputs(dir.path());
    let out = gridsite(&[
        "solve", "--feeder", p(&feeder), "--candidates", p(&candidates), "--demand", "0", "--budget", "0", "--out", p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("gap 0.0000"), "{}", stdout(&out));
    let sol: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["report"]["objective"].as_f64(), Some(0.0));
    assert_eq!(sol["report"]["status"], "optimal");
}

#[test]
fn solve_then_verify_and_tamper() {
    let dir = TempDir::new().unwrap();
    let (feeder, candidates) = symmetric_inputs(dir.path());
    let out_dir = dir.path().join("solve");
    for presolve in ["none", "sbt"] {
        let out = gridsite(&[
            "solve", "--feeder", p(&feeder), "--candidates", p(&candidates), "--demand", "2", "--budget", "60000",
            "--presolve", presolve, "--out", p(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let solution = out_dir.join("solution.json");
    let text = std::fs::read_to_string(&solution).unwrap();
    let mut sol: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(sol["report"]["approach"], "S-MIBLP");
    let geo: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("solution.geojson")).unwrap()).unwrap();
    let selected = geo["features"].as_array().unwrap().iter().filter(|f| f["properties"]["selected"] == true).count();
    assert_eq!(selected as u64, sol["report"]["solution"]["x"].as_array().unwrap().iter().filter(|v| v.as_bool() == Some(true)).count() as u64);

    let vdir = dir.path().join("verify");
    let args = |s: &Path| {
        gridsite(&["verify", "--feeder", p(&feeder), "--candidates", p(&candidates), "--solution", p(s), "--out", p(&vdir)])
    };
    let out = args(&solution);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(vdir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["ac"]["residual"].as_f64().unwrap() <= 1e-8);

    let z = sol["report"]["solution"]["z"].as_array_mut().unwrap();
    let k = z.iter().position(|v| v.as_u64() > Some(0)).unwrap();
    z[k] = Value::from(z[k].as_u64().unwrap() + 10);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&sol).unwrap()).unwrap();
    let out = args(&tampered);
    assert_eq!(code(&out), 3);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(vdir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert_ne!(report["ac"]["status"], "pass");
    assert!(!report["discrete"].as_array().unwrap().is_empty());
}

#[test]
fn verify_accepts_empty_solution() {
    let dir = TempDir::new().unwrap();
    let (feeder, candidates) = symmetric_inputs(dir.path());
    // demand above what the budget can buy: infeasible, nothing stored
    let out = gridsite(&[
        "solve", "--feeder", p(&feeder), "--candidates", p(&candidates), "--demand", "6", "--budget", "30000", "--out", p(dir.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));
    let out = gridsite(&[
        "verify", "--feeder", p(&feeder), "--candidates", p(&candidates), "--solution", p(&dir.path().join("solution.json")), "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn missing_inputs_are_input_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gridsite(&["solve", "--out", p(dir.path())])), 4);
    assert_eq!(code(&gridsite(&["prioritize", "--feeder", "/nonexistent.json", "--out", p(dir.path())])), 4);
    assert_eq!(code(&gridsite(&["bench", "--suite", p(dir.path()), "--out", p(dir.path())])), 4);
    assert_eq!(code(&gridsite(&["demand", "--workers", "0", "--out", p(dir.path())])), 4);
}

#[test]
fn bench_writes_two_rows_per_case() {
    let dir = TempDir::new().unwrap();
    let suite = dir.path().join("suite");
    let out = gridsite(&["generate-suite", "--count", "2", "--seed", "1000", "--out", p(&suite)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_dir(&suite).unwrap().count(), 2);
    let out_dir = dir.path().join("bench");
    let out = gridsite(&["bench", "--suite", p(&suite), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("case,approach,objective,time_s,sbnb_nodes,gap_pct,total_evcs,total_chargers,status"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0][0], pair[1][0]);
        assert_eq!((pair[0][1], pair[1][1]), ("MIBLP", "S-MIBLP"));
        assert_eq!(pair[0][2], pair[1][2], "objectives differ");
        for r in pair {
            assert!(r[5] == "0.0000" || r[8] == "limit_reached", "{r:?}");
        }
        assert!(pair[1][4].parse::<usize>().unwrap() <= pair[0][4].parse::<usize>().unwrap());
    }
    assert!(stdout(&out).contains("median node ratio"));
}

/// Standalone perturbation study: one power flow per site with a single
/// charger's draw, deviations summed by hand, then normalization, the
/// self-weighted blend and a softmax.
fn scripted_weights(model: &gridsite_core::feeder::FeederModel, sites: &[(String, gridsite_core::feeder::Phase)]) -> Vec<f64> {
    use gridsite_core::acpf::{solve_powerflow, InjectionOverlay, PowerFlowOptions, PowerFlowState};
    use num_complex::Complex64;
    let gamma = 10.0;
    let p = 7.2 / model.base.s_kva;
    let ds = Complex64::new(p, p * 0.985_f64.acos().tan());
    let solve = |o: &InjectionOverlay| solve_powerflow(model, o, &PowerFlowOptions::default()).unwrap();
    let base = solve(&InjectionOverlay::new());
    let current = |s: &PowerFlowState, k: usize, ph: gridsite_core::feeder::Phase| {
        let tr = &model.transformers[k];
        let i = tr.phases.iter().position(|&q| q == ph).unwrap();
        let v = |id: &str| {
            let t = model.find_terminal(id, ph).unwrap();
            Complex64::new(s.v_real[t], s.v_imag[t])
        };
        ((v(&tr.from) - v(&tr.to)) * Complex64::new(tr.g[i], tr.b[i])).norm()
    };
    let mut fv = Vec::new();
    let mut fc = Vec::new();
    for (node, ph) in sites {
        let mut o = InjectionOverlay::new();
        o.add(model.find_terminal(node, *ph).unwrap(), ds);
        let s = solve(&o);
        let mut v_sum = 0.0;
        for t in 0..model.terminal_count() {
            let n = &model.nodes[model.terminals()[t].node];
            let (v, vh) = (base.magnitude(t), s.magnitude(t));
            v_sum += (vh - v).abs() + gamma * ((n.v_min - vh).max(0.0) + (vh - n.v_max).max(0.0));
        }
        let mut c_sum = 0.0;
        for (k, tr) in model.transformers.iter().enumerate() {
            for &q in &tr.phases {
                let (i, ih) = (current(&base, k, q), current(&s, k, q));
                c_sum += (ih - i).abs() + gamma * (ih - tr.i_rated).max(0.0);
            }
        }
        fv.push(v_sum / ds.norm());
        fc.push(c_sum / ds.norm());
    }
    let (mv, mc) = (fv.iter().cloned().fold(0.0, f64::max), fc.iter().cloned().fold(0.0, f64::max));
    let fg: Vec<f64> = fv
        .iter()
        .zip(&fc)
        .map(|(v, c)| {
            let (v, c) = (v / mv, c / mc);
            if v + c > 0.0 {
                (v * v + c * c) / (v + c)
            } else {
                0.0
            }
        })
        .collect();
    let e: Vec<f64> = fg.iter().map(|g| (-g).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|x| x / total).collect()
}

#[test]
fn prioritize_twelve_node_ranking_matches_script() {
    let dir = TempDir::new().unwrap();
    let model = gridsite_core::fixtures::twelve_node_feeder();
    let feeder = dir.path().join("feeder.json");
    model.save(&feeder).unwrap();
    let out_dir = dir.path().join("out");
    let out = gridsite(&["prioritize", "--feeder", p(&feeder), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let set = gridsite_core::gi::CandidateSet::from_json(&std::fs::read_to_string(out_dir.join("candidates.json")).unwrap()).unwrap();
    let sites: Vec<_> = set.entries.iter().map(|c| (c.node.clone(), c.phase)).collect();
    assert!(sites.len() >= 10);
    let script = scripted_weights(&model, &sites);
    for (c, w) in set.entries.iter().zip(&script) {
        assert!((c.weight - w).abs() < 1e-8, "{}: {} vs {w}", c.label(), c.weight);
    }
    let rank = |w: &[f64]| {
        let mut o: Vec<usize> = (0..w.len()).collect();
        o.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
        o
    };
    assert_eq!(rank(&set.weights()), rank(&script));
    let csv = std::fs::read_to_string(out_dir.join("candidates.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    let top = &set.entries[rank(&script)[0]];
    assert!(first.starts_with(&format!("{},{},", top.node, top.phase)), "{first}");
}
