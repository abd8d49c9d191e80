//! `gridsite`: demand allocation, candidate prioritization, placement
//! solves, re-verification and the two-approach benchmark.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use gridsite_core::acpf::{self, InjectionOverlay};
use gridsite_core::demand::{allocate_ports, feeder_demand, read_blocks, DemandError};
use gridsite_core::feeder::{load_feeder, select_candidates, CandidateSelection, FeederModel, SiteCatalog};
use gridsite_core::gi::{prioritize, CandidateSet};
use gridsite_core::pipeline::{bench_csv, candidates_geojson, median, node_ratios, run_bench, BenchRow, SolutionFile};
use gridsite_core::solve::{discrete_violations, solve_placement, verify_ac_feasibility, FeasibilityReport, SolveError, SolveStatus};
use gridsite_core::suite::{generate_suite, read_suite, write_suite};
use serde::Serialize;

use config::{Integrality, Presolve, RunConfig};

const EXIT_LIMIT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "gridsite", version, about = "Grid-aware EV charging station siting")]
struct Cli {
    /// TOML (or .json) run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Allocate charging ports across census blocks.
    Demand(DemandArgs),
    /// Select and weight candidate sites on a feeder.
    Prioritize(PrioritizeArgs),
    /// Solve the placement problem.
    Solve(SolveArgs),
    /// Re-check a stored solution against the feeder.
    Verify(VerifyArgs),
    /// Run both approaches on every instance of a suite.
    Bench(BenchArgs),
    /// Write a seeded suite of small instances.
    GenerateSuite(SuiteArgs),
}

#[derive(Args, Debug)]
struct DemandArgs {
    #[arg(long)]
    blocks: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    budget_ports: Option<u64>,
}

#[derive(Args, Debug)]
struct PrioritizeArgs {
    #[arg(long)]
    feeder: Option<PathBuf>,
    /// Site catalog CSV; every loaded node is a site when omitted.
    #[arg(long)]
    sites: Option<PathBuf>,
    #[arg(long)]
    headroom_threshold: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SolverArgs {
    #[arg(long, value_enum)]
    presolve: Option<Presolve>,
    #[arg(long, value_enum)]
    integrality: Option<Integrality>,
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    feeder: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Chargers to place. Without it, the feeder's share of the demand
    /// allocation is used when a blocks file is configured, else 0.
    #[arg(long)]
    demand: Option<u32>,
    #[arg(long)]
    budget: Option<f64>,
    /// Service radius in meters.
    #[arg(long)]
    radius: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    feeder: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// `solution.json` written by `solve`.
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    suite: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
}

/// Error tagged with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INPUT, error: error.into() }
    }
    fn other(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::input)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    match &cli.command {
        Command::Demand(a) => {
            set(&mut cfg.paths.blocks, &a.blocks);
            set_val(&mut cfg.alpha, a.alpha);
            set_val(&mut cfg.budget_ports, a.budget_ports);
        }
        Command::Prioritize(a) => {
            set(&mut cfg.paths.feeder, &a.feeder);
            set(&mut cfg.paths.sites, &a.sites);
            set_val(&mut cfg.headroom_threshold, a.headroom_threshold);
            set_val(&mut cfg.gi.gamma, a.gamma);
        }
        Command::Solve(a) => {
            set(&mut cfg.paths.feeder, &a.feeder);
            set(&mut cfg.paths.candidates, &a.candidates);
            if a.demand.is_some() {
                cfg.demand = a.demand;
            }
            set_val(&mut cfg.cost.budget, a.budget);
            set_val(&mut cfg.cost.service_radius_m, a.radius);
            apply_solver(&mut cfg, &a.solver);
        }
        Command::Verify(a) => {
            set(&mut cfg.paths.feeder, &a.feeder);
            set(&mut cfg.paths.candidates, &a.candidates);
        }
        Command::Bench(a) => {
            set(&mut cfg.paths.suite, &a.suite);
            apply_solver(&mut cfg, &a.solver);
        }
        Command::GenerateSuite(_) => {}
    }
    cfg.validate().map_err(Failure::input)?;
    rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global().map_err(Failure::other)?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display())).map_err(Failure::other)?;

    match cli.command {
        Command::Demand(_) => cmd_demand(&cfg),
        Command::Prioritize(_) => cmd_prioritize(&cfg),
        Command::Solve(_) => cmd_solve(&cfg),
        Command::Verify(a) => cmd_verify(&cfg, &a.solution),
        Command::Bench(_) => cmd_bench(&cfg),
        Command::GenerateSuite(a) => cmd_generate(&cfg, a.count),
    }
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn set_val<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_solver(cfg: &mut RunConfig, a: &SolverArgs) {
    let s = &mut cfg.solver;
    set_val(&mut s.presolve, a.presolve);
    set_val(&mut s.integrality, a.integrality);
    set_val(&mut s.gap_tol, a.gap_tol);
    set_val(&mut s.epsilon, a.epsilon);
    set_val(&mut s.max_sweeps, a.max_sweeps);
    if a.node_limit.is_some() {
        s.node_limit = a.node_limit;
    }
    if a.time_limit.is_some() {
        s.time_limit = a.time_limit;
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| Failure::input(anyhow!("no {what} path given (flag or [paths] in the config)")))
}

fn write(cfg: &RunConfig, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
    let path = cfg.out.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display())).map_err(Failure::other)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(cfg: &RunConfig, name: &str, value: &T) -> Result<PathBuf, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::other)?;
    text.push('\n');
    write(cfg, name, text)
}

fn demand_error(e: DemandError) -> Failure {
    match e {
        DemandError::Infeasible { .. } => Failure { code: EXIT_INFEASIBLE, error: e.into() },
        other => Failure::input(other),
    }
}

fn cmd_demand(cfg: &RunConfig) -> Outcome {
    let path = required(&cfg.paths.blocks, "blocks")?;
    let blocks = read_blocks(path).map_err(demand_error)?;
    let alloc = allocate_ports(&blocks, cfg.alpha, cfg.budget_ports).map_err(demand_error)?;
    let d = feeder_demand(&alloc, &blocks).map_err(demand_error)?;
    write(cfg, "allocation.csv", alloc.to_csv())?;
    println!("allocated {} ports over {} blocks, objective {:.6}", alloc.budget_ports, blocks.len(), alloc.objective_value);
    println!("feeder demand D = {d}");
    Ok(0)
}

fn load_model(cfg: &RunConfig) -> Result<FeederModel, Failure> {
    let path = required(&cfg.paths.feeder, "feeder")?;
    load_feeder(path).with_context(|| format!("loading {}", path.display())).map_err(Failure::input)
}

fn load_candidates(cfg: &RunConfig) -> Result<CandidateSet, Failure> {
    let path = required(&cfg.paths.candidates, "candidates")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::input)?;
    CandidateSet::from_json(&text).with_context(|| format!("parsing {}", path.display())).map_err(Failure::input)
}

fn cmd_prioritize(cfg: &RunConfig) -> Outcome {
    let model = load_model(cfg)?;
    let catalog = match &cfg.paths.sites {
        Some(p) => SiteCatalog::from_csv(p).with_context(|| format!("loading {}", p.display())).map_err(Failure::input)?,
        None => SiteCatalog::default(),
    };
    let base = acpf::solve_powerflow(&model, &InjectionOverlay::new(), &cfg.gi.powerflow)
        .context("base-case power flow")
        .map_err(Failure::other)?;
    let selected = match select_candidates(&model, &base, &catalog, cfg.headroom_threshold).map_err(Failure::input)? {
        CandidateSelection::Candidates(c) => c,
        CandidateSelection::NoHeadroom => {
            eprintln!("no site keeps transformer headroom of at least {}", cfg.headroom_threshold);
            return Ok(EXIT_INFEASIBLE);
        }
    };
    let ranked = prioritize(&model, &base, &selected, &cfg.gi).map_err(Failure::other)?;
    write(cfg, "candidates.json", ranked.to_json() + "\n")?;
    write(cfg, "candidates.csv", ranked.to_ranked_csv())?;
    write_json(cfg, "candidates.geojson", &candidates_geojson(&ranked, None))?;
    println!("{} candidates weighted", ranked.len());
    Ok(0)
}

fn solve_error(e: SolveError) -> Failure {
    match e {
        SolveError::Input(_) | SolveError::Build(_) => Failure::input(e),
        SolveError::PowerFlow(_) => Failure::other(e),
    }
}

fn resolve_demand(cfg: &RunConfig) -> Result<u32, Failure> {
    if let Some(d) = cfg.demand {
        return Ok(d);
    }
    let Some(path) = &cfg.paths.blocks else { return Ok(0) };
    let blocks = read_blocks(path).map_err(demand_error)?;
    let alloc = allocate_ports(&blocks, cfg.alpha, cfg.budget_ports).map_err(demand_error)?;
    let d = feeder_demand(&alloc, &blocks).map_err(demand_error)?;
    u32::try_from(d).map_err(|_| Failure::input(anyhow!("feeder demand {d} out of range")))
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::LimitReached => EXIT_LIMIT,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::LimitNoIncumbent => 1,
    }
}

fn cmd_solve(cfg: &RunConfig) -> Outcome {
    let model = load_model(cfg)?;
    let candidates = load_candidates(cfg)?;
    let demand = resolve_demand(cfg)?;
    let report = solve_placement(&model, &candidates, demand, &cfg.cost, &cfg.solver_config()).map_err(solve_error)?;
    let placement = report.solution.as_ref().map(|s| (s.x.as_slice(), s.z.as_slice()));
    write_json(cfg, "solution.geojson", &candidates_geojson(&candidates, placement))?;
    let file = SolutionFile { demand, cost: cfg.cost, report };
    write_json(cfg, "solution.json", &file)?;
    let r = &file.report;
    let status = serde_json::to_value(r.status).map_err(Failure::other)?;
    println!("approach {} status {}", r.approach.label(), status.as_str().unwrap_or("?"));
    match &r.solution {
        Some(s) => println!(
            "objective {:.6} gap {} nodes {} sites {} chargers {}",
            s.objective,
            r.gap_pct_string(),
            r.nodes,
            s.total_evcs(),
            s.total_chargers()
        ),
        None => println!("no feasible placement; nodes {}", r.nodes),
    }
    Ok(status_code(r.status))
}

#[derive(Serialize)]
struct VerifyOutput {
    passed: bool,
    ac: FeasibilityReport,
    discrete: Vec<String>,
}

fn cmd_verify(cfg: &RunConfig, solution: &Path) -> Outcome {
    let model = load_model(cfg)?;
    let candidates = load_candidates(cfg)?;
    let text = std::fs::read_to_string(solution).with_context(|| format!("reading {}", solution.display())).map_err(Failure::input)?;
    let file: SolutionFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", solution.display())).map_err(Failure::input)?;
    // an infeasible solve stores no placement; nothing is built
    let (x, z) = match &file.report.solution {
        Some(s) => (s.x.clone(), s.z.clone()),
        None => (vec![false; candidates.len()], vec![0; candidates.len()]),
    };
    let (ac, _) = verify_ac_feasibility(&model, &candidates, &z, &file.cost, &cfg.solver_config().verify).map_err(solve_error)?;
    let demand = if file.report.solution.is_some() { file.demand } else { 0 };
    let discrete = discrete_violations(&candidates, &x, &z, demand, &file.cost);
    let out = VerifyOutput { passed: ac.passed() && discrete.is_empty(), ac, discrete };
    write_json(cfg, "verify.json", &out)?;
    if out.passed {
        println!("PASS residual {:.3e}", out.ac.residual);
        Ok(0)
    } else {
        println!("FAIL");
        if let Some(m) = &out.ac.message {
            println!("  {m}");
        }
        for v in &out.discrete {
            println!("  {v}");
        }
        Ok(EXIT_INFEASIBLE)
    }
}

fn cmd_bench(cfg: &RunConfig) -> Outcome {
    let dir = required(&cfg.paths.suite, "suite")?;
    let instances = read_suite(dir).map_err(Failure::input)?;
    if instances.is_empty() {
        return Err(Failure::input(anyhow!("no instances in {}", dir.display())));
    }
    let rows: Vec<BenchRow> = run_bench(&instances, &cfg.solver_config());
    write(cfg, "bench.csv", bench_csv(&rows))?;
    let ratios = node_ratios(&rows);
    let mut values: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    println!("{} instances, {} rows", instances.len(), rows.len());
    match median(&mut values) {
        Some(m) => {
            println!("median node ratio S-MIBLP/MIBLP {m:.4}");
            println!("ratio distribution: {}", values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "));
        }
        None => println!("no comparable runs"),
    }
    let bad = rows.iter().filter(|r| !r.within_gap(cfg.solver.gap_tol) && r.status != "limit_reached" && r.status != "infeasible").count();
    if bad > 0 {
        println!("{bad} rows neither within the gap tolerance nor flagged");
    }
    Ok(0)
}

fn cmd_generate(cfg: &RunConfig, count: usize) -> Outcome {
    let instances = generate_suite(count, cfg.seed);
    write_suite(&cfg.out, &instances).map_err(Failure::other)?;
    println!("wrote {} instances to {}", instances.len(), cfg.out.display());
    Ok(0)
}
