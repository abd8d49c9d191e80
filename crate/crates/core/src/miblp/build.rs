use serde::{Deserialize, Serialize};

use super::bounds::{interval_mul, Interval};
use super::cluster::{anti_clustering_constraints, AntiClusterPair};
use super::{BuildError, CandidateVars, LinearConstraint, QuadraticLimit, RowTag, Sense, TerminalVars, VarKind, VarRole, Variable};
use crate::acpf::{self, PowerFlowState};
use crate::feeder::FeederModel;
use crate::gi::CandidateSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    /// Rated power of one charger in kW.
    pub charger_kw: f64,
    pub pf: f64,
    /// Cost of one charger.
    pub charger_cost: f64,
    /// Total budget `C`.
    pub budget: f64,
    /// Service radius `R` in meters.
    pub service_radius_m: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { charger_kw: 7.2, pf: 0.985, charger_cost: 8600.0, budget: 1.0e6, service_radius_m: 100.0 }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if !(self.pf > 0.0 && self.pf <= 1.0) {
            return Err(BuildError::InvalidCost("power factor must lie in (0, 1]".into()));
        }
        if !(self.charger_kw > 0.0) || !self.charger_kw.is_finite() {
            return Err(BuildError::InvalidCost("charger rating must be positive".into()));
        }
        if !(self.budget >= 0.0) || !(self.charger_cost >= 0.0) || !(self.service_radius_m >= 0.0) {
            return Err(BuildError::InvalidCost("budget, charger cost and radius must be non-negative".into()));
        }
        Ok(())
    }

    pub fn tan_phi(&self) -> f64 {
        self.pf.acos().tan()
    }

    /// Reactive draw of one charger in kVAr.
    pub fn charger_kvar(&self) -> f64 {
        self.charger_kw * self.tan_phi()
    }

    /// Per-unit active draw of one charger.
    pub fn charger_pu(&self, model: &FeederModel) -> f64 {
        model.base.kw_to_pu(self.charger_kw)
    }

    /// Station draw in kW for `z` chargers.
    pub fn station_kw(&self, z: u32) -> f64 {
        self.charger_kw * z as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    /// Initial half-width of every rectangular-voltage deviation box.
    pub deviation_box: f64,
    /// Voltage and thermal limits are loosened by this amount so that the
    /// model agrees with the verification tolerance.
    pub limit_tolerance: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { deviation_box: 0.2, limit_tolerance: 1e-6 }
    }
}

/// `Σ coef·var + constant`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * point[j]).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NonlinearConstraint {
    /// Real part: `Σ linear + Σ (g·vr − b·vi) = 0`; imaginary part:
    /// `Σ linear + Σ (g·vi + b·vr) = 0` over the devices `(g, b)`.
    Kcl { terminal: usize, imag: bool, linear: Vec<(usize, f64)>, devices: Vec<(usize, usize)>, vr: usize, vi: usize },
    /// `g·(vr² + vi²) = rhs`.
    Surrogate { terminal: usize, g: usize, vr: usize, vi: usize, rhs: Affine },
    /// `lower² ≤ vr² + vi² ≤ upper²`.
    VoltageMagnitude { terminal: usize, vr: usize, vi: usize, lower: f64, upper: f64 },
}

impl NonlinearConstraint {
    pub fn violation(&self, p: &[f64]) -> f64 {
        match self {
            NonlinearConstraint::Kcl { imag, linear, devices, vr, vi, .. } => {
                let mut s: f64 = linear.iter().map(|&(j, a)| a * p[j]).sum();
                for &(g, b) in devices {
                    s += if *imag { p[g] * p[*vi] + p[b] * p[*vr] } else { p[g] * p[*vr] - p[b] * p[*vi] };
                }
                s.abs()
            }
            NonlinearConstraint::Surrogate { g, vr, vi, rhs, .. } => {
                (p[*g] * (p[*vr] * p[*vr] + p[*vi] * p[*vi]) - rhs.eval(p)).abs()
            }
            NonlinearConstraint::VoltageMagnitude { vr, vi, lower, upper, .. } => {
                let m = p[*vr] * p[*vr] + p[*vi] * p[*vi];
                (lower * lower - m).max(m - upper * upper).max(0.0)
            }
        }
    }
}

/// The siting MINLP (maximize `objective`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinlpProblem {
    pub variables: Vec<Variable>,
    pub linear: Vec<LinearConstraint>,
    pub nonlinear: Vec<NonlinearConstraint>,
    pub quadratic: Vec<QuadraticLimit>,
    pub objective: Vec<(usize, f64)>,
    pub terminals: Vec<TerminalVars>,
    pub candidates: Vec<CandidateVars>,
    pub anti_cluster: Vec<AntiClusterPair>,
    pub demand: u32,
    pub cost: CostConfig,
    pub options: BuildOptions,
}

impl MinlpProblem {
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let lin = self.linear.iter().map(|c| c.violation(point));
        let nl = self.nonlinear.iter().map(|c| c.violation(point));
        let quad = self.quadratic.iter().map(|q| q.excess(point).max(0.0));
        lin.chain(nl).chain(quad).fold(0.0, f64::max)
    }

    /// The model point of a power-flow state together with a placement.
    /// The state must already carry the placement's charger draws.
    pub fn point_from_state(&self, model: &FeederModel, state: &PowerFlowState, x: &[bool], z: &[u32]) -> Vec<f64> {
        let mut p = vec![0.0; self.variables.len()];
        for (t, tv) in self.terminals.iter().enumerate() {
            p[tv.vr] = state.v_real[t];
            p[tv.vi] = state.v_imag[t];
            if let Some((g, b)) = tv.load {
                p[g] = state.g_load[t];
                p[b] = state.b_load[t];
            }
        }
        let rating = self.cost.charger_pu(model);
        for (k, c) in self.candidates.iter().enumerate() {
            let pc = rating * z[k] as f64;
            let qc = pc * self.cost.tan_phi();
            let vsq = state.v_sq(c.terminal);
            p[c.x] = if x[k] { 1.0 } else { 0.0 };
            p[c.z] = z[k] as f64;
            p[c.p] = pc;
            p[c.q] = qc;
            p[c.g] = pc / vsq;
            p[c.b] = -qc / vsq;
        }
        let currents = acpf::transformer_currents(model, state);
        for (q, i) in self.quadratic.iter().zip(&currents) {
            p[q.real] = i.real;
            p[q.imag] = i.imag;
        }
        p
    }
}

pub fn build_minlp(model: &FeederModel, candidates: &CandidateSet, demand: u32, cost: &CostConfig) -> Result<MinlpProblem, BuildError> {
    build_minlp_with(model, candidates, demand, cost, &BuildOptions::default())
}

struct Vars(Vec<Variable>);

impl Vars {
    fn push(&mut self, name: String, kind: VarKind, role: VarRole, (lower, upper): Interval) -> usize {
        self.0.push(Variable { name, kind, role, lower, upper });
        self.0.len() - 1
    }
}

pub fn build_minlp_with(
    model: &FeederModel,
    candidates: &CandidateSet,
    demand: u32,
    cost: &CostConfig,
    options: &BuildOptions,
) -> Result<MinlpProblem, BuildError> {
    cost.validate()?;
    let max_chargers: u64 = candidates.entries.iter().map(|c| c.z_max as u64).sum();
    if demand as u64 > max_chargers {
        return Err(BuildError::Structural(format!("demand {demand} exceeds the {max_chargers} chargers all candidates can host")));
    }
    let tol = options.limit_tolerance;
    let dev = options.deviation_box;
    let mut vars = Vars(Vec::new());
    let mut linear = Vec::new();
    let mut nonlinear = Vec::new();

    let mut terminals = Vec::with_capacity(model.terminal_count());
    for (t, term) in model.terminals().iter().enumerate() {
        let label = model.terminal_label(t);
        let node = &model.nodes[term.node];
        let (nr, ni) = model.nominal_voltage(t);
        let vr = vars.push(format!("Vr[{label}]"), VarKind::Continuous, VarRole::VoltageReal { terminal: t }, (nr - dev, nr + dev));
        let vi = vars.push(format!("Vi[{label}]"), VarKind::Continuous, VarRole::VoltageImag { terminal: t }, (ni - dev, ni + dev));
        let (lo, hi) = (node.v_min - tol, node.v_max + tol);
        let inv_vsq = (1.0 / (hi * hi), 1.0 / (lo * lo));
        let load = model.has_load(t).then(|| {
            let (p, q) = model.terminal_load(t);
            let g = vars.push(format!("Gload[{label}]"), VarKind::Continuous, VarRole::LoadG { terminal: t }, interval_mul((p, p), inv_vsq));
            let b = vars.push(format!("Bload[{label}]"), VarKind::Continuous, VarRole::LoadB { terminal: t }, interval_mul((-q, -q), inv_vsq));
            (g, b)
        });
        let slack = model.is_slack_terminal(t);
        if slack {
            linear.push(LinearConstraint { terms: vec![(vr, 1.0)], sense: Sense::Eq, rhs: nr, tag: RowTag::SlackFix { terminal: t } });
            linear.push(LinearConstraint { terms: vec![(vi, 1.0)], sense: Sense::Eq, rhs: ni, tag: RowTag::SlackFix { terminal: t } });
        }
        terminals.push(TerminalVars { phase: term.phase, vr, vi, vsq: None, load, slack, nominal: (nr, ni), v_min: node.v_min, v_max: node.v_max });
    }

    let rating = cost.charger_pu(model);
    let tan_phi = cost.tan_phi();
    let mut cands = Vec::with_capacity(candidates.len());
    for (k, c) in candidates.entries.iter().enumerate() {
        let t = model.find_terminal(&c.node, c.phase).map_err(|_| BuildError::Reference(c.label()))?;
        if c.z_max < c.z_min {
            return Err(BuildError::Structural(format!("candidate {} has z_min > z_max", c.label())));
        }
        let label = c.label();
        let node = &model.nodes[model.terminals()[t].node];
        let lo = node.v_min - tol;
        let pmax = rating * c.z_max as f64;
        let x = vars.push(format!("x[{label}]"), VarKind::Binary, VarRole::Site { candidate: k }, (0.0, 1.0));
        let z = vars.push(format!("z[{label}]"), VarKind::Integer, VarRole::Chargers { candidate: k }, (0.0, c.z_max as f64));
        let p = vars.push(format!("Pch[{label}]"), VarKind::Continuous, VarRole::ChargerP { candidate: k }, (0.0, pmax));
        let q = vars.push(format!("Qch[{label}]"), VarKind::Continuous, VarRole::ChargerQ { candidate: k }, (0.0, tan_phi * pmax));
        let g = vars.push(format!("Gch[{label}]"), VarKind::Continuous, VarRole::ChargerG { candidate: k }, (0.0, pmax / (lo * lo)));
        let b = vars.push(format!("Bch[{label}]"), VarKind::Continuous, VarRole::ChargerB { candidate: k }, (-tan_phi * pmax / (lo * lo), 0.0));
        linear.push(LinearConstraint { terms: vec![(z, 1.0), (x, -(c.z_max as f64))], sense: Sense::Le, rhs: 0.0, tag: RowTag::SiteLink { candidate: k } });
        linear.push(LinearConstraint { terms: vec![(z, 1.0), (x, -(c.z_min as f64))], sense: Sense::Ge, rhs: 0.0, tag: RowTag::SiteLink { candidate: k } });
        linear.push(LinearConstraint { terms: vec![(p, 1.0), (z, -rating)], sense: Sense::Eq, rhs: 0.0, tag: RowTag::Rating { candidate: k } });
        linear.push(LinearConstraint { terms: vec![(q, 1.0), (p, -tan_phi)], sense: Sense::Eq, rhs: 0.0, tag: RowTag::PowerFactor { candidate: k } });
        cands.push(CandidateVars { terminal: t, x, z, g, b, p, q, weight: c.weight, z_min: c.z_min, z_max: c.z_max });
    }

    if !cands.is_empty() {
        linear.push(LinearConstraint {
            terms: cands.iter().map(|c| (c.z, 1.0)).collect(),
            sense: Sense::Ge,
            rhs: demand as f64,
            tag: RowTag::Demand,
        });
        let mut terms = Vec::new();
        for (c, e) in cands.iter().zip(&candidates.entries) {
            terms.push((c.x, e.land_cost));
            terms.push((c.z, cost.charger_cost));
        }
        linear.push(LinearConstraint { terms, sense: Sense::Le, rhs: cost.budget, tag: RowTag::Budget });
    } else if demand > 0 {
        return Err(BuildError::Structural("positive demand with no candidates".into()));
    }
    let anti_cluster = anti_clustering_constraints(candidates, cost.service_radius_m);
    for pair in &anti_cluster {
        linear.push(LinearConstraint {
            terms: vec![(cands[pair.first].x, 1.0), (cands[pair.second].x, 1.0)],
            sense: Sense::Le,
            rhs: 1.0,
            tag: RowTag::AntiCluster { first: pair.first, second: pair.second },
        });
    }

    let mut quadratic = Vec::new();
    for (ti, tr) in model.transformers.iter().enumerate() {
        let lim = tr.i_rated + tol;
        for (k, (phase, f, t)) in model.transformer_terminals(ti).into_iter().enumerate() {
            let (g, b) = (tr.g[k], tr.b[k]);
            let ir = vars.push(format!("Ir[{}.{phase}]", tr.id), VarKind::Continuous, VarRole::TransformerReal { transformer: ti, phase }, (-lim, lim));
            let ii = vars.push(format!("Ii[{}.{phase}]", tr.id), VarKind::Continuous, VarRole::TransformerImag { transformer: ti, phase }, (-lim, lim));
            let (fr, fi, tr_, ti_) = (terminals[f].vr, terminals[f].vi, terminals[t].vr, terminals[t].vi);
            let tag = RowTag::TransformerCurrent { transformer: ti, phase };
            linear.push(LinearConstraint {
                terms: vec![(ir, 1.0), (fr, -g), (tr_, g), (fi, b), (ti_, -b)],
                sense: Sense::Eq,
                rhs: 0.0,
                tag,
            });
            linear.push(LinearConstraint {
                terms: vec![(ii, 1.0), (fi, -g), (ti_, g), (fr, -b), (tr_, b)],
                sense: Sense::Eq,
                rhs: 0.0,
                tag,
            });
            quadratic.push(QuadraticLimit { real: ir, imag: ii, limit: lim, transformer: ti, phase });
        }
    }

    let y = model.admittance();
    for (t, tv) in terminals.iter().enumerate() {
        let node = &model.nodes[model.terminals()[t].node];
        nonlinear.push(NonlinearConstraint::VoltageMagnitude {
            terminal: t,
            vr: tv.vr,
            vi: tv.vi,
            lower: node.v_min - tol,
            upper: node.v_max + tol,
        });
        if let Some((g, b)) = tv.load {
            let (p, q) = model.terminal_load(t);
            nonlinear.push(NonlinearConstraint::Surrogate { terminal: t, g, vr: tv.vr, vi: tv.vi, rhs: Affine::constant(p) });
            nonlinear.push(NonlinearConstraint::Surrogate { terminal: t, g: b, vr: tv.vr, vi: tv.vi, rhs: Affine::constant(-q) });
        }
        for c in cands.iter().filter(|c| c.terminal == t) {
            nonlinear.push(NonlinearConstraint::Surrogate { terminal: t, g: c.g, vr: tv.vr, vi: tv.vi, rhs: Affine { terms: vec![(c.p, 1.0)], constant: 0.0 } });
            nonlinear.push(NonlinearConstraint::Surrogate { terminal: t, g: c.b, vr: tv.vr, vi: tv.vi, rhs: Affine { terms: vec![(c.q, -1.0)], constant: 0.0 } });
        }
        if tv.slack {
            continue;
        }
        let mut devices: Vec<(usize, usize)> = tv.load.into_iter().collect();
        devices.extend(cands.iter().filter(|c| c.terminal == t).map(|c| (c.g, c.b)));
        let mut real = Vec::new();
        let mut imag = Vec::new();
        for &(j, yv) in y.row(t) {
            let (vr, vi) = (terminals[j].vr, terminals[j].vi);
            real.push((vr, yv.re));
            real.push((vi, -yv.im));
            imag.push((vi, yv.re));
            imag.push((vr, yv.im));
        }
        nonlinear.push(NonlinearConstraint::Kcl { terminal: t, imag: false, linear: real, devices: devices.clone(), vr: tv.vr, vi: tv.vi });
        nonlinear.push(NonlinearConstraint::Kcl { terminal: t, imag: true, linear: imag, devices, vr: tv.vr, vi: tv.vi });
    }

    let objective = cands.iter().map(|c| (c.z, c.weight)).collect();
    Ok(MinlpProblem {
        variables: vars.0,
        linear,
        nonlinear,
        quadratic,
        objective,
        terminals,
        candidates: cands,
        anti_cluster,
        demand,
        cost: *cost,
        options: *options,
    })
}
