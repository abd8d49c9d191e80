use super::bounds::{interval_mul, interval_sq, intersect, Interval};
use super::build::{MinlpProblem, NonlinearConstraint};
use super::{BilinearTerm, BuildError, LinearConstraint, MiblpProblem, RowTag, Sense, VarKind, VarRole, Variable};

struct Lifter {
    variables: Vec<Variable>,
    constraints: Vec<LinearConstraint>,
    bilinear: Vec<BilinearTerm>,
}

impl Lifter {
    fn bounds(&self, j: usize) -> Interval {
        (self.variables[j].lower, self.variables[j].upper)
    }

    fn product(&mut self, left: usize, right: usize) -> usize {
        let term = self.bilinear.len();
        let (lo, hi) = if left == right { interval_sq(self.bounds(left)) } else { interval_mul(self.bounds(left), self.bounds(right)) };
        let name = format!("s[{}*{}]", self.variables[left].name, self.variables[right].name);
        self.variables.push(Variable { name, kind: VarKind::Continuous, role: VarRole::Product { term }, lower: lo, upper: hi });
        let product = self.variables.len() - 1;
        self.bilinear.push(BilinearTerm { product, left, right });
        product
    }
}

/// Exact bilinear reformulation: every `g·(vr² + vi²)` becomes `g·V^sq`
/// with `V^sq = s_rr + s_ii`, `s_rr = vr·vr`, `s_ii = vi·vi`; every device
/// current becomes a sum of lifted products; magnitude limits become bounds
/// on `V^sq`. Variables of the source problem keep their indices.
pub fn lift_to_miblp(problem: &MinlpProblem) -> Result<MiblpProblem, BuildError> {
    for v in &problem.variables {
        if !(v.lower.is_finite() && v.upper.is_finite()) {
            return Err(BuildError::Unbounded(v.name.clone()));
        }
        if v.lower > v.upper {
            return Err(BuildError::InvertedBounds { lower: v.lower, upper: v.upper });
        }
    }
    let mut l = Lifter { variables: problem.variables.clone(), constraints: problem.linear.clone(), bilinear: Vec::new() };
    let mut terminals = problem.terminals.clone();

    let mut limits = vec![(0.0, f64::INFINITY); terminals.len()];
    for c in &problem.nonlinear {
        if let NonlinearConstraint::VoltageMagnitude { terminal, lower, upper, .. } = c {
            limits[*terminal] = (lower * lower, upper * upper);
        }
    }
    for (t, tv) in terminals.iter_mut().enumerate() {
        let name = problem.variables[tv.vr].name.replacen("Vr", "Vsq", 1);
        let box_sq = {
            let a = interval_sq(l.bounds(tv.vr));
            let b = interval_sq(l.bounds(tv.vi));
            (a.0 + b.0, a.1 + b.1)
        };
        let (lo, hi) = intersect(box_sq, limits[t])
            .ok_or_else(|| BuildError::Structural(format!("voltage limits of {name} unreachable within the deviation box")))?;
        l.variables.push(Variable { name, kind: VarKind::Continuous, role: VarRole::VoltageSq { terminal: t }, lower: lo, upper: hi });
        let vsq = l.variables.len() - 1;
        let srr = l.product(tv.vr, tv.vr);
        let sii = l.product(tv.vi, tv.vi);
        l.constraints.push(LinearConstraint {
            terms: vec![(vsq, 1.0), (srr, -1.0), (sii, -1.0)],
            sense: Sense::Eq,
            rhs: 0.0,
            tag: RowTag::VoltageSqDef { terminal: t },
        });
        tv.vsq = Some(vsq);
    }

    for c in &problem.nonlinear {
        match c {
            NonlinearConstraint::VoltageMagnitude { .. } => {}
            NonlinearConstraint::Surrogate { terminal, g, rhs, .. } => {
                let vsq = terminals[*terminal].vsq.expect("lifted above");
                let s = l.product(*g, vsq);
                let term = l.bilinear.len() - 1;
                let mut terms = vec![(s, 1.0)];
                terms.extend(rhs.terms.iter().map(|&(j, a)| (j, -a)));
                l.constraints.push(LinearConstraint { terms, sense: Sense::Eq, rhs: rhs.constant, tag: RowTag::Surrogate { term } });
            }
            NonlinearConstraint::Kcl { terminal, imag, linear, devices, vr, vi } => {
                let mut terms = linear.clone();
                for &(g, b) in devices {
                    if *imag {
                        terms.push((l.product(g, *vi), 1.0));
                        terms.push((l.product(b, *vr), 1.0));
                    } else {
                        terms.push((l.product(g, *vr), 1.0));
                        terms.push((l.product(b, *vi), -1.0));
                    }
                }
                let tag = if *imag { RowTag::KclImag { terminal: *terminal } } else { RowTag::KclReal { terminal: *terminal } };
                l.constraints.push(LinearConstraint { terms, sense: Sense::Eq, rhs: 0.0, tag });
            }
        }
    }

    Ok(MiblpProblem {
        variables: l.variables,
        constraints: l.constraints,
        bilinear: l.bilinear,
        quadratic: problem.quadratic.clone(),
        objective: problem.objective.clone(),
        terminals,
        candidates: problem.candidates.clone(),
        demand: problem.demand,
        cost: problem.cost,
        options: problem.options,
    })
}

impl MiblpProblem {
    /// Extends a point of the source problem with its lifted values.
    pub fn lift_point(&self, base: &[f64]) -> Vec<f64> {
        let mut p = base.to_vec();
        p.resize(self.variables.len(), 0.0);
        for j in base.len()..self.variables.len() {
            p[j] = match self.variables[j].role {
                VarRole::VoltageSq { terminal } => {
                    let tv = &self.terminals[terminal];
                    p[tv.vr] * p[tv.vr] + p[tv.vi] * p[tv.vi]
                }
                VarRole::Product { term } => {
                    let t = self.bilinear[term];
                    p[t.left] * p[t.right]
                }
                _ => p[j],
            };
        }
        p
    }
}
