//! Energies `I_b` / `E_b`, their first variations, and the embedding constant `S_q`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{
    AnnulusSpan, Assembly, NodalCandidate, ProblemParams, RadialField, RadialMesh,
};
use crate::error::{Error, Result};
use crate::nehari::ComponentSummary;
use crate::rng::substream;

/// Per-component integrals and the assembled energy `E_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `‖u_i‖_i²`
    pub norms_sq: Vec<f64>,
    /// `∫|∇u_i|²`
    pub dirichlet: Vec<f64>,
    /// `∫|u_i|^p`
    pub lp_masses: Vec<f64>,
    /// `(b/4)(Σ D_i)²`
    pub kirchhoff: f64,
    pub energy: f64,
}

impl EnergyBreakdown {
    pub fn summaries(&self) -> Vec<ComponentSummary> {
        self.norms_sq
            .iter()
            .zip(&self.dirichlet)
            .zip(&self.lp_masses)
            .map(|((&n, &d), &l)| ComponentSummary { n, d, l })
            .collect()
    }

    pub fn total_dirichlet(&self) -> f64 {
        self.dirichlet.iter().sum()
    }

    pub fn total_norm_sq(&self) -> f64 {
        self.norms_sq.iter().sum()
    }
}

/// Parameters bound to one mesh and its assembled matrices.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    params: ProblemParams,
    asm: Assembly,
}

impl DiscreteProblem {
    pub fn new(params: ProblemParams, mesh: Arc<RadialMesh>) -> Self {
        let asm = Assembly::new(mesh, params.potential());
        Self { params, asm }
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }
    pub fn assembly(&self) -> &Assembly {
        &self.asm
    }
    pub fn mesh(&self) -> &RadialMesh {
        self.asm.mesh()
    }
    pub fn mesh_arc(&self) -> &Arc<RadialMesh> {
        self.asm.mesh_arc()
    }

    /// Same mesh, different Kirchhoff coefficient (matrices reused).
    pub fn with_b(&self, b: f64) -> Result<Self> {
        Ok(Self {
            params: self.params.with_b(b)?,
            asm: self.asm.clone(),
        })
    }

    fn check_mesh(&self, mesh: &RadialMesh) -> Result<()> {
        if std::ptr::eq(mesh, self.mesh()) || mesh.same_as(self.mesh()) {
            Ok(())
        } else {
            Err(Error::Structure(
                "candidate mesh differs from the assembled mesh".into(),
            ))
        }
    }

    /// `(d, n, ℓ)` for local nodal values on `span`.
    pub fn span_integrals(&self, span: AnnulusSpan, u: &[f64]) -> ComponentSummary {
        let d = self.asm.stiffness.quad_form_range(span.first, u);
        let m = self.asm.mass.quad_form_range(span.first, u);
        let p = self.params.p();
        let l = self
            .mesh()
            .quadrature_in(span)
            .iter()
            .map(|q| {
                let j = q.cell - span.first;
                let v = q.phi[0] * u[j] + q.phi[1] * u[j + 1];
                q.weight * v.abs().powf(p)
            })
            .sum();
        ComponentSummary { n: d + m, d, l }
    }

    /// `∫|u|^{p-2} u φ_j` for each node of `span`.
    pub fn nonlinear_load(&self, span: AnnulusSpan, u: &[f64]) -> Vec<f64> {
        let p = self.params.p();
        let mut out = vec![0.0; u.len()];
        for q in self.mesh().quadrature_in(span) {
            let j = q.cell - span.first;
            let v = q.phi[0] * u[j] + q.phi[1] * u[j + 1];
            let f = q.weight * v.abs().powf(p - 2.0) * v;
            out[j] += f * q.phi[0];
            out[j + 1] += f * q.phi[1];
        }
        out
    }

    pub fn component_integrals(&self, candidate: &NodalCandidate) -> Result<EnergyBreakdown> {
        self.check_mesh(candidate.mesh())?;
        let summaries: Vec<ComponentSummary> = candidate
            .components()
            .iter()
            .map(|c| self.span_integrals(self.mesh().span(c.index()), c.values()))
            .collect();
        Ok(self.breakdown_from(&summaries))
    }

    pub fn breakdown_from(&self, summaries: &[ComponentSummary]) -> EnergyBreakdown {
        let b = self.params.b();
        let p = self.params.p();
        let dsum: f64 = summaries.iter().map(|s| s.d).sum();
        let kirchhoff = 0.25 * b * dsum * dsum;
        let energy = 0.5 * summaries.iter().map(|s| s.n).sum::<f64>() + kirchhoff
            - summaries.iter().map(|s| s.l).sum::<f64>() / p;
        EnergyBreakdown {
            norms_sq: summaries.iter().map(|s| s.n).collect(),
            dirichlet: summaries.iter().map(|s| s.d).collect(),
            lp_masses: summaries.iter().map(|s| s.l).collect(),
            kirchhoff,
            energy,
        }
    }

    /// `I_b(u)` for nodal values on the whole mesh.
    pub fn glued_energy(&self, values: &[f64]) -> f64 {
        let s = self.span_integrals(self.full_span(), values);
        self.breakdown_from(&[s]).energy
    }

    pub fn full_span(&self) -> AnnulusSpan {
        AnnulusSpan {
            first: 0,
            last: self.mesh().node_count() - 1,
        }
    }

    /// `⟨I_b'(u), φ_j⟩` for every node (the outer node is not a test function
    /// and carries zero), and the dual norm of that functional.
    pub fn weak_residual(&self, values: &[f64]) -> (Vec<f64>, f64) {
        let span = self.full_span();
        let d = self.asm.stiffness.quad_form_range(0, values);
        let coef = 1.0 + self.params.b() * d;
        let mut r = self.operator_minus_load(span, values, coef);
        let last = r.len() - 1;
        r[last] = 0.0;
        let dual = self.dual_norm(0, last - 1, &r[..last]);
        (r, dual)
    }

    /// `coef·K u + M u - ∫|u|^{p-2}u φ` on `span`.
    pub fn operator_minus_load(&self, span: AnnulusSpan, u: &[f64], coef: f64) -> Vec<f64> {
        let ku = self.asm.stiffness.apply_range(span.first, span.last, u);
        let mu = self.asm.mass.apply_range(span.first, span.last, u);
        let g = self.nonlinear_load(span, u);
        ku.iter()
            .zip(&mu)
            .zip(&g)
            .map(|((k, m), g)| coef * k + m - g)
            .collect()
    }

    /// `sqrt(rᵀ (K+M)^{-1} r)` over global free nodes `[lo, hi]`.
    pub fn dual_norm(&self, lo: usize, hi: usize, r: &[f64]) -> f64 {
        if hi < lo {
            return 0.0;
        }
        let z = self.asm.solve_h(lo, hi, r);
        z.iter()
            .zip(r)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// `‖u‖_𝓗` for nodal values on the whole mesh.
    pub fn h_norm(&self, values: &[f64]) -> f64 {
        let d = self.asm.stiffness.quad_form_range(0, values);
        let m = self.asm.mass.quad_form_range(0, values);
        (d + m).max(0.0).sqrt()
    }

    pub fn glued_field_energy(&self, field: &RadialField) -> Result<f64> {
        self.check_mesh(field.mesh())?;
        Ok(self.glued_energy(field.values()))
    }
}

/// Per-component dual norms of the annular system residual.
pub fn annular_system_residual(
    problem: &DiscreteProblem,
    candidate: &NodalCandidate,
) -> Result<Vec<f64>> {
    let br = problem.component_integrals(candidate)?;
    let coef = 1.0 + problem.params().b() * br.total_dirichlet();
    Ok(candidate
        .components()
        .iter()
        .map(|c| {
            let span = problem.mesh().span(c.index());
            let r = problem.operator_minus_load(span, c.values(), coef);
            let free = c.free_range();
            problem.dual_norm(span.first + free.start, span.first + free.end - 1, &r[free])
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SobolevConstants {
    pub q: f64,
    pub value: f64,
    /// Minimizing profile on the full mesh, normalized to `|u|_q = 1`.
    pub profile: Vec<f64>,
    /// Quotient after every accepted step of the best restart.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Largest relative deviation of any restart's value from the best.
    pub restarts_agreement: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SqOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SqOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 20_000,
            tol: 1e-12,
            seed: 0,
        }
    }
}

/// Operator-norm bound of the normalized-flow gradient in the `H` metric.
const SQ_LIPSCHITZ: f64 = 2.0;

/// Estimates `S_q = inf ‖u‖² / |u|_q²` over radial functions vanishing at `R`.
pub fn estimate_s_q(
    mesh: Arc<RadialMesh>,
    params: &ProblemParams,
    q: f64,
    opts: SqOptions,
) -> Result<SobolevConstants> {
    if !(2.0..=6.0).contains(&q) {
        return Err(Error::InvalidParams(format!(
            "S_q needs 2 <= q <= 6, got {q}"
        )));
    }
    let mesh_len = mesh.node_count();
    let asm = Assembly::new(mesh, params.potential());
    let mut rng = substream(opts.seed, "s_q-restarts");
    let mut runs = Vec::with_capacity(opts.restarts.max(1));
    for _ in 0..opts.restarts.max(1) {
        let mut u: Vec<f64> = (0..mesh_len).map(|_| rng.random_range(0.1..1.0)).collect();
        u[mesh_len - 1] = 0.0;
        runs.push(sq_flow(&asm, q, u, opts)?);
    }
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i)
        .unwrap();
    let value = runs[best].0;
    let agreement = runs
        .iter()
        .map(|r| (r.0 - value).abs() / value)
        .fold(0.0, f64::max);
    let (value, profile, history) = runs.swap_remove(best);
    Ok(SobolevConstants {
        q,
        value,
        iterations: history.len(),
        profile,
        history,
        restarts_agreement: agreement,
    })
}

fn lq_parts(asm: &Assembly, q: f64, u: &[f64]) -> (f64, Vec<f64>) {
    let mesh = asm.mesh();
    let mut load = vec![0.0; u.len()];
    let mut mass = 0.0;
    for qp in mesh.quadrature() {
        let v = qp.phi[0] * u[qp.cell] + qp.phi[1] * u[qp.cell + 1];
        let a = v.abs();
        mass += qp.weight * a.powf(q);
        let f = qp.weight * a.powf(q - 2.0) * v;
        load[qp.cell] += f * qp.phi[0];
        load[qp.cell + 1] += f * qp.phi[1];
    }
    (mass, load)
}

fn normalize_lq(asm: &Assembly, q: f64, u: &mut [f64]) -> Vec<f64> {
    let (mass, _) = lq_parts(asm, q, u);
    let s = mass.powf(-1.0 / q);
    u.iter_mut().for_each(|v| *v *= s);
    lq_parts(asm, q, u).1
}

type FlowResult = (f64, Vec<f64>, Vec<f64>);

fn sq_flow(asm: &Assembly, q: f64, mut u: Vec<f64>, opts: SqOptions) -> Result<FlowResult> {
    let n = u.len();
    let hi = n - 2;
    let quotient = |u: &[f64]| {
        let nn = asm.stiffness.quad_form_range(0, u) + asm.mass.quad_form_range(0, u);
        let (mass, _) = lq_parts(asm, q, u);
        nn / mass.powf(2.0 / q)
    };
    let mut load = normalize_lq(asm, q, &mut u);
    let mut value = quotient(&u);
    let mut history = vec![value];
    let mut tau = 0.5 / SQ_LIPSCHITZ;
    for _ in 0..opts.max_iters {
        // With |u|_q = 1: H-gradient of the quotient is 2(u - Q·A^{-1}m(u)).
        let z = asm.solve_h(0, hi, &load[..=hi]);
        let mut dir: Vec<f64> = (0..=hi).map(|j| 2.0 * (u[j] - value * z[j])).collect();
        dir.push(0.0);
        let mut step = tau;
        let accepted = loop {
            let mut trial: Vec<f64> = u.iter().zip(&dir).map(|(a, g)| a - step * g).collect();
            trial[n - 1] = 0.0;
            let trial_load = normalize_lq(asm, q, &mut trial);
            let tv = quotient(&trial);
            if tv <= value {
                break Some((trial, trial_load, tv));
            }
            step *= 0.5;
            if step < 1e-12 {
                break None;
            }
        };
        let Some((trial, trial_load, tv)) = accepted else {
            return Ok((value, u, history));
        };
        tau = (2.0 * step).min(0.5 / SQ_LIPSCHITZ);
        let change = (value - tv) / value;
        u = trial;
        load = trial_load;
        value = tv;
        history.push(value);
        if change <= opts.tol {
            return Ok((value, u, history));
        }
    }
    Err(Error::NonConvergence {
        what: "S_q gradient flow",
        iterations: opts.max_iters,
        last_value: value,
    })
}
