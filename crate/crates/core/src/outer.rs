//! Outer minimization of `φ(r) = min E_b` over nodal radii, gluing, and the
//! junction diagnostics of the glued function.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discretization::{
    count_sign_changes, AnnularField, NodalCandidate, ProblemParams, RadialField, RadialMesh,
    RadiiVector,
};
use crate::error::{Error, Result};
use crate::functional::DiscreteProblem;
use crate::inner::{minimize_on_nehari, InnerOptions, InnerSolveResult, InnerStatus, MeshOptions};
use crate::rng::substream;

/// Nodal values with `|u| <= SIGN_TOL·max|u|` count as zero.
pub const SIGN_TOL: f64 = 1e-9;

/// Reparametrizes every component affinely onto the annuli of `mesh`.
pub fn transport(old: &NodalCandidate, mesh: Arc<RadialMesh>) -> Result<NodalCandidate> {
    if old.k() != mesh.radii().k() {
        return Err(Error::Structure(
            "transport needs the same number of annuli".into(),
        ));
    }
    let old_edges = old.radii().edges();
    let new_edges = mesh.radii().edges();
    let old_nodes = old.mesh().nodes();
    let components = old
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let span = old.mesh().span(i);
            let nodes = &old_nodes[span.first..=span.last];
            let (a, b) = (old_edges[i], old_edges[i + 1]);
            let (na, nb) = (new_edges[i], new_edges[i + 1]);
            AnnularField::from_fn(&mesh, i, |t| {
                let s = a + (t - na) * (b - a) / (nb - na);
                interpolate(nodes, c.values(), s)
            })
        })
        .collect();
    NodalCandidate::new(mesh, components)
}

fn interpolate(nodes: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= nodes[0] {
        return values[0];
    }
    if t >= nodes[nodes.len() - 1] {
        return values[values.len() - 1];
    }
    let j = nodes.partition_point(|&x| x <= t).clamp(1, nodes.len() - 1);
    let s = (t - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
    values[j - 1] * (1.0 - s) + values[j] * s
}

fn cache_key(radii: &RadiiVector) -> String {
    radii
        .interior()
        .iter()
        .map(|r| format!("{r:.11e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// `φ` with a radii-keyed cache of inner solves and warm starts from the
/// nearest cached minimizer.
#[derive(Debug)]
pub struct PhiEvaluator {
    params: ProblemParams,
    mesh: MeshOptions,
    inner: InnerOptions,
    cache: RwLock<HashMap<String, Arc<InnerSolveResult>>>,
}

impl PhiEvaluator {
    pub fn new(params: ProblemParams, mesh: MeshOptions, inner: InnerOptions) -> Self {
        Self {
            params,
            mesh,
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn mesh_options(&self) -> MeshOptions {
        self.mesh
    }

    pub fn evaluations(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    fn nearest(&self, radii: &RadiiVector) -> Option<Arc<InnerSolveResult>> {
        let cache = self.cache.read().unwrap();
        cache
            .values()
            .filter(|r| r.status != InnerStatus::NehariFailed)
            .map(|r| {
                let d: f64 = r
                    .minimizer
                    .radii()
                    .interior()
                    .iter()
                    .zip(radii.interior())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                (d, r)
            })
            .min_by(|a, b| {
                a.0.total_cmp(&b.0).then_with(|| {
                    cache_key(a.1.minimizer.radii()).cmp(&cache_key(b.1.minimizer.radii()))
                })
            })
            .map(|(_, r)| r.clone())
    }

    /// Full inner solve at `radii` (cached).
    pub fn solve(&self, radii: &RadiiVector) -> Result<Arc<InnerSolveResult>> {
        let key = cache_key(radii);
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let mesh = Arc::new(RadialMesh::build(
            radii,
            self.mesh.cells_per_annulus,
            self.mesh.grading,
        )?);
        let init = match self.nearest(radii) {
            Some(near) => Some(transport(&near.minimizer, mesh.clone())?),
            None => None,
        };
        let problem = DiscreteProblem::new(self.params.clone(), mesh);
        let result = Arc::new(minimize_on_nehari(&problem, init, &self.inner)?);
        self.cache.write().unwrap().insert(key, result.clone());
        Ok(result)
    }

    /// `φ(radii)`; `None` when the constrained Nehari set could not be reached
    /// (the infimum over an empty set).
    pub fn phi(&self, radii: &RadiiVector) -> Result<Option<f64>> {
        let r = match self.solve(radii) {
            Ok(r) => r,
            Err(Error::Nehari(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        Ok((r.status != InnerStatus::NehariFailed).then_some(r.energy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterOptions {
    /// Additional restarts from perturbed optima.
    pub restarts: usize,
    /// Simplex diameter (in `r`, relative to `R`) at which the search stops.
    pub diameter_tol: f64,
    /// Gaps below `gap_floor·R` evaluate to `+∞`.
    pub gap_floor: f64,
    pub initial_step: f64,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            restarts: 1,
            diameter_tol: 1e-4,
            gap_floor: 1e-3,
            initial_step: 0.3,
            max_evals: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub label: String,
    pub radii: Vec<f64>,
    /// `None` encodes `+∞`.
    pub phi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OuterSolveResult {
    pub radii: RadiiVector,
    pub inner: Arc<InnerSolveResult>,
    pub phi: f64,
    pub diameter: f64,
    pub evaluations: usize,
    pub probes: Vec<ProbeRecord>,
    /// Some gap of the optimum lies within `10·gap_floor·R` of the boundary.
    pub boundary_flag: bool,
}

fn radii_from_log_gaps(x: &[f64], outer: f64, floor: f64) -> Option<RadiiVector> {
    let mut r = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for &xi in x {
        let g = xi.exp();
        if !(g >= floor) || !g.is_finite() {
            return None;
        }
        acc += g;
        r.push(acc);
    }
    if outer - acc < floor {
        return None;
    }
    RadiiVector::new(r, outer).ok()
}

fn log_gaps(radii: &RadiiVector) -> Vec<f64> {
    let g = radii.gaps();
    g[..g.len() - 1].iter().map(|v| v.ln()).collect()
}

struct Simplex {
    x: Vec<Vec<f64>>,
    f: Vec<f64>,
}

/// Nelder–Mead on log-gaps from `x0`; returns the best vertex, its value and
/// the final simplex diameter in `r`.
fn nelder_mead(
    ev: &PhiEvaluator,
    x0: &[f64],
    opts: &OuterOptions,
    budget: &mut usize,
) -> Result<(Vec<f64>, f64, f64)> {
    let outer = ev.params.radius();
    let floor = opts.gap_floor * outer;
    let f = |x: &[f64], budget: &mut usize| -> Result<f64> {
        match radii_from_log_gaps(x, outer, floor) {
            None => Ok(f64::INFINITY),
            Some(r) => {
                *budget = budget.saturating_sub(1);
                Ok(ev.phi(&r)?.unwrap_or(f64::INFINITY))
            }
        }
    };
    let n = x0.len();
    let mut s = Simplex {
        x: vec![x0.to_vec()],
        f: vec![f(x0, budget)?],
    };
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        if radii_from_log_gaps(&v, outer, floor).is_none() {
            v[i] -= 2.0 * opts.initial_step;
        }
        s.f.push(f(&v, budget)?);
        s.x.push(v);
    }
    let diameter = |s: &Simplex| -> f64 {
        let rs: Vec<Vec<f64>> =
            s.x.iter()
                .map(|x| {
                    let mut acc = 0.0;
                    x.iter()
                        .map(|v| {
                            acc += v.exp();
                            acc
                        })
                        .collect()
                })
                .collect();
        let mut d: f64 = 0.0;
        for a in &rs {
            for b in &rs {
                for (p, q) in a.iter().zip(b) {
                    d = d.max((p - q).abs());
                }
            }
        }
        d / outer
    };
    loop {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| s.f[a].total_cmp(&s.f[b]));
        s.x = idx.iter().map(|&i| s.x[i].clone()).collect();
        s.f = idx.iter().map(|&i| s.f[i]).collect();
        let diam = diameter(&s);
        if diam < opts.diameter_tol || *budget == 0 {
            return Ok((s.x[0].clone(), s.f[0], diam));
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| s.x[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |c: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + c * (s.x[n][j] - centroid[j]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr, budget)?;
        if fr < s.f[0] {
            let xe = along(-2.0);
            let fe = f(&xe, budget)?;
            if fe < fr {
                s.x[n] = xe;
                s.f[n] = fe;
            } else {
                s.x[n] = xr;
                s.f[n] = fr;
            }
            continue;
        }
        if fr < s.f[n - 1] {
            s.x[n] = xr;
            s.f[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < s.f[n] {
            let xc = along(-0.5);
            let fc = f(&xc, budget)?;
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = f(&xc, budget)?;
            (xc, fc)
        };
        if fc < s.f[n].min(fr) {
            s.x[n] = xc;
            s.f[n] = fc;
            continue;
        }
        for i in 1..=n {
            let v: Vec<f64> = (0..n)
                .map(|j| s.x[0][j] + 0.5 * (s.x[i][j] - s.x[0][j]))
                .collect();
            s.f[i] = f(&v, budget)?;
            s.x[i] = v;
        }
    }
}

/// Minimizes `φ` over admissible radii for `k = params.k()`.
pub fn minimize_phi(ev: &PhiEvaluator, opts: &OuterOptions) -> Result<OuterSolveResult> {
    minimize_phi_from(ev, None, opts)
}

/// As [`minimize_phi`], with an optional starting radii vector instead of
/// the volume equipartition.
pub fn minimize_phi_from(
    ev: &PhiEvaluator,
    start: Option<&RadiiVector>,
    opts: &OuterOptions,
) -> Result<OuterSolveResult> {
    let k = ev.params.k();
    let outer = ev.params.radius();
    if k == 0 {
        let radii = RadiiVector::equipartition(0, outer)?;
        let inner = ev.solve(&radii)?;
        if inner.status == InnerStatus::NehariFailed {
            return Err(Error::OuterFailure(
                "the k = 0 inner solve failed to reach the Nehari set".into(),
            ));
        }
        return Ok(OuterSolveResult {
            phi: inner.energy,
            radii,
            inner,
            diameter: 0.0,
            evaluations: ev.evaluations(),
            probes: Vec::new(),
            boundary_flag: false,
        });
    }
    let mut start = match start {
        Some(r) => r.clone(),
        None => RadiiVector::equipartition(k, outer)?,
    };
    // thick outer shells can leave the Nehari set empty; pull the radii in
    for _ in 0..30 {
        if ev.phi(&start)?.is_some() {
            break;
        }
        let pulled: Vec<f64> = start.interior().iter().map(|r| 0.8 * r).collect();
        log::info!(
            "start radii {:?} inadmissible, contracting",
            start.interior()
        );
        start = RadiiVector::new(pulled, outer)?;
    }
    let mut rng = substream(opts.seed, "outer-restarts");
    let normal = Normal::new(0.0, 0.3).expect("valid normal");
    let mut budget = opts.max_evals;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut x0 = log_gaps(&start);
    for restart in 0..=opts.restarts {
        let (x, fx, diam) = nelder_mead(ev, &x0, opts, &mut budget)?;
        log::info!("outer restart {restart}: phi = {fx:.12e}, diameter = {diam:.3e}");
        if best.as_ref().is_none_or(|b| fx < b.1) {
            best = Some((x, fx, diam));
        }
        let b = &best.as_ref().unwrap().0;
        x0 = b.iter().map(|v| v + normal.sample(&mut rng)).collect();
        // keep the perturbed start admissible
        let floor = opts.gap_floor * outer;
        let mut tries = 0;
        while radii_from_log_gaps(&x0, outer, floor).is_none() && tries < 50 {
            x0 = b
                .iter()
                .map(|v| v + 0.5 * rng.random_range(-0.3..0.3))
                .collect();
            tries += 1;
        }
        if tries == 50 {
            x0 = b.clone();
        }
    }
    let (x, fx, diam) = best.unwrap();
    if !fx.is_finite() {
        return Err(Error::OuterFailure(
            "every evaluated radii vector left the constrained Nehari set (phi = +inf)".into(),
        ));
    }
    let radii = radii_from_log_gaps(&x, outer, opts.gap_floor * outer).unwrap();
    let inner = ev.solve(&radii)?;
    let boundary_flag = radii
        .gaps()
        .iter()
        .any(|&g| g < 10.0 * opts.gap_floor * outer);
    Ok(OuterSolveResult {
        radii,
        phi: inner.energy,
        inner,
        diameter: diam,
        evaluations: ev.evaluations(),
        probes: Vec::new(),
        boundary_flag,
    })
}

/// `φ` at a 10×-shrunk first gap and with `r_k` pushed to `0.999·R`.
pub fn coercivity_probes(ev: &PhiEvaluator, radii: &RadiiVector) -> Result<Vec<ProbeRecord>> {
    let mut out = Vec::new();
    let r = radii.interior();
    if r.is_empty() {
        return Ok(out);
    }
    let outer = radii.outer();
    let mut shrunk = r.to_vec();
    shrunk[0] = r[0] / 10.0;
    let mut pushed = r.to_vec();
    let k = pushed.len();
    pushed[k - 1] = 0.999 * outer;
    for (label, v) in [
        ("shrunk-first-gap", shrunk),
        ("last-radius-at-boundary", pushed),
    ] {
        let phi = match RadiiVector::new(v.clone(), outer) {
            Ok(rv) => ev.phi(&rv)?,
            Err(_) => None,
        };
        out.push(ProbeRecord {
            label: label.into(),
            radii: v,
            phi,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuityProbe {
    pub delta: f64,
    /// `max |φ(r ± δe_i) - φ(r)| / δ` over coordinates and signs.
    pub lipschitz: Option<f64>,
}

pub fn continuity_probes(
    ev: &PhiEvaluator,
    radii: &RadiiVector,
    deltas: &[f64],
) -> Result<Vec<ContinuityProbe>> {
    let base = ev.phi(radii)?.ok_or_else(|| {
        Error::OuterFailure("continuity probe centred outside the Nehari set".into())
    })?;
    let mut out = Vec::new();
    for &delta in deltas {
        let mut worst: Option<f64> = Some(0.0);
        for i in 0..radii.k() {
            for sign in [-1.0, 1.0] {
                let mut v = radii.interior().to_vec();
                v[i] += sign * delta;
                let val = RadiiVector::new(v, radii.outer())
                    .ok()
                    .map(|rv| ev.phi(&rv))
                    .transpose()?
                    .flatten();
                worst = match (worst, val) {
                    (Some(w), Some(phi)) => Some(w.max((phi - base).abs() / delta)),
                    _ => None,
                };
            }
        }
        out.push(ContinuityProbe {
            delta,
            lipschitz: worst,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionJump {
    pub radius: f64,
    pub left: f64,
    pub right: f64,
    pub jump: f64,
}

/// One-sided slopes at every interior junction from the adjacent cells.
pub fn derivative_jump(candidate: &NodalCandidate) -> Vec<JunctionJump> {
    let mesh = candidate.mesh();
    let nodes = mesh.nodes();
    let comps = candidate.components();
    (0..candidate.k())
        .map(|i| {
            let span_l = mesh.span(i);
            let span_r = mesh.span(i + 1);
            let ul = comps[i].values();
            let ur = comps[i + 1].values();
            let nl = ul.len();
            let hl = nodes[span_l.last] - nodes[span_l.last - 1];
            let hr = nodes[span_r.first + 1] - nodes[span_r.first];
            let left = (ul[nl - 1] - ul[nl - 2]) / hl;
            let right = (ur[1] - ur[0]) / hr;
            JunctionJump {
                radius: nodes[span_l.last],
                left,
                right,
                jump: right - left,
            }
        })
        .collect()
}

/// Largest `|jump| / max|u'|` over the junctions.
pub fn max_relative_jump(candidate: &NodalCandidate) -> f64 {
    let slope = candidate.glue().max_abs_slope();
    derivative_jump(candidate)
        .iter()
        .map(|j| j.jump.abs() / slope)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedSolution {
    pub values: Vec<f64>,
    pub energy: f64,
    pub relative_residual: f64,
    pub iterations: usize,
    pub sign_changes: usize,
    /// `‖u_refined - u_glued‖ / ‖u_glued‖`.
    pub distance_from_glued: f64,
}

/// Newton iteration on the full discrete equation, started from `start`.
pub fn refine_solution(
    problem: &DiscreteProblem,
    start: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<RefinedSolution> {
    let n = start.len();
    let free = n - 1;
    let b = problem.params().b();
    let p = problem.params().p();
    let asm = problem.assembly();
    let mesh = problem.mesh();
    let mut u = start.to_vec();
    let rel = |u: &[f64]| {
        let (_, dual) = problem.weak_residual(u);
        dual / problem.h_norm(u).max(f64::MIN_POSITIVE)
    };
    let mut res = rel(&u);
    let mut iterations = 0;
    while res > tol && iterations < max_iters {
        iterations += 1;
        let (r, _) = problem.weak_residual(&u);
        let d = asm.stiffness.quad_form_range(0, &u);
        let coef = 1.0 + b * d;
        let mut jac = DMatrix::<f64>::zeros(free, free);
        for j in 0..free {
            jac[(j, j)] = coef * asm.stiffness.diag[j] + asm.mass.diag[j];
            if j + 1 < free {
                let o = coef * asm.stiffness.off[j] + asm.mass.off[j];
                jac[(j, j + 1)] = o;
                jac[(j + 1, j)] = o;
            }
        }
        for q in mesh.quadrature() {
            let v = q.phi[0] * u[q.cell] + q.phi[1] * u[q.cell + 1];
            let w = q.weight * (p - 1.0) * v.abs().powf(p - 2.0);
            for (a, &pa) in q.phi.iter().enumerate() {
                for (c, &pc) in q.phi.iter().enumerate() {
                    let (ia, ic) = (q.cell + a, q.cell + c);
                    if ia < free && ic < free {
                        jac[(ia, ic)] -= w * pa * pc;
                    }
                }
            }
        }
        if b > 0.0 {
            let ku = asm.stiffness.apply_range(0, n - 1, &u);
            for i in 0..free {
                for j in 0..free {
                    jac[(i, j)] += 2.0 * b * ku[i] * ku[j];
                }
            }
        }
        let rhs = DVector::from_column_slice(&r[..free]);
        let Some(delta) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-8 {
            let mut trial = u.clone();
            for j in 0..free {
                trial[j] -= lambda * delta[j];
            }
            let tr = rel(&trial);
            if tr < res {
                u = trial;
                res = tr;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let diff: Vec<f64> = u.iter().zip(start).map(|(a, b)| a - b).collect();
    Ok(RefinedSolution {
        energy: problem.glued_energy(&u),
        relative_residual: res,
        iterations,
        sign_changes: count_sign_changes(&u, SIGN_TOL),
        distance_from_glued: problem.h_norm(&diff) / problem.h_norm(start),
        values: u,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub k: usize,
    pub b: f64,
    pub p: f64,
    pub radii: Vec<f64>,
    /// `E_b` of the inner minimizer (equals `φ`).
    pub phi: f64,
    /// `I_b` of the glued function.
    pub energy: f64,
    pub norms_sq: Vec<f64>,
    pub sign_changes: usize,
    pub glued_relative_residual: f64,
    pub inner_relative_residual: f64,
    pub inner_status: InnerStatus,
    pub inner_iterations: usize,
    pub margins: Vec<f64>,
    pub projection_residuals: Vec<f64>,
    pub jumps: Vec<JunctionJump>,
    pub max_relative_jump: f64,
    pub refined: Option<RefinedSolution>,
    pub simplex_diameter: f64,
    pub evaluations: usize,
    pub probes: Vec<ProbeRecord>,
    pub boundary_flag: bool,
}

/// Glued field of the optimal tuple and its report; the refined solution of
/// the full discrete equation is attached when `refine` is set.
pub fn glue(
    result: &OuterSolveResult,
    params: &ProblemParams,
    refine: bool,
) -> Result<(RadialField, SolveReport)> {
    let inner = &result.inner;
    let cand = &inner.minimizer;
    let field = cand.glue();
    let problem = DiscreteProblem::new(params.clone(), cand.mesh_arc().clone());
    let (_, dual) = problem.weak_residual(field.values());
    let energy = problem.glued_energy(field.values());
    let refined = if refine {
        Some(refine_solution(&problem, field.values(), 1e-11, 50)?)
    } else {
        None
    };
    let report = SolveReport {
        k: cand.k(),
        b: params.b(),
        p: params.p(),
        radii: result.radii.interior().to_vec(),
        phi: result.phi,
        energy,
        norms_sq: inner.breakdown.norms_sq.clone(),
        sign_changes: field.sign_changes(SIGN_TOL),
        glued_relative_residual: dual / problem.h_norm(field.values()),
        inner_relative_residual: inner.relative_residual,
        inner_status: inner.status,
        inner_iterations: inner.iterations,
        margins: inner.projection.margins.clone(),
        projection_residuals: inner.projection.residuals.clone(),
        jumps: derivative_jump(cand),
        max_relative_jump: max_relative_jump(cand),
        refined,
        simplex_diameter: result.diameter,
        evaluations: result.evaluations,
        probes: result.probes.clone(),
        boundary_flag: result.boundary_flag,
    };
    Ok((field, report))
}

/// Mesh, inner and outer settings of one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub mesh: MeshOptions,
    pub inner: InnerOptions,
    pub outer: OuterOptions,
    pub refine: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mesh: MeshOptions::default(),
            inner: InnerOptions::default(),
            outer: OuterOptions::default(),
            refine: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub outer: OuterSolveResult,
    pub field: RadialField,
    pub report: SolveReport,
}

/// Outer minimization followed by gluing for `params.k()`.
pub fn solve(params: &ProblemParams, settings: &SolverSettings) -> Result<Solution> {
    let ev = PhiEvaluator::new(params.clone(), settings.mesh, settings.inner);
    let outer = minimize_phi(&ev, &settings.outer)?;
    let (field, report) = glue(&outer, params, settings.refine)?;
    Ok(Solution {
        outer,
        field,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Grading;

    #[test]
    fn tent_jump_is_minus_two() {
        let radii = RadiiVector::new(vec![1.0], 2.0).unwrap();
        let mesh = Arc::new(RadialMesh::build(&radii, 4, Grading::Uniform).unwrap());
        let c0 = AnnularField::from_fn(&mesh, 0, |t| t - 1.0);
        let c1 = AnnularField::from_fn(&mesh, 1, |t| 1.0 - t);
        let cand = NodalCandidate::new(mesh, vec![c0, c1]).unwrap();
        let j = derivative_jump(&cand);
        assert_eq!(j.len(), 1);
        assert!((j[0].left - 1.0).abs() < 1e-14);
        assert!((j[0].right + 1.0).abs() < 1e-14);
        assert!((j[0].jump + 2.0).abs() < 1e-14);
    }

    #[test]
    fn k0_has_no_junctions() {
        let radii = RadiiVector::equipartition(0, 3.0).unwrap();
        let mesh = Arc::new(RadialMesh::build(&radii, 8, Grading::Uniform).unwrap());
        assert!(derivative_jump(&NodalCandidate::sine_bumps(mesh)).is_empty());
    }

    #[test]
    fn log_gap_round_trip() {
        let r = RadiiVector::new(vec![1.5, 4.0], 10.0).unwrap();
        let back = radii_from_log_gaps(&log_gaps(&r), 10.0, 1e-2).unwrap();
        for (a, b) in back.interior().iter().zip(r.interior()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(radii_from_log_gaps(&[2.5], 10.0, 1e-2).is_none());
    }

    #[test]
    fn transport_preserves_profile_shape() {
        let r0 = RadiiVector::new(vec![4.0], 10.0).unwrap();
        let r1 = RadiiVector::new(vec![5.0], 10.0).unwrap();
        let m0 = Arc::new(RadialMesh::build(&r0, 16, Grading::Uniform).unwrap());
        let m1 = Arc::new(RadialMesh::build(&r1, 16, Grading::Uniform).unwrap());
        let c = NodalCandidate::sine_bumps(m0);
        let t = transport(&c, m1).unwrap();
        for (a, b) in t.components().iter().zip(c.components()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
