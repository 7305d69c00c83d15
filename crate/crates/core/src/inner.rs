//! Minimization of `E_b` over the constrained Nehari set for fixed radii.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{Grading, NodalCandidate, ProblemParams, RadialMesh, RadiiVector};
use crate::error::{Error, Result};
use crate::functional::{annular_system_residual, DiscreteProblem, EnergyBreakdown};
use crate::nehari::{coupled_nehari_solve_summaries, NehariOptions, NehariProjection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStatus {
    Converged,
    Stagnated,
    MaxIters,
    NehariFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    /// Dual norm of the gradient relative to `‖u‖`.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative energy decrease below which an iteration counts as stalled.
    pub stagnation: f64,
    pub armijo_c: f64,
    pub initial_step: f64,
    pub backtrack: f64,
    pub nehari: NehariOptions,
    /// Embedding constant used only for precondition warnings.
    pub s_p: Option<f64>,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 20_000,
            stagnation: 1e-15,
            armijo_c: 1e-4,
            initial_step: 1.0,
            backtrack: 0.5,
            nehari: NehariOptions::default(),
            s_p: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolveResult {
    pub minimizer: NodalCandidate,
    pub energy: f64,
    pub breakdown: EnergyBreakdown,
    /// Projection of the minimizer onto itself (all scalings close to 1).
    pub projection: NehariProjection,
    /// Dual norms of the annular system residual, per component.
    pub system_residuals: Vec<f64>,
    /// Combined residual relative to `‖u‖`.
    pub relative_residual: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub status: InnerStatus,
    /// Kirchhoff coefficients visited when the start had to be continued from `b = 0`.
    pub continuation: Vec<f64>,
}

impl InnerSolveResult {
    pub fn converged(&self) -> bool {
        self.status == InnerStatus::Converged
    }
}

struct Iterate {
    cand: NodalCandidate,
    br: EnergyBreakdown,
    proj: NehariProjection,
}

fn project(
    problem: &DiscreteProblem,
    cand: &NodalCandidate,
    opts: &InnerOptions,
) -> Result<Iterate> {
    let br = problem.component_integrals(cand)?;
    let p = problem.params().p();
    if let Some(s_p) = opts.s_p {
        for (i, s) in br.summaries().iter().enumerate() {
            if s.n > 0.0 && s.precondition_ratio(p) < 0.5 / s_p {
                log::debug!("component {} below the projection precondition", i + 1);
            }
        }
    }
    let proj =
        coupled_nehari_solve_summaries(&br.summaries(), problem.params().b(), p, &opts.nehari)?;
    let cand = cand.scaled(&proj.t);
    let br = problem.component_integrals(&cand)?;
    Ok(Iterate { cand, br, proj })
}

/// Riesz representatives of the per-component gradients and `Σ⟨g_i, v_i⟩`.
fn gradient(problem: &DiscreteProblem, it: &Iterate) -> (Vec<Vec<f64>>, f64) {
    let coef = 1.0 + problem.params().b() * it.br.total_dirichlet();
    let mut dirs = Vec::with_capacity(it.cand.components().len());
    let mut slope = 0.0;
    for c in it.cand.components() {
        let span = problem.mesh().span(c.index());
        let g = problem.operator_minus_load(span, c.values(), coef);
        let free = c.free_range();
        let v = problem.assembly().solve_h(
            span.first + free.start,
            span.first + free.end - 1,
            &g[free.clone()],
        );
        slope += v.iter().zip(&g[free]).map(|(a, b)| a * b).sum::<f64>();
        dirs.push(v);
    }
    (dirs, slope.max(0.0))
}

fn step(cand: &NodalCandidate, dirs: &[Vec<f64>], s: f64) -> NodalCandidate {
    let mut out = cand.clone();
    for (i, v) in dirs.iter().enumerate() {
        for (x, d) in out.component_mut(i).free_values_mut().iter_mut().zip(v) {
            *x -= s * d;
        }
    }
    out.enforce_signs();
    out
}

/// Minimizes `E_b` on the constrained Nehari set of `problem`'s mesh.
pub fn minimize_on_nehari(
    problem: &DiscreteProblem,
    init: Option<NodalCandidate>,
    opts: &InnerOptions,
) -> Result<InnerSolveResult> {
    let mut start = init.unwrap_or_else(|| NodalCandidate::sine_bumps(problem.mesh_arc().clone()));
    start.enforce_signs();
    match project(problem, &start, opts) {
        Ok(it) => descend(problem, it, opts, Vec::new()),
        Err(Error::Nehari(e)) if problem.params().b() > 0.0 => {
            log::debug!("start not projectable ({e}); continuing from b = 0");
            continued_start(problem, start, opts)
        }
        Err(e) => Err(e),
    }
}

/// Reaches the target `b` through a chain of solves started at `b = 0`, where
/// every nonzero tuple is projectable.
fn continued_start(
    problem: &DiscreteProblem,
    start: NodalCandidate,
    opts: &InnerOptions,
) -> Result<InnerSolveResult> {
    let target = problem.params().b();
    let loose = InnerOptions {
        tol: opts.tol.max(1e-6),
        ..*opts
    };
    let base = problem.with_b(0.0)?;
    let mut current = descend(&base, project(&base, &start, opts)?, &loose, Vec::new())?;
    let mut current_b = 0.0;
    let mut visited = vec![0.0];
    let mut next = target;
    for _ in 0..60 {
        let pb = problem.with_b(next)?;
        let attempt = project(&pb, &current.minimizer, opts).and_then(|it| {
            let o = if next == target { *opts } else { loose };
            descend(&pb, it, &o, Vec::new())
        });
        match attempt {
            Ok(r) if r.status != InnerStatus::NehariFailed => {
                visited.push(next);
                if next == target {
                    let mut r = r;
                    r.continuation = visited;
                    return Ok(r);
                }
                current = r;
                current_b = next;
                next = target;
            }
            _ => {
                next = 0.5 * (current_b + next);
                if next - current_b < 1e-9 * target {
                    break;
                }
            }
        }
    }
    let mut r = current;
    r.status = InnerStatus::NehariFailed;
    r.continuation = visited;
    Ok(r)
}

fn relative_dual(slope: f64, br: &EnergyBreakdown) -> f64 {
    slope.sqrt() / br.total_norm_sq().sqrt()
}

fn descend(
    problem: &DiscreteProblem,
    mut it: Iterate,
    opts: &InnerOptions,
    continuation: Vec<f64>,
) -> Result<InnerSolveResult> {
    let mut history = vec![it.br.energy];
    let mut status = InnerStatus::MaxIters;
    let mut iterations = 0;
    let mut stalled = 0;
    let (mut dirs, mut slope) = gradient(problem, &it);
    let mut s = opts.initial_step;
    while iterations < opts.max_iters {
        if relative_dual(slope, &it.br) <= opts.tol {
            status = InnerStatus::Converged;
            break;
        }
        let energy = it.br.energy;
        let round = 64.0 * f64::EPSILON * energy.abs();
        let mut accepted = None;
        let mut any_projected = false;
        while s >= 1e-12 {
            if let Ok(trial) = project(problem, &step(&it.cand, &dirs, s), opts) {
                any_projected = true;
                let te = trial.br.energy;
                let decrease_ok = te <= energy - opts.armijo_c * s * slope;
                // below rounding the Armijo test is blind; fall back on the gradient
                let rounding_ok = opts.armijo_c * s * slope < round && te <= energy + round && {
                    let (_, ts) = gradient(problem, &trial);
                    ts < slope
                };
                if decrease_ok || rounding_ok {
                    accepted = Some(trial);
                    break;
                }
            }
            s *= opts.backtrack;
        }
        iterations += 1;
        let Some(trial) = accepted else {
            status = if any_projected {
                InnerStatus::Stagnated
            } else {
                InnerStatus::NehariFailed
            };
            break;
        };
        let decrease = (energy - trial.br.energy) / energy.abs().max(f64::MIN_POSITIVE);
        it = trial;
        history.push(it.br.energy);
        (dirs, slope) = gradient(problem, &it);
        stalled = if decrease < opts.stagnation {
            stalled + 1
        } else {
            0
        };
        if stalled >= 10 {
            status = if relative_dual(slope, &it.br) <= opts.tol {
                InnerStatus::Converged
            } else {
                InnerStatus::Stagnated
            };
            break;
        }
        s = (s / opts.backtrack).min(opts.initial_step);
    }
    finish(problem, it, history, iterations, status, continuation, opts)
}

fn finish(
    problem: &DiscreteProblem,
    it: Iterate,
    history: Vec<f64>,
    iterations: usize,
    status: InnerStatus,
    continuation: Vec<f64>,
    opts: &InnerOptions,
) -> Result<InnerSolveResult> {
    let sums = it.br.summaries();
    let projection = coupled_nehari_solve_summaries(
        &sums,
        problem.params().b(),
        problem.params().p(),
        &opts.nehari,
    )
    .unwrap_or(it.proj);
    let system_residuals = annular_system_residual(problem, &it.cand)?;
    let total: f64 = system_residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
    let relative_residual = total / it.br.total_norm_sq().sqrt();
    Ok(InnerSolveResult {
        energy: it.br.energy,
        minimizer: it.cand,
        breakdown: it.br,
        projection,
        system_residuals,
        relative_residual,
        history,
        iterations,
        status,
        continuation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    pub cells_per_annulus: usize,
    pub grading: Grading,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            cells_per_annulus: 64,
            grading: Grading::Uniform,
        }
    }
}

/// Builds the mesh for `radii` and minimizes on it.
pub fn solve_at_radii(
    radii: &RadiiVector,
    params: &ProblemParams,
    mesh: MeshOptions,
    init: Option<NodalCandidate>,
    opts: &InnerOptions,
) -> Result<InnerSolveResult> {
    let mesh = Arc::new(RadialMesh::build(
        radii,
        mesh.cells_per_annulus,
        mesh.grading,
    )?);
    let problem = DiscreteProblem::new(params.clone(), mesh);
    minimize_on_nehari(&problem, init, opts)
}
