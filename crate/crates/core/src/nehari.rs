//! Projection onto the constrained Nehari set: scalar fibering solves, the
//! `μ`-homotopy for the coupled scaling system, admissibility thresholds and
//! dominance certificates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::NodalCandidate;
use crate::functional::DiscreteProblem;

/// `n = ‖u‖²`, `d = ∫|∇u|²`, `l = ∫|u|^p` of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub n: f64,
    pub d: f64,
    pub l: f64,
}

impl ComponentSummary {
    /// Summary of `t·u`.
    pub fn scaled(&self, t: f64, p: f64) -> Self {
        Self {
            n: t * t * self.n,
            d: t * t * self.d,
            l: t.powf(p) * self.l,
        }
    }

    /// `T_u = (2n / ((4-p) l))^{1/(p-2)}`, the fibering-map turning point.
    pub fn threshold(&self, p: f64) -> f64 {
        (2.0 * self.n / ((4.0 - p) * self.l)).powf(1.0 / (p - 2.0))
    }

    /// `(∫|u|^p)^{2/p} / ‖u‖²`, compared against `(2 S_p)^{-1}`.
    pub fn precondition_ratio(&self, p: f64) -> f64 {
        self.l.powf(2.0 / p) / self.n
    }
}

/// `h(t) = n t^{-2} + b d² - l t^{p-4}`.
pub fn fiber_h(s: &ComponentSummary, b: f64, p: f64, t: f64) -> f64 {
    s.n / (t * t) + b * s.d * s.d - s.l * t.powf(p - 4.0)
}

/// `h'(t) = t^{-3}((4-p) t^{p-2} l - 2n)`.
pub fn fiber_h_prime(s: &ComponentSummary, p: f64, t: f64) -> f64 {
    ((4.0 - p) * t.powf(p - 2.0) * s.l - 2.0 * s.n) / (t * t * t)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NehariError {
    #[error("component {component}: inadmissible b or degenerate component, h(T) = {h_at_threshold:e} >= 0")]
    ScalarInadmissible {
        component: usize,
        h_at_threshold: f64,
    },
    #[error("homotopy stall at mu = {mu}")]
    HomotopyStall { mu: f64 },
    #[error("constraint (4-p)t^p l < 2t^2 n failed for component {component} (margin {margin:e})")]
    ConstraintFailed { component: usize, margin: f64 },
    #[error("component {component} is zero and cannot be projected")]
    ZeroComponent { component: usize },
    #[error("precondition {inequality} violated by component {component}")]
    Precondition {
        inequality: &'static str,
        component: usize,
    },
}

/// Components are reported one-based in errors.
fn one_based(i: usize) -> usize {
    i + 1
}

/// Unique root `t ∈ (0, T)` of `t² n + b t⁴ d² = t^p l`, and `T`.
pub fn scalar_fiber_solve(s: &ComponentSummary, b: f64, p: f64) -> Result<(f64, f64), NehariError> {
    scalar_fiber_solve_indexed(s, b, p, 0)
}

fn scalar_fiber_solve_indexed(
    s: &ComponentSummary,
    b: f64,
    p: f64,
    i: usize,
) -> Result<(f64, f64), NehariError> {
    if !(s.n > 0.0 && s.l > 0.0) {
        return Err(NehariError::ZeroComponent {
            component: one_based(i),
        });
    }
    let big_t = s.threshold(p);
    let h_t = fiber_h(s, b, p, big_t);
    if !(h_t < 0.0) {
        return Err(NehariError::ScalarInadmissible {
            component: one_based(i),
            h_at_threshold: h_t,
        });
    }
    // h decreases on (0, T) from +inf to h(T) < 0
    let (mut lo, mut hi) = (1e-8 * big_t, big_t);
    while fiber_h(s, b, p, lo) <= 0.0 {
        lo *= 1e-4;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fiber_h(s, b, p, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = if fiber_h(s, b, p, lo).abs() <= fiber_h(s, b, p, hi).abs() {
        lo
    } else {
        hi
    };
    Ok((t, big_t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariOptions {
    pub initial_mu_step: f64,
    pub min_mu_step: f64,
    /// Relative residual accepted at each homotopy step.
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for NehariOptions {
    fn default() -> Self {
        Self {
            initial_mu_step: 0.25,
            min_mu_step: 1e-4,
            tol: 1e-13,
            max_newton: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NehariProjection {
    pub t: Vec<f64>,
    pub mu: f64,
    /// `|G_i| / (t_i² n_i + t_i^p l_i)` at the returned tuple.
    pub residuals: Vec<f64>,
    /// `2 t_i² n_i - (4-p) t_i^p l_i`.
    pub margins: Vec<f64>,
    /// `T_{u_i}`.
    pub thresholds: Vec<f64>,
    /// Decoupled (`μ = 0`) scalings.
    pub decoupled: Vec<f64>,
    pub mu_steps: usize,
}

impl NehariProjection {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// `G_i(t)` (left side of the scaling system) and its Jacobian.
fn system(
    sums: &[ComponentSummary],
    b: f64,
    p: f64,
    mu: f64,
    t: &[f64],
) -> (DVector<f64>, DMatrix<f64>, Vec<f64>) {
    let m = sums.len();
    let w: Vec<f64> = (0..m).map(|j| t[j] * t[j] * sums[j].d).collect();
    let wsum: f64 = w.iter().sum();
    let mut g = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, m);
    let mut scale = vec![0.0; m];
    for i in 0..m {
        let s = &sums[i];
        let ti = t[i];
        let cross = wsum - w[i];
        let tp = ti.powf(p);
        g[i] =
            ti * ti * s.n + ti.powi(4) * b * s.d * s.d + mu * b * ti * ti * s.d * cross - tp * s.l;
        scale[i] = ti * ti * s.n + tp * s.l;
        jac[(i, i)] =
            2.0 * ti * s.n + 4.0 * ti.powi(3) * b * s.d * s.d + 2.0 * mu * b * ti * s.d * cross
                - p * ti.powf(p - 1.0) * s.l;
        for j in 0..m {
            if j != i {
                jac[(i, j)] = 2.0 * mu * b * ti * ti * t[j] * s.d * sums[j].d;
            }
        }
    }
    (g, jac, scale)
}

fn rel_residuals(g: &DVector<f64>, scale: &[f64]) -> Vec<f64> {
    g.iter().zip(scale).map(|(a, s)| a.abs() / s).collect()
}

fn margins(sums: &[ComponentSummary], p: f64, t: &[f64]) -> Vec<f64> {
    sums.iter()
        .zip(t)
        .map(|(s, &ti)| 2.0 * ti * ti * s.n - (4.0 - p) * ti.powf(p) * s.l)
        .collect()
}

/// Damped Newton for `G(t) = 0` at fixed `μ`, from `t0`.
fn newton(
    sums: &[ComponentSummary],
    b: f64,
    p: f64,
    mu: f64,
    t0: &[f64],
    opts: &NehariOptions,
) -> Option<Vec<f64>> {
    let mut t = t0.to_vec();
    let (mut g, mut jac, scale) = system(sums, b, p, mu, &t);
    let mut res = rel_residuals(&g, &scale).into_iter().fold(0.0, f64::max);
    for _ in 0..opts.max_newton {
        if res <= opts.tol {
            return Some(t);
        }
        let step = jac.clone().lu().solve(&g)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-10 {
            let trial: Vec<f64> = t
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a - lambda * s)
                .collect();
            if trial.iter().all(|&x| x > 0.0 && x.is_finite()) {
                let (tg, tj, ts) = system(sums, b, p, mu, &trial);
                let tr = rel_residuals(&tg, &ts).into_iter().fold(0.0, f64::max);
                if tr < res {
                    t = trial;
                    g = tg;
                    jac = tj;
                    res = tr;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // no decrease possible: either converged to rounding level or stuck
            return (res <= opts.tol.max(1e-12)).then_some(t);
        }
    }
    (res <= opts.tol.max(1e-12)).then_some(t)
}

/// Coupled projection with `μ` continued from 0 to 1.
pub fn coupled_nehari_solve_summaries(
    sums: &[ComponentSummary],
    b: f64,
    p: f64,
    opts: &NehariOptions,
) -> Result<NehariProjection, NehariError> {
    let mut decoupled = Vec::with_capacity(sums.len());
    let mut thresholds = Vec::with_capacity(sums.len());
    for (i, s) in sums.iter().enumerate() {
        let (t, big_t) = scalar_fiber_solve_indexed(s, b, p, i)?;
        decoupled.push(t);
        thresholds.push(big_t);
    }
    let mut t = decoupled.clone();
    let mut mu = 0.0;
    let mut dmu = opts.initial_mu_step;
    let mut steps = 0;
    let coupled = b > 0.0 && sums.len() > 1;
    if coupled {
        while mu < 1.0 {
            let target = (mu + dmu).min(1.0);
            let solved = newton(sums, b, p, target, &t, opts)
                .filter(|tt| margins(sums, p, tt).iter().all(|&m| m > 0.0));
            match solved {
                Some(tt) => {
                    t = tt;
                    mu = target;
                    steps += 1;
                    dmu = (dmu * 2.0).min(opts.initial_mu_step);
                }
                None => {
                    dmu *= 0.5;
                    if dmu < opts.min_mu_step {
                        if target >= 1.0 || mu + 2.0 * dmu >= 1.0 {
                            // last stretch: report the constraint if that is what broke
                            if let Some(tt) = newton(sums, b, p, 1.0, &t, opts) {
                                let ms = margins(sums, p, &tt);
                                if let Some((i, &m)) =
                                    ms.iter().enumerate().find(|(_, m)| **m <= 0.0)
                                {
                                    return Err(NehariError::ConstraintFailed {
                                        component: one_based(i),
                                        margin: m,
                                    });
                                }
                            }
                        }
                        return Err(NehariError::HomotopyStall { mu });
                    }
                }
            }
        }
    } else {
        mu = 1.0;
        // b = 0 or a single component: the system is decoupled, polish anyway
        if let Some(tt) = newton(sums, b, p, 1.0, &t, opts) {
            t = tt;
        }
    }
    let (g, _, scale) = system(sums, b, p, 1.0, &t);
    let residuals = rel_residuals(&g, &scale);
    let margins = margins(sums, p, &t);
    if let Some((i, &m)) = margins.iter().enumerate().find(|(_, m)| **m <= 0.0) {
        return Err(NehariError::ConstraintFailed {
            component: one_based(i),
            margin: m,
        });
    }
    Ok(NehariProjection {
        t,
        mu,
        residuals,
        margins,
        thresholds,
        decoupled,
        mu_steps: steps,
    })
}

/// Projection of a candidate onto the constrained Nehari set. When `s_p` is
/// supplied, a violated precondition `(∫|u_i|^p)^{2/p} >= ‖u_i‖² / (2 s_p)`
/// is logged and the solve still runs.
pub fn coupled_nehari_solve(
    problem: &DiscreteProblem,
    candidate: &NodalCandidate,
    s_p: Option<f64>,
    opts: &NehariOptions,
) -> crate::error::Result<NehariProjection> {
    let br = problem.component_integrals(candidate)?;
    let sums = br.summaries();
    let p = problem.params().p();
    if let Some(s_p) = s_p {
        for (i, s) in sums.iter().enumerate() {
            if s.n > 0.0 && s.precondition_ratio(p) < 1.0 / (2.0 * s_p) {
                log::warn!(
                    "component {} violates the projection precondition; attempting anyway",
                    i + 1
                );
            }
        }
    }
    Ok(coupled_nehari_solve_summaries(
        &sums,
        problem.params().b(),
        p,
        opts,
    )?)
}

/// `F_i = n_i + b d_i² + b d_i Σ_{j≠i} d_j - l_i`.
pub fn constraint_values(sums: &[ComponentSummary], b: f64) -> Vec<f64> {
    let dsum: f64 = sums.iter().map(|s| s.d).sum();
    sums.iter().map(|s| s.n + b * s.d * dsum - s.l).collect()
}

/// Projection for candidates satisfying `(4-p) l_i < 2 n_i` and `F_i <= 0`;
/// every returned scaling lies in `(0, 1]`.
pub fn project_if_dominating(
    sums: &[ComponentSummary],
    b: f64,
    p: f64,
    opts: &NehariOptions,
) -> Result<NehariProjection, NehariError> {
    for (i, s) in sums.iter().enumerate() {
        if !((4.0 - p) * s.l < 2.0 * s.n) {
            return Err(NehariError::Precondition {
                inequality: "(4-p) l_i < 2 n_i",
                component: one_based(i),
            });
        }
    }
    for (i, f) in constraint_values(sums, b).iter().enumerate() {
        if *f > 0.0 {
            return Err(NehariError::Precondition {
                inequality: "F_i <= 0",
                component: one_based(i),
            });
        }
    }
    let mut proj = coupled_nehari_solve_summaries(sums, b, p, opts)?;
    for t in proj.t.iter_mut() {
        // F_i = 0 exactly gives t = 1 up to rounding
        if *t > 1.0 && *t <= 1.0 + 1e-12 {
            *t = 1.0;
        }
    }
    Ok(proj)
}

/// `E_b(t_1 u_1, ..., t_{k+1} u_{k+1})` from summaries.
pub fn fibering_energy(sums: &[ComponentSummary], b: f64, p: f64, t: &[f64]) -> f64 {
    let mut n = 0.0;
    let mut d = 0.0;
    let mut l = 0.0;
    for (s, &ti) in sums.iter().zip(t) {
        n += ti * ti * s.n;
        d += ti * ti * s.d;
        l += ti.powf(p) * s.l;
    }
    0.5 * n + 0.25 * b * d * d - l / p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub b_lower_star: f64,
    pub b_hat: f64,
    pub b_star: f64,
    pub alpha_k: f64,
    pub alpha_k_apriori: f64,
    pub precondition_ratios: Vec<f64>,
    pub precondition_floor: f64,
    pub admissible: bool,
}

/// First term of `b_*`: `((p-2)/(4-p)) ((4-p)/2)^{2/(p-2)} (2S_p)^{-p/(p-2)}`.
pub fn b_threshold_base(p: f64, s_p: f64) -> f64 {
    (p - 2.0) / (4.0 - p)
        * ((4.0 - p) / 2.0).powf(2.0 / (p - 2.0))
        * (2.0 * s_p).powf(-p / (p - 2.0))
}

/// `b̂` with the factor `(1 + k 2^{2/(p-2)} (2/(4-p))^{2/(p-2)})^{-1}`.
pub fn b_hat(p: f64, s_p: f64, k: usize) -> f64 {
    let e = 2.0 / (p - 2.0);
    let factor = 1.0 + k as f64 * 2f64.powf(e) * (2.0 / (4.0 - p)).powf(e);
    b_threshold_base(p, s_p) / factor
}

pub fn b_lower_star(p: f64, s_p: f64, k: usize) -> f64 {
    b_threshold_base(p, s_p).min(b_hat(p, s_p, k))
}

/// `(k+1)(p-2)/(4p) S_p^{p/(p-2)}`.
pub fn alpha_k_lower_bound(p: f64, s_p: f64, k: usize) -> f64 {
    (k + 1) as f64 * (p - 2.0) / (4.0 * p) * s_p.powf(p / (p - 2.0))
}

pub fn b_upper_star(p: f64, s_p: f64, k: usize, alpha_k: f64) -> f64 {
    b_lower_star(p, s_p, k).min((p - 2.0) * (p - 2.0) / (8.0 * p * (4.0 - p) * alpha_k))
}

pub fn admissibility(
    b: f64,
    p: f64,
    k: usize,
    sums: &[ComponentSummary],
    s_p: f64,
    alpha_k: f64,
) -> AdmissibilityReport {
    let b_lower = b_lower_star(p, s_p, k);
    let b_star = b_upper_star(p, s_p, k, alpha_k);
    AdmissibilityReport {
        b_lower_star: b_lower,
        b_hat: b_hat(p, s_p, k),
        b_star,
        alpha_k,
        alpha_k_apriori: alpha_k_lower_bound(p, s_p, k),
        precondition_ratios: sums.iter().map(|s| s.precondition_ratio(p)).collect(),
        precondition_floor: 1.0 / (2.0 * s_p),
        admissible: b == 0.0 || b < b_star,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCertificates {
    pub m_tilde_row_sums: Vec<f64>,
    pub n_row_sums: Vec<f64>,
    pub m_tilde_positive: bool,
    pub n_negative: bool,
}

/// Assembles `M̃` (scaling Jacobian form) and `N = (⟨∂_{u_i}F_j, u_i⟩)` at
/// the scaled components `t_i u_i` and reports their row sums.
pub fn dominance_certificates(
    sums: &[ComponentSummary],
    b: f64,
    p: f64,
    t: &[f64],
    mu: f64,
) -> DominanceCertificates {
    let m = sums.len();
    let sc: Vec<ComponentSummary> = sums.iter().zip(t).map(|(s, &ti)| s.scaled(ti, p)).collect();
    let dsum: f64 = sc.iter().map(|s| s.d).sum();
    let mut m_tilde = DMatrix::<f64>::zeros(m, m);
    let mut n_mat = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let s = &sc[i];
        let cross = dsum - s.d;
        m_tilde[(i, i)] = -(4.0 - p) * s.l + 2.0 * s.n + 2.0 * mu * b * s.d * cross;
        n_mat[(i, i)] = 2.0 * s.n + 4.0 * b * s.d * s.d + 2.0 * b * s.d * cross - p * s.l;
        for j in 0..m {
            if j != i {
                m_tilde[(i, j)] = -2.0 * mu * b * s.d * sc[j].d;
                n_mat[(i, j)] = 2.0 * b * s.d * sc[j].d;
            }
        }
    }
    let m_rows: Vec<f64> = (0..m).map(|i| m_tilde.row(i).sum()).collect();
    let n_rows: Vec<f64> = (0..m).map(|i| n_mat.row(i).sum()).collect();
    DominanceCertificates {
        m_tilde_positive: m_rows.iter().all(|&v| v > 0.0),
        n_negative: n_rows.iter().all(|&v| v < 0.0),
        m_tilde_row_sums: m_rows,
        n_row_sums: n_rows,
    }
}
