//! Numerical checks of the structural results: energy ordering in `k`, the
//! `b → 0` limit, the Pohozaev identity of the ground state and the a priori
//! lower bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{DomainMode, ProblemParams, RadialField};
use crate::error::{Error, Result};
use crate::functional::DiscreteProblem;
use crate::outer::{refine_solution, solve, Solution, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
    /// One of the runs involved did not produce a solution.
    Suppressed,
}

impl Verdict {
    fn from_margin(margin: Option<f64>, threshold: f64) -> Self {
        match margin {
            Some(m) if m > threshold => Verdict::Pass,
            Some(_) => Verdict::Fail,
            None => Verdict::Suppressed,
        }
    }

    pub fn passed(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::NotApplicable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub k: usize,
    pub energy: Option<f64>,
    pub sign_changes: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub k: usize,
    pub margin: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityTable {
    pub rows: Vec<EnergyRow>,
    /// `I(u_{k+1}) - I(u_k)`, indexed by the lower `k`.
    pub pairwise: Vec<Comparison>,
    /// `I(u_k) - (k+1) I(u_0)`.
    pub ground_multiple: Vec<Comparison>,
    pub threshold: f64,
}

impl MonotonicityTable {
    /// Margins and verdicts from stored rows; nothing is re-solved.
    pub fn from_rows(mut rows: Vec<EnergyRow>) -> Self {
        rows.sort_by_key(|r| r.k);
        let e0 = rows.iter().find(|r| r.k == 0).and_then(|r| r.energy);
        let threshold = e0.map_or(f64::INFINITY, |e| 1e-6 * e.abs());
        let pairwise = rows
            .windows(2)
            .map(|w| {
                let margin = w[0].energy.zip(w[1].energy).map(|(a, b)| b - a);
                Comparison {
                    k: w[0].k,
                    margin,
                    verdict: Verdict::from_margin(margin, threshold),
                }
            })
            .collect();
        let ground_multiple = rows
            .iter()
            .map(|r| {
                if r.k == 0 {
                    return Comparison {
                        k: 0,
                        margin: None,
                        verdict: Verdict::NotApplicable,
                    };
                }
                let margin = r.energy.zip(e0).map(|(e, g)| e - (r.k as f64 + 1.0) * g);
                Comparison {
                    k: r.k,
                    margin,
                    verdict: Verdict::from_margin(margin, threshold),
                }
            })
            .collect();
        Self {
            rows,
            pairwise,
            ground_multiple,
            threshold,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.pairwise
            .iter()
            .chain(&self.ground_multiple)
            .all(|c| c.verdict.passed())
    }
}

/// Solves `k = 0..=k_max` with shared settings; failed runs leave `None`.
pub fn run_monotonicity(
    params: &ProblemParams,
    k_max: usize,
    settings: &SolverSettings,
) -> Result<(MonotonicityTable, Vec<Option<Solution>>)> {
    if k_max > 4 {
        return Err(Error::InvalidParams(format!("k_max = {k_max} exceeds 4")));
    }
    let runs: Vec<(usize, Result<Solution>)> = (0..=k_max)
        .into_par_iter()
        .map(|k| (k, params.with_k(k).and_then(|p| solve(&p, settings))))
        .collect();
    let mut rows = Vec::with_capacity(runs.len());
    let mut sols = Vec::with_capacity(runs.len());
    for (k, run) in runs {
        match run {
            Ok(s) => {
                rows.push(EnergyRow {
                    k,
                    energy: Some(s.report.energy),
                    sign_changes: Some(s.report.sign_changes),
                    error: None,
                });
                sols.push(Some(s));
            }
            Err(e) => {
                log::warn!("k = {k}: {e}");
                rows.push(EnergyRow {
                    k,
                    energy: None,
                    sign_changes: None,
                    error: Some(e.to_string()),
                });
                sols.push(None);
            }
        }
    }
    Ok((MonotonicityTable::from_rows(rows), sols))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub b: f64,
    /// `I_b` of the glued minimizer from the full pipeline.
    pub energy: Option<f64>,
    pub sign_changes: Option<usize>,
    pub radii: Option<Vec<f64>>,
    /// `‖u^b - u^0‖_𝓗` on the mesh of the `b = 0` solution.
    pub distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitStudy {
    pub k: usize,
    /// In the order of the requested list, ending with `b = 0`.
    pub rows: Vec<LimitRow>,
    pub distances_decreasing: bool,
    pub sign_changes_constant: bool,
    pub energies_decreasing: bool,
    /// Ratios of consecutive positive distances.
    pub distance_ratios: Vec<f64>,
    /// Set when any of the trends above fails (possible branch switching).
    pub flagged: bool,
}

pub const DEFAULT_B_LIST: [f64; 6] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 0.0];

fn strictly_decreasing(v: &[Option<f64>]) -> bool {
    v.iter().all(Option::is_some) && v.windows(2).all(|w| w[1].unwrap() < w[0].unwrap())
}

/// Solves `k` at every `b` of `b_list` (plus `b = 0` if absent). Each
/// pipeline solution supplies energy, radii and sign changes; distances use
/// the discrete solution at `b` continued by Newton on the mesh of the `b = 0`
/// solution, so all of them are measured in one norm.
pub fn run_b_limit(
    params: &ProblemParams,
    k: usize,
    b_list: &[f64],
    settings: &SolverSettings,
) -> Result<LimitStudy> {
    if b_list.windows(2).any(|w| w[1] >= w[0]) || b_list.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::InvalidParams(
            "b_list must be strictly decreasing and nonnegative".into(),
        ));
    }
    let mut bs = b_list.to_vec();
    if bs.last() != Some(&0.0) {
        bs.push(0.0);
    }
    let base = params.with_k(k)?;
    let runs: Vec<Result<Solution>> = bs
        .par_iter()
        .map(|&b| base.with_b(b).and_then(|p| solve(&p, settings)))
        .collect();
    let reference = runs
        .last()
        .unwrap()
        .as_ref()
        .map_err(|e| Error::OuterFailure(format!("b = 0 reference: {e}")))?;
    let ref_values = reference
        .report
        .refined
        .as_ref()
        .map_or_else(|| reference.field.values().to_vec(), |r| r.values.clone());
    let ref_problem = DiscreteProblem::new(base.with_b(0.0)?, reference.field.mesh_arc().clone());

    // continue upward from b = 0 so each Newton solve starts close by
    let mut distances = vec![None; bs.len()];
    distances[bs.len() - 1] = Some(0.0);
    let mut start = ref_values.clone();
    for j in (0..bs.len() - 1).rev() {
        let pb = ref_problem.with_b(bs[j])?;
        match refine_solution(&pb, &start, 1e-12, 50) {
            Ok(r) if r.relative_residual <= 1e-9 && r.sign_changes == k => {
                let diff: Vec<f64> = r
                    .values
                    .iter()
                    .zip(&ref_values)
                    .map(|(a, b)| a - b)
                    .collect();
                distances[j] = Some(ref_problem.h_norm(&diff));
                start = r.values;
            }
            _ => break,
        }
    }

    let rows: Vec<LimitRow> = bs
        .iter()
        .zip(&runs)
        .zip(&distances)
        .map(|((&b, run), &distance)| match run {
            Ok(s) => LimitRow {
                b,
                energy: Some(s.report.energy),
                sign_changes: Some(s.report.sign_changes),
                radii: Some(s.report.radii.clone()),
                distance,
                error: None,
            },
            Err(e) => LimitRow {
                b,
                energy: None,
                sign_changes: None,
                radii: None,
                distance,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let dists: Vec<Option<f64>> = rows.iter().map(|r| r.distance).collect();
    let energies: Vec<Option<f64>> = rows.iter().map(|r| r.energy).collect();
    let distances_decreasing = strictly_decreasing(&dists);
    let energies_decreasing = strictly_decreasing(&energies);
    let sign_changes_constant = rows.iter().all(|r| r.sign_changes == Some(k));
    let distance_ratios = dists
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        })
        .collect();
    Ok(LimitStudy {
        k,
        flagged: !(distances_decreasing && energies_decreasing && sign_changes_constant),
        rows,
        distances_decreasing,
        sign_changes_constant,
        energies_decreasing,
        distance_ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    /// `½∫|∇u|²`
    pub gradient: f64,
    /// `3/2 ∫V u²`
    pub potential: f64,
    /// `½∫ r V'(r) u²`
    pub virial: f64,
    /// `b/2 (∫|∇u|²)²`
    pub kirchhoff: f64,
    /// `-3/p ∫|u|^p`
    pub nonlinear: f64,
    pub residual: f64,
    pub relative_residual: f64,
    /// `∫V u² + ½∫ r V' u² - (6-p)/(2p) ∫|u|^p`
    pub combined_residual: f64,
    pub combined_relative: f64,
    /// `∫|u|^p` against `2/(4-p) ‖u‖²`.
    pub lp_mass: f64,
    pub membership_bound: f64,
    pub membership: bool,
}

/// Terms of the Pohozaev identity of `u0` and the derived membership check.
pub fn check_pohozaev(u0: &RadialField, params: &ProblemParams) -> Result<PohozaevReport> {
    let pot = params.potential();
    if !pot.has_derivative() {
        return Err(Error::MissingDerivative);
    }
    let p = params.p();
    let problem = DiscreteProblem::new(params.clone(), u0.mesh_arc().clone());
    let u = u0.values();
    let a = problem.assembly().stiffness.quad_form_range(0, u);
    let bm = problem.assembly().mass.quad_form_range(0, u);
    let c = u0
        .mesh()
        .integrate_field(u, |v, t| t * pot.derivative(t).unwrap_or(0.0) * v * v);
    let l = u0.mesh().integrate_field(u, |v, _| v.abs().powf(p));
    let terms = [
        0.5 * a,
        1.5 * bm,
        0.5 * c,
        0.5 * params.b() * a * a,
        -3.0 / p * l,
    ];
    let residual: f64 = terms.iter().sum();
    let largest = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let lp_coef = (6.0 - p) / (2.0 * p) * l;
    let combined = bm + 0.5 * c - lp_coef;
    let combined_scale = (bm.abs()).max(lp_coef.abs()).max(0.5 * c.abs());
    let membership_bound = 2.0 / (4.0 - p) * (a + bm);
    Ok(PohozaevReport {
        gradient: terms[0],
        potential: terms[1],
        virial: terms[2],
        kirchhoff: terms[3],
        nonlinear: terms[4],
        residual,
        relative_residual: residual.abs() / largest,
        combined_residual: combined,
        combined_relative: combined.abs() / combined_scale,
        lp_mass: l,
        membership_bound,
        membership: l < membership_bound,
    })
}

/// `max_t |u(t)|·t / ‖u‖_𝓗` over the mesh nodes.
pub fn strauss_ratio(field: &RadialField, params: &ProblemParams) -> f64 {
    let problem = DiscreteProblem::new(params.clone(), field.mesh_arc().clone());
    let norm = problem.h_norm(field.values());
    field
        .mesh()
        .nodes()
        .iter()
        .zip(field.values())
        .map(|(t, u)| t * u.abs())
        .fold(0.0, f64::max)
        / norm
}

/// Inputs of one solved run for [`check_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRun {
    pub k: usize,
    pub norms_sq: Vec<f64>,
    /// `α_k`, the minimal constrained energy.
    pub alpha: f64,
    pub strauss_ratio: Option<f64>,
}

impl BoundRun {
    pub fn from_solution(sol: &Solution, params: &ProblemParams) -> Self {
        Self {
            k: sol.report.k,
            norms_sq: sol.report.norms_sq.clone(),
            alpha: sol.report.phi,
            strauss_ratio: (params.mode() == DomainMode::R3Emulation)
                .then(|| strauss_ratio(&sol.field, params)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub k: usize,
    /// 1-based component; `None` for the `α_k` row.
    pub component: Option<usize>,
    pub value: f64,
    pub floor: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub delta: f64,
    pub s_p: f64,
    pub rows: Vec<BoundRow>,
    /// Constant fitted on the ground state; present only in emulation mode.
    pub strauss_constant: Option<f64>,
    pub strauss_rows: Vec<BoundRow>,
}

impl BoundsRecord {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().chain(&self.strauss_rows).all(|r| r.pass)
    }
}

/// Component norms and `α_k` against their continuum lower bounds with
/// relative slack `delta`.
pub fn check_bounds(runs: &[BoundRun], s_p: f64, p: f64, delta: f64) -> BoundsRecord {
    let norm_floor = (1.0 - delta) * s_p.powf(p / (2.0 * (p - 2.0)));
    let alpha_unit = (p - 2.0) / (4.0 * p) * s_p.powf(p / (p - 2.0));
    let mut rows = Vec::new();
    for run in runs {
        for (i, &n) in run.norms_sq.iter().enumerate() {
            let value = n.max(0.0).sqrt();
            rows.push(BoundRow {
                k: run.k,
                component: Some(i + 1),
                value,
                floor: norm_floor,
                pass: value >= norm_floor,
            });
        }
        let floor = (1.0 - delta) * (run.k as f64 + 1.0) * alpha_unit;
        rows.push(BoundRow {
            k: run.k,
            component: None,
            value: run.alpha,
            floor,
            pass: run.alpha >= floor,
        });
    }
    let strauss_constant = runs.iter().find(|r| r.k == 0).and_then(|r| r.strauss_ratio);
    let strauss_rows = match strauss_constant {
        Some(c) => runs
            .iter()
            .filter_map(|r| {
                r.strauss_ratio.map(|v| BoundRow {
                    k: r.k,
                    component: None,
                    value: v,
                    floor: c,
                    pass: v <= c,
                })
            })
            .collect(),
        None => Vec::new(),
    };
    BoundsRecord {
        delta,
        s_p,
        rows,
        strauss_constant,
        strauss_rows,
    }
}

/// Pohozaev reports of the `k = 0` solution at `cells` and at successive
/// halvings, each solved from scratch.
pub fn pohozaev_refinement(
    params: &ProblemParams,
    settings: &SolverSettings,
    levels: usize,
) -> Result<Vec<(usize, PohozaevReport)>> {
    let ground = params.with_k(0)?;
    (0..levels)
        .into_par_iter()
        .map(|level| {
            let mut s = *settings;
            s.mesh.cells_per_annulus = settings.mesh.cells_per_annulus << level;
            let sol = solve(&ground, &s)?;
            let field = match &sol.report.refined {
                Some(r) => RadialField::new(sol.field.mesh_arc().clone(), r.values.clone())?,
                None => sol.field.clone(),
            };
            Ok((s.mesh.cells_per_annulus, check_pohozaev(&field, &ground)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, e: Option<f64>) -> EnergyRow {
        EnergyRow {
            k,
            energy: e,
            sign_changes: e.map(|_| k),
            error: None,
        }
    }

    #[test]
    fn margins_come_from_stored_energies() {
        let t = MonotonicityTable::from_rows(vec![
            row(1, Some(50.0)),
            row(0, Some(10.0)),
            row(2, Some(100.0)),
        ]);
        assert_eq!(t.rows[0].k, 0);
        assert_eq!(t.pairwise.len(), 2);
        assert_eq!(t.pairwise[0].margin, Some(40.0));
        assert_eq!(t.ground_multiple[0].verdict, Verdict::NotApplicable);
        assert_eq!(t.ground_multiple[2].margin, Some(70.0));
        assert!(t.all_pass());
    }

    #[test]
    fn failed_run_suppresses_its_comparisons() {
        let t = MonotonicityTable::from_rows(vec![
            row(0, Some(10.0)),
            row(1, None),
            row(2, Some(100.0)),
        ]);
        assert_eq!(t.pairwise[0].verdict, Verdict::Suppressed);
        assert_eq!(t.pairwise[1].verdict, Verdict::Suppressed);
        assert_eq!(t.ground_multiple[2].verdict, Verdict::Pass);
        assert!(!t.all_pass());
    }

    #[test]
    fn margin_within_threshold_fails() {
        let t = MonotonicityTable::from_rows(vec![row(0, Some(10.0)), row(1, Some(10.0 + 1e-7))]);
        assert_eq!(t.pairwise[0].verdict, Verdict::Fail);
    }

    #[test]
    fn constant_potential_has_no_virial_term() {
        let params = ProblemParams::unit_ball(0.0, 3.0, 5.0, 0).unwrap();
        let radii = crate::discretization::RadiiVector::equipartition(0, 5.0).unwrap();
        let mesh = std::sync::Arc::new(
            crate::discretization::RadialMesh::build(&radii, 16, Default::default()).unwrap(),
        );
        let field =
            RadialField::new(mesh.clone(), mesh.nodes().iter().map(|t| 5.0 - t).collect()).unwrap();
        let r = check_pohozaev(&field, &params).unwrap();
        assert_eq!(r.virial, 0.0);
    }

    #[test]
    fn bounds_record_uses_shared_floor() {
        let runs = [BoundRun {
            k: 1,
            norms_sq: vec![300.0, 200.0],
            alpha: 50.0,
            strauss_ratio: None,
        }];
        let rec = check_bounds(&runs, 6.4, 3.0, 0.02);
        assert_eq!(rec.rows.len(), 3);
        assert!(rec.rows[0].pass);
        assert!(!rec.rows[1].pass);
        assert!(rec.strauss_constant.is_none());
    }
}
