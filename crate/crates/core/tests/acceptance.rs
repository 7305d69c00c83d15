//! Acceptance checks, one line per criterion and instance.
//!
//! The default instance is b = 0.01. For k >= 1 its constrained Nehari set is
//! empty, which the solver reports as an outer failure; those lines print FAIL
//! with the reason and do not change the exit status. Any other failure does.
//! Every criterion is also evaluated at b = 2e-6, where the nodal set is
//! nonempty, with the same tolerances.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use nodal_kirchhoff::discretization::{
    DomainMode, Grading, NodalCandidate, Potential, ProblemParams, RadialMesh, RadiiVector,
};
use nodal_kirchhoff::experiments::{
    check_bounds, check_pohozaev, pohozaev_refinement, run_b_limit, run_monotonicity, BoundRun,
};
use nodal_kirchhoff::functional::{estimate_s_q, DiscreteProblem, SqOptions};
use nodal_kirchhoff::inner::MeshOptions;
use nodal_kirchhoff::nehari::{
    b_lower_star, coupled_nehari_solve_summaries, dominance_certificates, fiber_h, fiber_h_prime,
    scalar_fiber_solve, ComponentSummary, NehariOptions,
};
use nodal_kirchhoff::oracles::nehari_multistart_oracle;
use nodal_kirchhoff::outer::{
    coercivity_probes, continuity_probes, glue, max_relative_jump, minimize_phi, solve,
    PhiEvaluator, Solution, SolverSettings,
};
use nodal_kirchhoff::rng::substream;
use nodal_kirchhoff::{Error, Result};

const P: f64 = 3.0;
const R: f64 = 10.0;
const DEFAULT_B: f64 = 0.01;
const COMPANION_B: f64 = 2e-6;
const CELLS: usize = 64;

#[derive(Clone, Copy, PartialEq)]
enum Outcome {
    Pass,
    Fail,
    /// Fails because the instance has no nodal solution.
    Infeasible,
}

struct Harness {
    failures: usize,
    infeasible: usize,
}

impl Harness {
    fn line(&mut self, id: &str, instance: &str, outcome: Outcome, detail: impl AsRef<str>) {
        let tag = match outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => {
                self.failures += 1;
                "FAIL"
            }
            Outcome::Infeasible => {
                self.infeasible += 1;
                "FAIL"
            }
        };
        println!("{tag} {id} [{instance}] {}", detail.as_ref());
    }

    fn check(&mut self, id: &str, instance: &str, pass: bool, detail: impl AsRef<str>) {
        self.line(
            id,
            instance,
            if pass { Outcome::Pass } else { Outcome::Fail },
            detail,
        );
    }
}

fn nehari_set_empty(e: &Error) -> bool {
    matches!(e, Error::OuterFailure(m) if m.contains("left the constrained Nehari set"))
}

fn instance(b: f64) -> String {
    format!("b={b:e}")
}

fn settings(cells: usize) -> SolverSettings {
    SolverSettings {
        mesh: MeshOptions {
            cells_per_annulus: cells,
            grading: Grading::Uniform,
        },
        ..SolverSettings::default()
    }
}

/// Solve keeping the evaluator so probes can reuse its cache.
fn solve_with(params: &ProblemParams, s: &SolverSettings) -> Result<(Solution, PhiEvaluator)> {
    let ev = PhiEvaluator::new(params.clone(), s.mesh, s.inner);
    let outer = minimize_phi(&ev, &s.outer)?;
    let (field, report) = glue(&outer, params, s.refine)?;
    Ok((
        Solution {
            outer,
            field,
            report,
        },
        ev,
    ))
}

struct Runs {
    b: f64,
    params: ProblemParams,
    sols: Vec<Result<(Solution, PhiEvaluator)>>,
}

impl Runs {
    fn new(b: f64) -> Self {
        let params = ProblemParams::unit_ball(b, P, R, 0).unwrap();
        let sols = (0..=2)
            .map(|k| solve_with(&params.with_k(k).unwrap(), &settings(CELLS)))
            .collect();
        Self { b, params, sols }
    }

    fn name(&self) -> String {
        instance(self.b)
    }

    /// First failure among the nodal runs, if any.
    fn blocking(&self) -> Option<&Error> {
        self.sols.iter().find_map(|s| s.as_ref().err())
    }
}

fn blocked(h: &mut Harness, id: &str, runs: &Runs, e: &Error) {
    let outcome = if nehari_set_empty(e) {
        Outcome::Infeasible
    } else {
        Outcome::Fail
    };
    h.line(id, &runs.name(), outcome, format!("no nodal solution: {e}"));
}

fn c1_existence(h: &mut Harness, runs: &Runs) {
    for (k, sol) in runs.sols.iter().enumerate() {
        let id = format!("C1 existence k={k}");
        match sol {
            Ok((s, _)) => {
                let r = &s.report;
                let res = r
                    .refined
                    .as_ref()
                    .map_or(r.glued_relative_residual, |f| f.relative_residual);
                let min_margin = r.margins.iter().copied().fold(f64::INFINITY, f64::min);
                h.check(
                    &id,
                    &runs.name(),
                    r.sign_changes == k && res <= 1e-6 && min_margin > 0.0,
                    format!(
                        "sign changes {} (want {k}), residual {res:.2e} (<= 1e-6), min margin {min_margin:.3e} (> 0)",
                        r.sign_changes
                    ),
                );
            }
            Err(e) => blocked(h, &id, runs, e),
        }
    }
}

fn c2_monotonicity(h: &mut Harness, runs: &Runs) {
    let id = "C2 energy monotonicity";
    if let Some(e) = runs.blocking() {
        return blocked(h, id, runs, e);
    }
    let e: Vec<f64> = runs
        .sols
        .iter()
        .map(|s| s.as_ref().unwrap().0.report.energy)
        .collect();
    let gap = 1e-6 * e[0].abs();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 0..2 {
        let up = e[k + 1] - e[k];
        let multiple = e[k + 1] - (k as f64 + 2.0) * e[0];
        ok &= up > gap && multiple > gap;
        parts.push(format!(
            "I{}-I{k}={up:.4e}, I{}-{}I0={multiple:.4e}",
            k + 1,
            k + 1,
            k + 2
        ));
    }
    h.check(
        id,
        &runs.name(),
        ok,
        format!("{} (margins > {gap:.2e})", parts.join("; ")),
    );
}

fn s_p_on(mesh: Arc<RadialMesh>, params: &ProblemParams) -> f64 {
    estimate_s_q(mesh, params, P, SqOptions::default())
        .unwrap()
        .value
}

fn c3_bounds(h: &mut Harness, runs: &Runs) {
    let accepted: Vec<&Solution> = runs
        .sols
        .iter()
        .filter_map(|s| s.as_ref().ok().map(|x| &x.0))
        .collect();
    let Some(ground) = accepted.iter().find(|s| s.report.k == 0) else {
        return h.check("C3 lower bounds", &runs.name(), false, "no ground state");
    };
    let s_p = s_p_on(ground.field.mesh_arc().clone(), &runs.params);
    let bound_runs: Vec<BoundRun> = accepted
        .iter()
        .map(|s| BoundRun::from_solution(s, &runs.params))
        .collect();
    let rec = check_bounds(&bound_runs, s_p, P, 0.02);
    let worst = rec
        .rows
        .iter()
        .map(|r| r.value / r.floor)
        .fold(f64::INFINITY, f64::min);
    let ks: Vec<String> = accepted.iter().map(|s| s.report.k.to_string()).collect();
    h.check(
        "C3 lower bounds",
        &runs.name(),
        rec.all_pass(),
        format!(
            "S_p={s_p:.6}, {} rows over accepted runs k in {{{}}}, smallest value/floor {worst:.5} (>= 1)",
            rec.rows.len(),
            ks.join(",")
        ),
    );
}

fn random_candidate(
    params: &ProblemParams,
    k: usize,
    seed: u64,
) -> (DiscreteProblem, NodalCandidate) {
    let mut rng = substream(seed, "acceptance-candidates");
    let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(0.1 * R..0.9 * R)).collect();
    r.sort_by(f64::total_cmp);
    let radii = RadiiVector::new(r, R).unwrap();
    let mesh = Arc::new(RadialMesh::build(&radii, 16, Grading::Uniform).unwrap());
    let amps: Vec<f64> = (0..=k).map(|_| rng.random_range(0.2..3.0)).collect();
    let cand = NodalCandidate::sine_bumps(mesh.clone()).scaled(&amps);
    (DiscreteProblem::new(params.with_k(k).unwrap(), mesh), cand)
}

fn c4_projection(h: &mut Harness, runs: &Runs) -> Vec<(Vec<ComponentSummary>, Vec<f64>)> {
    let mut accepted = Vec::new();
    let mut worst_res: f64 = 0.0;
    for (s, _) in runs.sols.iter().flatten() {
        let inner = &s.outer.inner;
        worst_res = worst_res.max(inner.projection.max_residual());
        let sums = DiscreteProblem::new(
            runs.params.with_k(s.report.k).unwrap(),
            inner.minimizer.mesh_arc().clone(),
        )
        .component_integrals(&inner.minimizer)
        .unwrap()
        .summaries();
        accepted.push((sums, inner.projection.t.clone()));
    }
    let opts = NehariOptions::default();
    let (mut agree, mut both_empty, mut total, mut worst_rel) = (0, 0, 0, 0.0f64);
    for k in 0..=2 {
        for seed in 0..10 {
            total += 1;
            let (problem, cand) = random_candidate(&runs.params, k, seed);
            let sums = problem.component_integrals(&cand).unwrap().summaries();
            let primary = coupled_nehari_solve_summaries(&sums, runs.b, P, &opts);
            let oracle = nehari_multistart_oracle(&sums, runs.b, P, 24);
            match (primary, oracle) {
                (Ok(p), Ok(o)) => {
                    worst_res = worst_res.max(p.max_residual());
                    let rel =
                        p.t.iter()
                            .zip(&o)
                            .map(|(a, b)| (a - b).abs() / b)
                            .fold(0.0, f64::max);
                    worst_rel = worst_rel.max(rel);
                    if rel <= 1e-8 {
                        agree += 1;
                    }
                    accepted.push((sums, p.t));
                }
                (Err(_), Err(_)) => both_empty += 1,
                _ => {}
            }
        }
    }
    let (t, _) = scalar_fiber_solve(
        &ComponentSummary {
            n: 1.0,
            d: 1.0,
            l: 1.0,
        },
        0.1,
        3.0,
    )
    .unwrap();
    let closed = (t - 1.127016654).abs();
    h.check(
        "C4 Nehari projection",
        &runs.name(),
        worst_res <= 1e-10 && agree + both_empty == total && closed <= 1e-9,
        format!(
            "max residual {worst_res:.2e} (<= 1e-10); oracle agrees on {agree}/{total} (both empty on {both_empty}), \
             max rel diff {worst_rel:.2e} (<= 1e-8); scalar t={t:.10} |t-1.127016654|={closed:.1e} (<= 1e-9)"
        ),
    );
    accepted
}

fn c5_fibering(h: &mut Harness, runs: &Runs, s_p: f64) {
    let mut rng = substream(5, "acceptance-fibering");
    let mut ok = true;
    let mut checked_h = 0;
    for _ in 0..100 {
        let n = rng.random_range(0.1..100.0);
        let rho: f64 = rng.random_range(0.5..1.0);
        let s = ComponentSummary {
            n,
            d: rng.random_range(0.01..1.0) * n,
            l: (rho / s_p * n).powf(P / 2.0),
        };
        let big_t = s.threshold(P);
        for _ in 0..10 {
            ok &= fiber_h_prime(&s, P, rng.random_range(0.001..0.999) * big_t) < 0.0;
            ok &= fiber_h_prime(&s, P, rng.random_range(1.001..50.0) * big_t) > 0.0;
        }
        let k = rng.random_range(0..=2);
        let b = rng.random_range(0.0..1.0) * b_lower_star(P, s_p, k);
        ok &= fiber_h(&s, b, P, big_t) < 0.0;
        checked_h += 1;
    }
    h.check(
        "C5 fibering shape",
        &runs.name(),
        ok,
        format!("100 summaries x 20 sampled t; h(T) < 0 on {checked_h} draws with b < b_* (S_p={s_p:.4})"),
    );
}

fn c6_dominance(h: &mut Harness, runs: &Runs, projections: &[(Vec<ComponentSummary>, Vec<f64>)]) {
    let mut ok = true;
    for (sums, t) in projections {
        let c = dominance_certificates(sums, runs.b, P, t, 1.0);
        ok &= c.m_tilde_positive && c.n_negative;
    }
    h.check(
        "C6 dominance certificates",
        &runs.name(),
        ok && !projections.is_empty(),
        format!(
            "{} accepted projections, M~ rows > 0 and N rows < 0 at all",
            projections.len()
        ),
    );
}

fn c7_coercivity(h: &mut Harness, runs: &Runs) {
    let id = "C7 coercivity and continuity";
    let (sol, ev) = match &runs.sols[1] {
        Ok(x) => x,
        Err(e) => return blocked(h, id, runs, e),
    };
    let radii = &sol.outer.radii;
    let probes = coercivity_probes(ev, radii).unwrap();
    let above = probes
        .iter()
        .all(|p| p.phi.is_none_or(|v| v > sol.outer.phi));
    let cont = continuity_probes(ev, radii, &[1e-2 * R, 1e-3 * R]).unwrap();
    let (l_big, l_small) = (cont[0].lipschitz, cont[1].lipschitz);
    // a jump in phi would make the small-step quotient ~10x the large one
    let stable = matches!((l_big, l_small), (Some(a), Some(b)) if b <= 2.0 * a);
    let shown: Vec<String> = probes
        .iter()
        .map(|p| {
            format!(
                "{}={}",
                p.label,
                p.phi.map_or("+inf".into(), |v| format!("{v:.4}"))
            )
        })
        .collect();
    h.check(
        id,
        &runs.name(),
        above && stable,
        format!(
            "phi*={:.4}, {}; quotients {:?} at 1e-2R, {:?} at 1e-3R (small <= 2 x large)",
            sol.outer.phi,
            shown.join(", "),
            l_big,
            l_small
        ),
    );
}

fn c8_gluing(h: &mut Harness, runs: &Runs) {
    for k in 1..=2 {
        let id = format!("C8 gluing k={k}");
        let (sol, ev) = match &runs.sols[k] {
            Ok(x) => x,
            Err(e) => {
                blocked(h, &id, runs, e);
                continue;
            }
        };
        let jump = sol.report.max_relative_jump;
        let fine = solve_with(&runs.params.with_k(k).unwrap(), &settings(2 * CELLS));
        let Ok((fine, _)) = fine else {
            h.check(&id, &runs.name(), false, "refined solve failed");
            continue;
        };
        let ratio = jump / fine.report.max_relative_jump;
        let mut perturbed_ok = true;
        let mut worst_perturbed = f64::INFINITY;
        let mut perturbed = 0;
        let r = sol.outer.radii.interior();
        for i in 0..k {
            for f in [0.8, 1.2] {
                let mut v = r.to_vec();
                v[i] *= f;
                let Ok(rv) = RadiiVector::new(v, R) else {
                    continue;
                };
                // outside the constrained set there is no competing glued function
                if let Ok(res) = ev.solve(&rv) {
                    let j = max_relative_jump(&res.minimizer);
                    worst_perturbed = worst_perturbed.min(j);
                    perturbed_ok &= j > jump;
                    perturbed += 1;
                }
            }
        }
        h.check(
            &id,
            &runs.name(),
            jump <= 0.05 && (1.5..=2.5).contains(&ratio) && perturbed_ok && perturbed > 0,
            format!(
                "jump {jump:.3e} (<= 0.05), halving ratio {ratio:.3} (in [1.5,2.5]), smallest jump over {perturbed}/{} +-20% radii {worst_perturbed:.3e} (> optimum)", 2 * k
            ),
        );
    }
}

fn c9_b_limit(h: &mut Harness, b_list: &[f64], s: &SolverSettings, label: &str) {
    let id = "C9 b -> 0 limit k=1";
    let params = ProblemParams::unit_ball(b_list[0], P, R, 1).unwrap();
    let study = match run_b_limit(&params, 1, b_list, s) {
        Ok(st) => st,
        Err(e) => return h.check(id, label, false, e.to_string()),
    };
    let errors: Vec<&String> = study.rows.iter().filter_map(|r| r.error.as_ref()).collect();
    if !errors.is_empty() {
        let outcome = if errors
            .iter()
            .all(|m| m.contains("left the constrained Nehari set"))
        {
            Outcome::Infeasible
        } else {
            Outcome::Fail
        };
        return h.line(
            id,
            label,
            outcome,
            format!(
                "{} of {} levels unsolved: {}",
                errors.len(),
                study.rows.len(),
                errors[0]
            ),
        );
    }
    let dist: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.distance.unwrap_or(f64::NAN)))
        .collect();
    let en: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.energy.unwrap_or(f64::NAN)))
        .collect();
    h.check(
        id,
        label,
        study.distances_decreasing && study.sign_changes_constant && study.energies_decreasing,
        format!(
            "distances [{}], energies [{}], one sign change at every b",
            dist.join(", "),
            en.join(", ")
        ),
    );
}

fn c10_pohozaev(h: &mut Harness, radius: f64) {
    let id = "C10 Pohozaev and N0 membership";
    let label = format!("b=1e-2 R={radius}");
    let params = ProblemParams::new(
        DEFAULT_B,
        P,
        Potential::Constant(1.0),
        radius,
        0,
        DomainMode::Ball,
    )
    .unwrap();
    let reports = match pohozaev_refinement(&params, &settings(CELLS), 3) {
        Ok(r) => r,
        Err(e) => return h.check(id, &label, false, e.to_string()),
    };
    let rel: Vec<f64> = reports.iter().map(|(_, r)| r.relative_residual).collect();
    let at_128 = reports
        .iter()
        .find(|(c, _)| *c == 128)
        .map(|(_, r)| r.relative_residual)
        .unwrap();
    let ratios: Vec<f64> = rel.windows(2).map(|w| w[0] / w[1]).collect();
    let shrinking = ratios.iter().all(|r| (1.5..=4.5).contains(r));
    let members = reports.iter().all(|(_, r)| r.membership);
    let shown: Vec<String> = reports
        .iter()
        .map(|(c, r)| format!("{c}:{:.2e}", r.relative_residual))
        .collect();
    h.check(
        id,
        &label,
        at_128 <= 1e-2 && shrinking && members,
        format!(
            "relative residual by cells [{}] (<= 1e-2 at 128), halving ratios {ratios:.2?} (in [1.5,4.5]); membership strict at all: {members}",
            shown.join(", ")
        ),
    );
}

/// On a ball of radius R the identity carries the boundary flux
/// `-(A/2)·4πR³u'(R)²`, `A = 1 + b∫|∇u|²`. The Galerkin residual at the outer
/// node approximates `F = A·4πR²u'(R)`, so the flux term is `-F²/(8πAR)`.
fn truncation_note(radius: f64) {
    let params = ProblemParams::unit_ball(DEFAULT_B, P, radius, 0).unwrap();
    let mut rows = Vec::new();
    for cells in [64, 128, 256] {
        let sol = solve(&params, &settings(cells)).unwrap();
        let u = &sol.report.refined.as_ref().unwrap().values;
        let problem = DiscreteProblem::new(params.clone(), sol.field.mesh_arc().clone());
        let coef = 1.0 + DEFAULT_B * problem.assembly().stiffness.quad_form_range(0, u);
        let flux = *problem
            .operator_minus_load(problem.full_span(), u, coef)
            .last()
            .unwrap();
        let boundary = -flux * flux / (8.0 * std::f64::consts::PI * coef * radius);
        let field = nodal_kirchhoff::discretization::RadialField::new(
            sol.field.mesh_arc().clone(),
            u.clone(),
        )
        .unwrap();
        let rep = check_pohozaev(&field, &params).unwrap();
        let scale = rep.residual.abs() / rep.relative_residual;
        rows.push(format!(
            "{cells}: residual {:.3e}, flux term {:.3e}, difference {:.2e}",
            rep.relative_residual,
            boundary.abs() / scale,
            (rep.residual - boundary).abs() / scale
        ));
    }
    println!(
        "NOTE C10 at R={radius} (not a criterion instance): residual relative to largest term plateaus at the ball's boundary flux; {}",
        rows.join("; ")
    );
}

fn c11_hygiene(h: &mut Harness, companion: &Runs) {
    // directional derivatives
    let params = ProblemParams::unit_ball(DEFAULT_B, P, R, 0).unwrap();
    let mesh = Arc::new(
        RadialMesh::build(
            &RadiiVector::new(vec![], R).unwrap(),
            CELLS,
            Grading::Uniform,
        )
        .unwrap(),
    );
    let problem = DiscreteProblem::new(params.clone(), mesh.clone());
    let n = mesh.node_count();
    let mut rng = substream(11, "acceptance-fd");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        u[n - 1] = 0.0;
        v[n - 1] = 0.0;
        let (grad, _) = problem.weak_residual(&u);
        let exact: f64 = grad.iter().zip(&v).map(|(g, w)| g * w).sum();
        let step = 1e-4;
        let shifted = |s: f64| -> Vec<f64> { u.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let fd = (problem.glued_energy(&shifted(step)) - problem.glued_energy(&shifted(-step)))
            / (2.0 * step);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
    }
    h.check(
        "C11a directional derivatives",
        "b=1e-2",
        worst <= 1e-6,
        format!("20 random pairs, max relative difference {worst:.2e} (<= 1e-6)"),
    );

    let fine = Arc::new(
        RadialMesh::build(&RadiiVector::new(vec![], R).unwrap(), 256, Grading::Uniform).unwrap(),
    );
    let s2 = estimate_s_q(fine, &params, 2.0, SqOptions::default())
        .unwrap()
        .value;
    let exact = 1.0 + (std::f64::consts::PI / R).powi(2);
    let rel = (s2 - exact).abs() / exact;
    h.check(
        "C11b S_2 eigenvalue",
        "R=10 256 cells",
        rel <= 1e-4,
        format!("S_2={s2:.8} vs 1+(pi/R)^2={exact:.8}, relative {rel:.2e} (<= 1e-4)"),
    );

    let base = ProblemParams::unit_ball(COMPANION_B, P, R, 0).unwrap();
    let again = run_monotonicity(&base, 2, &settings(CELLS)).unwrap().1;
    let mut identical = true;
    for (first, second) in companion.sols.iter().zip(&again) {
        identical &= match (first, second) {
            (Ok((a, _)), Some(b)) => {
                a.report.energy.to_bits() == b.report.energy.to_bits()
                    && a.report.radii == b.report.radii
                    && a.field.values() == b.field.values()
            }
            (Err(_), None) => true,
            _ => false,
        };
    }
    h.check(
        "C11c bit reproducibility",
        &companion.name(),
        identical,
        "k=0,1,2 solved sequentially and again in parallel: energies, radii and fields bit-identical",
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut h = Harness {
        failures: 0,
        infeasible: 0,
    };
    let default = Runs::new(DEFAULT_B);
    let companion = Runs::new(COMPANION_B);
    for runs in [&default, &companion] {
        c1_existence(&mut h, runs);
        c2_monotonicity(&mut h, runs);
        c3_bounds(&mut h, runs);
        let projections = c4_projection(&mut h, runs);
        let ground = runs.sols[0]
            .as_ref()
            .ok()
            .map(|(s, _)| s.field.mesh_arc().clone());
        let s_p = ground.map_or(f64::NAN, |m| s_p_on(m, &runs.params));
        c5_fibering(&mut h, runs, s_p);
        c6_dominance(&mut h, runs, &projections);
        c7_coercivity(&mut h, runs);
        c8_gluing(&mut h, runs);
    }
    c9_b_limit(
        &mut h,
        &[1e-1, 1e-2, 1e-3, 0.0],
        &settings(CELLS),
        "b in {1e-1,1e-2,1e-3}",
    );
    let mut tight = settings(CELLS);
    tight.outer.diameter_tol = 1e-7;
    c9_b_limit(
        &mut h,
        &[2e-6, 2e-7, 2e-8, 0.0],
        &tight,
        "b in {2e-6,2e-7,2e-8}",
    );
    c10_pohozaev(&mut h, 2.0 * R);
    truncation_note(R);
    c11_hygiene(&mut h, &companion);
    println!(
        "acceptance: {} unexpected failures, {} failures from an empty nodal Nehari set, {:.1}s",
        h.failures,
        h.infeasible,
        start.elapsed().as_secs_f64()
    );
    if h.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
