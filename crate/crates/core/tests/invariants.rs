use std::sync::Arc;

use proptest::prelude::*;

use nodal_kirchhoff::archive::fmt_num;
use nodal_kirchhoff::config::{parse_config, RunConfig};
use nodal_kirchhoff::discretization::{
    AnnularField, Grading, NodalCandidate, ProblemParams, RadialMesh, RadiiVector,
};
use nodal_kirchhoff::functional::DiscreteProblem;
use nodal_kirchhoff::nehari::{
    b_threshold_base, coupled_nehari_solve_summaries, fiber_h, fiber_h_prime, ComponentSummary,
    NehariOptions,
};

/// Summaries consistent with an embedding constant `s_p` and meeting the
/// projection precondition `l^{2/p} >= n / (2 s_p)`.
fn admissible_summary(p: f64, s_p: f64) -> impl Strategy<Value = ComponentSummary> {
    (0.1f64..100.0, 0.5f64..1.0, 0.01f64..1.0).prop_map(move |(n, rho, frac)| {
        let ratio = rho / s_p;
        ComponentSummary {
            n,
            d: frac * n,
            l: (ratio * n).powf(p / 2.0),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fibering_derivative_changes_sign_once(
        p in 2.05f64..3.95,
        s in admissible_summary(3.0, 6.4),
        frac in prop::collection::vec(0.001f64..0.999, 8),
        over in prop::collection::vec(1.001f64..50.0, 8),
    ) {
        let big_t = s.threshold(p);
        for f in &frac {
            prop_assert!(fiber_h_prime(&s, p, f * big_t) < 0.0);
        }
        for o in &over {
            prop_assert!(fiber_h_prime(&s, p, o * big_t) > 0.0);
        }
    }

    #[test]
    fn threshold_value_negative_below_b_star(
        p in 2.1f64..3.9,
        s_p in 1.0f64..20.0,
        u in 0.0f64..0.999,
        seed in (0.1f64..100.0, 0.5f64..1.0, 0.01f64..1.0),
    ) {
        let (n, rho, frac) = seed;
        let s = ComponentSummary { n, d: frac * n, l: (rho / s_p * n).powf(p / 2.0) };
        let b = u * b_threshold_base(p, s_p);
        prop_assert!(fiber_h(&s, b, p, s.threshold(p)) < 0.0);
    }

    #[test]
    fn projection_solves_system_and_is_scale_covariant(
        sums in prop::collection::vec(admissible_summary(3.0, 6.4), 1..=3),
        u in 0.0f64..1.0,
        c in 0.2f64..5.0,
    ) {
        let p = 3.0;
        let b = u * b_threshold_base(p, 6.4) / sums.len() as f64 * 0.1;
        let opts = NehariOptions::default();
        let proj = coupled_nehari_solve_summaries(&sums, b, p, &opts);
        prop_assume!(proj.is_ok());
        let proj = proj.unwrap();
        prop_assert!(proj.max_residual() <= 1e-10);
        prop_assert!(proj.margins.iter().all(|&m| m > 0.0));
        let scaled: Vec<ComponentSummary> = sums.iter().map(|s| s.scaled(c, p)).collect();
        let again = coupled_nehari_solve_summaries(&scaled, b, p, &opts).unwrap();
        for (t, t2) in proj.t.iter().zip(&again.t) {
            prop_assert!((t2 * c - t).abs() <= 1e-9 * t);
        }
    }

    #[test]
    fn radii_must_increase(a in 0.1f64..5.0, gap in -1.0f64..1.0) {
        let r = RadiiVector::new(vec![a, a + gap], 10.0);
        prop_assert_eq!(r.is_ok(), gap > 0.0);
    }

    #[test]
    fn glued_energy_matches_component_sum(
        amps in prop::collection::vec(0.1f64..3.0, 1..=3),
        b in 0.0f64..0.5,
        cells in 4usize..20,
    ) {
        let k = amps.len() - 1;
        let params = ProblemParams::unit_ball(b, 3.0, 6.0, k).unwrap();
        let radii = RadiiVector::equipartition(k, 6.0).unwrap();
        let mesh = Arc::new(RadialMesh::build(&radii, cells, Grading::Uniform).unwrap());
        let cand = NodalCandidate::sine_bumps(mesh.clone()).scaled(&amps);
        let problem = DiscreteProblem::new(params, mesh);
        let e_parts = problem.component_integrals(&cand).unwrap().energy;
        let e_glued = problem.glued_energy(cand.glue().values());
        prop_assert!((e_parts - e_glued).abs() <= 1e-12 * e_parts.abs().max(1.0));
    }

    #[test]
    fn config_round_trips(
        b in 0.0f64..1.0,
        p in 2.01f64..3.99,
        radius in 0.5f64..50.0,
        k in 0usize..5,
        cells in 2usize..512,
        seed in any::<u32>(),
        ratio in 1.0f64..1.5,
    ) {
        let mut c = RunConfig::default();
        c.problem.b = b;
        c.problem.p = p;
        c.problem.radius = radius;
        c.problem.k = k;
        c.mesh.cells_per_annulus = cells;
        c.mesh.grading = Grading::Geometric { ratio };
        c.solver.seed = u64::from(seed);
        prop_assert_eq!(parse_config(&c.to_toml(), None).unwrap(), c);
    }

    #[test]
    fn emitted_numbers_reparse_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn component_values_vanish_at_their_edges(cells in 2usize..30, r1 in 0.5f64..9.5) {
        let radii = RadiiVector::new(vec![r1], 10.0).unwrap();
        let mesh = RadialMesh::build(&radii, cells, Grading::Uniform).unwrap();
        let outer = AnnularField::from_fn(&mesh, 1, |t| (t - r1) * (10.0 - t) + 1.0);
        let v = outer.values();
        prop_assert_eq!(v[0], 0.0);
        prop_assert_eq!(v[v.len() - 1], 0.0);
    }
}
