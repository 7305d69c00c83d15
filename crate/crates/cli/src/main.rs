use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nodal_kirchhoff::archive::{
    blimit_records, bound_records, energy_records, ensure_writable, junction_records, RunArchive,
    StageStatus, VerdictSummary,
};
use nodal_kirchhoff::config::{load_config, RunConfig};
use nodal_kirchhoff::discretization::{
    write_annular_profile, write_glued_profile, NodalCandidate, ProblemParams, RadialMesh,
    RadiiVector,
};
use nodal_kirchhoff::experiments::{
    check_bounds, pohozaev_refinement, run_b_limit, run_monotonicity, BoundRun,
};
use nodal_kirchhoff::functional::{estimate_s_q, DiscreteProblem};
use nodal_kirchhoff::nehari::{coupled_nehari_solve, dominance_certificates};
use nodal_kirchhoff::oracles::{nehari_multistart_oracle, OracleComparison};
use nodal_kirchhoff::outer::{solve, Solution};
use nodal_kirchhoff::Error;

#[derive(Parser)]
#[command(
    name = "nodal-kirchhoff",
    version,
    about = "Radial nodal solutions of Kirchhoff-type equations"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Archive directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `solver.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace an existing archive directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the prescribed number of sign changes and glue.
    Solve {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Check one of the structural results numerically.
    Verify {
        #[command(subcommand)]
        what: Verify,
    },
    /// Follow the solution as b decreases to 0.
    SweepB {
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated, strictly decreasing.
        #[arg(long, value_delimiter = ',')]
        blist: Option<Vec<f64>>,
    },
    /// Estimate the embedding constant S_q on the ball.
    SpEstimate {
        /// Exponent (defaults to p).
        #[arg(long)]
        q: Option<f64>,
    },
    /// Project a sine-bump candidate onto the Nehari set and report.
    NehariCheck {
        #[arg(long)]
        k: Option<usize>,
        /// Cross-check the scalings against the multistart oracle.
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Subcommand)]
enum Verify {
    Monotonicity {
        #[arg(long)]
        kmax: Option<usize>,
    },
    Pohozaev,
    Bounds {
        #[arg(long)]
        kmax: Option<usize>,
    },
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Parse(_)
            | Error::InvalidParams(_)
            | Error::OutputExists(_) => Failure::Config(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn solution_profiles(prefix: &str, sol: &Solution) -> Vec<(String, String)> {
    let cand = &sol.outer.inner.minimizer;
    let mut out: Vec<(String, String)> = cand
        .components()
        .iter()
        .map(|c| {
            (
                format!("{prefix}annulus_{}.csv", c.index() + 1),
                write_annular_profile(cand.mesh(), c),
            )
        })
        .collect();
    out.push((
        format!("{prefix}glued.csv"),
        write_glued_profile(&sol.field),
    ));
    out
}

fn solution_verdicts(summary: &mut VerdictSummary, sol: &Solution) {
    let r = &sol.report;
    let k = r.k;
    summary.verdict(
        format!("k={k} sign changes"),
        r.sign_changes == k,
        format!("{} sign changes", r.sign_changes),
    );
    let residual = r
        .refined
        .as_ref()
        .map_or(r.glued_relative_residual, |f| f.relative_residual);
    summary.verdict(
        format!("k={k} weak residual"),
        residual <= 1e-6,
        format!("relative dual norm {residual:.3e}"),
    );
    summary.verdict(
        format!("k={k} Nehari margins"),
        r.margins.iter().all(|&m| m > 0.0),
        format!("{:?}", r.margins),
    );
}

struct Run {
    config: RunConfig,
    params: ProblemParams,
    out: PathBuf,
    force: bool,
}

fn prepare(common: &Common, command: &str) -> Result<Run, Failure> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.solver.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.output.directory.clone())
        .unwrap_or_else(|| Path::new("runs").join(command));
    ensure_writable(&out, common.force)?;
    let params = config.params()?;
    Ok(Run {
        config,
        params,
        out,
        force: common.force,
    })
}

fn execute(cli: Cli) -> Result<VerdictSummary, Failure> {
    let name = match &cli.command {
        Command::Solve { .. } => "solve",
        Command::Verify {
            what: Verify::Monotonicity { .. },
        } => "verify-monotonicity",
        Command::Verify {
            what: Verify::Pohozaev,
        } => "verify-pohozaev",
        Command::Verify {
            what: Verify::Bounds { .. },
        } => "verify-bounds",
        Command::SweepB { .. } => "sweep-b",
        Command::SpEstimate { .. } => "sp-estimate",
        Command::NehariCheck { .. } => "nehari-check",
    };
    let mut run = prepare(&cli.common, name)?;
    let settings = run.config.settings();
    let mut summary = VerdictSummary::new(name, run.config.solver.seed);
    let mut archive_parts: Vec<(String, String)> = Vec::new();
    let mut reports = Vec::new();
    let mut tables = nodal_kirchhoff::archive::Tables::default();
    let mut documents = Vec::new();

    match cli.command {
        Command::Solve { k } => {
            if let Some(k) = k {
                run.config.problem.k = k;
                run.params = run.params.with_k(k)?;
            }
            match solve(&run.params, &settings) {
                Ok(sol) => {
                    summary.stage("solve", StageStatus::Ok, None);
                    solution_verdicts(&mut summary, &sol);
                    archive_parts.extend(solution_profiles("profiles/", &sol));
                    tables.junctions = Some(junction_records(sol.report.k, &sol.report.jumps));
                    reports.push(sol.report);
                }
                Err(e) => summary.stage("solve", StageStatus::Failed, Some(e.to_string())),
            }
        }
        Command::Verify {
            what: Verify::Monotonicity { kmax },
        } => {
            let k_max = kmax.unwrap_or(run.config.study.k_max);
            run.config.study.k_max = k_max;
            let (table, sols) = run_monotonicity(&run.params, k_max, &settings)?;
            for (row, sol) in table.rows.iter().zip(&sols) {
                match sol {
                    Some(s) => {
                        summary.stage(format!("solve k={}", row.k), StageStatus::Ok, None);
                        archive_parts
                            .extend(solution_profiles(&format!("profiles/k{}/", row.k), s));
                        reports.push(s.report.clone());
                    }
                    None => summary.stage(
                        format!("solve k={}", row.k),
                        StageStatus::Failed,
                        row.error.clone(),
                    ),
                }
            }
            for c in table.pairwise.iter() {
                summary.verdict(
                    format!("I(u_{}) > I(u_{})", c.k + 1, c.k),
                    c.verdict.passed(),
                    format!("{:?} margin {:?}", c.verdict, c.margin),
                );
            }
            for c in table.ground_multiple.iter().filter(|c| c.k > 0) {
                summary.verdict(
                    format!("I(u_{}) > {} I(u_0)", c.k, c.k + 1),
                    c.verdict.passed(),
                    format!("{:?} margin {:?}", c.verdict, c.margin),
                );
            }
            tables.energies = Some(energy_records(&table));
            documents.push(("monotonicity.json".to_string(), json!(table)));
        }
        Command::Verify {
            what: Verify::Pohozaev,
        } => {
            let levels = run.config.mesh.refinement_levels.max(1);
            match pohozaev_refinement(&run.params, &settings, levels) {
                Ok(reports_p) => {
                    summary.stage("pohozaev", StageStatus::Ok, None);
                    let (_, finest) = reports_p.last().expect("at least one level");
                    summary.verdict(
                        "Pohozaev residual",
                        finest.relative_residual <= 1e-2,
                        format!("relative residual {:.3e}", finest.relative_residual),
                    );
                    if reports_p.len() > 1 {
                        let shrinking = reports_p
                            .windows(2)
                            .all(|w| w[1].1.relative_residual < w[0].1.relative_residual);
                        summary.verdict(
                            "Pohozaev residual shrinks under refinement",
                            shrinking,
                            "",
                        );
                    }
                    summary.verdict(
                        "N_0 membership",
                        reports_p.iter().all(|(_, r)| r.membership),
                        format!(
                            "L = {:.6e} < {:.6e}",
                            finest.lp_mass, finest.membership_bound
                        ),
                    );
                    documents.push(("pohozaev.json".to_string(), json!(reports_p)));
                }
                Err(e) => summary.stage("pohozaev", StageStatus::Failed, Some(e.to_string())),
            }
        }
        Command::Verify {
            what: Verify::Bounds { kmax },
        } => {
            let k_max = kmax.unwrap_or(run.config.study.k_max);
            run.config.study.k_max = k_max;
            let (_, sols) = run_monotonicity(&run.params, k_max, &settings)?;
            let Some(Some(ground)) = sols.first() else {
                summary.stage(
                    "solve k=0",
                    StageStatus::Failed,
                    Some("ground state unavailable".into()),
                );
                return finish(run, summary, archive_parts, reports, tables, documents);
            };
            let s_p = estimate_s_q(
                ground.field.mesh_arc().clone(),
                &run.params,
                run.params.p(),
                run.config.sq_options(),
            )?;
            let runs: Vec<BoundRun> = sols
                .iter()
                .enumerate()
                .filter_map(|(k, s)| {
                    if s.is_none() {
                        summary.stage(format!("solve k={k}"), StageStatus::Failed, None);
                    }
                    s.as_ref().map(|s| BoundRun::from_solution(s, &run.params))
                })
                .collect();
            let strict = check_bounds(&runs, s_p.value, run.params.p(), run.config.study.delta);
            let loose = check_bounds(&runs, s_p.value, run.params.p(), 0.05);
            summary.verdict(
                format!("bounds at delta={}", strict.delta),
                strict.all_pass(),
                "",
            );
            summary.verdict("bounds at delta=0.05", loose.all_pass(), "");
            let mut rows = bound_records(&strict);
            rows.extend(bound_records(&loose));
            tables.bounds = Some(rows);
            documents.push(("sp.json".to_string(), json!({ "q": s_p.q, "value": s_p.value, "restarts_agreement": s_p.restarts_agreement })));
        }
        Command::SweepB { k, blist } => {
            let k = k.unwrap_or(run.config.problem.k);
            if let Some(b) = blist {
                run.config.study.b_list = b;
            }
            match run_b_limit(&run.params, k, &run.config.study.b_list, &settings) {
                Ok(study) => {
                    summary.stage("sweep-b", StageStatus::Ok, None);
                    summary.verdict(
                        "distances decreasing",
                        study.distances_decreasing,
                        format!("{:?}", study.distance_ratios),
                    );
                    summary.verdict("sign changes constant", study.sign_changes_constant, "");
                    summary.verdict("energies decreasing", study.energies_decreasing, "");
                    for r in study.rows.iter().filter(|r| r.error.is_some()) {
                        summary.stage(
                            format!("solve b={}", r.b),
                            StageStatus::Failed,
                            r.error.clone(),
                        );
                    }
                    tables.blimit = Some(blimit_records(&study));
                    documents.push(("blimit.json".to_string(), json!(study)));
                }
                Err(e) => summary.stage("sweep-b", StageStatus::Failed, Some(e.to_string())),
            }
        }
        Command::SpEstimate { q } => {
            let q = q.unwrap_or(run.params.p());
            let radii = RadiiVector::equipartition(0, run.params.radius())?;
            let mesh = Arc::new(RadialMesh::build(
                &radii,
                run.config.mesh.cells_per_annulus,
                run.config.mesh.grading,
            )?);
            let s = estimate_s_q(mesh, &run.params, q, run.config.sq_options())?;
            summary.stage("sp-estimate", StageStatus::Ok, None);
            summary.verdict(
                "restarts agree",
                s.restarts_agreement <= 1e-6,
                format!(
                    "S_{q} = {:.12e}, spread {:.3e}",
                    s.value, s.restarts_agreement
                ),
            );
            println!("S_{q} = {:.12e}", s.value);
            documents.push(("sp.json".to_string(), json!({ "q": s.q, "value": s.value, "iterations": s.iterations, "restarts_agreement": s.restarts_agreement })));
        }
        Command::NehariCheck { k, oracle } => {
            let k = k.unwrap_or(run.config.problem.k);
            let params = run.params.with_k(k)?;
            let radii = RadiiVector::equipartition(k, params.radius())?;
            let mesh = Arc::new(RadialMesh::build(
                &radii,
                run.config.mesh.cells_per_annulus,
                run.config.mesh.grading,
            )?);
            let cand = NodalCandidate::sine_bumps(mesh.clone());
            let problem = DiscreteProblem::new(params.clone(), mesh);
            let sums = problem.component_integrals(&cand)?.summaries();
            match coupled_nehari_solve(&problem, &cand, None, &settings.inner.nehari) {
                Ok(proj) => {
                    summary.stage("projection", StageStatus::Ok, None);
                    let dom = dominance_certificates(&sums, params.b(), params.p(), &proj.t, 1.0);
                    summary.verdict(
                        "scaling residuals",
                        proj.max_residual() <= 1e-10,
                        format!("{:.3e}", proj.max_residual()),
                    );
                    summary.verdict(
                        "margins positive",
                        proj.margins.iter().all(|&m| m > 0.0),
                        format!("{:?}", proj.margins),
                    );
                    summary.verdict(
                        "M~ row sums positive",
                        dom.m_tilde_positive,
                        format!("{:?}", dom.m_tilde_row_sums),
                    );
                    summary.verdict(
                        "N row sums negative",
                        dom.n_negative,
                        format!("{:?}", dom.n_row_sums),
                    );
                    let mut doc = json!({ "t": proj.t, "residuals": proj.residuals, "margins": proj.margins, "dominance": dom });
                    if oracle {
                        match nehari_multistart_oracle(&sums, params.b(), params.p(), 24) {
                            Ok(t) => {
                                let cmp: Vec<OracleComparison> = proj
                                    .t
                                    .iter()
                                    .zip(&t)
                                    .enumerate()
                                    .map(|(i, (a, b))| {
                                        OracleComparison::new(format!("t_{}", i + 1), *a, *b, 1e-8)
                                    })
                                    .collect();
                                summary.verdict(
                                    "oracle agreement",
                                    cmp.iter().all(|c| c.pass),
                                    format!("{cmp:?}"),
                                );
                                doc["oracle"] = json!(cmp);
                            }
                            Err(e) => {
                                summary.stage("oracle", StageStatus::Failed, Some(e.to_string()))
                            }
                        }
                    }
                    println!("t = {:?}", proj.t);
                    documents.push(("nehari.json".to_string(), doc));
                }
                Err(e) => summary.stage("projection", StageStatus::Failed, Some(e.to_string())),
            }
        }
    }
    archive_parts.sort();
    finish(run, summary, archive_parts, reports, tables, documents)
}

fn finish(
    run: Run,
    summary: VerdictSummary,
    profiles: Vec<(String, String)>,
    reports: Vec<nodal_kirchhoff::outer::SolveReport>,
    tables: nodal_kirchhoff::archive::Tables,
    documents: Vec<(String, serde_json::Value)>,
) -> Result<VerdictSummary, Failure> {
    let mut archive = RunArchive::new(run.config, summary);
    archive.profiles = profiles;
    archive.reports = reports;
    archive.tables = tables;
    archive.documents = documents;
    let dir = archive.write(&run.out, run.force)?;
    log::info!("archive written to {}", dir.display());
    Ok(archive.summary)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            for s in summary
                .stages
                .iter()
                .filter(|s| s.status == StageStatus::Failed)
            {
                eprintln!(
                    "stage {} failed: {}",
                    s.name,
                    s.message.as_deref().unwrap_or("")
                );
            }
            for v in &summary.verdicts {
                println!(
                    "{} {}: {}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.name,
                    v.detail
                );
            }
            if summary.any_failed_stage() {
                ExitCode::from(2)
            } else if !summary.all_pass() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
