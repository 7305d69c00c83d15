//! Run configuration: a strict TOML schema with defaults, validated in one
//! pass so that every violation is reported together.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::discretization::{DomainMode, Grading, Potential, ProblemParams};
use crate::error::{Error, Result};
use crate::experiments::DEFAULT_B_LIST;
use crate::functional::SqOptions;
use crate::inner::{InnerOptions, MeshOptions};
use crate::nehari::NehariOptions;
use crate::outer::{OuterOptions, SolverSettings};

/// One rejected key: where, what was given, and what is required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigViolation {
    pub key: String,
    pub value: String,
    pub constraint: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}: {}", self.key, self.value, self.constraint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Constant(f64),
    /// Samples loaded from a two-column `r,V` file.
    Table {
        path: PathBuf,
        r: Vec<f64>,
        v: Vec<f64>,
    },
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Constant(v) => write!(f, "constant:{v}"),
            PotentialSpec::Table { path, .. } => write!(f, "table:{}", path.display()),
        }
    }
}

impl PotentialSpec {
    pub fn potential(&self) -> Result<Potential> {
        match self {
            PotentialSpec::Constant(v) => Ok(Potential::Constant(*v)),
            PotentialSpec::Table { r, v, .. } => Potential::table(r.clone(), v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub b: f64,
    pub p: f64,
    pub potential: PotentialSpec,
    pub radius: f64,
    pub mode: DomainMode,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshConfig {
    pub cells_per_annulus: usize,
    pub grading: Grading,
    pub refinement_levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub stagnation: f64,
    pub nehari_tol: f64,
    pub outer_diameter_tol: f64,
    pub gap_floor: f64,
    pub outer_max_evals: usize,
    pub restarts: usize,
    pub refine: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub k_max: usize,
    pub b_list: Vec<f64>,
    pub delta: f64,
    pub sp_restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub mesh: MeshConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let inner = InnerOptions::default();
        let outer = OuterOptions::default();
        Self {
            problem: ProblemConfig {
                b: 0.01,
                p: 3.0,
                potential: PotentialSpec::Constant(1.0),
                radius: 10.0,
                mode: DomainMode::Ball,
                k: 1,
            },
            mesh: MeshConfig {
                cells_per_annulus: 64,
                grading: Grading::Uniform,
                refinement_levels: 1,
            },
            solver: SolverConfig {
                inner_tol: inner.tol,
                inner_max_iters: inner.max_iters,
                stagnation: inner.stagnation,
                nehari_tol: inner.nehari.tol,
                outer_diameter_tol: outer.diameter_tol,
                gap_floor: outer.gap_floor,
                outer_max_evals: outer.max_evals,
                restarts: outer.restarts,
                refine: true,
                seed: 0,
            },
            output: OutputConfig {
                directory: None,
                formats: vec!["csv".into(), "json".into()],
            },
            study: StudyConfig {
                k_max: 2,
                b_list: DEFAULT_B_LIST.to_vec(),
                delta: 0.02,
                sp_restarts: 5,
            },
        }
    }
}

const FORMATS: [&str; 2] = ["csv", "json"];

fn grading_text(g: Grading) -> String {
    match g {
        Grading::Uniform => "uniform".into(),
        Grading::Geometric { ratio } => format!("geometric:{ratio}"),
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<ProblemParams> {
        let p = &self.problem;
        ProblemParams::new(p.b, p.p, p.potential.potential()?, p.radius, p.k, p.mode)
    }

    pub fn settings(&self) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            mesh: MeshOptions {
                cells_per_annulus: self.mesh.cells_per_annulus,
                grading: self.mesh.grading,
            },
            inner: InnerOptions {
                tol: s.inner_tol,
                max_iters: s.inner_max_iters,
                stagnation: s.stagnation,
                nehari: NehariOptions {
                    tol: s.nehari_tol,
                    ..NehariOptions::default()
                },
                ..InnerOptions::default()
            },
            outer: OuterOptions {
                restarts: s.restarts,
                diameter_tol: s.outer_diameter_tol,
                gap_floor: s.gap_floor,
                max_evals: s.outer_max_evals,
                seed: s.seed,
                ..OuterOptions::default()
            },
            refine: s.refine,
        }
    }

    pub fn sq_options(&self) -> SqOptions {
        SqOptions {
            restarts: self.study.sp_restarts,
            seed: self.solver.seed,
            ..SqOptions::default()
        }
    }

    /// Full TOML form with every default written out.
    pub fn to_toml(&self) -> String {
        let mut problem = Table::new();
        problem.insert("b".into(), Value::Float(self.problem.b));
        problem.insert("p".into(), Value::Float(self.problem.p));
        problem.insert(
            "potential".into(),
            Value::String(self.problem.potential.to_string()),
        );
        problem.insert("radius".into(), Value::Float(self.problem.radius));
        problem.insert("mode".into(), Value::String(self.problem.mode.to_string()));
        problem.insert("k".into(), Value::Integer(self.problem.k as i64));

        let mut mesh = Table::new();
        mesh.insert(
            "cells_per_annulus".into(),
            Value::Integer(self.mesh.cells_per_annulus as i64),
        );
        mesh.insert(
            "grading".into(),
            Value::String(grading_text(self.mesh.grading)),
        );
        mesh.insert(
            "refinement_levels".into(),
            Value::Integer(self.mesh.refinement_levels as i64),
        );

        let s = &self.solver;
        let mut solver = Table::new();
        solver.insert("inner_tol".into(), Value::Float(s.inner_tol));
        solver.insert(
            "inner_max_iters".into(),
            Value::Integer(s.inner_max_iters as i64),
        );
        solver.insert("stagnation".into(), Value::Float(s.stagnation));
        solver.insert("nehari_tol".into(), Value::Float(s.nehari_tol));
        solver.insert(
            "outer_diameter_tol".into(),
            Value::Float(s.outer_diameter_tol),
        );
        solver.insert("gap_floor".into(), Value::Float(s.gap_floor));
        solver.insert(
            "outer_max_evals".into(),
            Value::Integer(s.outer_max_evals as i64),
        );
        solver.insert("restarts".into(), Value::Integer(s.restarts as i64));
        solver.insert("refine".into(), Value::Boolean(s.refine));
        solver.insert("seed".into(), Value::Integer(s.seed as i64));

        let mut output = Table::new();
        if let Some(d) = &self.output.directory {
            output.insert("directory".into(), Value::String(d.display().to_string()));
        }
        output.insert(
            "formats".into(),
            Value::Array(
                self.output
                    .formats
                    .iter()
                    .cloned()
                    .map(Value::String)
                    .collect(),
            ),
        );

        let mut study = Table::new();
        study.insert("k_max".into(), Value::Integer(self.study.k_max as i64));
        study.insert(
            "b_list".into(),
            Value::Array(self.study.b_list.iter().map(|&b| Value::Float(b)).collect()),
        );
        study.insert("delta".into(), Value::Float(self.study.delta));
        study.insert(
            "sp_restarts".into(),
            Value::Integer(self.study.sp_restarts as i64),
        );

        let mut root = Table::new();
        root.insert("problem".into(), Value::Table(problem));
        root.insert("mesh".into(), Value::Table(mesh));
        root.insert("solver".into(), Value::Table(solver));
        root.insert("output".into(), Value::Table(output));
        root.insert("study".into(), Value::Table(study));
        toml::to_string(&root).expect("plain tables always serialize")
    }
}

/// Reads one section, recording type errors and unknown keys.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    allowed: &'static [&'static str],
    errors: &'a mut Vec<ConfigViolation>,
}

impl Section<'_> {
    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn bad(&mut self, k: &str, value: &Value, constraint: impl Into<String>) {
        self.errors.push(ConfigViolation {
            key: self.key(k),
            value: value.to_string(),
            constraint: constraint.into(),
        });
    }

    fn check_unknown(&mut self) {
        let Some(t) = self.table else { return };
        for (k, v) in t {
            if !self.allowed.contains(&k.as_str()) {
                self.errors.push(ConfigViolation {
                    key: format!("{}.{k}", self.name),
                    value: v.to_string(),
                    constraint: format!("unknown key; allowed: {}", self.allowed.join(", ")),
                });
            }
        }
    }

    fn raw(&self, k: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn float(&mut self, k: &str, default: f64) -> f64 {
        match self.raw(k).cloned() {
            None => default,
            Some(Value::Float(x)) => x,
            Some(Value::Integer(i)) => i as f64,
            Some(v) => {
                self.bad(k, &v, "must be a number");
                default
            }
        }
    }

    fn uint(&mut self, k: &str, default: usize) -> usize {
        match self.raw(k).cloned() {
            None => default,
            Some(Value::Integer(i)) if i >= 0 => i as usize,
            Some(v) => {
                self.bad(k, &v, "must be a nonnegative integer");
                default
            }
        }
    }

    fn boolean(&mut self, k: &str, default: bool) -> bool {
        match self.raw(k).cloned() {
            None => default,
            Some(Value::Boolean(b)) => b,
            Some(v) => {
                self.bad(k, &v, "must be true or false");
                default
            }
        }
    }

    fn string(&mut self, k: &str) -> Option<String> {
        match self.raw(k).cloned() {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.bad(k, &v, "must be a string");
                None
            }
        }
    }

    fn positive(&mut self, k: &str, default: f64) -> f64 {
        let x = self.float(k, default);
        if !(x > 0.0 && x.is_finite()) {
            self.bad(k, &Value::Float(x), "must be positive and finite");
        }
        x
    }
}

fn table_of<'a>(
    root: &'a Table,
    name: &str,
    errors: &mut Vec<ConfigViolation>,
) -> Option<&'a Table> {
    match root.get(name) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(v) => {
            errors.push(ConfigViolation {
                key: name.into(),
                value: v.to_string(),
                constraint: "must be a table".into(),
            });
            None
        }
    }
}

fn read_potential_table(path: &Path) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let (mut r, mut v) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        // a leading non-numeric row is a header
        if line == 0 && rec.get(0).is_some_and(|s| s.parse::<f64>().is_err()) {
            continue;
        }
        let num = |j: usize| -> std::result::Result<f64, String> {
            rec.get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("row {}: expected two numbers r,V", line + 1))
        };
        r.push(num(0)?);
        v.push(num(1)?);
    }
    Ok((r, v))
}

/// Parses and validates `text`; relative table paths resolve against `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<RunConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let d = RunConfig::default();
    let mut errors = Vec::new();
    for k in root.keys() {
        if !["problem", "mesh", "solver", "output", "study"].contains(&k.as_str()) {
            errors.push(ConfigViolation {
                key: k.clone(),
                value: root[k].to_string(),
                constraint: "unknown section; allowed: problem, mesh, solver, output, study".into(),
            });
        }
    }

    let t = table_of(&root, "problem", &mut errors);
    let mut s = Section {
        name: "problem",
        table: t,
        allowed: &["b", "p", "potential", "radius", "mode", "k"],
        errors: &mut errors,
    };
    s.check_unknown();
    let b = s.float("b", d.problem.b);
    if !(b >= 0.0 && b.is_finite()) {
        s.bad("b", &Value::Float(b), "b must be nonnegative");
    }
    let p = s.float("p", d.problem.p);
    let radius = s.positive("radius", d.problem.radius);
    let k = s.uint("k", d.problem.k);
    let mode = match s.string("mode").as_deref() {
        None => d.problem.mode,
        Some("ball") => DomainMode::Ball,
        Some("r3-emulation") => DomainMode::R3Emulation,
        Some(other) => {
            s.bad(
                "mode",
                &Value::String(other.into()),
                "must be ball or r3-emulation",
            );
            d.problem.mode
        }
    };
    if !(p > 2.0 && p < 4.0) {
        s.bad("p", &Value::Float(p), "p must lie in (2,4)");
    } else if mode == DomainMode::R3Emulation && p <= 3.0 {
        s.bad(
            "p",
            &Value::Float(p),
            "mode = r3-emulation requires p in (3,4)",
        );
    }
    let potential = match s.string("potential") {
        None => d.problem.potential.clone(),
        Some(raw) => match raw.split_once(':') {
            Some(("constant", v)) => match v.trim().parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => PotentialSpec::Constant(x),
                _ => {
                    s.bad(
                        "potential",
                        &Value::String(raw.clone()),
                        "constant potential must be a positive number",
                    );
                    d.problem.potential.clone()
                }
            },
            Some(("table", file)) => {
                let path = PathBuf::from(file.trim());
                let full = match base {
                    Some(b) if path.is_relative() => b.join(&path),
                    _ => path.clone(),
                };
                match read_potential_table(&full).and_then(|(r, v)| {
                    Potential::table(r.clone(), v.clone())
                        .map_err(|e| e.to_string())
                        .and_then(|pot| {
                            if pot.lower_bound(radius) > 0.0 {
                                Ok((r, v))
                            } else {
                                Err("tabulated V must stay positive on [0, R]".into())
                            }
                        })
                }) {
                    Ok((r, v)) => PotentialSpec::Table { path, r, v },
                    Err(e) => {
                        s.bad("potential", &Value::String(raw.clone()), e);
                        d.problem.potential.clone()
                    }
                }
            }
            _ => {
                s.bad(
                    "potential",
                    &Value::String(raw.clone()),
                    "expected constant:<v> or table:<file>",
                );
                d.problem.potential.clone()
            }
        },
    };
    let problem = ProblemConfig {
        b,
        p,
        potential,
        radius,
        mode,
        k,
    };

    let t = table_of(&root, "mesh", &mut errors);
    let mut s = Section {
        name: "mesh",
        table: t,
        allowed: &["cells_per_annulus", "grading", "refinement_levels"],
        errors: &mut errors,
    };
    s.check_unknown();
    let cells = s.uint("cells_per_annulus", d.mesh.cells_per_annulus);
    if cells < 2 {
        s.bad(
            "cells_per_annulus",
            &Value::Integer(cells as i64),
            "must be at least 2",
        );
    }
    let grading = match s.string("grading") {
        None => d.mesh.grading,
        Some(g) if g == "uniform" => Grading::Uniform,
        Some(g) => match g
            .strip_prefix("geometric:")
            .map(|r| r.trim().parse::<f64>())
        {
            Some(Ok(ratio)) if ratio > 0.0 && ratio.is_finite() => Grading::Geometric { ratio },
            _ => {
                s.bad(
                    "grading",
                    &Value::String(g),
                    "expected uniform or geometric:<ratio> with ratio > 0",
                );
                d.mesh.grading
            }
        },
    };
    let refinement_levels = s.uint("refinement_levels", d.mesh.refinement_levels);
    if refinement_levels == 0 {
        s.bad(
            "refinement_levels",
            &Value::Integer(0),
            "must be at least 1",
        );
    }
    let mesh = MeshConfig {
        cells_per_annulus: cells,
        grading,
        refinement_levels,
    };

    let t = table_of(&root, "solver", &mut errors);
    let mut s = Section {
        name: "solver",
        table: t,
        allowed: &[
            "inner_tol",
            "inner_max_iters",
            "stagnation",
            "nehari_tol",
            "outer_diameter_tol",
            "gap_floor",
            "outer_max_evals",
            "restarts",
            "refine",
            "seed",
        ],
        errors: &mut errors,
    };
    s.check_unknown();
    let ds = d.solver;
    let solver = SolverConfig {
        inner_tol: s.positive("inner_tol", ds.inner_tol),
        inner_max_iters: s.uint("inner_max_iters", ds.inner_max_iters),
        stagnation: s.positive("stagnation", ds.stagnation),
        nehari_tol: s.positive("nehari_tol", ds.nehari_tol),
        outer_diameter_tol: s.positive("outer_diameter_tol", ds.outer_diameter_tol),
        gap_floor: s.positive("gap_floor", ds.gap_floor),
        outer_max_evals: s.uint("outer_max_evals", ds.outer_max_evals),
        restarts: s.uint("restarts", ds.restarts),
        refine: s.boolean("refine", ds.refine),
        seed: s.uint("seed", ds.seed as usize) as u64,
    };

    let t = table_of(&root, "output", &mut errors);
    let mut s = Section {
        name: "output",
        table: t,
        allowed: &["directory", "formats"],
        errors: &mut errors,
    };
    s.check_unknown();
    let directory = s.string("directory").map(PathBuf::from);
    let formats = match s.raw("formats").cloned() {
        None => d.output.formats.clone(),
        Some(Value::Array(a)) => {
            let mut out = Vec::new();
            for v in &a {
                match v.as_str() {
                    Some(f) if FORMATS.contains(&f) => out.push(f.to_string()),
                    _ => s.bad("formats", v, "each format must be csv or json"),
                }
            }
            out
        }
        Some(v) => {
            s.bad("formats", &v, "must be an array of strings");
            d.output.formats.clone()
        }
    };
    let output = OutputConfig { directory, formats };

    let t = table_of(&root, "study", &mut errors);
    let mut s = Section {
        name: "study",
        table: t,
        allowed: &["k_max", "b_list", "delta", "sp_restarts"],
        errors: &mut errors,
    };
    s.check_unknown();
    let k_max = s.uint("k_max", d.study.k_max);
    if k_max > 4 {
        s.bad("k_max", &Value::Integer(k_max as i64), "must not exceed 4");
    }
    let b_list = match s.raw("b_list").cloned() {
        None => d.study.b_list.clone(),
        Some(Value::Array(a)) => {
            let vals: Vec<Option<f64>> = a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Some(*x),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect();
            if vals.iter().any(Option::is_none) {
                s.bad(
                    "b_list",
                    &Value::Array(a.clone()),
                    "entries must be numbers",
                );
                Vec::new()
            } else {
                let v: Vec<f64> = vals.into_iter().flatten().collect();
                if v.iter().any(|&b| !(b >= 0.0)) || v.windows(2).any(|w| w[1] >= w[0]) {
                    s.bad(
                        "b_list",
                        &Value::Array(a),
                        "must be strictly decreasing and nonnegative",
                    );
                }
                v
            }
        }
        Some(v) => {
            s.bad("b_list", &v, "must be an array of numbers");
            Vec::new()
        }
    };
    let delta = s.float("delta", d.study.delta);
    if !(0.0..1.0).contains(&delta) {
        s.bad("delta", &Value::Float(delta), "must lie in [0,1)");
    }
    let sp_restarts = s.uint("sp_restarts", d.study.sp_restarts);
    if sp_restarts == 0 {
        s.bad("sp_restarts", &Value::Integer(0), "must be at least 1");
    }
    let study = StudyConfig {
        k_max,
        b_list,
        delta,
        sp_restarts,
    };

    if errors.is_empty() {
        Ok(RunConfig {
            problem,
            mesh,
            solver,
            output,
            study,
        })
    } else {
        Err(Error::Config(errors))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn violations(text: &str) -> Vec<ConfigViolation> {
        match parse_config(text, None) {
            Err(Error::Config(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("", None).unwrap(), RunConfig::default());
    }

    #[test]
    fn p_out_of_range() {
        let v = violations("[problem]\np = 4.5\n");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].key, "problem.p");
        assert!(v[0].constraint.contains("p must lie in (2,4)"));
    }

    #[test]
    fn emulation_needs_p_above_three() {
        let v = violations("[problem]\np = 2.5\nmode = \"r3-emulation\"\n");
        assert!(v[0].constraint.contains("(3,4)"));
    }

    #[test]
    fn all_violations_are_collected() {
        let v = violations(
            "[problem]\np = 5\nradius = -1\nfoo = 1\n[solver]\ninner_tol = 0\n[extra]\n",
        );
        let keys: Vec<&str> = v.iter().map(|x| x.key.as_str()).collect();
        for k in [
            "problem.p",
            "problem.radius",
            "problem.foo",
            "solver.inner_tol",
            "extra",
        ] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.problem.b = 0.1 + 0.2;
        c.mesh.grading = Grading::Geometric { ratio: 1.07 };
        c.output.directory = Some("out/run".into());
        c.study.b_list = vec![0.3, 1e-7, 0.0];
        assert_eq!(parse_config(&c.to_toml(), None).unwrap(), c);
    }
}
