//! Run archives: a directory holding the config snapshot, profiles, reports,
//! study tables and a verdict summary, written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{BoundsRecord, LimitStudy, MonotonicityTable};
use crate::outer::{JunctionJump, SolveReport};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub verdicts: Vec<VerdictRecord>,
}

impl VerdictSummary {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            seed,
            stages: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn stage(&mut self, name: impl Into<String>, status: StageStatus, message: Option<String>) {
        self.stages.push(StageRecord {
            name: name.into(),
            status,
            message,
        });
    }

    pub fn verdict(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(VerdictRecord {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn any_failed_stage(&self) -> bool {
        self.stages.iter().any(|s| s.status == StageStatus::Failed)
    }
}

/// 17 significant digits; reparses to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Parse(format!("{what}: not a number: {s:?}")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_num(s, what).map(Some)
    }
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Parse(format!("{what}: not an integer: {s:?}")))
}

/// A CSV row type with a fixed header.
pub trait TableRow: Sized {
    const HEADER: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
    fn from_cells(cells: &[&str]) -> Result<Self>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub k: usize,
    pub energy: Option<f64>,
    /// `I(u_k) - I(u_{k-1})`; empty for `k = 0`.
    pub pairwise_margin: Option<f64>,
    /// `I(u_k) - (k+1) I(u_0)`; empty for `k = 0`.
    pub ground_margin: Option<f64>,
}

impl TableRow for EnergyRecord {
    const HEADER: &'static [&'static str] = &["k", "energy", "pairwise_margin", "ground_margin"];
    fn cells(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            fmt_opt(self.energy),
            fmt_opt(self.pairwise_margin),
            fmt_opt(self.ground_margin),
        ]
    }
    fn from_cells(c: &[&str]) -> Result<Self> {
        Ok(Self {
            k: parse_usize(c[0], "k")?,
            energy: parse_opt(c[1], "energy")?,
            pairwise_margin: parse_opt(c[2], "pairwise_margin")?,
            ground_margin: parse_opt(c[3], "ground_margin")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionRecord {
    pub k: usize,
    /// 1-based junction index.
    pub index: usize,
    pub radius: f64,
    pub left: f64,
    pub right: f64,
    pub jump: f64,
}

impl TableRow for JunctionRecord {
    const HEADER: &'static [&'static str] = &["k", "index", "radius", "left", "right", "jump"];
    fn cells(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.index.to_string(),
            fmt_num(self.radius),
            fmt_num(self.left),
            fmt_num(self.right),
            fmt_num(self.jump),
        ]
    }
    fn from_cells(c: &[&str]) -> Result<Self> {
        Ok(Self {
            k: parse_usize(c[0], "k")?,
            index: parse_usize(c[1], "index")?,
            radius: parse_num(c[2], "radius")?,
            left: parse_num(c[3], "left")?,
            right: parse_num(c[4], "right")?,
            jump: parse_num(c[5], "jump")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub delta: f64,
    pub k: usize,
    /// `norm`, `alpha` or `strauss`.
    pub quantity: String,
    pub component: Option<usize>,
    pub value: f64,
    pub floor: f64,
    pub pass: bool,
}

impl TableRow for BoundRecord {
    const HEADER: &'static [&'static str] = &[
        "delta",
        "k",
        "quantity",
        "component",
        "value",
        "floor",
        "pass",
    ];
    fn cells(&self) -> Vec<String> {
        vec![
            fmt_num(self.delta),
            self.k.to_string(),
            self.quantity.clone(),
            self.component.map(|c| c.to_string()).unwrap_or_default(),
            fmt_num(self.value),
            fmt_num(self.floor),
            self.pass.to_string(),
        ]
    }
    fn from_cells(c: &[&str]) -> Result<Self> {
        Ok(Self {
            delta: parse_num(c[0], "delta")?,
            k: parse_usize(c[1], "k")?,
            quantity: c[2].to_string(),
            component: if c[3].is_empty() {
                None
            } else {
                Some(parse_usize(c[3], "component")?)
            },
            value: parse_num(c[4], "value")?,
            floor: parse_num(c[5], "floor")?,
            pass: c[6]
                .parse()
                .map_err(|_| Error::Parse(format!("pass: not a boolean: {:?}", c[6])))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlimitRecord {
    pub k: usize,
    pub b: f64,
    pub energy: Option<f64>,
    pub distance: Option<f64>,
    pub sign_changes: Option<usize>,
    pub radii: Vec<f64>,
}

impl TableRow for BlimitRecord {
    const HEADER: &'static [&'static str] =
        &["k", "b", "energy", "distance", "sign_changes", "radii"];
    fn cells(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            fmt_num(self.b),
            fmt_opt(self.energy),
            fmt_opt(self.distance),
            self.sign_changes.map(|s| s.to_string()).unwrap_or_default(),
            self.radii
                .iter()
                .map(|&r| fmt_num(r))
                .collect::<Vec<_>>()
                .join(";"),
        ]
    }
    fn from_cells(c: &[&str]) -> Result<Self> {
        Ok(Self {
            k: parse_usize(c[0], "k")?,
            b: parse_num(c[1], "b")?,
            energy: parse_opt(c[2], "energy")?,
            distance: parse_opt(c[3], "distance")?,
            sign_changes: if c[4].is_empty() {
                None
            } else {
                Some(parse_usize(c[4], "sign_changes")?)
            },
            radii: if c[5].is_empty() {
                Vec::new()
            } else {
                c[5].split(';')
                    .map(|r| parse_num(r, "radii"))
                    .collect::<Result<_>>()?
            },
        })
    }
}

pub fn write_table<R: TableRow>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(R::HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.cells()).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_table<R: TableRow>(text: &str) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "unexpected header {header:?}, expected {:?}",
            R::HEADER
        )));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let cells: Vec<&str> = rec.iter().collect();
            R::from_cells(&cells)
        })
        .collect()
}

/// Study tables; `None` marks a stage that did not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub energies: Option<Vec<EnergyRecord>>,
    pub junctions: Option<Vec<JunctionRecord>>,
    pub bounds: Option<Vec<BoundRecord>>,
    pub blimit: Option<Vec<BlimitRecord>>,
}

pub fn energy_records(table: &MonotonicityTable) -> Vec<EnergyRecord> {
    table
        .rows
        .iter()
        .map(|r| EnergyRecord {
            k: r.k,
            energy: r.energy,
            pairwise_margin: table
                .pairwise
                .iter()
                .find(|c| c.k + 1 == r.k)
                .and_then(|c| c.margin),
            ground_margin: table
                .ground_multiple
                .iter()
                .find(|c| c.k == r.k)
                .and_then(|c| c.margin),
        })
        .collect()
}

pub fn junction_records(k: usize, jumps: &[JunctionJump]) -> Vec<JunctionRecord> {
    jumps
        .iter()
        .enumerate()
        .map(|(i, j)| JunctionRecord {
            k,
            index: i + 1,
            radius: j.radius,
            left: j.left,
            right: j.right,
            jump: j.jump,
        })
        .collect()
}

pub fn bound_records(rec: &BoundsRecord) -> Vec<BoundRecord> {
    let main = rec.rows.iter().map(|r| BoundRecord {
        delta: rec.delta,
        k: r.k,
        quantity: if r.component.is_some() {
            "norm"
        } else {
            "alpha"
        }
        .into(),
        component: r.component,
        value: r.value,
        floor: r.floor,
        pass: r.pass,
    });
    let strauss = rec.strauss_rows.iter().map(|r| BoundRecord {
        delta: rec.delta,
        k: r.k,
        quantity: "strauss".into(),
        component: None,
        value: r.value,
        floor: r.floor,
        pass: r.pass,
    });
    main.chain(strauss).collect()
}

pub fn blimit_records(study: &LimitStudy) -> Vec<BlimitRecord> {
    study
        .rows
        .iter()
        .map(|r| BlimitRecord {
            k: study.k,
            b: r.b,
            energy: r.energy,
            distance: r.distance,
            sign_changes: r.sign_changes,
            radii: r.radii.clone().unwrap_or_default(),
        })
        .collect()
}

const TABLE_FILES: [&str; 4] = ["energies.csv", "junctions.csv", "bounds.csv", "blimit.csv"];

/// Writes each table (headers only when its stage did not run) and returns
/// one notice per skipped stage.
pub fn export_tables(tables: &Tables, dir: &Path) -> Result<Vec<String>> {
    let mut notices = Vec::new();
    let mut put = |name: &str, text: Result<String>, present: bool| -> Result<()> {
        if !present {
            notices.push(format!("{name}: stage not run, header only"));
        }
        fs::write(dir.join(name), text?)?;
        Ok(())
    };
    put(
        TABLE_FILES[0],
        write_table(tables.energies.as_deref().unwrap_or_default()),
        tables.energies.is_some(),
    )?;
    put(
        TABLE_FILES[1],
        write_table(tables.junctions.as_deref().unwrap_or_default()),
        tables.junctions.is_some(),
    )?;
    put(
        TABLE_FILES[2],
        write_table(tables.bounds.as_deref().unwrap_or_default()),
        tables.bounds.is_some(),
    )?;
    put(
        TABLE_FILES[3],
        write_table(tables.blimit.as_deref().unwrap_or_default()),
        tables.blimit.is_some(),
    )?;
    Ok(notices)
}

/// Reads the tables back; a header-only file reloads as an empty table.
pub fn load_tables(dir: &Path) -> Result<Tables> {
    fn one<R: TableRow>(dir: &Path, name: &str) -> Result<Option<Vec<R>>> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        read_table(&fs::read_to_string(path)?).map(Some)
    }
    Ok(Tables {
        energies: one(dir, TABLE_FILES[0])?,
        junctions: one(dir, TABLE_FILES[1])?,
        bounds: one(dir, TABLE_FILES[2])?,
        blimit: one(dir, TABLE_FILES[3])?,
    })
}

#[derive(Debug, Clone)]
pub struct RunArchive {
    pub config: RunConfig,
    pub summary: VerdictSummary,
    pub reports: Vec<SolveReport>,
    /// Relative path and contents of each profile file.
    pub profiles: Vec<(String, String)>,
    pub tables: Tables,
    /// Further JSON documents keyed by file name.
    pub documents: Vec<(String, serde_json::Value)>,
}

impl RunArchive {
    pub fn new(config: RunConfig, summary: VerdictSummary) -> Self {
        Self {
            config,
            summary,
            reports: Vec::new(),
            profiles: Vec::new(),
            tables: Tables::default(),
            documents: Vec::new(),
        }
    }

    fn wants(&self, format: &str) -> bool {
        self.config.output.formats.iter().any(|f| f == format)
    }

    fn write_contents(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("config.toml"), self.config.to_toml())?;
        fs::write(dir.join("summary.json"), json(&self.summary)?)?;
        if self.wants("json") {
            fs::write(dir.join("reports.json"), json(&self.reports)?)?;
            for (name, doc) in &self.documents {
                fs::write(dir.join(name), json(doc)?)?;
            }
        }
        for (name, text) in &self.profiles {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        if self.wants("csv") {
            for notice in export_tables(&self.tables, dir)? {
                log::info!("{notice}");
            }
        }
        Ok(())
    }

    /// Writes into a sibling temporary directory and renames it into place.
    /// An existing `dir` is replaced only with `force`.
    pub fn write(&self, dir: &Path, force: bool) -> Result<PathBuf> {
        ensure_writable(dir, force)?;
        let parent = match dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let name = dir
            .file_name()
            .ok_or_else(|| Error::Structure(format!("{} has no final component", dir.display())))?
            .to_string_lossy()
            .into_owned();
        let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp)?;
        if let Err(e) = self.write_contents(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&tmp, dir)?;
        Ok(dir.to_path_buf())
    }
}

/// Refuses an existing output directory unless `force` is set.
pub fn ensure_writable(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    Ok(())
}

fn json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_summary(dir: &Path) -> Result<VerdictSummary> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}
