use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nodal_kirchhoff::archive::{load_summary, load_tables};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nodal-kirchhoff"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const SMALL_B: &str = "[problem]\nb = 2e-6\n[mesh]\ncells_per_annulus = 16\n";

#[test]
fn bad_config_exits_three_and_names_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\np = 5.0\nradius = -1.0\n");
    let out = dir.path().join("out");
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("problem.p"), "{err}");
    assert!(err.contains("problem.radius"), "{err}");
    assert!(!out.exists());
}

#[test]
fn existing_directory_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_B);
    let out = dir.path().join("out");
    let args = [
        "solve",
        "--k",
        "0",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(run(&args).status.code(), Some(0));
    let o = run(&args);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(run(&forced).status.code(), Some(0));
}

#[test]
fn nodal_archive_has_every_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_B);
    let out = dir.path().join("k2");
    let o = run(&[
        "solve",
        "--k",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for name in [
        "annulus_1.csv",
        "annulus_2.csv",
        "annulus_3.csv",
        "glued.csv",
    ] {
        let text = fs::read_to_string(out.join("profiles").join(name)).unwrap();
        assert!(text.lines().count() > 16, "{name}");
    }
    for name in [
        "config.toml",
        "summary.json",
        "reports.json",
        "junctions.csv",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let summary = load_summary(&out).unwrap();
    assert!(summary.all_pass());
    let tables = load_tables(&out).unwrap();
    assert_eq!(tables.junctions.unwrap().len(), 2);
}

#[test]
fn same_seed_reproduces_archive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_B);
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "solve",
            "--k",
            "1",
            "--seed",
            "7",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        texts.push((
            fs::read(out.join("summary.json")).unwrap(),
            fs::read(out.join("reports.json")).unwrap(),
            fs::read(out.join("profiles/glued.csv")).unwrap(),
        ));
    }
    assert!(texts[0] == texts[1]);
}

#[test]
fn archived_config_reruns_to_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_B);
    let first = dir.path().join("first");
    let o = run(&[
        "solve",
        "--k",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let second = dir.path().join("second");
    let echoed = first.join("config.toml");
    let o = run(&[
        "solve",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(first.join("reports.json")).unwrap(),
        fs::read(second.join("reports.json")).unwrap()
    );
}

#[test]
fn infeasible_instance_exits_two_with_failed_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\ncells_per_annulus = 16\n");
    let out = dir.path().join("out");
    let o = run(&[
        "solve",
        "--k",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let summary = load_summary(&out).unwrap();
    assert!(summary.any_failed_stage());
}
