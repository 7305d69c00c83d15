use std::path::Path;

use nodal_kirchhoff::config::{load_config, parse_config};
use nodal_kirchhoff::Error;

fn golden(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden")
            .join(name),
    )
    .unwrap()
}

#[test]
fn minimal_config_echo_matches_golden() {
    let cfg = parse_config(&golden("minimal.toml"), None).unwrap();
    assert_eq!(cfg.to_toml(), golden("minimal_echo.toml"));
    // the echo is itself a complete config describing the same run
    assert_eq!(parse_config(&cfg.to_toml(), None).unwrap(), cfg);
}

#[test]
fn every_violation_is_reported() {
    let text = "[problem]\np = 4.5\nb = -1.0\nradius = 10.0\n[mesh]\ncells = 3\n";
    let Err(Error::Config(v)) = parse_config(text, None) else {
        panic!("expected a config error");
    };
    let keys: Vec<&str> = v.iter().map(|c| c.key.as_str()).collect();
    assert!(keys.contains(&"problem.p"), "{keys:?}");
    assert!(keys.contains(&"problem.b"), "{keys:?}");
    assert!(keys.contains(&"mesh.cells"), "{keys:?}");
}

#[test]
fn emulation_mode_needs_p_above_three() {
    let text = "[problem]\np = 2.8\nmode = \"r3-emulation\"\n";
    let Err(Error::Config(v)) = parse_config(text, None) else {
        panic!("expected a config error");
    };
    assert!(v.iter().any(|c| c.to_string().contains("(3,4)")), "{v:?}");
}

#[test]
fn potential_table_is_read_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.csv"), "r,V\n0,1.0\n5,1.5\n10,2.0\n").unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[problem]\npotential = \"table:v.csv\"\n").unwrap();
    let cfg = load_config(&path).unwrap();
    let params = cfg.params().unwrap();
    assert!((params.potential().value(2.5) - 1.25).abs() < 1e-15);
    assert_eq!(params.v0(), 1.0);
}
