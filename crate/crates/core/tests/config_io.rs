mod common;

use std::fs;

use cellfree::config::{ProcessingMode, Scheme};
use cellfree::report::{Direction, SeReport, SeRow};
use cellfree::{emit_results, parse_config, run_campaign, Error, SimulationConfig};

const VALID: &str = r#"
seed = 1
num_setups = 1
num_realizations = 10
mode = "distributed"
schemes = ["MR"]

[network]
num_aps = 4
antennas_per_ap = 1
num_ues = 2
area_side_km = 1.0

[frame]
pilot_len = 10
coherence_len = 200
ul_data_len = 190
dl_data_len = 0

[power]
ue_power_w = 0.1
ap_power_w = 1.0
"#;

#[test]
fn reference_frame_is_valid() {
    let cfg = SimulationConfig::from_toml_str(VALID).unwrap();
    assert_eq!(cfg.frame.pilot_len, 10);
    assert!((cfg.frame.ul_prelog() - 0.95).abs() < 1e-15);
    assert_eq!(cfg.frame.dl_prelog(), 0.0);
}

#[test]
fn frame_budget_is_enforced() {
    let text = VALID.replace("ul_data_len = 190", "ul_data_len = 195");
    match SimulationConfig::from_toml_str(&text) {
        Err(Error::Validation(m)) => assert!(m.contains("coherence_len"), "{m}"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn missing_seed_is_named() {
    let text = VALID.replace("seed = 1\n", "");
    match SimulationConfig::from_toml_str(&text) {
        Err(Error::Parse { key, .. }) => assert_eq!(key, "seed"),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn ill_typed_nested_key_is_named() {
    let text = VALID.replace("num_aps = 4", "num_aps = \"four\"");
    match SimulationConfig::from_toml_str(&text) {
        Err(Error::Parse { key, .. }) => assert_eq!(key, "network.num_aps"),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn parse_from_file_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, VALID).unwrap();
    let cfg = parse_config(&path).unwrap();
    assert_eq!(cfg.mode, ProcessingMode::Distributed);
    assert!(matches!(parse_config(dir.path().join("nope.toml")), Err(Error::Io { .. })));
}

#[test]
fn toml_round_trip_keeps_fingerprint() {
    let cfg = SimulationConfig::from_toml_str(VALID).unwrap();
    let back = SimulationConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(cfg, back);
    assert_eq!(cfg.fingerprint(), back.fingerprint());
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(cfg.fingerprint(), other.fingerprint());
}

#[test]
fn zero_realizations_is_an_error() {
    let mut cfg = common::config(4, 1, 2, 2);
    cfg.num_realizations = 0;
    let err = run_campaign(&cfg).unwrap_err();
    assert!(matches!(err, Error::NoRealizations));
    assert!(err.to_string().contains("no realizations"));
}

#[test]
fn mr_only_report_has_ul_and_dl_columns() {
    let cfg = common::config(6, 1, 3, 2);
    let rep = run_campaign(&cfg).unwrap();
    assert_eq!(rep.columns(), vec![(Scheme::Mr, Direction::Ul), (Scheme::Mr, Direction::Dl)]);
    assert_eq!(rep.rows.len(), 6);
    assert!(rep.rows.iter().all(|r| r.se >= 0.0 && r.stderr >= 0.0));
}

#[test]
fn same_seed_gives_identical_report() {
    let mut cfg = common::config(6, 2, 4, 2);
    cfg.num_setups = 2;
    cfg.schemes = vec![Scheme::Mr, Scheme::LpMmse];
    cfg.genie = true;
    let a = run_campaign(&cfg).unwrap();
    let b = run_campaign(&cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed += 1;
    let c = run_campaign(&cfg).unwrap();
    assert_ne!(a.rows, c.rows);
}

fn two_row_report() -> SeReport {
    let cfg = common::config(2, 1, 2, 2);
    let rows = (0..2)
        .map(|k| SeRow {
            ue: k,
            setup: 0,
            scheme: Scheme::Mr,
            direction: Direction::Ul,
            se: 1.0 + k as f64,
            stderr: 0.1,
        })
        .collect();
    SeReport {
        fingerprint: cfg.fingerprint(),
        config: cfg,
        rows,
        assignments: Vec::new(),
    }
}

#[test]
fn emitted_table_has_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    emit_results(&two_row_report(), dir.path()).unwrap();
    let table = fs::read_to_string(dir.path().join("se_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "ue,scheme,direction,se,stderr");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "0,MR,UL,1,0.1");
}

#[test]
fn emitted_cdf_climbs_to_one() {
    let cfg = {
        let mut c = common::config(8, 1, 5, 3);
        c.num_setups = 2;
        c
    };
    let rep = run_campaign(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&rep, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("cdf_MR_UL.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("se,cdf"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    let n = pts.len();
    assert_eq!(n, 10);
    assert!((pts[0].1 - 1.0 / n as f64).abs() < 1e-15);
    assert_eq!(pts[n - 1].1, 1.0);
    assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
}

#[test]
fn metadata_echoes_config_and_rerun_is_byte_identical() {
    let rep = two_row_report();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&rep, dir.path()).unwrap();
    let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["fingerprint"], rep.fingerprint.as_str());
    assert_eq!(meta["config"]["network"]["num_aps"], 2);
    emit_results(&rep, dir.path()).unwrap();
    let second: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn unwritable_directory_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("blocker");
    fs::write(&file, "x").unwrap();
    match emit_results(&two_row_report(), file.join("sub")) {
        Err(Error::Io { path, .. }) => assert!(path.starts_with(&file)),
        other => panic!("expected io error, got {other:?}"),
    }
}
