use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use transit_risk::risk::{system_risk, RiskReport};

const BIN: &str = env!("CARGO_BIN_EXE_transit-risk");

fn fixture_config() -> PathBuf {
    transit_risk::fixture::dir().join("scenario.json")
}

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Copies the fixture into a temp dir with extra config fields.
fn scenario_with(extra: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let src = transit_risk::fixture::dir();
    for f in ["topology.json", "od.csv"] {
        fs::copy(src.join(f), dir.path().join(f)).unwrap();
    }
    let config = format!(
        r#"{{"topology": "topology.json", "demand": "od.csv",
            "service": {{"branch_headway_min": 9, "h_ab_min": 4.5}}{extra}}}"#
    );
    let path = dir.path().join("scenario.json");
    fs::write(&path, config).unwrap();
    (dir, path)
}

fn run_report(config: &Path) -> RiskReport {
    let o = cli(&["run", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn run_reports_a_plausible_base_case() {
    let report = run_report(&fixture_config());
    assert!(report.system_p > 0.0 && report.system_p < 0.02);
    assert!((report.system_p_per_1000 - 1000.0 * report.system_p).abs() < 1e-12);
    // the report carries everything needed to recompute the system figure
    let (p, _) = system_risk(&report.od).unwrap();
    assert!((p - report.system_p).abs() <= 1e-12);
}

#[test]
fn zero_infection_rate_is_zero_risk() {
    let (_dir, config) = scenario_with(r#", "infection_rate": 0"#);
    let report = run_report(&config);
    assert_eq!(report.system_p, 0.0);
}

#[test]
fn missing_topology_names_the_file() {
    let (dir, config) = scenario_with("");
    fs::remove_file(dir.path().join("topology.json")).unwrap();
    let o = cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("topology.json"), "{err}");
}

#[test]
fn unknown_config_fields_are_rejected() {
    let (_dir, config) = scenario_with(r#", "headway": 3"#);
    let o = cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_cell_and_a_meta_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config();
    let out = dir.path().join("grid.csv");
    let o = cli(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--grid",
        "A=0:0:1,B=1:1:1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv, "A,B,probability\n0,1,0\n");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("grid.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"], 1);
    assert_eq!(meta["scenario_sha256"].as_str().unwrap().len(), 64);

    let o = cli(&["sweep", "--config", config.to_str().unwrap(), "--grid", "A=0.1:1.5:0.1,B=0.1:1.5:0.1", "--per-1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "A,B,per_1000");
    assert_eq!(lines.len(), 226);
}

#[test]
fn sweep_rejects_unknown_axes() {
    let o = cli(&["sweep", "--config", fixture_config().to_str().unwrap(), "--grid", "Q=0:1:0.1,B=0:1:0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn headways_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split.csv");
    let o = cli(&[
        "headways",
        "--config",
        fixture_config().to_str().unwrap(),
        "--hab",
        "2:7:0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h_ab_min,h_ba_min,system,A,B");
    assert_eq!(lines.len(), 12);
    assert!(lines[1].starts_with("2,7,"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("split.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["argmin_h_ab_min"].as_f64(), Some(5.0));
}

#[test]
fn headways_rejects_malformed_ranges() {
    for hab in ["2:7", "7:2:0.5", "2:7:0", "2:9:1"] {
        let o = cli(&["headways", "--config", fixture_config().to_str().unwrap(), "--hab", hab]);
        assert_eq!(o.status.code(), Some(1), "{hab}: {}", stderr(&o));
    }
}

#[test]
fn cars_compares_each_distribution() {
    let o = cli(&[
        "cars",
        "--config",
        fixture_config().to_str().unwrap(),
        "--shares",
        "0.1667,0.1667,0.1667,0.1667,0.1666,0.1666;0.125,0.125,0.25,0.25,0.125,0.125",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario,car,share,car_p,system_p,crowding");
    assert_eq!(lines.len(), 13);
    assert!(lines[9].starts_with("2,3,0.25,") && lines[9].ends_with(",most"));

    let o = cli(&["cars", "--config", fixture_config().to_str().unwrap(), "--shares", "0.5,0.4"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn calibrate_round_numbers() {
    let o = cli(&["calibrate", "--attack-rate", "0.5", "--infectors", "1", "--hours", "1", "--ventilation", "100", "--breathing", "1"]);
    assert!(o.status.success());
    // q = -ln(0.5) * 100
    assert_eq!(stdout(&o), "69.3147\n");
    let o = cli(&["calibrate", "--attack-rate", "1", "--infectors", "1", "--hours", "1", "--ventilation", "100"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_count_does_not_change_output() {
    let config = fixture_config();
    let args = |t: &'static str| {
        cli(&["sweep", "--config", config.to_str().unwrap(), "--grid", "A=0.1:1:0.3,B=0.5:1.5:0.5", "--threads", t])
    };
    let (one, eight) = (args("1"), args("8"));
    assert!(one.status.success());
    assert_eq!(one.stdout, eight.stdout);
}
