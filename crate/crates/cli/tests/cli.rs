use std::path::PathBuf;
use std::process::Command;

use approx::assert_relative_eq;
use finhol_cli::report::Report;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_finhol"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn exit_codes() {
    let ok = config("euclidean");
    assert_eq!(run(&["inspect", "--config", ok.to_str().unwrap()]).0, 0);
    assert_eq!(run(&["inspect"]).0, 2);
    assert_eq!(run(&["inspect", "--config", "/nonexistent.toml"]).0, 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nfamily = \"sphere\"\ndim = 2\nbogus = 1\n").unwrap();
    assert_eq!(run(&["inspect", "--config", bad.to_str().unwrap()]).0, 2);

    let (code, stdout) = run(&["inspect", "--config", config("randers_degenerate").to_str().unwrap()]);
    assert_eq!(code, 3);
    let report = Report::from_json(&stdout).unwrap();
    assert_eq!(report.status.exit_code, 3);
    assert_eq!(report.status.error.unwrap().kind, "degenerate_model");
}

#[test]
fn report_round_trips_and_tables_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s2.json");
    let (code, _) = run(&["holonomy", "--config", config("sphere2").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let report = Report::from_json(&text).unwrap();
    assert_eq!(report.to_json(), text);
    assert_eq!(report.schema_version, finhol_cli::report::SCHEMA_VERSION);

    let csv = std::fs::read_to_string(Report::table_path(&out, "loops")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("h,max_err,ratio"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0][2].is_empty());
    for r in &rows[1..] {
        assert_relative_eq!(r[2].parse::<f64>().unwrap(), 4.0, max_relative = 0.05);
    }
}

#[test]
fn runs_are_deterministic_for_a_seed() {
    let strip = |s: &str| {
        let mut v: Value = serde_json::from_str(s).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    let c = config("randers");
    let args = ["algebra", "--config", c.to_str().unwrap(), "--seed", "7"];
    let (a, b) = (run(&args).1, run(&args).1);
    assert_eq!(strip(&a), strip(&b));
    let (single, _) = (run(&["algebra", "--config", c.to_str().unwrap(), "--seed", "7", "--threads", "1"]).1, ());
    assert_eq!(strip(&a), strip(&single));
    assert_eq!(strip(&a)["config"]["seed"], 7);
}
