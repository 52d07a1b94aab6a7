use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dse_cli::strip_wall_clock;
use serde_json::Value;

fn dse(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dse"))
        .arg("solve")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn wdse_run_writes_results_trace_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "mode = \"wdse\"\n[scenario]\nname = \"robustness\"\n");
    let out = dir.path().join("out");
    let o = dse(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let r = json(&out.join("results.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["mode"], "wdse");
    assert!(r["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    let eq = &r["result"]["equilibrium"];
    assert!((eq["utility"].as_f64().unwrap() - 21.0).abs() < 1e-4);

    let mut rd = csv::Reader::from_path(out.join("trace.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), dse_cli::trace_header(1));
    assert_eq!(rd.records().count() as u64, eq["iterations"].as_u64().unwrap());
    assert!(out.join("traces/theta_1.csv").exists());

    let echo = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(echo.contains("alpha0"), "defaults are echoed");
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "mode = \"wdse\"\n[scenario]\nname = \"robustness\"\n[solver]\nalpha0 = -1.0\nbogus = 3\n",
    );
    let out = dir.path().join("out");
    let o = dse(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let rec = json(&out.join("error.json"));
    assert_eq!(rec["error"], "config");
    let issues = rec["issues"].as_array().unwrap();
    let lines: Vec<u64> = issues.iter().filter_map(|i| i["line"].as_u64()).collect();
    assert!(lines.contains(&5) && lines.contains(&6), "{rec}");
    let stderr: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(stderr["exit_code"], 2);
}

#[test]
fn unknown_scenario_and_missing_mode_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write(dir.path(), "a.toml", "mode = \"wdse\"\n[scenario]\nname = \"nowhere\"\n");
    assert_eq!(dse(&cfg, &out, &[]).status.code(), Some(2));
    let cfg = write(dir.path(), "b.toml", "[scenario]\nname = \"robustness\"\n");
    assert_eq!(dse(&cfg, &out, &[]).status.code(), Some(2));
    // the command line can supply the mode
    assert!(dse(&cfg, &out, &["--mode", "wdse"]).status.success());
}

#[test]
fn oracle_budget_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "o.toml",
        "mode = \"oracle\"\n[scenario]\nname = \"microgrid\"\n[scenario.params]\nn = 5\n",
    );
    let o = dse(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn repeated_runs_match_apart_from_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "mode = \"consistency\"\n[scenario]\nname = \"robustness\"\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(dse(&cfg, &a, &["--workers", "1"]).status.success());
    assert!(dse(&cfg, &b, &["--workers", "2"]).status.success());
    let (mut ra, mut rb) = (json(&a.join("results.json")), json(&b.join("results.json")));
    strip_wall_clock(&mut ra);
    strip_wall_clock(&mut rb);
    assert_eq!(ra, rb);
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let r = dse_cli::validate_config(&text, &dse_cli::Overrides::default());
        assert!(r.is_ok(), "{}: {:?}", path.display(), r.err());
    }
}
