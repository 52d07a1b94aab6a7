//! Front end for the `dse` binary: configuration, run modes and output files.

pub mod config;

use std::fs;
use std::path::Path;
use std::time::Instant;

use dse_core::dse::{solve_dse, EquilibriumResult, SolverConfig, TieBreak, TracePoint};
use dse_core::hne::{check_consistency, solve_hne, ConsistencyReport};
use dse_core::oracle::{oracle_dse, oracle_floor};
use dse_core::scenarios::build_random_microgrid;
use dse_core::GameDefinition;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{validate_config, ConfigIssue, Mode, Overrides, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigIssue>),
    #[error(transparent)]
    Solve(#[from] dse_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use dse_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Solve(E::Config(_) | E::InvalidGame(_) | E::Domain(_) | E::Budget { .. }) => 2,
            CliError::Solve(E::NonConvergence { .. } | E::Cycle { .. } | E::RegionBoundary { .. }) => 3,
            _ => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "non_convergence",
            _ => "internal",
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> Value {
        let issues = match self {
            CliError::Config(issues) => serde_json::to_value(issues).unwrap_or(Value::Null),
            _ => Value::Array(Vec::new()),
        };
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
            "issues": issues,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Read, validate and run a configuration file.
pub fn run_file(path: &Path, overrides: &Overrides) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config = validate_config(&text, overrides).map_err(CliError::Config)?;
    run(&config)
}

/// Execute a validated configuration and write its files into
/// `config.output_dir`. Returns the contents of `results.json`.
pub fn run(config: &RunConfig) -> Result<Value, CliError> {
    let out = config.output_dir.as_path();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg_path = out.join("effective_config.toml");
    fs::write(&cfg_path, config.to_toml()).map_err(io_err(&cfg_path))?;

    let workers = config.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let start = Instant::now();
    let payload = pool.install(|| dispatch(config, out))?;
    let results = json!({
        "schema_version": SCHEMA_VERSION,
        "mode": config.mode.as_str(),
        "scenario": config.scenario.as_ref().map(|s| s.name.clone()),
        "seed": config.seed,
        "result": payload,
        "wall_clock_seconds": start.elapsed().as_secs_f64(),
    });
    let path = out.join("results.json");
    let text = serde_json::to_string_pretty(&results).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(results)
}

/// Write an error record next to the results, best effort.
pub fn write_error_record(out: &Path, err: &CliError) {
    if fs::create_dir_all(out).is_ok() {
        let text = serde_json::to_string_pretty(&err.record()).unwrap_or_default();
        let _ = fs::write(out.join("error.json"), text + "\n");
    }
}

/// Drop every `wall_clock_seconds` entry, leaving the deterministic part.
pub fn strip_wall_clock(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_clock_seconds");
            map.values_mut().for_each(strip_wall_clock);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

fn game_of(config: &RunConfig) -> Result<GameDefinition, CliError> {
    let spec = config
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Internal("mode needs a scenario".into()))?;
    Ok(spec.build()?)
}

fn dispatch(config: &RunConfig, out: &Path) -> Result<Value, CliError> {
    match config.mode {
        Mode::Wdse | Mode::Sdse => {
            let game = game_of(config)?;
            let r = solve_dse(&game, &config.solver)?;
            write_traces(out, &r)?;
            Ok(json!({ "equilibrium": equilibrium_json(&r) }))
        }
        Mode::EpsWdse => {
            let game = game_of(config)?;
            let r = solve_dse(&game, &config.solver)?;
            write_traces(out, &r)?;
            let mut payload = json!({ "equilibrium": equilibrium_json(&r) });
            if let Some(study) = &config.gap_study {
                let rows = gap_study(&game, config, study)?;
                write_csv(
                    &out.join("gaps.csv"),
                    &[
                        "width",
                        "lo",
                        "hi",
                        "utility",
                        "supremum",
                        "utility_gap",
                        "oracle_supremum",
                        "oracle_bound",
                    ],
                    rows.iter().map(|g| {
                        vec![g.width, g.lo, g.hi, g.utility, g.supremum, g.utility_gap, g.oracle_supremum, g.oracle_bound]
                    }),
                )?;
                payload["gap_study"] = serde_json::to_value(&rows).map_err(|e| CliError::Internal(e.to_string()))?;
            }
            Ok(payload)
        }
        Mode::Hne => {
            let game = game_of(config)?;
            let mut per_theta = Vec::new();
            for theta in game.theta_set() {
                let found = solve_hne(&game, theta, &config.hne)?;
                per_theta.push(json!({
                    "theta": theta,
                    "equilibria": found.iter().map(equilibrium_json).collect::<Vec<_>>(),
                }));
            }
            Ok(json!({ "per_theta": per_theta }))
        }
        Mode::Consistency => {
            let game = game_of(config)?;
            let mut per_theta = Vec::new();
            for theta in game.theta_set() {
                let g = game.with_theta_set(vec![theta.clone()])?;
                let dse = solve_dse(&g, &config.solver)?;
                let report = check_consistency(&g, &dse, &config.hne)?;
                per_theta.push(json!({
                    "theta": theta,
                    "dse": equilibrium_json(&dse),
                    "report": report,
                }));
            }
            Ok(json!({ "per_theta": per_theta }))
        }
        Mode::Oracle => {
            let game = game_of(config)?;
            let o = oracle_dse(&game, config.solver.mode, &config.oracle)?;
            let per_theta = o.per_theta.clone();
            let r = o.into_equilibrium();
            Ok(json!({ "equilibrium": equilibrium_json(&r), "per_theta": per_theta }))
        }
        Mode::Sweep => {
            let rows = sweep(config)?;
            write_csv(
                &out.join("sweep.csv"),
                &["param1", "param2", "u_dse", "u_hne", "gap", "is_consistent"],
                rows.iter().map(|c| {
                    vec![c.param1, c.param2, c.u_dse, c.u_hne, c.gap, if c.is_consistent { 1.0 } else { 0.0 }]
                }),
            )?;
            let s = config.sweep.as_ref().expect("validated");
            Ok(json!({ "param1": s.param1, "param2": s.param2, "cells": rows }))
        }
        Mode::Bench => {
            let rows = bench(config)?;
            write_csv(
                &out.join("bench.csv"),
                &["n", "seconds", "utility", "iterations", "converged"],
                rows.iter().map(|b| {
                    vec![
                        b.n as f64,
                        b.wall_clock_seconds,
                        b.utility,
                        b.iterations as f64,
                        if b.converged { 1.0 } else { 0.0 },
                    ]
                }),
            )?;
            Ok(json!({ "rows": rows }))
        }
    }
}

/// Result as JSON without the per-iteration traces (those go to CSV).
pub fn equilibrium_json(r: &EquilibriumResult) -> Value {
    let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
    if let Some(map) = v.as_object_mut() {
        map.remove("trace");
        if let Some(Value::Array(items)) = map.get_mut("per_theta") {
            for item in items {
                if let Some(m) = item.as_object_mut() {
                    m.remove("trace");
                }
            }
        }
    }
    v
}

fn fmt_num(v: f64) -> String {
    // shortest representation that reads back to the same value
    format!("{v:?}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Internal(e.to_string()))?;
    w.write_record(header).map_err(|e| CliError::Internal(e.to_string()))?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_num(*v)))
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn trace_header(n: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "x".into(), "y".into()];
    h.extend((1..=n).map(|i| format!("z_{i}")));
    h.extend((1..=n).map(|i| format!("s_{i}")));
    h.extend(["hypergrad", "utility", "alpha", "sigma"].map(String::from));
    h
}

fn write_trace(path: &Path, n: usize, trace: &[TracePoint]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Internal(e.to_string()))?;
    w.write_record(trace_header(n)).map_err(|e| CliError::Internal(e.to_string()))?;
    for t in trace {
        let mut row = vec![t.k.to_string(), fmt_num(t.x), fmt_num(t.y)];
        row.extend(t.z.iter().map(|v| fmt_num(*v)));
        row.extend(t.s.iter().map(|v| fmt_num(*v)));
        row.extend([t.hypergradient, t.utility, t.alpha, t.sigma].map(fmt_num));
        w.write_record(&row).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

/// `trace.csv` for the winning parameter, plus `traces/theta_<i>.csv` for each one.
fn write_traces(out: &Path, r: &EquilibriumResult) -> Result<(), CliError> {
    let n = r.z_star.len();
    write_trace(&out.join("trace.csv"), n, &r.trace)?;
    let dir = out.join("traces");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (i, t) in r.per_theta.iter().enumerate() {
        write_trace(&dir.join(format!("theta_{i}.csv")), n, &t.trace)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub width: f64,
    pub lo: f64,
    pub hi: f64,
    pub utility: f64,
    pub supremum: f64,
    pub utility_gap: f64,
    pub oracle_supremum: f64,
    pub oracle_bound: f64,
}

fn gap_study(game: &GameDefinition, config: &RunConfig, study: &config::GapStudyConfig) -> Result<Vec<GapRow>, CliError> {
    let exact = SolverConfig {
        epsilon: 0.0,
        gaps: None,
        ..config.solver.clone()
    };
    let supremum = solve_dse(game, &exact)?.utility;
    let oracle_sup = if study.oracle {
        Some(oracle_dse(game, TieBreak::Weak, &config.oracle)?)
    } else {
        None
    };
    // each halving keeps the half where f2 changes sign, as a bisection would
    let theta = game.theta_set()[0].clone();
    let f2 = |x: f64| game.insider_slope(x, &theta);
    let (mut lo, mut hi) = (study.bracket[0], study.bracket[1]);
    let mut rows = Vec::new();
    for k in 0..=study.halvings {
        if k > 0 {
            let mid = 0.5 * (lo + hi);
            if (f2(lo) > 0.0) == (f2(mid) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let width = hi - lo;
        let cfg = SolverConfig {
            gaps: Some(vec![[lo, hi]]),
            ..config.solver.clone()
        };
        let r = solve_dse(game, &cfg)?;
        let (oracle_supremum, oracle_bound) = match &oracle_sup {
            Some(o) => {
                let floor = oracle_floor(game, &r.theta_star, lo, hi, &config.oracle)?;
                (o.utility(), o.utility() - floor)
            }
            None => (f64::NAN, f64::NAN),
        };
        rows.push(GapRow {
            width,
            lo,
            hi,
            utility: r.utility,
            supremum,
            utility_gap: supremum - r.utility,
            oracle_supremum,
            oracle_bound,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub param1: f64,
    pub param2: f64,
    pub u_dse: f64,
    pub u_hne: f64,
    pub gap: f64,
    pub is_consistent: bool,
    pub theta_star: Vec<f64>,
    pub x_dse: f64,
    pub report: ConsistencyReport,
}

fn sweep(config: &RunConfig) -> Result<Vec<SweepCell>, CliError> {
    let spec = config.scenario.as_ref().expect("validated");
    let s = config.sweep.as_ref().expect("validated");
    let cells: Vec<(f64, f64)> = s
        .values1
        .iter()
        .flat_map(|&a| s.values2.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(a, b)| {
            let mut params = spec.params.clone();
            params.insert(s.param1.clone(), toml::Value::Float(a));
            params.insert(s.param2.clone(), toml::Value::Float(b));
            let game = spec.build_with(&params)?;
            let dse = solve_dse(&game, &config.solver)?;
            let report = check_consistency(&game, &dse, &config.hne)?;
            // the HNE nearest to the hierarchical solution
            let u_hne = report
                .hne_x
                .iter()
                .zip(&report.hne_utility)
                .min_by(|p, q| (p.0 - dse.x_star).abs().total_cmp(&(q.0 - dse.x_star).abs()))
                .map_or(f64::NAN, |(_, u)| *u);
            Ok(SweepCell {
                param1: a,
                param2: b,
                u_dse: dse.utility,
                u_hne,
                gap: (dse.utility - u_hne).abs(),
                is_consistent: report.is_hne,
                theta_star: dse.theta_star.clone(),
                x_dse: dse.x_star,
                report,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub wall_clock_seconds: f64,
    pub utility: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Sizes run one after another so the timings do not compete for cores.
fn bench(config: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for &n in &config.bench.sizes {
        let game = build_random_microgrid(n, config.seed, config.bench.coupling_scale)?;
        let start = Instant::now();
        let r = solve_dse(&game, &config.solver)?;
        rows.push(BenchRow {
            n,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            utility: r.utility,
            iterations: r.iterations,
            converged: r.converged,
        });
    }
    Ok(rows)
}
