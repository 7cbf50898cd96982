use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use cartpush_core::sim::{compute_metrics, run_scenario};
use cartpush_core::{Ekf, Metrics, OnlineEstimator, ParamEstimate, PlanarWrench, SimTrace, WrenchFilter};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::suites::{self, Case, Check, Suite};
use crate::trace_csv::{read_trace, write_trace};

pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.toml";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const FINAL_ESTIMATE_FILE: &str = "estimate.toml";
pub const REPORT_FILE: &str = "report.txt";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn write_trace_file(dir: &Path, cfg: &Config, trace: &SimTrace) -> CliResult<()> {
    create_dir(dir)?;
    let path = dir.join(TRACE_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
    write_trace(BufWriter::new(file), trace)?;
    write_file(&dir.join(RESOLVED_CONFIG_FILE), &cfg.to_json())
}

fn write_metrics(dir: &Path, metrics: &Metrics) -> CliResult<()> {
    let m = toml::to_string(metrics).map_err(|e| CliError::Runtime(format!("serializing metrics: {e}")))?;
    write_file(&dir.join(METRICS_FILE), &m)
}

/// Simulates, writes the trace and config snapshot, then the metrics. A run
/// too short for its metrics still leaves its trace behind.
fn run_into(dir: &Path, cfg: &Config) -> CliResult<(SimTrace, Metrics)> {
    let trace = run_scenario(&cfg.scenario, &cfg.sim_config())?;
    write_trace_file(dir, cfg, &trace)?;
    let metrics = compute_metrics(&trace)?;
    write_metrics(dir, &metrics)?;
    Ok((trace, metrics))
}

/// Runs one configured scenario and writes its trace, metrics and resolved
/// config into `out`.
pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<Metrics> {
    let mut cfg = Config::load(config)?;
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    run_into(out, &cfg).map(|(_, m)| m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifySummary {
    pub cycles: usize,
    pub degenerate_cycles: usize,
    pub estimate: ParamEstimate,
}

/// Replays the filter over a recorded trace: wrench columns as input,
/// pose and twist columns as measurements, at the configured filter rate.
pub fn identify(trace: &Path, out: &Path, config: Option<&Path>) -> CliResult<IdentifySummary> {
    let cfg = match config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let file = File::open(trace).map_err(|e| CliError::io(trace.display(), e))?;
    let rows = read_trace(BufReader::new(file))?;
    if rows.len() < 2 {
        return Err(CliError::InsufficientData(format!("trace has {} rows, need at least 2", rows.len())));
    }
    let dt = rows[1].t - rows[0].t;
    let noise = &cfg.ekf.noise;
    let every = ((1.0 / (noise.rate_hz * dt)).round() as usize).max(1);
    let filter_dt = every as f64 * dt;

    let mut est = OnlineEstimator::new(Ekf::new(cfg.ekf.clone(), cfg.cart))?;
    let mut filter = WrenchFilter::new(noise.window);
    create_dir(out)?;
    let path = out.join(ESTIMATES_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CliError::io(ESTIMATES_FILE, e);
    writeln!(w, "t,m_hat,px_hat,py_hat,I_hat,sigma_hat,degenerate").map_err(io)?;

    let (mut cycles, mut degenerate_cycles) = (0, 0);
    for (k, row) in rows.iter().enumerate() {
        if k % every == 0 {
            let input = (k > 0).then(|| filter.mean());
            let pose = Vector3::new(row.x, row.y, row.theta);
            let twist = Vector2::new(row.v_x, row.omega);
            let degenerate = est.cycle(input.as_ref(), filter_dt, &pose, &twist)?;
            cycles += 1;
            degenerate_cycles += usize::from(degenerate);
            let e = est.estimate();
            writeln!(
                w,
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}",
                row.t,
                e.m_w,
                e.p_x,
                e.p_y,
                e.i_w,
                e.sigma,
                u8::from(degenerate)
            )
            .map_err(io)?;
        }
        filter.push(PlanarWrench::new(row.f_p, row.tau));
    }
    w.flush().map_err(io)?;

    let summary = IdentifySummary { cycles, degenerate_cycles, estimate: *est.estimate() };
    let text = toml::to_string(&summary).map_err(|e| CliError::Runtime(format!("serializing estimate: {e}")))?;
    write_file(&out.join(FINAL_ESTIMATE_FILE), &text)?;
    Ok(summary)
}

/// Formats the pass/fail table.
pub fn report_table(suite: Suite, checks: &[Check]) -> String {
    let mut s = format!("suite: {}\n", suite.name());
    s.push_str(&format!(
        "{:<22} {:>4}  {:<34} {:>12} {:>10}  {}\n",
        "case", "crit", "check", "value", "limit", "result"
    ));
    for c in checks {
        let crit = if c.criterion == 0 { "-".to_string() } else { c.criterion.to_string() };
        s.push_str(&format!(
            "{:<22} {:>4}  {:<34} {:>12.4e} {:>10.3e}  {}\n",
            c.case,
            crit,
            c.check,
            c.value,
            c.limit,
            if c.passed { "PASS" } else { "FAIL" }
        ));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    s.push_str(&format!("{} checks, {} failed\n", checks.len(), failed));
    s
}

/// Runs every case of a suite (in parallel), writes each case's outputs under
/// `out/<case>/` and the table to `out/report.txt`.
pub fn benchmark(suite: Suite, out: &Path, workers: Option<usize>, seed: u64) -> CliResult<(String, Vec<Check>)> {
    let cases = suites::cases(suite, seed);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    create_dir(out)?;
    let results: Vec<CliResult<Vec<Check>>> = pool.install(|| {
        cases
            .par_iter()
            .map(|c: &Case| {
                let (trace, metrics) = run_into(&out.join(&c.name), &c.config)?;
                Ok(suites::evaluate(suite, c, &trace, &metrics))
            })
            .collect()
    });
    let mut checks = Vec::new();
    for r in results {
        checks.extend(r?);
    }
    let table = report_table(suite, &checks);
    write_file(&out.join(REPORT_FILE), &table)?;
    Ok((table, checks))
}
