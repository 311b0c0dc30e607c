//! Command-line driver: `dyson kernel|relaxation|verify|simulate|correlate`.
//!
//! Exit codes: 0 success, 1 failed assertion, 2 usage error, 3 numeric failure.

use crate::config::Configuration;
use crate::correlations::{correlation_det_diag, CorrelationRequest};
use crate::kernels::{evaluate_grid, relaxation_bound, relaxation_gap, sine_kernel, KernelFamily, KernelSpec, Tolerances};
use crate::mcsim::{estimate_density, simulate, uniform_edges, SimPlan, PRNG_NAME};
use crate::verify::{run_suite, McOptions, SUITES};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) | CliError::Io(_) => EXIT_NUMERIC,
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "dyson", version, about = "Correlation kernels of Dyson's Brownian motion model", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a correlation kernel on a grid.
    Kernel(KernelArgs),
    /// Distance of the lattice kernel from the extended sine kernel.
    Relaxation(RelaxationArgs),
    /// Run a named property suite.
    Verify(VerifyArgs),
    /// Monte Carlo simulation of the finite SDE.
    Simulate(SimulateArgs),
    /// Multitime correlation determinant.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Output directory; CSV goes to stdout when absent.
    #[arg(allow_hyphen_values = true, long)]
    pub out: Option<PathBuf>,
    /// Flat key=value file; flags on the command line take precedence.
    #[arg(allow_hyphen_values = true, long = "config-file")]
    pub config_file: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args, Clone)]
pub struct KernelArgs {
    #[arg(allow_hyphen_values = true, long, default_value = "finite_residue")]
    pub family: String,
    #[arg(allow_hyphen_values = true, long, default_value = "Z")]
    pub config: String,
    #[arg(allow_hyphen_values = true, long, default_value_t = 0.5)]
    pub s: f64,
    #[arg(allow_hyphen_values = true, long, default_value_t = 0.5)]
    pub t: f64,
    /// Spatial grid lo:hi:step for x.
    #[arg(allow_hyphen_values = true, long, default_value = "-6:6:0.05")]
    pub grid: String,
    /// Grid for y; without it (and without --y) only the diagonal y = x is evaluated.
    #[arg(allow_hyphen_values = true, long = "y-grid")]
    pub y_grid: Option<String>,
    #[arg(allow_hyphen_values = true, long)]
    pub y: Option<f64>,
    /// Argument of the sine kernel.
    #[arg(allow_hyphen_values = true, long)]
    pub r: Option<f64>,
    #[arg(allow_hyphen_values = true, long = "quad-tol", default_value_t = 1e-11)]
    pub quad_tol: f64,
    #[arg(allow_hyphen_values = true, long = "series-tol", default_value_t = 1e-13)]
    pub series_tol: f64,
    #[arg(allow_hyphen_values = true, long = "product-tol", default_value_t = 1e-10)]
    pub product_tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct RelaxationArgs {
    #[arg(allow_hyphen_values = true, long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub u: Vec<f64>,
    #[arg(allow_hyphen_values = true, long, default_value_t = 0.5)]
    pub s: f64,
    #[arg(allow_hyphen_values = true, long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(allow_hyphen_values = true, long, default_value = "-1:1:0.25")]
    pub grid: String,
    #[arg(allow_hyphen_values = true, long = "quad-tol", default_value_t = 1e-12)]
    pub quad_tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct VerifyArgs {
    /// One of biorth, det-lemma, intertwine, forms-agree, theta, cluster, mc-n2, conditions.
    pub suite: String,
    #[arg(allow_hyphen_values = true, long, default_value_t = 20_000)]
    pub paths: usize,
    #[arg(allow_hyphen_values = true, long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(allow_hyphen_values = true, long, default_value_t = 2024)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct SimulateArgs {
    #[arg(allow_hyphen_values = true, long, default_value = "points:-0.5,0.5")]
    pub config: String,
    #[arg(allow_hyphen_values = true, long, value_delimiter = ',', default_value = "0.5")]
    pub times: Vec<f64>,
    #[arg(allow_hyphen_values = true, long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(allow_hyphen_values = true, long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(allow_hyphen_values = true, long, default_value_t = 0)]
    pub seed: u64,
    #[arg(allow_hyphen_values = true, long = "g-min", default_value_t = 1e-4)]
    pub g_min: f64,
    /// Histogram bins lo:hi:count.
    #[arg(allow_hyphen_values = true, long, default_value = "-3:3:24")]
    pub bins: String,
    /// Also export every path's snapshots.
    #[arg(long)]
    pub snapshots: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct CorrelateArgs {
    #[arg(allow_hyphen_values = true, long, default_value = "finite_contour")]
    pub family: String,
    #[arg(allow_hyphen_values = true, long, default_value = "points:-0.5,0.5")]
    pub config: String,
    #[arg(allow_hyphen_values = true, long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Points per time, times separated by ';', points by ','.
    #[arg(allow_hyphen_values = true, long)]
    pub points: String,
    #[command(flatten)]
    pub common: Common,
}

/// Parse lo:hi:step into grid points (inclusive of hi up to rounding).
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(usage(format!("grid {s:?} must be lo:hi:step")));
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| usage(format!("grid {s:?}: {e}")))?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(usage(format!("grid {s:?} needs lo ≤ hi and step > 0")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(usage("grid too large"));
    }
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

fn parse_bins(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || usage(format!("bins {s:?} must be lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo < hi) || n == 0 {
        return Err(bad());
    }
    Ok(uniform_edges(lo, hi, n))
}

/// Insert `--key value` pairs from a config file right after the subcommand,
/// so command-line flags (which come later) override them.
pub fn expand_config_file(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config-file" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config-file=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("config file {path}: {e}")))?;
    let mut extra = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| usage(format!("{path}:{}: expected key=value", ln + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "config-file" {
            continue;
        }
        match v {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => extra.push(format!("--{k}={v}")),
        }
    }
    let sub = strs.iter().position(|a| ["kernel", "relaxation", "verify", "simulate", "correlate"].contains(&a.as_str()));
    let Some(sub) = sub else { return Ok(args) };
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

/// Parse and run; returns the process exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match expand_config_file(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return e.code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Kernel(a) => cmd_kernel(&a),
        Command::Relaxation(a) => cmd_relaxation(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Correlate(a) => cmd_correlate(&a),
    }
}

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub parameters: serde_json::Value,
    pub tolerances: Option<Tolerances>,
    pub seed: Option<u64>,
    pub prng: Option<String>,
    pub code_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputDigest>,
}

/// Collects output files and writes the manifest last.
struct Outputs {
    dir: Option<PathBuf>,
    files: Vec<OutputDigest>,
    start: Instant,
}

impl Outputs {
    fn new(dir: &Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Outputs { dir: dir.clone(), files: Vec::new(), start: Instant::now() })
    }

    /// Write to the output directory, or print CSV to stdout when there is none.
    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                std::fs::write(d.join(name), bytes)?;
                self.files.push(OutputDigest { file: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
            }
            None if name.ends_with(".csv") => print!("{}", String::from_utf8_lossy(bytes)),
            None => {}
        }
        Ok(())
    }

    fn finish(self, experiment: &str, parameters: serde_json::Value, tol: Option<Tolerances>, seed: Option<u64>, prng: Option<&str>) -> Result<(), CliError> {
        let Some(d) = &self.dir else { return Ok(()) };
        let m = RunManifest {
            experiment: experiment.to_string(),
            parameters,
            tolerances: tol,
            seed,
            prng: prng.map(str::to_string),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.start.elapsed().as_secs_f64(),
            outputs: self.files,
        };
        let text = serde_json::to_string_pretty(&m).map_err(numeric)?;
        std::fs::write(d.join("manifest.json"), text)?;
        Ok(())
    }
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(numeric)?;
    for r in rows {
        w.write_record(&r).map_err(numeric)?;
    }
    w.into_inner().map_err(numeric)
}

fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}

fn parse_config(s: &str) -> Result<Configuration, CliError> {
    Configuration::parse(s).map_err(usage)
}

fn cmd_kernel(a: &KernelArgs) -> Result<i32, CliError> {
    let family: KernelFamily = a.family.parse().map_err(usage)?;
    if family == KernelFamily::Sine {
        if let Some(r) = a.r {
            println!("{}", sine_kernel(r));
            return Ok(EXIT_OK);
        }
    }
    let config = parse_config(&a.config)?;
    let mut spec = KernelSpec::new(family, config);
    spec.tol = Tolerances { quad_tol: a.quad_tol, series_tol: a.series_tol, product_tol: a.product_tol };
    spec.validate().map_err(usage)?;
    let xs = parse_grid(&a.grid)?;
    let mut out = Outputs::new(&a.common.out)?;
    let diagonal = a.y_grid.is_none() && a.y.is_none();
    let rows = if diagonal {
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, x)).collect();
        let mut rows = Vec::with_capacity(pts.len());
        for (x, y) in pts {
            let v = spec
                .evaluate(crate::kernels::SpaceTimePoint::new(a.s, x), crate::kernels::SpaceTimePoint::new(a.t, y))
                .map_err(numeric)?;
            rows.push(crate::kernels::GridRow { s: a.s, t: a.t, x, y, value: v.value, imag_residual: v.imag_residual, est_error: v.est_error });
        }
        rows
    } else {
        let ys = match (&a.y_grid, a.y) {
            (Some(g), _) => parse_grid(g)?,
            (None, Some(y)) => vec![y],
            _ => unreachable!(),
        };
        evaluate_grid(&spec, &[a.s], &[a.t], &xs, &ys).map_err(numeric)?
    };
    let bytes = csv_bytes(
        &["s", "t", "x", "y", "value", "imag_residual", "est_error"],
        rows.iter().map(|r| vec![fmt(r.s), fmt(r.t), fmt(r.x), fmt(r.y), fmt(r.value), fmt(r.imag_residual), fmt(r.est_error)]),
    )?;
    out.emit("kernel.csv", &bytes)?;
    if diagonal && xs.len() > 1 {
        let h = xs[1] - xs[0];
        let trace: f64 = rows.windows(2).map(|w| (w[0].value + w[1].value) * h / 2.0).sum();
        eprintln!("trace {trace:.10}");
    }
    if a.common.plot {
        let svg = if diagonal || rows.iter().all(|r| r.y == rows[0].y) {
            line_plot("kernel", "x", "value", &[("K", rows.iter().map(|r| (r.x, r.value)).collect())], false)
        } else {
            heat_map("kernel", &rows.iter().map(|r| (r.x, r.y, r.value)).collect::<Vec<_>>())
        };
        out.emit("kernel.svg", svg.as_bytes())?;
    }
    let params = serde_json::json!({
        "family": a.family, "config": a.config, "s": a.s, "t": a.t, "grid": a.grid,
        "y_grid": a.y_grid, "y": a.y, "diagonal": diagonal,
    });
    out.finish("kernel", params, Some(spec.tol), None, None)?;
    Ok(EXIT_OK)
}

fn cmd_relaxation(a: &RelaxationArgs) -> Result<i32, CliError> {
    if a.u.is_empty() || a.u.iter().any(|u| !(*u > 0.0)) {
        return Err(usage("u values must be positive"));
    }
    let g = parse_grid(&a.grid)?;
    let grid: Vec<(f64, f64)> = g.iter().flat_map(|&x| g.iter().map(move |&y| (x, y))).collect();
    let mut out = Outputs::new(&a.common.out)?;
    let mut rows = Vec::new();
    for &u in &a.u {
        let gap = relaxation_gap(u, a.s, a.t, &grid, a.quad_tol).map_err(numeric)?;
        rows.push((u, gap, relaxation_bound(u, a.s, a.t)));
    }
    let bytes = csv_bytes(&["u", "gap", "bound"], rows.iter().map(|r| vec![fmt(r.0), fmt(r.1), fmt(r.2)]))?;
    out.emit("relaxation.csv", &bytes)?;
    if a.common.plot {
        let svg = line_plot(
            "relaxation",
            "u",
            "gap",
            &[("gap", rows.iter().map(|r| (r.0, r.1)).collect()), ("bound", rows.iter().map(|r| (r.0, r.2)).collect())],
            true,
        );
        out.emit("relaxation.svg", svg.as_bytes())?;
    }
    let params = serde_json::json!({"u": a.u, "s": a.s, "t": a.t, "grid": a.grid});
    out.finish("relaxation", params, None, None, None)?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32, CliError> {
    let mc = McOptions { n_paths: a.paths, dt: a.dt, seed: a.seed };
    let report = run_suite(&a.suite, mc).ok_or_else(|| usage(format!("unknown suite {:?}; expected one of {}", a.suite, SUITES.join(", "))))?;
    for c in &report.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        if c.threshold.is_nan() {
            println!("{mark} {} (value {:.3e})", c.name, c.value);
        } else {
            println!("{mark} {} (value {:.3e}, threshold {:.1e})", c.name, c.value, c.threshold);
        }
    }
    let mut out = Outputs::new(&a.common.out)?;
    let bytes = csv_bytes(
        &["suite", "check", "passed", "value", "threshold"],
        report.checks.iter().map(|c| vec![report.suite.clone(), c.name.clone(), c.passed.to_string(), fmt(c.value), fmt(c.threshold)]),
    )?;
    if a.common.out.is_some() {
        out.emit("verify.csv", &bytes)?;
    }
    let seed = (a.suite == "mc-n2").then_some(a.seed);
    out.finish("verify", serde_json::json!({"suite": a.suite, "paths": a.paths, "dt": a.dt}), None, seed, seed.map(|_| PRNG_NAME))?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_ASSERT })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32, CliError> {
    let config = parse_config(&a.config)?;
    let plan = SimPlan { initial: config, dt: a.dt, t_snapshots: a.times.clone(), n_paths: a.paths, seed: a.seed, g_min: a.g_min };
    plan.validate().map_err(usage)?;
    let edges = parse_bins(&a.bins)?;
    let snaps = simulate(&plan).map_err(numeric)?;
    let mut out = Outputs::new(&a.common.out)?;
    if a.snapshots {
        let mut buf = Vec::new();
        snaps.write_csv(&mut buf)?;
        out.emit("snapshots.csv", &buf)?;
    }
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for &t in &snaps.times {
        let f = estimate_density(&snaps, t, &edges).map_err(numeric)?;
        let mut pts = Vec::new();
        for b in 0..f.bins() {
            let mid = (edges[b] + edges[b + 1]) / 2.0;
            rows.push(vec![fmt(t), fmt(edges[b]), fmt(edges[b + 1]), f.counts[b].to_string(), fmt(f.density[b]), fmt(f.std_error[b])]);
            pts.push((mid, f.density[b]));
        }
        series.push((format!("t={t}"), pts));
    }
    let bytes = csv_bytes(&["t", "bin_lo", "bin_hi", "count", "density", "std_error"], rows.into_iter())?;
    out.emit("density.csv", &bytes)?;
    if a.common.plot {
        let refs: Vec<(&str, Vec<(f64, f64)>)> = series.iter().map(|(n, p)| (n.as_str(), p.clone())).collect();
        out.emit("density.svg", line_plot("empirical density", "x", "density", &refs, false).as_bytes())?;
    }
    eprintln!("minimum gap {:.3e}, step halvings {}", snaps.min_gap, snaps.halvings);
    let params = serde_json::to_value(&plan).map_err(numeric)?;
    out.finish("simulate", params, None, Some(a.seed), Some(PRNG_NAME))?;
    Ok(EXIT_OK)
}

fn cmd_correlate(a: &CorrelateArgs) -> Result<i32, CliError> {
    let family: KernelFamily = a.family.parse().map_err(usage)?;
    let spec = KernelSpec::new(family, parse_config(&a.config)?);
    let points: Vec<Vec<f64>> = a
        .points
        .split(';')
        .map(|grp| grp.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("points: {e}")))?;
    let req = CorrelationRequest { times: a.times.clone(), points: points.clone(), kernel: spec };
    let det = correlation_det_diag(&req).map_err(|e| match e {
        crate::correlations::CorrelationError::InvalidParameter(m) => usage(m),
        other => numeric(other),
    })?;
    let mut out = Outputs::new(&a.common.out)?;
    let times = a.times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
    let pts = points.iter().map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")).collect::<Vec<_>>().join(";");
    let bytes = csv_bytes(&["times", "points", "value", "pivot_ratio"], std::iter::once(vec![times, pts, fmt(det.value), fmt(det.pivot_ratio)]))?;
    out.emit("correlation.csv", &bytes)?;
    let params = serde_json::json!({"family": a.family, "config": a.config, "times": a.times, "points": a.points});
    out.finish("correlate", params, Some(req.kernel.tol), None, None)?;
    Ok(EXIT_OK)
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 60.0;

fn line_plot(title: &str, xl: &str, yl: &str, series: &[(&str, Vec<(f64, f64)>)], loglog: bool) -> String {
    let tf = |v: f64| if loglog { v.abs().max(1e-300).log10() } else { v };
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().map(|&(x, y)| (tf(x), tf(y)))).collect();
    let (x0, x1) = bounds(all.iter().map(|p| p.0));
    let (y0, y1) = bounds(all.iter().map(|p| p.1));
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let mut s = svg_head(title);
    let _ = writeln!(s, r##"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="#444"/>"##, W - 2.0 * M, H - 2.0 * M);
    let lg = if loglog { "log10 " } else { "" };
    let _ = writeln!(s, r##"<text x="{}" y="{}" text-anchor="middle">{lg}{xl}</text>"##, W / 2.0, H - 15.0);
    let _ = writeln!(s, r##"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{lg}{yl}</text>"##, H / 2.0, H / 2.0);
    let _ = writeln!(s, r##"<text x="{M}" y="{}" font-size="11">{x0:.3}</text><text x="{}" y="{}" font-size="11" text-anchor="end">{x1:.3}</text>"##, H - M + 15.0, W - M, H - M + 15.0);
    let _ = writeln!(s, r##"<text x="{}" y="{}" font-size="11" text-anchor="end">{y0:.3}</text><text x="{}" y="{}" font-size="11" text-anchor="end">{y1:.3}</text>"##, M - 4.0, H - M, M - 4.0, M + 10.0);
    for (i, (name, pts)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(tf(x)), py(tf(y)))).collect();
        let _ = writeln!(s, r##"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"##, path.join(" "));
        let _ = writeln!(s, r##"<text x="{}" y="{}" fill="{c}" font-size="12">{}</text>"##, W - M - 90.0, M + 16.0 * (i as f64 + 1.0), xml_escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn heat_map(title: &str, cells: &[(f64, f64, f64)]) -> String {
    let mut xs: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let mut ys: Vec<f64> = cells.iter().map(|c| c.1).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let (v0, v1) = bounds(cells.iter().map(|c| c.2));
    let cw = (W - 2.0 * M) / xs.len() as f64;
    let ch = (H - 2.0 * M) / ys.len() as f64;
    let mut s = svg_head(title);
    for &(x, y, v) in cells {
        let i = xs.partition_point(|&u| u < x);
        let j = ys.partition_point(|&u| u < y);
        let f = ((v - v0) / (v1 - v0)).clamp(0.0, 1.0);
        let (r, g, b) = ((255.0 * f) as u8, (80.0 + 100.0 * (1.0 - (2.0 * f - 1.0).abs())) as u8, (255.0 * (1.0 - f)) as u8);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"##,
            M + i as f64 * cw,
            H - M - (j as f64 + 1.0) * ch,
            cw + 0.05,
            ch + 0.05
        );
    }
    let _ = writeln!(s, r##"<text x="{}" y="{}" text-anchor="middle">x ∈ [{:.2}, {:.2}], y ∈ [{:.2}, {:.2}], value ∈ [{v0:.3}, {v1:.3}]</text>"##, W / 2.0, H - 15.0, xs[0], xs[xs.len() - 1], ys[0], ys[ys.len() - 1]);
    s.push_str("</svg>\n");
    s
}

fn svg_head(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\">\n<text x=\"{}\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    )
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in it.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Verify that each file listed in a manifest matches its recorded digest.
pub fn check_manifest(dir: &Path) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(numeric)?;
    let outputs = v["outputs"].as_array().ok_or_else(|| numeric("manifest without outputs"))?;
    for o in outputs {
        let file = o["file"].as_str().unwrap_or_default();
        let bytes = std::fs::read(dir.join(file))?;
        if hex::encode(Sha256::digest(&bytes)) != o["sha256"].as_str().unwrap_or_default() {
            return Ok(false);
        }
    }
    Ok(true)
}
