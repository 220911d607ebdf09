//! Command-line front end: `scan`, `asymptote`, `optimize`, `bound`, `table1`.
//!
//! Output format follows the `--out` extension (`.csv` or `.json`); every
//! written file gets a `<out>.run.json` record with the full parameter set.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::maxviol::{default_restarts, labeled_patterns, maximize_k3, maximize_pair, OptimizationResult};
use crate::measure::{canonical_labels, MeasurementScheme};
use crate::momentsdp::MomentProblem;
use crate::qcore::{CMatrix, SpinParams};
use crate::reference::table1;
use crate::sdpa::export_sdpa;
use crate::spinmodel::{
    find_max_tau, fixed_tau_lgi, k3_asymptote, k3_scan, k3_special, uniform_grid, ScanConfig, SpinModel,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "lgtc", version, about = "Leggett-Garg K3 for N-level systems with M-outcome measurements")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LGTC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// K3 of the precessing spin over a grid of Omega*tau.
    Scan {
        #[arg(long)]
        j: f64,
        #[arg(long, default_value_t = 0.0)]
        tau_min: f64,
        #[arg(long, default_value_t = PI)]
        tau_max: f64,
        #[arg(long, default_value_t = 1001, value_parser = clap::value_parser!(u64).range(2..))]
        steps: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed form, asymptote and simulation at Omega*tau = pi/2 for j = 1/2 .. j-max.
    Asymptote {
        #[arg(long)]
        j_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximise K3 over unitaries and initial state for fixed N and M.
    Optimize {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Try every labelled block structure instead of the canonical one.
        #[arg(long)]
        enumerate_q: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dimension-independent bound from the moment relaxation.
    Bound {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Write the problem in SDPA sparse format and skip the solve.
        #[arg(long)]
        export_sdpa: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full reproduction of the reference table with deviations.
    Table1 {
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parameters and outputs of one invocation, enough to re-run it.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub command: String,
    pub params: BTreeMap<String, Value>,
    pub outputs: Vec<PathBuf>,
    pub wall_time: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

fn format_of(path: &Path) -> Result<Format> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        _ => Err(Error::InvalidParameter(format!("{}: output must end in .csv or .json", path.display()))),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

/// Rows as CSV (with a `schema_version` column) or as a JSON document
/// `{schema_version, <key>: rows, ..extra}`.
fn write_rows<T: Serialize>(path: &Path, key: &str, rows: &[T], extra: Value) -> Result<()> {
    match format_of(path)? {
        Format::Csv => {
            // csv cannot serialize flattened structs, so go through JSON objects.
            let mut w = csv::Writer::from_path(path)?;
            for (i, row) in rows.iter().enumerate() {
                let Value::Object(fields) = serde_json::to_value(row)? else {
                    return Err(Error::InvalidParameter("CSV rows must be structs".into()));
                };
                if i == 0 {
                    w.write_record(std::iter::once("schema_version").chain(fields.keys().map(String::as_str)))?;
                }
                let cell = |v: &Value| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                w.write_record(std::iter::once(SCHEMA_VERSION.to_string()).chain(fields.values().map(cell)))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut doc = json!({ "schema_version": SCHEMA_VERSION });
            doc[key] = serde_json::to_value(rows)?;
            if let Value::Object(map) = extra {
                for (k, v) in map {
                    doc[k] = v;
                }
            }
            std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, Serialize)]
struct MatrixRecord {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for MatrixRecord {
    fn from(m: &CMatrix) -> Self {
        let rows = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }
}

struct Outcome {
    converged: bool,
    record: RunRecord,
}

struct Run {
    command: &'static str,
    params: BTreeMap<String, Value>,
    seed: Option<u64>,
    start: Instant,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Self { command, params: BTreeMap::new(), seed: None, start: Instant::now() }
    }

    fn param(&mut self, key: &str, value: impl Serialize) {
        self.params.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn finish(self, outputs: Vec<PathBuf>, converged: bool) -> Result<Outcome> {
        let record = RunRecord {
            schema_version: SCHEMA_VERSION,
            command: self.command.to_string(),
            params: self.params,
            outputs: outputs.clone(),
            wall_time: self.start.elapsed().as_secs_f64(),
            seed: self.seed,
        };
        if let Some(first) = outputs.first() {
            std::fs::write(sidecar(first), serde_json::to_string_pretty(&record)?)?;
        }
        Ok(Outcome { converged, record })
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn usage(msg: String) -> clap::Error {
    Cli::command().error(clap::error::ErrorKind::ValueValidation, msg)
}

/// Checks that clap cannot express.
fn validate(cli: &Cli) -> std::result::Result<(), clap::Error> {
    let half_integer = |x: f64| x >= 0.5 && ((2.0 * x).round() - 2.0 * x).abs() < 1e-9;
    let out_ok = |out: &Option<PathBuf>| match out {
        Some(p) => format_of(p).map(|_| ()).map_err(|e| usage(e.to_string())),
        None => Ok(()),
    };
    match &cli.command {
        Command::Scan { j, tau_min, tau_max, out, .. } => {
            if !half_integer(*j) {
                return Err(usage(format!("--j must be a positive half-integer, got {j}")));
            }
            if !(tau_max > tau_min) {
                return Err(usage("--tau-max must exceed --tau-min".into()));
            }
            out_ok(out)
        }
        Command::Asymptote { j_max, out } => {
            if !(*j_max >= 0.5) {
                return Err(usage(format!("--j-max must be at least 1/2, got {j_max}")));
            }
            out_ok(out)
        }
        Command::Optimize { n, m, restarts, out, .. } => {
            if *m < 2 || n < m {
                return Err(usage(format!("need 2 <= m <= n, got n={n}, m={m}")));
            }
            if *restarts == Some(0) {
                return Err(usage("--restarts must be positive".into()));
            }
            out_ok(out)
        }
        Command::Bound { m, tol, out, .. } => {
            if *m < 2 {
                return Err(usage(format!("--m must be at least 2, got {m}")));
            }
            if !(*tol > 0.0) {
                return Err(usage("--tol must be positive".into()));
            }
            out_ok(out)
        }
        Command::Table1 { restarts, out, .. } => {
            if *restarts == Some(0) {
                return Err(usage("--restarts must be positive".into()));
            }
            out_ok(out)
        }
    }
}

/// Entry point used by the binary.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = validate(&cli) {
        e.exit();
    }
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(o) if o.converged => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("warning: some computations did not converge");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Runs one subcommand and returns its record; `converged` is false when any
/// requested computation failed to converge.
pub fn run_command(command: Command) -> Result<(bool, RunRecord)> {
    run(command).map(|o| (o.converged, o.record))
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Scan { j, tau_min, tau_max, steps, out } => cmd_scan(j, tau_min, tau_max, steps as usize, out),
        Command::Asymptote { j_max, out } => cmd_asymptote(j_max, out),
        Command::Optimize { n, m, restarts, seed, enumerate_q, out } => {
            cmd_optimize(n, m, restarts, seed, enumerate_q, out)
        }
        Command::Bound { m, tol, export_sdpa, out } => cmd_bound(m, tol, export_sdpa, out),
        Command::Table1 { restarts, seed, out } => cmd_table1(restarts, seed, out),
    }
}

#[derive(Serialize)]
struct ScanRow {
    j: f64,
    #[serde(rename = "N")]
    n: usize,
    omega_tau: f64,
    #[serde(rename = "K3")]
    k3: f64,
}

fn cmd_scan(j: f64, tau_min: f64, tau_max: f64, steps: usize, out: Option<PathBuf>) -> Result<Outcome> {
    let mut run = Run::new("scan");
    run.param("j", j);
    run.param("tau_min", tau_min);
    run.param("tau_max", tau_max);
    run.param("steps", steps);
    let model = SpinModel::new(SpinParams::new(j, 1.0)?)?;
    let grid = uniform_grid(tau_min, tau_max, steps)?;
    let values = k3_scan(&ScanConfig { model: model.clone(), tau_grid: grid })?;
    let &(t_best, k_best) = values.iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("steps >= 2");
    println!("grid max K3 = {k_best:.10} at Omega*tau = {t_best:.6}");
    match find_max_tau(&model, (tau_min, tau_max)) {
        Ok((t, k)) => println!("refined max K3 = {k:.10} at Omega*tau = {t:.10}"),
        Err(Error::NoBracket { .. }) => println!("maximum sits on the window edge; no refinement"),
        Err(e) => return Err(e),
    }
    let mut outputs = Vec::new();
    if let Some(path) = out {
        let n = model.params().dim();
        let rows: Vec<ScanRow> = values.iter().map(|&(omega_tau, k3)| ScanRow { j, n, omega_tau, k3 }).collect();
        write_rows(&path, "scan", &rows, json!({}))?;
        outputs.push(path);
    }
    run.finish(outputs, true)
}

#[derive(Serialize)]
struct AsymptoteRow {
    j: f64,
    #[serde(rename = "K3_closed_form")]
    k3_closed_form: f64,
    #[serde(rename = "K3_asymptote")]
    k3_asymptote: f64,
    #[serde(rename = "K3_fixed_tau_simulated")]
    k3_fixed_tau_simulated: f64,
}

fn cmd_asymptote(j_max: f64, out: Option<PathBuf>) -> Result<Outcome> {
    let mut run = Run::new("asymptote");
    run.param("j_max", j_max);
    let top = (2.0 * j_max + 1e-9).floor() as u32;
    let rows: Vec<AsymptoteRow> = (1..=top)
        .into_par_iter()
        .map(|t| {
            let j = t as f64 / 2.0;
            Ok(AsymptoteRow {
                j,
                k3_closed_form: k3_special(t),
                k3_asymptote: k3_asymptote(j),
                k3_fixed_tau_simulated: fixed_tau_lgi(t)?.k3,
            })
        })
        .collect::<Result<_>>()?;
    let mut outputs = Vec::new();
    match out {
        Some(path) => {
            write_rows(&path, "rows", &rows, json!({}))?;
            outputs.push(path);
        }
        None => {
            println!("{:>6} {:>14} {:>14} {:>14}", "j", "closed_form", "asymptote", "simulated");
            for r in &rows {
                println!(
                    "{:>6} {:>14.10} {:>14.10} {:>14.10}",
                    r.j, r.k3_closed_form, r.k3_asymptote, r.k3_fixed_tau_simulated
                );
            }
        }
    }
    run.finish(outputs, true)
}

#[derive(Debug, Clone, Serialize)]
struct OptimizeRow {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    k3_max: f64,
    block_sizes: String,
    q: String,
    restarts: usize,
    seed: u64,
    converged: bool,
    iterations: usize,
}

fn optimize_row(scheme: &MeasurementScheme, res: &OptimizationResult, seed: u64) -> OptimizeRow {
    OptimizeRow {
        m: scheme.outcomes(),
        n: scheme.dim(),
        k3_max: res.k3_max,
        block_sizes: join(&scheme.block_sizes()),
        q: join(scheme.labels()),
        restarts: res.restarts_used,
        seed,
        converged: res.converged,
        iterations: res.iterations,
    }
}

fn cmd_optimize(
    n: usize,
    m: usize,
    restarts: Option<usize>,
    seed: Option<u64>,
    enumerate_q: bool,
    out: Option<PathBuf>,
) -> Result<Outcome> {
    let mut run = Run::new("optimize");
    let seed = resolve_seed(seed);
    let restarts = restarts.unwrap_or_else(|| default_restarts(n));
    run.seed = Some(seed);
    run.param("n", n);
    run.param("m", m);
    run.param("restarts", restarts);
    run.param("seed", seed);
    run.param("enumerate_q", enumerate_q);

    let mut rows = Vec::new();
    let mut best: Option<(MeasurementScheme, OptimizationResult)> = None;
    let mut consider = |scheme: MeasurementScheme, res: OptimizationResult| {
        rows.push(optimize_row(&scheme, &res, seed));
        if best.as_ref().is_none_or(|(_, b)| res.k3_max > b.k3_max) {
            best = Some((scheme, res));
        }
    };
    if enumerate_q {
        for (sizes, q) in labeled_patterns(n, m) {
            let scheme = MeasurementScheme::from_block_sizes(&sizes, q)?;
            let res = maximize_k3(&scheme, restarts, seed)?;
            consider(scheme, res);
        }
    } else {
        let (row, res) = maximize_pair(m, n, restarts, seed)?;
        consider(MeasurementScheme::from_block_sizes(&row.block_sizes, canonical_labels(m))?, res);
    }
    let (scheme, res) = best.expect("at least one structure");
    let converged = rows.iter().all(|r| r.converged);
    for r in &rows {
        println!("blocks [{}] q [{}]  K3 = {:.8}", r.block_sizes, r.q, r.k3_max);
    }
    println!("k3_max = {:.8}", res.k3_max);

    let mut outputs = Vec::new();
    if let Some(path) = out {
        let extra = json!({
            "best": {
                "M": m,
                "N": n,
                "k3_max": res.k3_max,
                "block_sizes": scheme.block_sizes(),
                "q": scheme.labels(),
                "seed": seed,
                "restarts": restarts,
                "converged": res.converged,
                "wall_time": run.start.elapsed().as_secs_f64(),
                "u21": MatrixRecord::from(&res.u21),
                "u32": MatrixRecord::from(&res.u32),
                "rho0": MatrixRecord::from(res.rho0.matrix()),
            }
        });
        write_rows(&path, "results", &rows, extra)?;
        outputs.push(path);
    }
    run.finish(outputs, converged)
}

#[derive(Serialize)]
struct BoundRow {
    #[serde(rename = "M")]
    m: usize,
    dim: usize,
    optimum: f64,
    gap: f64,
    iterations: usize,
    max_residual: f64,
    min_eigenvalue: f64,
    reference: Option<f64>,
}

fn cmd_bound(m: usize, tol: f64, export: Option<PathBuf>, out: Option<PathBuf>) -> Result<Outcome> {
    let mut run = Run::new("bound");
    run.param("m", m);
    run.param("tol", tol);
    run.param("export_sdpa", &export);
    let problem = MomentProblem::new(m)?;
    if let Some(path) = export {
        export_sdpa(&problem, &path)?;
        println!("wrote {} (dimension {}, {} constraints)", path.display(), problem.dim, problem.constraints.len());
        return run.finish(vec![path], true);
    }
    let sol = match problem.solve(tol) {
        Ok(s) => s,
        Err(Error::NotConverged { gap, iterations }) => {
            eprintln!("solver stopped after {iterations} iterations with gap {gap:.3e}");
            return run.finish(Vec::new(), false);
        }
        Err(e) => return Err(e),
    };
    println!("M = {m}: K3 <= {:.7} (gap {:.2e}, {} iterations)", sol.optimum, sol.duality_gap, sol.iterations);
    let mut outputs = Vec::new();
    if let Some(path) = out {
        let row = BoundRow {
            m,
            dim: problem.dim,
            optimum: sol.optimum,
            gap: sol.duality_gap,
            iterations: sol.iterations,
            max_residual: sol.max_residual,
            min_eigenvalue: sol.min_eigenvalue,
            reference: table1().sdp_value(m),
        };
        write_rows(&path, "bounds", &[row], json!({}))?;
        outputs.push(path);
    }
    run.finish(outputs, true)
}

#[derive(Debug, Clone, Serialize)]
struct Table1Row {
    kind: &'static str,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: Option<usize>,
    k3: Option<f64>,
    reference: f64,
    deviation: Option<f64>,
    block_sizes: String,
    restarts: Option<usize>,
    converged: bool,
    status: String,
}

fn cmd_table1(restarts: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Outcome> {
    let mut run = Run::new("table1");
    let seed = resolve_seed(seed);
    run.seed = Some(seed);
    run.param("restarts", restarts);
    run.param("seed", seed);
    let reference = table1();
    let mut rows = Vec::new();

    for cell in reference.sdp.iter().filter(|c| c.m <= 4) {
        let row = match MomentProblem::new(cell.m).and_then(|p| p.solve(1e-9)) {
            Ok(sol) => Table1Row {
                kind: "SDP",
                m: cell.m,
                n: None,
                k3: Some(sol.optimum),
                reference: cell.k3_max,
                deviation: Some(sol.optimum - cell.k3_max),
                block_sizes: String::new(),
                restarts: None,
                converged: true,
                status: "ok".into(),
            },
            Err(e) => failed_row("SDP", cell.m, None, cell.k3_max, e),
        };
        print_table_row(&row);
        rows.push(row);
    }
    for cell in &reference.max {
        let r = restarts.unwrap_or_else(|| default_restarts(cell.n));
        let row = match maximize_pair(cell.m, cell.n, r, seed) {
            Ok((t, _)) => Table1Row {
                kind: "MAX",
                m: cell.m,
                n: Some(cell.n),
                k3: Some(t.k3_max),
                reference: cell.k3_max,
                deviation: Some(t.k3_max - cell.k3_max),
                block_sizes: join(&t.block_sizes),
                restarts: Some(r),
                converged: t.converged,
                status: "ok".into(),
            },
            Err(e) => failed_row("MAX", cell.m, Some(cell.n), cell.k3_max, e),
        };
        print_table_row(&row);
        rows.push(row);
    }
    let converged = rows.iter().all(|r| r.converged);
    let mut outputs = Vec::new();
    if let Some(path) = out {
        write_rows(&path, "cells", &rows, json!({ "seed": seed }))?;
        outputs.push(path);
    }
    run.finish(outputs, converged)
}

fn failed_row(kind: &'static str, m: usize, n: Option<usize>, reference: f64, e: Error) -> Table1Row {
    Table1Row {
        kind,
        m,
        n,
        k3: None,
        reference,
        deviation: None,
        block_sizes: String::new(),
        restarts: None,
        converged: false,
        status: e.to_string(),
    }
}

fn print_table_row(r: &Table1Row) {
    let n = r.n.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
    match (r.k3, r.deviation) {
        (Some(k), Some(d)) => {
            println!("{} M={} N={:>2} K3={:.6} ref={:.6} dev={:+.5}", r.kind, r.m, n, k, r.reference, d)
        }
        _ => println!("{} M={} N={:>2} failed: {}", r.kind, r.m, n, r.status),
    }
}
