//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or domain error, 3 verification or
//! statistical-check failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::channels::{depolarizing_spectrum, BellSpectrum};
use crate::error::QkdError;
use crate::info_theory::max_error_rate;
use crate::qudit_algebra::{Dim, Family, ProtocolSpec};
use crate::rates_asymptotic::{critical_q, r_infinity};
use crate::rates_finite::{log_grid, optimize_r_finite_with, FiniteRateReport, FluxMode, SearchConfig};
use crate::simulator::{run_simulation, SimConfig, SimMode};
use crate::verify::{verify_dim, CheckResult, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;
pub const SCHEMA_VERSION: u32 = 1;
const SIGNIFICANT_DIGITS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "qudit-qkd", version, about = "Secret-key rates for qudit QKD protocols")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Error rate at which the asymptotic key fraction vanishes.
    CriticalQ(CriticalQArgs),
    /// Asymptotic key fraction for one Q or a Q sweep.
    Asymptotic(AsymptoticArgs),
    /// Optimized finite-key rate over a log-spaced grid of signal counts.
    FiniteKey(FiniteKeyArgs),
    /// Monte Carlo measurement statistics of a Bell-diagonal source (JSON).
    Simulate(SimulateArgs),
    /// Run the algebraic invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    TwoBasis,
    Dplus1,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::TwoBasis => Family::TwoBasis,
            FamilyArg::Dplus1 => Family::DPlusOneBasis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FluxArg {
    Equal,
    Single,
    Brute,
}

impl From<FluxArg> for FluxMode {
    fn from(f: FluxArg) -> FluxMode {
        match f {
            FluxArg::Equal => FluxMode::Equal,
            FluxArg::Single => FluxMode::Single,
            FluxArg::Brute => FluxMode::Brute,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CriticalQArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,7,11")]
    pub dims: Vec<usize>,
    #[arg(long, value_enum, default_value = "two-basis")]
    pub family: FamilyArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AsymptoticArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dim: Vec<usize>,
    #[arg(long, value_enum, default_value = "two-basis")]
    pub family: FamilyArg,
    /// Error rate as a fraction (0.05) or percentage (5%).
    #[arg(long, value_parser = parse_rate, conflicts_with_all = ["q_min", "q_max", "q_step"])]
    pub q: Option<f64>,
    #[arg(long, value_parser = parse_rate, default_value = "0")]
    pub q_min: f64,
    #[arg(long, value_parser = parse_rate)]
    pub q_max: Option<f64>,
    #[arg(long, value_parser = parse_rate, default_value = "0.01")]
    pub q_step: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FiniteKeyArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dim: Vec<usize>,
    #[arg(long, value_enum, default_value = "two-basis")]
    pub family: FamilyArg,
    #[arg(long, value_parser = parse_rate, default_value = "5%")]
    pub q: f64,
    #[arg(long, default_value = "1e-5")]
    pub eps: f64,
    #[arg(long = "eps-ec", default_value = "1e-10")]
    pub eps_ec: f64,
    /// A single signal count; overrides the grid flags.
    #[arg(long, value_parser = parse_count)]
    pub n: Option<u64>,
    #[arg(long, value_parser = parse_count, default_value = "1e3")]
    pub n_min: u64,
    #[arg(long, value_parser = parse_count, default_value = "1e10")]
    pub n_max: u64,
    #[arg(long, default_value = "29")]
    pub n_points: usize,
    #[arg(long, value_enum, default_value = "equal")]
    pub flux_mode: FluxArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// key=value file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Depolarizing error rate of the source.
    #[arg(long, value_parser = parse_rate)]
    pub q: Option<f64>,
    /// Bell spectrum, d² comma-separated weights, row-major in (j, k).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_count)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub basis_probs: Option<Vec<f64>>,
    /// Sample differences from the analytic error vectors instead of exact
    /// projections (needed for d > 11).
    #[arg(long)]
    pub fast: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Dimensions: list and/or inclusive ranges, e.g. `2..7`, `13`, `2,3,5..7`.
    #[arg(long, default_value = "2..7")]
    pub dims: String,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<QkdError> for CliError {
    fn from(e: QkdError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::usage(format!("I/O error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `0.05` or `5%`.
pub fn parse_rate(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (num, scale) = match s.strip_suffix('%') {
        Some(p) => (p.trim(), 0.01),
        None => (s, 1.0),
    };
    let v: f64 = num.parse().map_err(|_| format!("not a number: '{s}'"))?;
    if !v.is_finite() {
        return Err(format!("not finite: '{s}'"));
    }
    Ok(v * scale)
}

/// Parses a positive count, accepting scientific notation such as `1e6`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.trim().parse().map_err(|_| format!("not a count: '{s}'"))?;
    if !(v >= 0.0 && v.fract() == 0.0 && v < 1.8e19) {
        return Err(format!("not a non-negative integer: '{s}'"));
    }
    Ok(v as u64)
}

/// Parses `2..7`, `13`, `2,3,5..7`.
pub fn parse_dims(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut dims = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| format!("bad range '{part}'"))?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad range '{part}'"))?;
            if a > b {
                return Err(format!("empty range '{part}'"));
            }
            dims.extend(a..=b);
        } else {
            dims.push(part.parse().map_err(|_| format!("bad dimension '{part}'"))?);
        }
    }
    if dims.is_empty() {
        return Err("no dimensions given".into());
    }
    Ok(dims)
}

/// Rounds to 10 significant digits; the emitted text parses back to exactly
/// this value.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

#[derive(Serialize)]
struct JsonDocument<'a, P: Serialize, R: Serialize> {
    schema_version: u32,
    command: &'a str,
    parameters: P,
    rows: &'a [R],
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::usage(e.to_string()))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_field(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(x) => x.clone(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.to_string(),
            (None, Some(i)) => i.to_string(),
            _ => n.as_f64().unwrap_or(f64::NAN).to_string(),
        },
        other => other.to_string(),
    }
}

/// Header always present; column order follows the row struct.
fn to_csv<R: Serialize>(rows: &[R]) -> CliResult<String> {
    let err = |e: csv::Error| CliError::usage(e.to_string());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header_written = false;
    for r in rows {
        let mut v = serde_json::to_value(r).map_err(|e| CliError::usage(e.to_string()))?;
        round_value(&mut v);
        let Value::Object(map) = v else {
            return Err(CliError::usage("CSV rows must be flat records"));
        };
        if !header_written {
            w.write_record(map.keys()).map_err(err)?;
            header_written = true;
        }
        w.write_record(map.values().map(csv_field)).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::usage(e.to_string()))
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn emit_rows<P: Serialize, R: Serialize>(
    command: &str,
    parameters: P,
    rows: &[R],
    output: &OutputArgs,
) -> CliResult<()> {
    let text = match output.format {
        FormatArg::Csv => to_csv(rows)?,
        FormatArg::Json => to_json(&JsonDocument {
            schema_version: SCHEMA_VERSION,
            command,
            parameters,
            rows,
        })?,
    };
    emit(&text, output.out.as_deref())
}

fn spec_for(d: usize, family: FamilyArg) -> CliResult<ProtocolSpec> {
    Ok(ProtocolSpec::new(family.into(), Dim::new(d)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CriticalQRow {
    pub d: usize,
    pub family: String,
    pub q_crit_percent: f64,
}

pub fn cmd_critical_q(args: &CriticalQArgs) -> CliResult<()> {
    let specs = args
        .dims
        .iter()
        .map(|&d| spec_for(d, args.family))
        .collect::<CliResult<Vec<_>>>()?;
    let rows = specs
        .par_iter()
        .map(|s| {
            Ok(CriticalQRow {
                d: s.dim().get(),
                family: s.family().to_string(),
                q_crit_percent: 100.0 * critical_q(s)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    #[derive(Serialize)]
    struct Params<'a> {
        dims: &'a [usize],
        family: String,
    }
    let params = Params { dims: &args.dims, family: Family::from(args.family).to_string() };
    emit_rows("critical-q", params, &rows, &args.output)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AsymptoticRow {
    pub d: usize,
    pub family: String,
    pub q: f64,
    pub i_e: f64,
    pub h_ab: f64,
    pub r_inf: f64,
    pub r_inf_raw: f64,
}

fn q_sweep(min: f64, max: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0) {
        return Err(CliError::usage("--q-step must be positive"));
    }
    if max < min {
        return Err(CliError::usage("--q-max is below --q-min"));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}

pub fn cmd_asymptotic(args: &AsymptoticArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    for &d in &args.dim {
        let spec = spec_for(d, args.family)?;
        let qs = match args.q {
            Some(q) => vec![q],
            None => {
                let cap = max_error_rate(spec.dim());
                let requested = args.q_max.unwrap_or(cap);
                if requested > cap + 1e-12 {
                    eprintln!(
                        "warning: d = {d}: Q sweep capped at (d-1)/d = {}",
                        round_sig(cap)
                    );
                }
                q_sweep(args.q_min, requested.min(cap), args.q_step)?
            }
        };
        for q in qs {
            let r = r_infinity(&spec, q)?;
            rows.push(AsymptoticRow {
                d,
                family: spec.family().to_string(),
                q,
                i_e: r.i_e,
                h_ab: r.h_ab,
                r_inf: r.r_inf,
                r_inf_raw: r.r_inf_raw,
            });
        }
    }
    #[derive(Serialize)]
    struct Params<'a> {
        dim: &'a [usize],
        family: String,
    }
    let params = Params { dim: &args.dim, family: Family::from(args.family).to_string() };
    emit_rows("asymptotic", params, &rows, &args.output)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FiniteKeyRow {
    pub d: usize,
    pub family: String,
    pub flux_mode: String,
    pub n_signals: u64,
    pub r_n: f64,
    pub p01: f64,
    pub eps_pa: f64,
    pub eps_pe: f64,
    pub eps_bar: f64,
    pub n: u64,
    pub m_check: u64,
    pub xi_check: Option<f64>,
    pub holevo_worst: f64,
    pub h_ab: f64,
    pub ec_term: Option<f64>,
    pub pa_term: Option<f64>,
    pub smooth_coefficient: f64,
    pub smooth_term: Option<f64>,
    pub r_n_raw: Option<f64>,
    pub status: String,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl FiniteKeyRow {
    pub fn from_report(spec: &ProtocolSpec, n_signals: u64, r: &FiniteRateReport) -> Self {
        let status = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        FiniteKeyRow {
            d: spec.dim().get(),
            family: spec.family().to_string(),
            flux_mode: r.mode.to_string(),
            n_signals,
            r_n: r.r_n,
            p01: r.params.p01,
            eps_pa: r.params.eps_pa,
            eps_pe: r.params.eps_pe,
            eps_bar: r.params.eps_bar,
            n: r.n,
            m_check: r.m_per_basis.get(1).copied().unwrap_or(0),
            xi_check: r.xi_per_basis.get(1).copied().and_then(finite),
            holevo_worst: r.terms.holevo_worst,
            h_ab: r.terms.h_ab,
            ec_term: finite(r.terms.ec_term),
            pa_term: finite(r.terms.pa_term),
            smooth_coefficient: r.terms.smooth_coefficient,
            smooth_term: finite(r.terms.smooth_term),
            r_n_raw: finite(r.r_n_raw),
            status,
        }
    }
}

pub fn cmd_finite_key(args: &FiniteKeyArgs) -> CliResult<()> {
    let grid = match args.n {
        Some(n) => vec![n],
        None => {
            if args.n_min == 0 || args.n_max < args.n_min {
                return Err(CliError::usage("need 1 <= --n-min <= --n-max"));
            }
            log_grid(args.n_min, args.n_max, args.n_points)
        }
    };
    let mode: FluxMode = args.flux_mode.into();
    let cfg = SearchConfig::default();
    let mut jobs = Vec::new();
    for &d in &args.dim {
        let spec = spec_for(d, args.family)?;
        jobs.extend(grid.iter().map(|&n| (spec, n)));
    }
    let rows = jobs
        .par_iter()
        .map(|(spec, n)| {
            let r = optimize_r_finite_with(spec, args.q, *n, args.eps, args.eps_ec, mode, &cfg)?;
            Ok(FiniteKeyRow::from_report(spec, *n, &r))
        })
        .collect::<CliResult<Vec<_>>>()?;
    #[derive(Serialize)]
    struct Params<'a> {
        dim: &'a [usize],
        family: String,
        q: f64,
        eps: f64,
        eps_ec: f64,
        flux_mode: String,
    }
    let params = Params {
        dim: &args.dim,
        family: Family::from(args.family).to_string(),
        q: args.q,
        eps: args.eps,
        eps_ec: args.eps_ec,
        flux_mode: mode.to_string(),
    };
    emit_rows("finite-key", params, &rows, &args.output)
}

/// Parsed `key = value` simulation config. Unset keys stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimFileConfig {
    pub dim: Option<usize>,
    pub family: Option<Family>,
    pub q: Option<f64>,
    pub lambda: Option<Vec<f64>>,
    pub rounds: Option<u64>,
    pub seed: Option<u64>,
    pub basis_probs: Option<Vec<f64>>,
    pub mode: Option<SimMode>,
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number '{x}'")))
        .collect()
}

/// One `key = value` pair per line, `#` starts a comment.
pub fn parse_sim_config(text: &str) -> std::result::Result<SimFileConfig, String> {
    let mut cfg = SimFileConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let err = |e: String| format!("line {}: {key}: {e}", lineno + 1);
        match key {
            "dim" => cfg.dim = Some(value.parse().map_err(|_| err("not an integer".into()))?),
            "family" => {
                cfg.family = Some(match value {
                    "two-basis" => Family::TwoBasis,
                    "dplus1" => Family::DPlusOneBasis,
                    _ => return Err(err(format!("unknown family '{value}'"))),
                })
            }
            "q" => cfg.q = Some(parse_rate(value).map_err(err)?),
            "lambda" => cfg.lambda = Some(parse_list(value).map_err(err)?),
            "rounds" => cfg.rounds = Some(parse_count(value).map_err(err)?),
            "seed" => cfg.seed = Some(value.parse().map_err(|_| err("not an integer".into()))?),
            "basis_probs" => cfg.basis_probs = Some(parse_list(value).map_err(err)?),
            "mode" => {
                cfg.mode = Some(match value {
                    "exact" => SimMode::Exact,
                    "fast" => SimMode::Fast,
                    _ => return Err(err(format!("unknown mode '{value}'"))),
                })
            }
            _ => return Err(format!("line {}: unknown key '{key}'", lineno + 1)),
        }
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct SimDocument<'a> {
    schema_version: u32,
    command: &'static str,
    d: usize,
    family: String,
    mode: SimMode,
    seed: u64,
    basis_probs: &'a [f64],
    lambda: &'a [f64],
    result: &'a crate::simulator::SimResult,
}

/// Builds the simulation config from an optional file plus flag overrides.
pub fn build_sim_config(args: &SimulateArgs) -> CliResult<SimConfig> {
    let mut file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            parse_sim_config(&text).map_err(CliError::usage)?
        }
        None => SimFileConfig::default(),
    };
    if args.dim.is_some() {
        file.dim = args.dim;
    }
    if let Some(f) = args.family {
        file.family = Some(f.into());
    }
    if args.q.is_some() {
        file.q = args.q;
        file.lambda = None;
    }
    if args.lambda.is_some() {
        file.lambda = args.lambda.clone();
        file.q = None;
    }
    if args.rounds.is_some() {
        file.rounds = args.rounds;
    }
    if args.seed.is_some() {
        file.seed = args.seed;
    }
    if args.basis_probs.is_some() {
        file.basis_probs = args.basis_probs.clone();
    }
    if args.fast {
        file.mode = Some(SimMode::Fast);
    }

    let d = file.dim.ok_or_else(|| CliError::usage("dim is required"))?;
    let spec = ProtocolSpec::new(file.family.unwrap_or(Family::TwoBasis), Dim::new(d)?)?;
    let seed = file.seed.ok_or_else(|| CliError::usage("seed is required"))?;
    let lam = match (&file.lambda, file.q) {
        (Some(l), _) => BellSpectrum::new(spec.dim(), l.clone())?,
        (None, Some(q)) => depolarizing_spectrum(spec.dim(), q)?,
        (None, None) => return Err(CliError::usage("either q or lambda is required")),
    };
    let mut cfg = SimConfig::new(spec, lam, file.rounds.unwrap_or(1_000_000), seed);
    if let Some(p) = file.basis_probs {
        cfg.basis_probs = p;
    }
    if let Some(m) = file.mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Returns whether every statistical check passed.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<bool> {
    let cfg = build_sim_config(args)?;
    let result = run_simulation(&cfg)?;
    let doc = SimDocument {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        d: cfg.spec.dim().get(),
        family: cfg.spec.family().to_string(),
        mode: cfg.mode,
        seed: cfg.seed,
        basis_probs: &cfg.basis_probs,
        lambda: cfg.lam.as_slice(),
        result: &result,
    };
    emit(&to_json(&doc)?, args.out.as_deref())?;
    Ok(result.passed)
}

fn format_check(r: &CheckResult) -> String {
    format!(
        "{} d={:<3} {:<22} max_error={:.3e} tol={:.0e}",
        if r.passed { "PASS" } else { "FAIL" },
        r.d,
        r.name,
        r.max_error,
        r.tolerance
    )
}

/// Returns whether every check passed.
pub fn cmd_verify(args: &VerifyArgs) -> CliResult<bool> {
    let dims = parse_dims(&args.dims).map_err(CliError::usage)?;
    let dims = dims.into_iter().map(Dim::new).collect::<Result<Vec<_>, _>>()?;
    let fault = if args.inject_fault { Fault::PerturbWeyl } else { Fault::None };
    let results: Vec<CheckResult> = dims
        .par_iter()
        .map(|&d| verify_dim(d, fault))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let failed = results.iter().filter(|r| !r.passed).count();
    let text = match args.format {
        Some(FormatArg::Json) => {
            #[derive(Serialize)]
            struct Doc<'a> {
                schema_version: u32,
                command: &'static str,
                passed: bool,
                rows: &'a [CheckResult],
            }
            to_json(&Doc { schema_version: SCHEMA_VERSION, command: "verify", passed: failed == 0, rows: &results })?
        }
        Some(FormatArg::Csv) => to_csv(&results)?,
        None => {
            let mut s: String = results.iter().map(|r| format_check(r) + "\n").collect();
            if failed == 0 {
                s += &format!("all {} checks passed\n", results.len());
            } else {
                s += &format!("{failed} of {} checks FAILED\n", results.len());
            }
            s
        }
    };
    emit(&text, args.out.as_deref())?;
    Ok(failed == 0)
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::CriticalQ(a) => cmd_critical_q(a).map(|_| true),
        Command::Asymptotic(a) => cmd_asymptotic(a).map(|_| true),
        Command::FiniteKey(a) => cmd_finite_key(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_accept_fraction_and_percent() {
        assert_eq!(parse_rate("0.05").unwrap(), 0.05);
        assert!((parse_rate("5%").unwrap() - 0.05).abs() < 1e-17);
        assert!((parse_rate(" 12.5 % ").unwrap() - 0.125).abs() < 1e-17);
        assert!(parse_rate("five").is_err());
        assert!(parse_rate("inf").is_err());
    }

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1000").unwrap(), 1000);
        assert_eq!(parse_count("1e6").unwrap(), 1_000_000);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn dims_ranges_and_lists() {
        assert_eq!(parse_dims("2..7").unwrap(), vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(parse_dims("13").unwrap(), vec![13]);
        assert_eq!(parse_dims("2,3,5..7").unwrap(), vec![2, 3, 5, 6, 7]);
        assert!(parse_dims("7..2").is_err());
        assert!(parse_dims("").is_err());
    }

    #[test]
    fn round_sig_keeps_ten_digits() {
        assert_eq!(round_sig(0.123_456_789_012_345), 0.123_456_789_0);
        assert_eq!(round_sig(1e12), 1e12);
        assert_eq!(round_sig(0.0), 0.0);
        assert!(round_sig(f64::INFINITY).is_infinite());
        let x = round_sig(std::f64::consts::PI);
        assert_eq!(x.to_string().parse::<f64>().unwrap(), x);
    }

    #[test]
    fn sim_config_parsing() {
        let cfg = parse_sim_config(
            "# depolarizing source\n dim = 3\nfamily = dplus1\nq = 10%\nrounds=1e5\nseed = 42 # fixed\nmode = fast\n",
        )
        .unwrap();
        assert_eq!(cfg.dim, Some(3));
        assert_eq!(cfg.family, Some(Family::DPlusOneBasis));
        assert!((cfg.q.unwrap() - 0.1).abs() < 1e-16);
        assert_eq!(cfg.rounds, Some(100_000));
        assert_eq!(cfg.seed, Some(42));
        assert_eq!(cfg.mode, Some(SimMode::Fast));

        assert!(parse_sim_config("dim 3").is_err());
        assert!(parse_sim_config("colour = red").is_err());
        assert!(parse_sim_config("family = three-basis").is_err());
        let l = parse_sim_config("lambda = 1, 0, 0, 0").unwrap();
        assert_eq!(l.lambda, Some(vec![1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn composite_dplus1_is_usage_error() {
        assert_eq!(run(["qudit-qkd", "critical-q", "--dims", "4", "--family", "dplus1"]), EXIT_USAGE);
        assert_eq!(run(["qudit-qkd", "asymptotic", "--dim", "2", "--q", "0.7"]), EXIT_USAGE);
        assert_eq!(run(["qudit-qkd", "simulate", "--dim", "2", "--q", "0.1"]), EXIT_USAGE);
        assert_eq!(run(["qudit-qkd", "no-such-command"]), EXIT_USAGE);
    }
}
