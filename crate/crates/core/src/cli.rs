//! `levy-ou` command line interface.
//!
//! Every command is a pure function of its input files, flags and seed.
//! Failures print a JSON object `{"error": kind, "message": ..}` on standard
//! error and exit with code 2 (invalid flags) or 3 (domain, data or I/O
//! errors).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::diagnostics::{
    ljung_box, predict_one_step, residuals, theoretical_acf, DEFAULT_PREDICTION_PATHS,
};
use crate::estimation::{estimate_all, sample_acf, MomentEstimates, DEFAULT_LAGS};
use crate::inference::theta_inference;
use crate::mc_study::{clt_check, run_study, StudyConfig};
use crate::simulation::{simulate_path, Family, LevyOUModel, SeriesTruncation, TimeSeries};
use crate::special::RandomSource;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;

/// Environment variable capping internal parallelism; 0 means automatic.
pub const THREADS_ENV: &str = "LEVY_OU_THREADS";

const SPACING_RTOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "levy-ou", version, about = "Levy-driven Ornstein-Uhlenbeck simulation and moment estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a stationary path and write it as CSV.
    Simulate(SimulateArgs),
    /// Method-of-moments estimates from a CSV series.
    Estimate(EstimateArgs),
    /// Monte Carlo study of the estimators.
    McStudy(StudyArgs),
    /// Normality check of the standardised estimators across replications.
    Clt(CltArgs),
    /// Fit, compare autocorrelations and test squared residuals.
    Diagnose(DiagnoseArgs),
    /// One-step-ahead predictions with simulated 95% bands.
    Predict(PredictArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("expected a level in (0, 1), got {s}"))
    }
}

fn family_arg(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TruncationArgs {
    /// Stop the shot-noise series once a term bound falls below this value.
    #[arg(long, default_value_t = 1e-10, value_parser = positive_f64)]
    pub tail_tol: f64,
    /// Hard cap on the number of series terms per increment.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_terms: u64,
}

impl TruncationArgs {
    fn truncation(&self) -> SeriesTruncation {
        SeriesTruncation { max_terms: self.max_terms as usize, tail_tol: self.tail_tol }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_parser = family_arg)]
    pub family: Family,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, value_parser = positive_f64)]
    pub sigma2: f64,
    #[arg(long, value_parser = positive_f64)]
    pub lambda: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, value_parser = positive_f64)]
    pub delta: f64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// CSV with a `value` column and an optional equally spaced `time` column.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Sampling step; inferred from the `time` column when omitted.
    #[arg(long, value_parser = positive_f64)]
    pub delta: Option<f64>,
    /// Apply the natural logarithm to the values before fitting.
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_LAGS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub lags: u64,
    /// Report delta-method standard errors and intervals at this level.
    #[arg(long, value_parser = unit_interval)]
    pub ci: Option<f64>,
    /// Bartlett bandwidth for the long-run covariance.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub bandwidth: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long, default_value = "gamma", value_parser = family_arg)]
    pub family: Family,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.25, value_parser = positive_f64)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.5, value_parser = positive_f64)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_obs: u64,
    #[arg(long, default_value_t = 0.1, value_parser = positive_f64)]
    pub delta: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
    pub n_paths: u64,
    #[arg(long, default_value_t = DEFAULT_LAGS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub lags: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

impl StudyArgs {
    fn config(&self) -> StudyConfig {
        StudyConfig {
            family: self.family,
            theta0: [self.mu, self.sigma2, self.lambda],
            n_obs: self.n_obs as usize,
            delta: self.delta,
            n_paths: self.n_paths as usize,
            d: self.lags as usize,
            seed: self.seed,
            truncation: self.truncation.truncation(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CltArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(100..))]
    pub reps: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_LAGS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub lags: u64,
    #[arg(long, default_value = "gamma", value_parser = family_arg)]
    pub family: Family,
    /// Write lag / empirical / model / residual autocorrelations as CSV.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Series used to fit the parameters; defaults to `--in`.
    #[arg(long)]
    pub fit_on: Option<PathBuf>,
    #[arg(long, value_parser = family_arg)]
    pub family: Family,
    #[arg(long, default_value_t = DEFAULT_PREDICTION_PATHS as u64, value_parser = clap::value_parser!(u64).range(2..))]
    pub n_paths: u64,
    #[arg(long, default_value_t = DEFAULT_LAGS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub lags: u64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command: exit code plus a short machine-readable kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, kind: "usage", message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DOMAIN, kind: "data", message: message.into() }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind, "message": self.message, "exit_code": self.code }).to_string()
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        Self { code: EXIT_DOMAIN, kind: "domain", message: e.to_string() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self { code: EXIT_DOMAIN, kind: "io", message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self { code: EXIT_DOMAIN, kind: "io", message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Provenance record printed by commands that write files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    pub parameters: Value,
    pub seed: u64,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Value,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Formats a value with 17 significant digits so that it reads back exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series_csv(path: &Path, values: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "value")?;
    for v in values {
        writeln!(w, "{}", format_value(*v))?;
    }
    w.flush()
}

/// Reads a series CSV. The `value` column is required; when a `time` column
/// is present it must be equally spaced and defines Δ (cross-checked against
/// `delta` when both are given).
pub fn read_series_csv(path: &Path, delta: Option<f64>, log: bool) -> CliResult<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    let value_col = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| CliError::data(format!("{}: missing `value` column", path.display())))?;
    let time_col = headers.iter().position(|h| h == "time");

    let mut values = Vec::new();
    let mut times = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let parse = |col: usize, what: &str| -> CliResult<f64> {
            let field = record.get(col).unwrap_or("");
            field.parse::<f64>().map_err(|_| {
                CliError::data(format!("{}: row {}: bad {what} `{field}`", path.display(), line + 1))
            })
        };
        let mut v = parse(value_col, "value")?;
        if log {
            if !(v > 0.0) {
                return Err(CliError::data(format!(
                    "{}: row {}: cannot take the log of {v}",
                    path.display(),
                    line + 1
                )));
            }
            v = v.ln();
        }
        values.push(v);
        if let Some(tc) = time_col {
            times.push(parse(tc, "time")?);
        }
    }
    if values.is_empty() {
        return Err(CliError::data(format!("{}: no observations", path.display())));
    }

    let inferred = if times.len() >= 2 {
        let step = times[1] - times[0];
        if !(step > 0.0) {
            return Err(CliError::data("time column must be increasing"));
        }
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > SPACING_RTOL * step.abs().max(w[1].abs()) {
                return Err(CliError::data(format!(
                    "time column is not equally spaced at row {}",
                    i + 2
                )));
            }
        }
        Some(step)
    } else {
        None
    };
    let delta = match (delta, inferred) {
        (Some(d), Some(t)) => {
            if (d - t).abs() > SPACING_RTOL * d.max(t) * 1e3 {
                return Err(CliError::data(format!(
                    "--delta {d} disagrees with the time column spacing {t}"
                )));
            }
            d
        }
        (Some(d), None) => d,
        (None, Some(t)) => t,
        (None, None) => {
            return Err(CliError::usage("--delta is required when the input has no time column"))
        }
    };
    Ok(TimeSeries::new(values, delta)?)
}

fn estimates_json(est: &MomentEstimates) -> Value {
    json!({
        "n": est.acf.n,
        "delta": est.delta,
        "lags": est.acf.d,
        "mu_hat": est.mu_hat,
        "sigma2_hat": est.sigma2_hat,
        "lambda1_hat": est.lambda1_hat,
        "lambda2_hat": est.lambda2_hat,
        "acf": { "gamma_hat": est.acf.gamma_hat, "rho_hat": est.acf.rho_hat },
        "flags": {
            "lambda1_undefined": est.lambda1_undefined(),
            "lambda1_clamped": est.lambda1_clamped,
            "lambda2_clamped": est.lambda2_clamped,
        },
        "nonstationary": est.nonstationary_flag,
    })
}

fn to_pretty(v: &impl Serialize) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let started = unix_now();
    let model = LevyOUModel::from_moments(args.family, args.mu, args.sigma2)?;
    let trunc = args.truncation.truncation();
    let mut rng = RandomSource::new(args.seed);
    let path = simulate_path(&model, args.lambda, args.n as usize, args.delta, &mut rng, &trunc)?;
    write_series_csv(&args.out, path.series.values())?;
    let manifest = RunManifest {
        schema: 1,
        command: "simulate".into(),
        parameters: serde_json::to_value(args)?,
        seed: args.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs: json!({
            "file": args.out,
            "rows": path.series.len(),
            "model": model,
            "truncation_warnings": path.truncation_warnings,
        }),
    };
    writeln!(out, "{}", to_pretty(&manifest)?)?;
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> CliResult<()> {
    let series = read_series_csv(&args.input.input, args.input.delta, args.input.log)?;
    let d = args.lags as usize;
    let est = estimate_all(&series, d)?;
    let mut report = estimates_json(&est);
    report["schema"] = json!(1);
    if let Some(level) = args.ci {
        let bandwidth = args.bandwidth.map(|b| b as usize);
        match theta_inference(series.values(), &est, bandwidth, level) {
            Ok(inf) => {
                report["inference"] = serde_json::to_value(&inf)?;
            }
            Err(e @ crate::Error::ClampedEstimator) => {
                report["inference"] = Value::Null;
                report["inference_error"] = json!(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    writeln!(out, "{}", to_pretty(&report)?)?;
    Ok(())
}

fn cmd_mc_study(args: &StudyArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = args.config();
    config.validate()?;
    let report = run_study(&config)?;
    write!(out, "{}", report.to_table())?;
    if let Some(path) = &args.json {
        std::fs::write(path, to_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn cmd_clt(args: &CltArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = args.study.config();
    let report = clt_check(&config, args.reps as usize)?;
    let text = to_pretty(&json!({ "schema": 1, "config": config, "normality": report }))?;
    writeln!(out, "{text}")?;
    if let Some(path) = &args.study.json {
        std::fs::write(path, text + "\n")?;
    }
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs, out: &mut dyn Write) -> CliResult<()> {
    let series = read_series_csv(&args.input.input, args.input.delta, args.input.log)?;
    let d = args.lags as usize;
    let est = estimate_all(&series, d)?;
    if est.lambda2_clamped {
        return Err(crate::Error::ClampedEstimator.into());
    }
    let model_acf = theoretical_acf(est.lambda2_hat, est.delta, d)?;
    let resid = residuals(&series, &est)?;
    let resid_acf = sample_acf(&resid, d.min(resid.len().saturating_sub(1)))?;
    let squared: Vec<f64> = resid.iter().map(|r| r * r).collect();
    let lb = ljung_box(&squared, d)?;

    let pairs: Vec<Value> = (1..=d)
        .map(|h| json!({ "lag": h, "empirical": est.acf.rho_hat[h], "model": model_acf[h - 1] }))
        .collect();
    let report = json!({
        "schema": 1,
        "family": args.family,
        "fit": estimates_json(&est),
        "acf_pairs": pairs,
        "residuals": resid,
        "residual_acf": resid_acf.rho_hat[1..],
        "ljung_box_squared_residuals": lb,
    });

    if let Some(path) = &args.plot_data {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "lag,empirical,model,residual")?;
        for h in 1..=d {
            let r = resid_acf.rho_hat.get(h).copied().unwrap_or(f64::NAN);
            writeln!(
                w,
                "{h},{},{},{}",
                format_value(est.acf.rho_hat[h]),
                format_value(model_acf[h - 1]),
                format_value(r)
            )?;
        }
        w.flush()?;
    }
    writeln!(out, "{}", to_pretty(&report)?)?;
    Ok(())
}

fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    let history = read_series_csv(&args.input.input, args.input.delta, args.input.log)?;
    let fit_series = match &args.fit_on {
        Some(p) => read_series_csv(p, Some(history.delta()), args.input.log)?,
        None => history.clone(),
    };
    let est = estimate_all(&fit_series, args.lags as usize)?;
    if est.lambda2_clamped {
        return Err(crate::Error::ClampedEstimator.into());
    }
    let model = LevyOUModel::from_moments(args.family, est.mu_hat, est.sigma2_hat)?;
    let mut rng = RandomSource::new(args.seed);
    let band = predict_one_step(
        &model,
        est.lambda2_hat,
        history.delta(),
        &history,
        args.n_paths as usize,
        &mut rng,
        &args.truncation.truncation(),
    )?;

    let mut csv = String::from("point,lower,upper\n");
    for i in 0..band.point.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            format_value(band.point[i]),
            format_value(band.lower[i]),
            format_value(band.upper[i])
        ));
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            let summary = json!({
                "schema": 1,
                "command": "predict",
                "family": args.family,
                "fit": { "mu_hat": est.mu_hat, "sigma2_hat": est.sigma2_hat, "lambda2_hat": est.lambda2_hat },
                "model": model,
                "n_paths": band.n_paths,
                "rows": band.point.len(),
                "seed": args.seed,
                "file": path,
            });
            writeln!(out, "{}", to_pretty(&summary)?)?;
        }
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(())
}

/// Runs a parsed command, writing its normal output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::McStudy(a) => cmd_mc_study(a, out),
        Command::Clt(a) => cmd_clt(a, out),
        Command::Diagnose(a) => cmd_diagnose(a, out),
        Command::Predict(a) => cmd_predict(a, out),
    }
}

/// Applies `LEVY_OU_THREADS` to the global thread pool.
pub fn configure_threads() -> CliResult<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::usage(format!("{THREADS_ENV} must be a nonnegative integer")))?,
        Err(_) => 0,
    };
    if threads > 0 {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

/// Entry point shared by the binary: parses `args`, runs, and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    let result = configure_threads().and_then(|_| run(&cli, &mut lock));
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.code
        }
    }
}
