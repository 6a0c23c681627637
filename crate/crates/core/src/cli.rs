//! Command-line front end: estimate from a p-value file, run simulations,
//! print efficiency bounds and dump model densities.
//!
//! Every subcommand accepts `--config FILE` with `key=value` lines; each key
//! is the long name of a flag of that subcommand. Flags given on the command
//! line take precedence over the file.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::cr::{theta_hat_cr, CrConfig, PMode};
use crate::efficiency::{efficient_information, one_step, optimal_variance, DeltaPlugIn};
use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, Method, Trace};
use crate::fmt::{sig, DEFAULT_DIGITS};
use crate::histogram::theta_hat_min;
use crate::mixture::{MixtureParams, PValueSample};
use crate::partition::Partition;
use crate::shape::{theta_hat_langaas, theta_hat_oracle, theta_hat_storey};
use crate::sim::{run_simulation_with_jobs, EstimatorSettings, ModelSpec, SimConfig, DEFAULT_REPS, DESK_GRID, PAPER_GRID};

/// Exit status for invalid input or flags.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pi0lab", version, about = "Estimate the proportion of true null hypotheses from p-values")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate theta from a file of p-values (one per line, optional "pvalue" header; "-" reads stdin)
    Estimate(EstimateArgs),
    /// Run the seeded Monte-Carlo study and write the MSE table as CSV
    Simulate(SimulateArgs),
    /// Print the efficient information and optimal variance at (theta, delta)
    Bound(BoundArgs),
    /// Tabulate the mixture and alternative densities and cdf on a grid
    Density(DensityArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Significant digits in printed numbers
    #[arg(long, default_value_t = DEFAULT_DIGITS, value_parser = parse_precision)]
    pub precision: usize,
    /// File of key=value lines supplying defaults for the long flags
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectorArgs {
    /// Smallest dyadic exponent in the partition collection (M = 2^m)
    #[arg(long, default_value_t = 2)]
    pub m_min: u32,
    /// Largest dyadic exponent in the partition collection
    #[arg(long, default_value_t = 5)]
    pub m_max: u32,
    /// Partition collection: full, or right-anchored (flat cell ends at 1).
    /// Defaults to full for `estimate` and right-anchored for `simulate`
    #[arg(long, value_enum)]
    pub collection: Option<Collection>,
    /// Fixed leave-p-out size for every partition (default: per-partition MSE argmin)
    #[arg(long, value_name = "P")]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Collection {
    Full,
    RightAnchored,
}

impl SelectorArgs {
    fn config(&self, default: Collection) -> CrConfig {
        CrConfig {
            m_min: self.m_min,
            m_max: self.m_max,
            right_anchored: self.collection.unwrap_or(default) == Collection::RightAnchored,
            p_mode: self.p.map_or(PMode::Auto, |p| PMode::Fixed(Some(p))),
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input file
    pub input: PathBuf,
    /// hist, cr, storey, langaas, onestep or oracle
    #[arg(long, default_value = "cr")]
    pub method: Method,
    /// Storey threshold
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Width of the flat region (required by oracle; fixes the one-step plug-in)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of equal cells for the hist method
    #[arg(long, default_value_t = 8)]
    pub cells: usize,
    #[command(flatten)]
    pub selector: SelectorArgs,
    /// Clamp the estimate to [0, 1]
    #[arg(long)]
    pub clamp: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("model_choice").required(true).args(["model", "theta"])))]
pub struct SimulateArgs {
    /// Benchmark model label: a1, b1, c1, d1 (delta = 0.3) or a2, b2, c2, d2 (delta = 0)
    #[arg(long)]
    pub model: Option<String>,
    /// Explicit null proportion (with --delta and --s)
    #[arg(long, requires_all = ["delta", "s"], conflicts_with = "model")]
    pub theta: Option<f64>,
    #[arg(long, requires = "theta")]
    pub delta: Option<f64>,
    /// Shape exponent of the alternative density
    #[arg(long, requires = "theta")]
    pub s: Option<f64>,
    /// Comma-separated sample sizes [default: 1000,2000,4000,8000]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub n: Vec<usize>,
    /// Use the grid 5000,7000,9000,10000,12000,14000,15000
    #[arg(long, conflicts_with = "n")]
    pub paper_grid: bool,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    /// Base seed of the replication streams
    #[arg(long, env = "PI0LAB_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated estimators
    #[arg(long, value_delimiter = ',', default_value = "hist,cr,langaas")]
    pub estimators: Vec<Method>,
    /// Write the CSV here instead of stdout (the summary then goes to stdout)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Cells of the hist estimator
    #[arg(long, default_value_t = 8)]
    pub cells: usize,
    /// Storey threshold
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[command(flatten)]
    pub selector: SelectorArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    pub theta: f64,
    pub delta: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("model_choice").required(true).args(["model", "theta"])))]
pub struct DensityArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, requires_all = ["delta", "s"], conflicts_with = "model")]
    pub theta: Option<f64>,
    #[arg(long, requires = "theta")]
    pub delta: Option<f64>,
    #[arg(long, requires = "theta")]
    pub s: Option<f64>,
    /// Number of equally spaced points on [0, 1]
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn parse_precision(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(d) if (1..=17).contains(&d) => Ok(d),
        _ => Err(format!("'{s}' is not an integer in 1..=17")),
    }
}

/// Parses a p-value file: one number per line, blank lines ignored, an
/// optional `pvalue` header on the first nonblank line.
pub fn parse_pvalues(text: &str) -> Result<PValueSample> {
    let mut values = Vec::new();
    let mut seen_line = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let first = !seen_line;
        seen_line = true;
        if line.contains(',') {
            return Err(Error::InvalidSample(format!("line {line_no}: expected a single column, found '{line}'")));
        }
        let field = line.trim_matches('"');
        if first && field.eq_ignore_ascii_case("pvalue") {
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|_| Error::InvalidSample(format!("line {line_no}: '{line}' is not a number")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidSample(format!("line {line_no}: value {v} is outside [0, 1]")));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::InvalidSample("input contains no p-values".into()));
    }
    PValueSample::new(values)
}

fn read_input(path: &Path) -> Result<String> {
    let mut text = String::new();
    let res = if path.as_os_str() == "-" {
        io::stdin().read_to_string(&mut text).map(|_| ())
    } else {
        fs::read_to_string(path).map(|t| text = t)
    };
    res.map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(text)
}

/// Turns `key=value` lines into `--key value` tokens. Booleans become a bare
/// flag when true and are dropped when false.
pub fn config_tokens(text: &str) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key=value, found '{line}'", i + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(Error::Config(format!("config line {}: invalid key '{key}'", i + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

/// Splices the tokens of a `--config` file in right after the subcommand name,
/// so that later command-line flags override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let tokens = config_tokens(&text)?;
    if args.len() < 2 {
        return Ok(args);
    }
    let mut out = args[..2].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn resolve_model(model: &Option<String>, theta: Option<f64>, delta: Option<f64>, s: Option<f64>) -> Result<ModelSpec> {
    match (model, theta, delta, s) {
        (Some(label), ..) => ModelSpec::from_label(label),
        (None, Some(t), Some(d), Some(s)) => Ok(ModelSpec::from_params(MixtureParams::new(t, d, s)?)),
        _ => Err(Error::Config("give --model or all of --theta, --delta, --s".into())),
    }
}

fn estimate(args: &EstimateArgs, sample: &PValueSample) -> Result<EstimateResult> {
    match args.method {
        Method::Hist => Ok(theta_hat_min(sample, &Partition::regular(args.cells)?)),
        Method::Cr => theta_hat_cr(sample, &args.selector.config(Collection::Full)),
        Method::Storey => theta_hat_storey(sample, args.lambda),
        Method::Langaas => theta_hat_langaas(sample),
        Method::Oracle => {
            let delta = args.delta.ok_or_else(|| Error::Config("--method oracle needs --delta".into()))?;
            theta_hat_oracle(sample, delta)
        }
        Method::OneStep => {
            let cfg = args.selector.config(Collection::Full);
            let pilot = theta_hat_cr(sample, &cfg)?.theta_hat;
            let mesh = 1.0 / (sample.n() as f64).sqrt();
            let plug = args.delta.map_or(DeltaPlugIn::CrossFit(cfg), DeltaPlugIn::Fixed);
            one_step(sample, pilot.clamp(mesh, 1.0 - mesh), plug)
        }
    }
}

/// Header and row of the estimate record.
pub fn estimate_record(est: &EstimateResult, n: usize, digits: usize) -> (String, String) {
    let num = |x: f64| sig(x, digits);
    let mut head = vec!["method", "n", "theta_hat"];
    let mut row = vec![est.method.to_string(), n.to_string(), num(est.theta_hat)];
    match &est.trace {
        Trace::Histogram { k_hat, cells } => {
            head.extend(["k_hat", "cells"]);
            row.extend([k_hat.to_string(), cells.to_string()]);
        }
        Trace::Cr(t) => {
            head.extend(["lambda_hat", "mu_hat", "m_hat", "p_hat"]);
            row.extend([num(t.lambda_hat()), num(t.mu_hat()), t.m_hat().to_string(), t.p_hat().to_string()]);
        }
        Trace::Storey { lambda } => {
            head.push("lambda");
            row.push(num(*lambda));
        }
        Trace::Oracle { delta } => {
            head.push("delta");
            row.push(num(*delta));
        }
        Trace::Langaas { x_max } => {
            head.push("x_max");
            row.push(num(*x_max));
        }
        Trace::OneStep(t) => {
            head.extend(["theta_init", "delta_hat_first", "delta_hat_second", "fallback"]);
            row.extend([num(t.theta_init), num(t.delta_first), num(t.delta_second), t.fallback.to_string()]);
        }
    }
    (head.join(","), row.join(","))
}

fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<()> {
    let sample = parse_pvalues(&read_input(&args.input)?)?;
    let mut est = estimate(args, &sample)?;
    if args.clamp {
        est.theta_hat = est.theta_hat.clamp(0.0, 1.0);
    }
    let (head, row) = estimate_record(&est, sample.n(), args.common.precision);
    writeln!(out, "{head}\n{row}").map_err(io_err)
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let model = resolve_model(&args.model, args.theta, args.delta, args.s)?;
    let n_grid = if args.paper_grid {
        PAPER_GRID.to_vec()
    } else if args.n.is_empty() {
        DESK_GRID.to_vec()
    } else {
        args.n.clone()
    };
    if args.jobs == Some(0) {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let mut cfg = SimConfig::new(model, n_grid, args.reps, args.seed, &args.estimators);
    cfg.settings = EstimatorSettings { hist_cells: args.cells, cr: args.selector.config(Collection::RightAnchored), storey_lambda: args.lambda };
    let report = run_simulation_with_jobs(&cfg, args.jobs)?;
    let digits = args.common.precision;
    let csv = report.to_csv(digits);
    match &args.output {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
            out.write_all(report.summary(digits).as_bytes()).map_err(io_err)
        }
        None => out.write_all(csv.as_bytes()).map_err(io_err),
    }
}

fn cmd_bound(args: &BoundArgs, out: &mut dyn Write) -> Result<()> {
    let info = efficient_information(args.theta, args.delta)?;
    let var = optimal_variance(args.theta, args.delta)?;
    let d = args.common.precision;
    let var = if var.is_finite() { sig(var, d) } else { "infinite".into() };
    writeln!(out, "information,optimal_variance\n{},{var}", sig(info, d)).map_err(io_err)
}

fn cmd_density(args: &DensityArgs, out: &mut dyn Write) -> Result<()> {
    let model = resolve_model(&args.model, args.theta, args.delta, args.s)?;
    if args.points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    let p = model.params();
    let d = args.common.precision;
    let mut text = String::from("x,g,f,cdf\n");
    for i in 0..args.points {
        let x = i as f64 / (args.points - 1) as f64;
        let row = [x, p.mixture_density(x)?, p.alt_density(x)?, p.mixture_cdf(x)?].map(|v| sig(v, d)).join(",");
        text.push_str(&row);
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(io_err)
}

fn io_err(e: io::Error) -> Error {
    Error::Config(format!("write failed: {e}"))
}

/// Runs the program on `args` (including the program name) and returns the
/// exit status.
pub fn run(args: Vec<OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_USAGE;
        }
    };
    let res = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Bound(a) => cmd_bound(a, out),
        Command::Density(a) => cmd_density(a, out),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}
