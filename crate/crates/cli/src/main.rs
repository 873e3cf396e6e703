//! `lambdahat`: learning-coefficient estimation from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod manifest;
mod plot;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lambdahat::experiments::output::write_outputs;
use lambdahat::experiments::{run_study, ExperimentConfig, StudyKind, StudyOutput};
use lambdahat::{
    estimate_with_mcmc, quad_lambda_estimates, sample_true, EstimatorSettings, McmcConfig,
    ModelSpec, TrueDistribution,
};

use manifest::RunManifest;

const OUT_DIR_ENV: &str = "LAMBDAHAT_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "lambdahat", version, about = "Estimate learning coefficients of Bayesian models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One dataset, one full estimator pass; prints the record as JSON.
    Estimate(EstimateArgs),
    /// Runs the study described by a JSON config file.
    Experiment(ExperimentArgs),
    /// Two-temperature estimator as a function of the temperature gap.
    SweepBetaGap(SweepArgs),
    /// Injects shifted draws and tracks the variance and empirical-loss estimators.
    OutlierStudy(OutlierArgs),
    /// Sampling pipeline versus quadrature on a one- or two-parameter model.
    OracleCheck(StudyArgs),
    /// Renders a curve CSV (header `x,series...`) as a static SVG line plot.
    Plot(plot::PlotArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct McmcArgs {
    /// Total iterations per chain, burn-in included.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    /// Target acceptance rate for step-size adaptation.
    #[arg(long)]
    target_accept: Option<f64>,
    /// Initial proposal scale in unconstrained coordinates.
    #[arg(long)]
    init_scale: Option<f64>,
}

impl McmcArgs {
    fn apply(&self, cfg: &mut McmcConfig) {
        if let Some(v) = self.iters {
            cfg.total_iters = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.thin {
            cfg.thin = v;
        }
        if let Some(v) = self.chains {
            cfg.chains = v;
        }
        if let Some(v) = self.target_accept {
            cfg.target_accept = v;
        }
        if let Some(v) = self.init_scale {
            cfg.init_scale = v;
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Model id: normal-meanvar, normal-mean, example1, poisson-mix:H, gauss-mix:K.
    #[arg(long)]
    model: String,
    /// True distribution: normal:MU,SIGMA, poisson:RATE, poisson-mix:W1@R1,W2@R2.
    #[arg(long = "true")]
    truth: String,
    /// Sample size.
    #[arg(long)]
    n: usize,
    /// Seed for the dataset and every sampling run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the quadrature oracle instead of MCMC (models with at most 2 parameters).
    #[arg(long)]
    oracle: bool,
    /// Comma-separated beta0 values (sampling happens at beta0 / log n).
    #[arg(long, value_delimiter = ',')]
    beta0s: Option<Vec<f64>>,
    /// Comma-separated beta0 pairs for the two-temperature estimator, e.g. `1:1.5,1:5`.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Option<Vec<(f64, f64)>>,
    #[command(flatten)]
    mcmc: McmcArgs,
}

/// Flags shared by every study; each overrides the config value.
#[derive(Args, Debug, Clone, Default)]
struct StudyArgs {
    /// JSON config; the study's defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "true")]
    truth: Option<String>,
    /// Sample sizes, comma-separated.
    #[arg(long = "n", value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Base seed; replicate r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Does not change any output.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory [default: $LAMBDAHAT_OUT_DIR, else ./lambdahat-out/<study>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mcmc: McmcArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON config file (or pass `--config`).
    #[arg(id = "config_file", value_name = "CONFIG")]
    config_file: Option<PathBuf>,
    #[command(flatten)]
    study: StudyArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Gaps beta2 - beta1, comma-separated.
    #[arg(long, value_delimiter = ',')]
    gaps: Option<Vec<f64>>,
    #[command(flatten)]
    study: StudyArgs,
}

#[derive(Args, Debug)]
struct OutlierArgs {
    /// Total log-likelihood shifts, comma-separated and increasing.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Number of injected draws.
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    study: StudyArgs,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected BETA01:BETA02, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<lambdahat::Error> for CliError {
    fn from(e: lambdahat::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Experiment(a) => {
            let path = a
                .config_file
                .as_deref()
                .or(a.study.config.as_deref())
                .ok_or_else(|| CliError::Usage("experiment needs a config file".into()))?;
            let cfg = load_config(Some(path), None)?;
            run_and_write(cfg, &a.study, "experiment")
        }
        Command::SweepBetaGap(a) => {
            let mut cfg = load_config(a.study.config.as_deref(), Some(StudyKind::BetaGapSweep))?;
            if let Some(g) = a.gaps {
                cfg.gaps = g;
            }
            run_and_write(cfg, &a.study, "sweep-beta-gap")
        }
        Command::OutlierStudy(a) => {
            let mut cfg = load_config(a.study.config.as_deref(), Some(StudyKind::OutlierStudy))?;
            if let Some(d) = a.deltas {
                cfg.deltas = d;
            }
            if let Some(c) = a.count {
                cfg.outlier_count = c;
            }
            run_and_write(cfg, &a.study, "outlier-study")
        }
        Command::OracleCheck(a) => {
            let cfg = load_config(a.config.as_deref(), Some(StudyKind::OracleCheck))?;
            run_and_write(cfg, &a, "oracle-check")
        }
        Command::Plot(a) => plot::cmd_plot(&a).map_err(|e| match e {
            plot::PlotError::Usage(m) => CliError::Usage(m),
            plot::PlotError::Io(m) => CliError::Runtime(m),
        }),
    }
}

fn cmd_estimate(a: EstimateArgs) -> CliResult<()> {
    let model = ModelSpec::parse(&a.model)?;
    let truth = TrueDistribution::parse(&a.truth)?;
    if a.n < 2 {
        return Err(lambdahat::Error::SampleSizeTooSmall(a.n).into());
    }
    if model.support() != truth.support() {
        return Err(CliError::Usage(format!(
            "model {model} and truth {} live on different supports",
            truth.id()
        )));
    }
    let mut settings = EstimatorSettings::default();
    if let Some(b) = a.beta0s {
        settings.beta0s = b;
    }
    if let Some(p) = a.pairs {
        settings.pairs = p;
    }
    settings.validate()?;
    let data = sample_true(&truth, a.n, a.seed)?;
    let record = if a.oracle {
        if model.dim() > 2 {
            return Err(CliError::Usage(format!(
                "--oracle needs a model with at most 2 parameters, {model} has {}",
                model.dim()
            )));
        }
        let mut r = quad_lambda_estimates(&model, Some(&truth), &data, &settings)?;
        r.seed = a.seed;
        r
    } else {
        let mut mcmc = McmcConfig {
            seed: a.seed,
            ..McmcConfig::default()
        };
        a.mcmc.apply(&mut mcmc);
        mcmc.validate()?;
        estimate_with_mcmc(&model, Some(&truth), &data, &settings, &mcmc, a.seed)?
    };
    print_out(&serde_json::to_string_pretty(&record)?);
    Ok(())
}

/// Reads the config (or the study defaults), checking the study kind when
/// the subcommand fixes one.
fn load_config(path: Option<&Path>, expect: Option<StudyKind>) -> CliResult<ExperimentConfig> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::defaults_for(expect.expect("subcommand fixes the study")),
    };
    if let Some(k) = expect {
        if cfg.study != k {
            return Err(CliError::Usage(format!(
                "config describes study `{}`, this subcommand runs `{}`",
                cfg.study.name(),
                k.name()
            )));
        }
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, a: &StudyArgs) -> CliResult<()> {
    if let Some(m) = &a.model {
        cfg.model = ModelSpec::parse(m)?;
    }
    if let Some(t) = &a.truth {
        cfg.truth = TrueDistribution::parse(t)?;
    }
    if let Some(n) = &a.sample_sizes {
        cfg.sample_sizes = n.clone();
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    a.mcmc.apply(&mut cfg.mcmc);
    cfg.validate()?;
    Ok(())
}

fn out_dir(a: &StudyArgs, study: StudyKind) -> PathBuf {
    a.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lambdahat-out").join(study.name()))
}

fn run_and_write(mut cfg: ExperimentConfig, a: &StudyArgs, command: &str) -> CliResult<()> {
    apply_overrides(&mut cfg, a)?;
    let dir = out_dir(a, cfg.study);
    let start = Instant::now();
    let output = run_study(&cfg, a.jobs)?;
    let study_secs = start.elapsed().as_secs_f64();
    let mut files = write_outputs(&output, &dir)?;
    files.push("manifest.json".into());
    let manifest = RunManifest::new(command, &cfg, &output, files.clone(), a.jobs, study_secs, start);
    manifest.write(&dir)?;

    match &output {
        StudyOutput::OracleCheck(rep) => {
            print_out(&serde_json::to_string_pretty(rep)?);
            if !rep.pass {
                return Err(CliError::Runtime(
                    "oracle check failed; see the report for the offending quantities".into(),
                ));
            }
        }
        _ => {
            for f in &files {
                print_out(&dir.join(f).display().to_string());
            }
        }
    }
    Ok(())
}

/// Prints a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_out(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}
