//! Command-line driver: configuration loading, dispatch, and CSV artifacts.

pub mod checks;
pub mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pca_oracle::montecarlo::{
    summarize, sweep_rows, write_records_csv, write_summary_csv, write_sweep_csv,
};
use pca_oracle::{bound_report, BoundReport, Error, Experiment, ExperimentConfig};

pub use config::{config_fingerprint, config_from_str, load_config, ConfigError};

#[derive(Debug, Parser)]
#[command(
    name = "pca-oracle",
    version,
    about = "Empirical PCA oracle-inequality experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replicates and write per-replicate records plus a summary.
    Simulate(RunArgs),
    /// Evaluate every bound over the configured grid without sampling.
    Bounds(RunArgs),
    /// Compare observed errors with the theorem, corollary, and Davis-Kahan bounds.
    Sweep(RunArgs),
    /// Run the built-in invariant and oracle checks.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Replaces the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::ChecksFailed(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::ChecksFailed(k) => write!(f, "{k} check(s) failed"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter { .. } | Error::Range { .. } | Error::UnsupportedProfile(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numeric(format!("i/o: {e}"))
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Prepared {
    experiment: Experiment,
    json: String,
    hash: String,
    out: PathBuf,
    jobs: usize,
}

fn prepare(args: &RunArgs) -> Result<Prepared, CliError> {
    let config: ExperimentConfig = load_config(&args.config, &args.set, args.seed)?;
    let (json, hash) = config_fingerprint(&config);
    let experiment = Experiment::new(config)?;
    if experiment.truncation.capped {
        eprintln!(
            "warning: truncation capped at D = {} (relative discarded tail {:.3e})",
            experiment.truncation.dim, experiment.truncation.relative
        );
    }
    fs::create_dir_all(&args.out)?;
    Ok(Prepared {
        experiment,
        json,
        hash,
        out: args.out.clone(),
        jobs: args.jobs.unwrap_or_else(default_jobs).max(1),
    })
}

/// Opens `name` under the output directory and writes the commented header.
fn open_csv(
    p: &Prepared,
    command: &str,
    name: &str,
) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = p.out.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    let cfg = &p.experiment.config;
    writeln!(w, "# pca-oracle {command}")?;
    writeln!(w, "# config_sha256: {}", p.hash)?;
    writeln!(
        w,
        "# model: {} law: {} seed: {}",
        p.experiment.model.describe(),
        cfg.law,
        cfg.seed
    )?;
    writeln!(w, "# config: {}", p.json)?;
    Ok((path, w))
}

fn simulate(args: &RunArgs, with_sweep: bool) -> Result<(), CliError> {
    let p = prepare(args)?;
    let exp = &p.experiment;
    let records = exp.run(p.jobs)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed == records.len() {
        return Err(CliError::Numeric(format!(
            "all {failed} replicate evaluations failed; first: {}",
            records[0].error.as_deref().unwrap_or("")
        )));
    }
    let command = if with_sweep { "sweep" } else { "simulate" };
    let (path, mut w) = open_csv(&p, command, &exp.config.outputs.records)?;
    write_records_csv(&mut w, &records)?;
    w.flush()?;
    eprintln!(
        "{command}: {} records ({failed} errors) -> {}",
        records.len(),
        path.display()
    );

    if with_sweep {
        let rows = sweep_rows(exp, &records)?;
        for r in rows.iter().filter(|r| r.t == exp.config.t[0]) {
            eprintln!(
                "sweep n={} d={} d'={}: mean R {:.4e}, thm1 {:.4e}, dk {}",
                r.n,
                r.d,
                r.d_prime,
                r.r_hat_mean,
                r.thm1_bound,
                r.dk_bound
                    .map_or_else(|| "-".to_string(), |b| format!("{b:.4e}"))
            );
        }
        let (path, mut w) = open_csv(&p, command, &exp.config.outputs.sweep)?;
        write_sweep_csv(&mut w, &rows)?;
        w.flush()?;
        eprintln!("{command}: {} sweep rows -> {}", rows.len(), path.display());
    } else {
        let rows = summarize(exp, &records)?;
        let (path, mut w) = open_csv(&p, command, &exp.config.outputs.summary)?;
        write_summary_csv(&mut w, &rows)?;
        w.flush()?;
        eprintln!(
            "{command}: {} summary rows -> {}",
            rows.len(),
            path.display()
        );
    }
    Ok(())
}

/// Every `(d', d, n, t)` tuple of the bound grid, in output order.
pub fn bound_grid(exp: &Experiment) -> Result<Vec<BoundReport<f64>>, Error> {
    let cfg = &exp.config;
    let mut out = Vec::new();
    for &n in &cfg.n {
        for &d in &cfg.d {
            let dps: Vec<usize> = match &cfg.d_prime {
                Some(list) => list.iter().copied().filter(|&dp| dp <= d).collect(),
                None => vec![exp.dprime_for(n, d)?.0],
            };
            for dp in dps {
                for &t in &cfg.t {
                    out.push(bound_report(&exp.model, dp, d, n, t, &cfg.constants)?);
                }
            }
        }
    }
    Ok(out)
}

fn bounds(args: &RunArgs) -> Result<(), CliError> {
    let p = prepare(args)?;
    let rows = bound_grid(&p.experiment)?;
    let (path, w) = open_csv(&p, "bounds", &p.experiment.config.outputs.bounds)?;
    write_bounds_csv(w, &rows)?;
    eprintln!("bounds: {} rows -> {}", rows.len(), path.display());
    Ok(())
}

pub fn write_bounds_csv<W: Write>(mut w: W, rows: &[BoundReport<f64>]) -> Result<(), CliError> {
    writeln!(w, "{}", BoundReport::<f64>::CSV_HEADER.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.csv_fields().join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn check(args: &CheckArgs) -> Result<(), CliError> {
    let outcomes = checks::run_checks(args.jobs.unwrap_or_else(default_jobs).max(1));
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, false),
        Command::Sweep(a) => simulate(a, true),
        Command::Bounds(a) => bounds(a),
        Command::Check(a) => check(a),
    }
}

/// Parses `argv`, runs, and maps the outcome to an exit status.
pub fn main_with<I, S>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
