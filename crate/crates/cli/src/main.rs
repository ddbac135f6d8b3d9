//! `rankone`: schedule, plan, verify, correlate, spectrum, simulate, lemma3,
//! report.
//!
//! Exit codes: 0 success, 2 certificate violation, 1 usage or input error.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or malformed input.
    Usage(String),
    /// A certificate or claim did not hold.
    Violation(String),
}

impl From<rankone::Error> for Failure {
    fn from(e: rankone::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "rankone", version, about = "Rank-one pairs with vanishing product correlations")]
struct Cli {
    /// Directory for every output file and the run manifest.
    #[arg(long, global = true, env = "RANKONE_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "RANKONE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate and validate an interval schedule.
    Schedule(ScheduleArgs),
    /// Build the pair S, T from a schedule and certify it.
    Plan(PlanArgs),
    /// Re-check one certificate, or a pair of them.
    Verify(VerifyArgs),
    /// Tabulate the correlation sequence of a level function.
    Correlate(CorrelateArgs),
    /// Spectral density, summability and chaos coefficients of a table.
    Spectrum(SpectrumArgs),
    /// Gaussian or Poisson first-chaos simulation.
    Simulate(SimulateArgs),
    /// Finite truncation of a Walsh polynomial with its orthogonality lag.
    Lemma3(Lemma3Args),
    /// Human-readable summary of a planned pair.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    /// Growth factor G (at least 2), e.g. 10, 5/2 or 2.5.
    #[arg(long, default_value = "10")]
    pub growth: String,
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    /// Explicit lengths of the first I intervals, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seed_lengths: Vec<u64>,
    #[arg(long, short, default_value = "schedule.toml")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub schedule: PathBuf,
    /// Policy file; flags below override its fields.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub blocking_cuts: Option<usize>,
    #[arg(long)]
    pub generic_cuts: Option<usize>,
    #[arg(long)]
    pub max_generic: Option<usize>,
    /// Polynomial limit as `z=a` pairs, e.g. `0=1/2,1=1/2`.
    #[arg(long)]
    pub poly: Option<String>,
    #[arg(long)]
    pub tracked_stage: Option<usize>,
    /// Skip the closing block over the rest of the horizon.
    #[arg(long)]
    pub no_close: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Spec file; give it twice (S then T) to verify a pair.
    #[arg(long = "spec", required = true)]
    pub specs: Vec<PathBuf>,
    /// Certificate file matching each `--spec`.
    #[arg(long = "cert", required = true)]
    pub certs: Vec<PathBuf>,
    /// Also write the recomputed product (or factor) correlation table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Level function file (`stage` plus `[[terms]]` of `level`, `coefficient`).
    #[arg(long, conflicts_with = "cert")]
    pub function: Option<PathBuf>,
    /// Take the tracked function of this certificate.
    #[arg(long)]
    pub cert: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_n: u64,
    /// Shallowest depth whose brackets are this tight; deepest if absent.
    #[arg(long)]
    pub tolerance: Option<String>,
    #[arg(long, short, default_value = "correlation.csv")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    /// Table `n,lower,upper` starting at n = 0.
    #[arg(long)]
    pub corr: PathBuf,
    /// Fejér order M (ignored with --exact).
    #[arg(long, default_value_t = 100)]
    pub order: u64,
    /// Grid size G; must exceed the order.
    #[arg(long, default_value_t = 4096)]
    pub grid: usize,
    /// Evaluate the exact trigonometric polynomial instead of a Fejér mean.
    #[arg(long)]
    pub exact: bool,
    /// Also write exponential chaos coefficients truncated at this order.
    #[arg(long)]
    pub chaos: Option<u32>,
    #[arg(long, short, default_value = "density.csv")]
    pub output: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimKind {
    Gaussian,
    Poisson,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: SimKind,
    /// Simulation config file; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lag_max: Option<usize>,
    #[arg(long)]
    pub intensity: Option<f64>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub escape_cap: Option<f64>,
    /// Gaussian: covariance table `n,lower,upper`.
    #[arg(long)]
    pub cov: Option<PathBuf>,
    /// Gaussian: divide the covariance by its value at 0.
    #[arg(long)]
    pub normalize: bool,
    /// Poisson: spec of the base transformation.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Poisson: level function file.
    #[arg(long, conflicts_with = "cert")]
    pub function: Option<PathBuf>,
    /// Poisson: take the tracked function of this certificate.
    #[arg(long)]
    pub cert: Option<PathBuf>,
    /// Poisson: tower whose levels form the sampled region.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Poisson: time shifts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub n: Vec<u64>,
    #[arg(long, short, default_value = "simulation.toml")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct Lemma3Args {
    /// Walsh polynomial file (`[[terms]]` of `set`, `num`, `den`).
    #[arg(long, conflicts_with = "geometric")]
    pub f: Option<PathBuf>,
    /// Stream `a q^k r_k` given as `a,q`.
    #[arg(long)]
    pub geometric: Option<String>,
    #[arg(long, default_value = "1/10")]
    pub delta: String,
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    /// Longest stream prefix tried.
    #[arg(long, default_value_t = 4096)]
    pub max_terms: usize,
    #[arg(long, short, default_value = "truncation.toml")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub spec_s: PathBuf,
    #[arg(long)]
    pub cert_s: PathBuf,
    #[arg(long)]
    pub spec_t: PathBuf,
    #[arg(long)]
    pub cert_t: PathBuf,
    #[arg(long, short, default_value = "report.md")]
    pub output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let out = cli.out_dir;
    let result = match cli.command {
        Command::Schedule(a) => commands::schedule(a, out),
        Command::Plan(a) => commands::plan(a, out),
        Command::Verify(a) => commands::verify(a, out),
        Command::Correlate(a) => commands::correlate(a, out),
        Command::Spectrum(a) => commands::spectrum(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Lemma3(a) => commands::lemma3(a, out),
        Command::Report(a) => commands::report(a, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(2)
        }
    }
}
