use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "a2bellman", version, about = "Bellman function certification and weighted martingale experiments")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the domain and check the convexity and size properties of B.
    Certify(CertifyArgs),
    /// Ellipse parameter tau at sampled points, as CSV.
    TauSweep(TauArgs),
    /// Weighted norm estimate for random subordinate pairs.
    Simulate(SimulateArgs),
    /// Adversarial sign transforms on power weights.
    Sharpness(SharpnessArgs),
    /// Truncate a weight file and report the characteristic before and after.
    Truncate(TruncateArgs),
    /// Telescoping inequality along random martingales.
    Telescope(TelescopeArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Above,
    TwoSided,
}

#[derive(Args, Debug, Clone)]
pub struct Domain {
    #[arg(long = "Q", default_value_t = 16.0)]
    pub q: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.05)]
    pub ell: f64,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub domain: Domain,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct TauArgs {
    #[command(flatten)]
    pub domain: Domain,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long = "Q", default_value_t = 16.0)]
    pub q: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Power weight exponent; a random weight is drawn when absent.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "weight_file")]
    pub delta: Option<f64>,
    #[arg(long)]
    pub weight_file: Option<PathBuf>,
    /// Number of random instances.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Random test functions per instance in the duality step.
    #[arg(long, default_value_t = 16)]
    pub num_paths: usize,
    #[arg(long, default_value_t = 10.0)]
    pub c_target: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SharpnessArgs {
    /// `start:end:count`, evenly spaced deltas.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "q2_range")]
    pub delta_grid: Option<String>,
    /// `lo:hi:count`, deltas whose characteristics are geometrically spaced.
    #[arg(long)]
    pub q2_range: Option<String>,
    #[arg(long, default_value_t = 12)]
    pub depth: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct TruncateArgs {
    #[arg(long)]
    pub weight_file: PathBuf,
    #[arg(long)]
    pub a: f64,
    #[arg(long, value_enum, default_value_t = Mode::Above)]
    pub mode: Mode,
    /// Truncated weight destination; stdout when absent.
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct TelescopeArgs {
    #[command(flatten)]
    pub domain: Domain,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    /// Anchor; `ell`, `2 ell` and `10 ell` when absent.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub weight_file: Option<PathBuf>,
    /// Number of random instances.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(flatten)]
    pub output: Output,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or input files.
    Usage(String),
    /// A check did not hold or a run could not complete.
    Check(String),
}

pub type Outcome = Result<bool, Failure>;

pub fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn check<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Check(e.to_string())
}

/// Writes the report to `--out` or stdout.
pub fn emit(output: &Output, text: &str) -> Result<(), Failure> {
    match &output.out {
        Some(p) => fs::write(p, text).map_err(|e| check(format!("writing {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Certify(a) => commands::certify(a),
        Command::TauSweep(a) => commands::tau_sweep(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sharpness(a) => commands::sharpness(a),
        Command::Truncate(a) => commands::truncate(a),
        Command::Telescope(a) => commands::telescope(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
