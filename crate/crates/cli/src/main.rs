//! `biasprice` command-line front end.

mod commands;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biasprice::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "biasprice",
    version,
    about = "Nonlinear pricing with biased marginal-price perception"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form optimal quadratic tariff, optionally checked by the numerical oracle.
    Optimize(OptimizeArgs),
    /// Profit, welfare, consumer surplus and mean consumption of one tariff.
    Welfare(WelfareArgs),
    /// Surface table over (a1, p) at the profit-optimal tariff.
    Sweep(SweepArgs),
    /// Euler–Lagrange residual profile and endpoint conditions.
    ElCheck(ElCheckArgs),
    /// Aggregate consumption under flat vs two-tier tariffs across lambda.
    BlockCompare(BlockArgs),
    /// Adjustment-dynamic trajectory of one consumer type.
    Dynamics(DynamicsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Profit,
    Welfare,
}

#[derive(Debug, Args)]
struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long, value_enum, default_value = "profit")]
    objective: ObjectiveArg,
    /// Config file with an [env] table.
    #[arg(long)]
    env: PathBuf,
    /// Replace the env kernel by MixDirac(a1).
    #[arg(long)]
    a1: Option<f64>,
    /// Also run the grid + simplex oracle and compare.
    #[arg(long)]
    oracle: bool,
    /// Coefficient tolerance for oracle agreement.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Relative value tolerance for oracle agreement.
    #[arg(long, default_value_t = 1e-7)]
    value_tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct WelfareArgs {
    #[arg(long)]
    env: PathBuf,
    /// File with a [scheme] table or a bare scheme body; defaults to the env file.
    #[arg(long)]
    scheme: Option<PathBuf>,
    #[arg(long)]
    a1: Option<f64>,
    /// Report Q as the rational/average mixture with this fraction instead of perceived-price consumption.
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Template env; defaults to theta ~ U[0,1], h = q - q^2/2 with h1 = 0, c1 = 0.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    a1: Option<String>,
    #[arg(long)]
    p: Option<String>,
    /// Emit (a1, p, G) triplets only.
    #[arg(long)]
    figure1: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct ElCheckArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    scheme: PathBuf,
    #[arg(long)]
    env: PathBuf,
    /// Interior evaluation points.
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct BlockArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    p1: f64,
    #[arg(long)]
    p2: f64,
    #[arg(long)]
    p3: f64,
    #[arg(long)]
    qbar: f64,
    #[arg(long = "lambda-grid", default_value = "0:1:3")]
    lambda_grid: String,
    /// Also run seeded randomized batteries of this many draws per regime.
    #[arg(long)]
    battery: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct DynamicsArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    scheme: Option<PathBuf>,
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 0.1)]
    q0: f64,
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    #[command(flatten)]
    output: Output,
}

/// Failure with its exit status.
#[derive(Debug)]
pub(crate) struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::OracleDisagreement(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: 1,
            message: format!("io error: {e}"),
        }
    }
}

impl Failure {
    pub(crate) fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn emit(output: &Output, text: &str) -> Result<(), Failure> {
    match &output.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Optimize(a) => commands::optimize(a),
        Command::Welfare(a) => commands::welfare(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::ElCheck(a) => commands::el_check(a),
        Command::BlockCompare(a) => commands::block_compare(a),
        Command::Dynamics(a) => commands::dynamics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
