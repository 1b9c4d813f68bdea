//! Command-line front end for e-projection tensor decomposition.
//!
//! Exit codes are the scripting contract: 0 = success (and convergence for
//! solver commands), 1 = parse or usage error, 2 = numerical failure,
//! 3 = non-convergence. Stdout carries machine-readable payloads; stderr is
//! diagnostics only.

mod commands;
mod report;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use legendre_core::Error;

use commands::{EXIT_NUMERICAL, EXIT_PARSE};

#[derive(Parser)]
#[command(
    name = "legendre",
    version,
    about = "Nonnegative tensor decomposition by information-geometric e-projection",
    after_help = "Exit codes: 0 success, 1 parse/usage error, 2 numerical failure, 3 non-convergence."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Solver flags shared by the commands that run a decomposition.
#[derive(Args, Debug)]
struct SolverFlags {
    /// Learning rate for gradient descent
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Convergence tolerance on max|eta - eta_hat|
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Iteration budget (defaults: 1000000 for gd, 100 for ng)
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initial ridge added to the Fisher matrix, escalated automatically
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Tensor file, or synthetic:<shape> for a seeded uniform tensor
    #[arg(short, long)]
    input: String,
    /// Input format: dense-text or sparse-coo
    #[arg(short, long, default_value = "dense-text")]
    format: String,
    /// Basis specification, e.g. b1, b2:3, b3:5, file:<path>, b1+b2:3+b3:5
    #[arg(short, long)]
    basis: String,
    /// Solver: gd or ng
    #[arg(short, long, default_value = "ng")]
    algorithm: String,
    #[command(flatten)]
    solver: SolverFlags,
    /// Drop zero entries from the sample space (the least element stays)
    #[arg(long)]
    exclude_zeros: bool,
    /// Seed for synthetic inputs
    #[arg(long)]
    seed: Option<u64>,
    /// Also write trace.csv with per-iteration kl and residual
    #[arg(long)]
    trace: bool,
    /// Directory for result.json, q.tensor, trace.csv
    #[arg(short, long, default_value = ".")]
    output_dir: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated sizes, each N (an NxNxN cube) or I1xI2x...; empty
    /// for a header-only sweep
    #[arg(long, default_value = "")]
    sizes: String,
    /// Comma-separated basis specifications
    #[arg(long, default_value = "b1")]
    bases: String,
    /// Comma-separated algorithms
    #[arg(long, default_value = "ng")]
    algorithms: String,
    #[command(flatten)]
    solver: SolverFlags,
    /// Base seed; each (size, repetition) derives its own tensor seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Repetitions per configuration
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Directory for bench.csv (THREADS bounds worker parallelism)
    #[arg(short, long, default_value = ".")]
    output_dir: String,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Original tensor file
    #[arg(short, long)]
    input: String,
    /// Reconstruction tensor file
    #[arg(short, long)]
    reconstruction: String,
    /// Format of the input tensor
    #[arg(short, long, default_value = "dense-text")]
    format: String,
    /// Format of the reconstruction (defaults to --format)
    #[arg(long)]
    recon_format: Option<String>,
    /// result.json of the producing run, for the parameter count
    #[arg(long)]
    result: Option<String>,
    /// Also write eval.csv here
    #[arg(short, long)]
    output_dir: Option<String>,
}

#[derive(Args, Debug)]
struct BasisArgs {
    /// Basis specification to materialize
    #[arg(short, long)]
    basis: String,
    /// Grid shape, N or I1xI2x... (not needed when --input is given)
    #[arg(short, long)]
    shape: Option<String>,
    /// Tensor file; required for b3, optional otherwise
    #[arg(short, long)]
    input: Option<String>,
    /// Input format
    #[arg(short, long, default_value = "dense-text")]
    format: String,
    /// Drop zero entries from the sample space
    #[arg(long)]
    exclude_zeros: bool,
}

#[derive(Args, Debug)]
struct BoltzmannArgs {
    /// Graph file: variable count, then one 'a b' edge per line
    #[arg(short, long)]
    graph: String,
    /// Empirical distribution over the binary grid {1,2}^n
    #[arg(short, long)]
    data: String,
    /// Input format
    #[arg(short, long, default_value = "dense-text")]
    format: String,
    /// Solver: gd or ng
    #[arg(short, long, default_value = "ng")]
    algorithm: String,
    #[command(flatten)]
    solver: SolverFlags,
    /// Also write boltzmann.json here
    #[arg(short, long)]
    output_dir: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a tensor and write result.json plus the reconstruction
    Decompose(DecomposeArgs),
    /// Sweep sizes/bases/algorithms over seeded synthetic tensors
    Bench(BenchArgs),
    /// RMSE and KL of a reconstruction against its input
    Eval(EvalArgs),
    /// Print the members of a basis specification
    Basis(BasisArgs),
    /// Fit a fully visible Boltzmann machine to an empirical distribution
    Boltzmann(BoltzmannArgs),
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::Diverged(_) | Error::Oracle(_) => EXIT_NUMERICAL,
        _ => EXIT_PARSE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are not failures; everything else is usage.
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let outcome = match &cli.command {
        Command::Decompose(args) => commands::cmd_decompose(args),
        Command::Bench(args) => commands::cmd_bench(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Basis(args) => commands::cmd_basis(args),
        Command::Boltzmann(args) => commands::cmd_boltzmann(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
