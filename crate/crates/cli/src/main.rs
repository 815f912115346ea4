//! `dcg`: generate network least-squares problems, solve them with central CG,
//! decentralized CG or decentralized ADMM, sweep the ADMM penalty and report
//! spectra.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcg_core::TopologyKind;

#[derive(Debug, Parser)]
#[command(
    name = "dcg",
    version,
    about = "Decentralized conjugate gradients for network-structured linear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a sensor-fusion problem and write it as JSON.
    Generate(GenerateArgs),
    /// Solve a problem file and optionally write the convergence trace.
    Solve(SolveArgs),
    /// Count ADMM iterations over a log-spaced penalty grid, with a d-CG reference row.
    Sweep(SweepArgs),
    /// Report the spectrum of the assembled system.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// path, star, weak-mesh, strong-mesh or random.
    #[arg(long)]
    pub topology: TopologyKind,
    #[arg(long, default_value_t = 10)]
    pub nodes: usize,
    /// Parameter dimension per node.
    #[arg(long, default_value_t = 1)]
    pub ntheta: usize,
    /// Measurements per node [default: ntheta].
    #[arg(long)]
    pub ny: Option<usize>,
    /// Total edge count (random topology only).
    #[arg(long)]
    pub edges: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub noise_var: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cg,
    Dcg,
    Dadmm,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub problem: PathBuf,
    /// Residual tolerance; for dadmm it is the target for ‖Sλ̄ − s‖.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Iteration cap [default: 10·m].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// ADMM penalty.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value_t = 1e-2)]
    pub rho_min: f64,
    #[arg(long, default_value_t = 1e2)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub target: f64,
    /// Iteration cap per point [default: 10·m].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Worker threads for the grid points [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output CSV; printed to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Print every eigenvalue.
    #[arg(long)]
    pub eigenvalues: bool,
    /// Write `index,eigenvalue` rows as CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
