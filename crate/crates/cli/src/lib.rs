//! Command-line front end for `avgtrack`.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 a modelling assumption
//! fails, 3 a closed loop or iteration diverged.

pub mod commands;
pub mod problem;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_ASSUMPTION: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Usage(String),
    Assumption(String),
    Divergence(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Assumption(_) => EXIT_ASSUMPTION,
            Failure::Divergence(_) => EXIT_DIVERGENCE,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Assumption(m) | Failure::Divergence(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "avgtrack", version, about = "Average-cost tracking: analysis, simulation, benchmarks and a scalar DP oracle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the modelling assumptions, steady state and Riccati solution.
    Analyze { file: PathBuf },
    /// Simulate one controller in closed loop.
    Simulate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = ControllerKind::Lqr)]
        controller: ControllerKind,
        /// Initial state, comma separated; defaults to "x0" in the file.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        /// Fixed number of steps; omitted means run until the tail rule holds.
        #[arg(long)]
        steps: Option<usize>,
        /// Output tolerance for the settling step.
        #[arg(long, default_value_t = 1e-3)]
        settle_tol: f64,
        /// Trajectory CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare LQR, the piecewise scalar policy and MPC.
    Benchmark {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        steps: Option<usize>,
        /// Benchmark CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid value iteration for a scalar problem.
    Oracle {
        file: PathBuf,
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        grid_min: f64,
        #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
        grid_max: f64,
        #[arg(long, default_value_t = 4001)]
        nodes: usize,
        #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
        u_min: f64,
        #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
        u_max: f64,
        #[arg(long, default_value_t = 2401)]
        controls: usize,
        #[arg(long, value_enum, default_value_t = StageKind::Surrogate)]
        stage: StageKind,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_sweeps: usize,
        /// Value table CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    Lqr,
    Mpc,
    ExactScalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageKind {
    /// Quadratic part plus absolute linear part.
    Surrogate,
    /// Absolute deviation of the stage cost.
    Absolute,
}

/// Runs a parsed command; reports go to `out`, diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Analyze { file } => commands::analyze(&file, out),
        Command::Simulate {
            file,
            controller,
            x0,
            steps,
            settle_tol,
            out: csv,
        } => commands::simulate(&file, controller, x0, steps, settle_tol, csv.as_deref(), out),
        Command::Benchmark { file, x0, steps, out: csv } => {
            commands::benchmark(&file, x0, steps, csv.as_deref(), out, err)
        }
        Command::Oracle {
            file,
            grid_min,
            grid_max,
            nodes,
            u_min,
            u_max,
            controls,
            stage,
            tol,
            max_sweeps,
            out: csv,
        } => commands::oracle(
            &file,
            &commands::OracleArgs {
                grid: (grid_min, grid_max, nodes),
                controls: (u_min, u_max, controls),
                stage,
                tol,
                max_sweeps,
            },
            csv.as_deref(),
            out,
            err,
        ),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.exit_code()
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}
