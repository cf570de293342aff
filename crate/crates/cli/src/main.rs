#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "nonlocal-bvp",
    version,
    about = "Elliptic problems with integral boundary conditions"
)]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Fem,
    Oracle,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve at one λ and write the solution field and classification.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
    },
    /// Classify the problem at one λ.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
    },
    /// Sweep λ, bracket sign changes of det(I - R) and refine the roots.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
        #[arg(long)]
        lambda_min: Option<f64>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Worker threads for grid evaluation.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Fill the seconds column with wall-clock times.
        #[arg(long)]
        timing: bool,
    },
    /// Harmonic capacity of a two-component domain.
    Capacity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Closed-form evaluation of the annulus examples.
    Oracle {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        /// Weight constant C0 for example 2: a number or `critical`.
        #[arg(long, default_value = "critical")]
        c0: String,
        /// Constant inner weight for example 1 (default 1/(2π)).
        #[arg(long)]
        g: Option<f64>,
        /// Inner boundary datum.
        #[arg(long, default_value_t = 1.0)]
        b_inner: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Run the acceptance checks and print one line per criterion.
    Verify {
        /// Run only these criteria.
        #[arg(long = "criterion")]
        criteria: Vec<u32>,
    },
}

fn init_logging() {
    let level = match std::env::var("NONLOCAL_BVP_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let engine = |e: EngineArg| match e {
        EngineArg::Fem => nonlocal_bvp::pipeline::Engine::Fem,
        EngineArg::Oracle => nonlocal_bvp::pipeline::Engine::Oracle,
    };
    let result = match cli.command {
        Command::Solve {
            config,
            lambda,
            engine: e,
        } => commands::solve(&cli.out, &config, lambda, e.map(engine)),
        Command::Classify {
            config,
            lambda,
            engine: e,
        } => commands::classify(&cli.out, &config, lambda, e.map(engine)),
        Command::Sweep {
            config,
            engine: e,
            lambda_min,
            lambda_max,
            steps,
            jobs,
            timing,
        } => commands::sweep(
            &cli.out,
            &config,
            commands::SweepArgs {
                engine: e.map(engine),
                lambda_min,
                lambda_max,
                steps,
                jobs,
                timing,
            },
        ),
        Command::Capacity { config, lambda } => commands::capacity(&cli.out, &config, lambda),
        Command::Oracle {
            example,
            c0,
            g,
            b_inner,
            lambda,
        } => commands::oracle(&cli.out, example, &c0, g, b_inner, lambda),
        Command::Verify { criteria } => commands::verify(&cli.out, &criteria),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Config(_) | CliError::Input(_) => 2,
                CliError::Numeric(_) => 3,
                CliError::Io(_) => 1,
            })
        }
    }
}
