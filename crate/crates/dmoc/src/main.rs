//! Batch front end: configuration-driven solves, convergence studies,
//! structure audits and cross-method comparisons.

use clap::{Parser, Subcommand};
use dmoc::runner::{self, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dmoc", version, about = "Direct optimal control of mechanical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured instance; writes report.json, trajectory.csv
    /// and iterations.log into the output directory.
    Solve {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Self-convergence study over the configured grid (largest entry is
    /// the reference); writes a slope table to report.json.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Momentum-balance audit of a solved instance, or the energy series
    /// for rollout fixtures.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve two configurations of the same problem and report node-wise
    /// gaps, variable counts and minor-work units.
    Compare {
        /// First run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Second run configuration (same problem and grid).
        #[arg(long)]
        with: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, out: &Option<PathBuf>) -> Result<RunConfig, runner::RunnerError> {
    let mut config = RunConfig::load(path)?;
    if let Some(dir) = out {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), runner::RunnerError> {
    match &cli.command {
        Command::Solve { config, out } => {
            let config = load(config, out)?;
            let report = runner::run_solve(&config)?;
            if cli.verbose {
                eprintln!(
                    "solved {} / {} N={}: objective {:.10e}, feasibility {:.3e}",
                    config.problem.label(),
                    config.method,
                    config.intervals,
                    report.objective,
                    report.kkt.feasibility
                );
            }
            println!("{}", config.output_dir.join("report.json").display());
        }
        Command::Converge { config, out } => {
            let config = load(config, out)?;
            let report = runner::run_converge(&config)?;
            for row in &report.rows {
                println!(
                    "N {:5}  h {:10.4e}  state error {:12.6e}  control error {:12.6e}",
                    row.intervals, row.h, row.state_error, row.control_error
                );
            }
            match (report.exact, report.state_slope, report.control_slope) {
                (true, _, _) => println!("errors at roundoff: discretization exact"),
                (false, Some(s), Some(c)) => {
                    println!("state slope {s:.3}  control slope {c:.3}")
                }
                _ => {}
            }
        }
        Command::Audit { config, out } => {
            let config = load(config, out)?;
            let report = runner::run_audit(&config)?;
            if let (Some(total), Some(scale)) = (report.total, report.momentum_scale) {
                println!("noether total {total:.6e} (momentum scale {scale:.3e})");
            }
            if let (Some(dev), Some(slope)) =
                (report.energy_max_deviation, report.energy_drift_slope)
            {
                println!("energy max deviation {dev:.6e}, drift slope {slope:.6e} per step");
            }
        }
        Command::Compare { config, with, out } => {
            let a = load(config, out)?;
            let b = load(with, &None)?;
            let report = runner::run_compare(&a, &b)?;
            println!(
                "state gap {:.6e}  control gap {:.6e}  objective gap {:.6e}",
                report.max_state_gap, report.max_control_gap, report.objective_gap
            );
            println!(
                "variables {} vs {} (ratio {:.3}); minor work {} vs {} (ratio {:.3})",
                report.variables.0,
                report.variables.1,
                report.variable_ratio,
                report.minor_work.0,
                report.minor_work.1,
                report.minor_work_ratio
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
