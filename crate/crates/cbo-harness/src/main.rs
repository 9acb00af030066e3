use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cbo_harness::config::ExperimentConfig;
use cbo_harness::experiment::{
    run_diagnostics, run_success_experiment, run_training_experiment, HarnessError,
};

/// Seeded optimization experiments with CSV reporting.
#[derive(Parser)]
#[command(name = "cbo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a success-rate experiment over seeded repetitions.
    Run { config: PathBuf },
    /// Train the classifier objective and record per-epoch accuracy.
    Train { config: PathBuf },
    /// Run moment diagnostics.
    Diag { config: PathBuf },
    /// Parse and validate a config, echoing the resolved settings.
    Validate { config: PathBuf },
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let table = run_success_experiment(&config)?;
            println!(
                "{:<24} {:>12} {:>14} {:>12} {:>12}",
                "method", "success_rate", "mean_distance", "mean_iters", "mean_wall_ms"
            );
            for m in &table.methods {
                println!(
                    "{:<24} {:>12.3} {:>14.4e} {:>12.1} {:>12.1}",
                    m.summary.method,
                    m.summary.success_rate,
                    m.summary.mean_distance,
                    m.summary.mean_iterations,
                    m.summary.mean_wall_ms
                );
            }
            println!("wrote {}", config.output_dir.join("summary.csv").display());
            Ok(())
        }
        Command::Train { config } => {
            let config = ExperimentConfig::load(&config)?;
            let curves = run_training_experiment(&config)?;
            for (label, rows) in &curves {
                let last = rows.last().expect("training always records epoch 0");
                println!(
                    "{label}: {} epochs, final test accuracy {:.4}, final loss estimate {:.4}",
                    last.epoch, last.test_accuracy, last.train_loss_estimate
                );
            }
            println!("wrote curves under {}", config.output_dir.display());
            Ok(())
        }
        Command::Diag { config } => {
            let config = ExperimentConfig::load(&config)?;
            let written = run_diagnostics(&config)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let config = ExperimentConfig::load(&config)?;
            print!("{}", config.summary());
            println!("ok");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
