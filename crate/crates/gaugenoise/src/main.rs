use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gaugenoise::harness::config::ExperimentConfig;
use gaugenoise::harness::{fit, sweep, tables, worker_count, HarnessError, EXIT_OK};

#[derive(Parser)]
#[command(name = "gaugenoise", version, about = "Lattice gauge theories under 1/f noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single quench.
    Run { config: PathBuf },
    /// Run the Cartesian product of the gamma, beta and V grids.
    Sweep {
        config: PathBuf,
        /// Worker threads (overrides the environment).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit early-time slopes across the runs listed in an index file.
    FitScaling { index: PathBuf },
    /// Print the Z2 eigenvalue table and both sector-weight tables.
    Tables,
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let res = sweep::run(&cfg)?;
            for e in &res.entries {
                println!("{}", res.dir.join(&e.csv).display());
                if !e.validity_pass {
                    eprintln!(
                        "warning: golden-rule validity ratio {:.3e} exceeds the threshold",
                        e.validity_max_ratio
                    );
                }
            }
        }
        Command::Sweep { config, workers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let res = sweep::sweep(&cfg, workers.unwrap_or_else(worker_count))?;
            for e in &res.entries {
                println!("{}", res.dir.join(&e.csv).display());
            }
            println!("{}", res.index.display());
        }
        Command::FitScaling { index } => {
            let f = fit::fit_index(&index)?;
            print!("{}", fit::render(&f));
        }
        Command::Tables => print!("{}", tables::render_all()?),
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {} run(s)", cfg.points().len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
