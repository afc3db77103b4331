use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use saqite_cli::config::{self, Overrides};
use saqite_cli::{experiments, report};

#[derive(Parser)]
#[command(
    name = "saqite",
    version,
    about = "Run SA-QITE experiments and summarize their results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment in a config file for each seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed list. Repeatable.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exact probabilities instead of finite shots.
        #[arg(long)]
        exact: bool,
    },
    /// Print aggregates found in a results directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            seeds,
            out,
            exact,
        } => {
            let mut loaded = match config::load(&config) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            loaded.apply(&Overrides { seeds, out, exact });
            if let Err(e) = loaded.validate(exact) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            match experiments::run(&loaded, exact) {
                Ok(agg) => {
                    let dir = loaded.config.output_dir.as_deref().expect("validated");
                    println!(
                        "{}: {} seeds written to {}",
                        agg.experiment.name(),
                        agg.per_seed.len(),
                        dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { dir } => match report::render(&dir) {
            Ok(table) => {
                print!("{table}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
