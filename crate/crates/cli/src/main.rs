use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vd2nn::evaluation::SweepAxis;
use vd2nn_cli::commands::{self, EvalOneMode};
use vd2nn_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "vd2nn",
    version,
    about = "Train and stress-test diffractive optical classifiers"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a TOML run configuration.
    Train { config: PathBuf },
    /// Accuracy against a list of misalignment levels.
    Sweep {
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        /// Comma-separated levels in wavelengths, ascending.
        #[arg(long)]
        levels: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Only the first N test images.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Class scores for a single test image under pinned displacements.
    EvalOne {
        checkpoint: PathBuf,
        #[arg(long)]
        sample: usize,
        /// `layer:dx,dy,dz` with a 1-based layer index; repeatable.
        #[arg(long = "override")]
        overrides: Vec<String>,
        /// Evaluate the 13-position table for this layer instead.
        #[arg(long, conflicts_with = "overrides", requires = "grid_csv")]
        grid_layer: Option<usize>,
        #[arg(long)]
        grid_csv: Option<PathBuf>,
    },
    /// Print a checkpoint summary.
    Inspect { checkpoint: PathBuf },
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, String> {
    s.parse().map_err(|e: vd2nn::Error| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let out = commands::cmd_train(&config, |l| {
                eprintln!(
                    "epoch {} loss {:.5} clean_val {:.4} vaccinated_val {:.4}",
                    l.epoch, l.mean_loss, l.clean_val_acc, l.vaccinated_val_acc
                )
            })?;
            println!("{}", out.checkpoint.display());
        }
        Command::Sweep {
            checkpoint,
            axis,
            levels,
            seed,
            out,
            limit,
        } => {
            let path = commands::cmd_sweep(&checkpoint, axis, &levels, seed, &out, limit)?;
            print!(
                "{}",
                std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?
            );
        }
        Command::EvalOne {
            checkpoint,
            sample,
            overrides,
            grid_layer,
            grid_csv,
        } => {
            let mode = match (grid_layer, grid_csv) {
                (Some(layer), Some(csv)) => EvalOneMode::PositionGrid { layer, csv },
                _ => EvalOneMode::Overrides(
                    overrides
                        .iter()
                        .map(|o| commands::parse_override(o))
                        .collect::<Result<_>>()?,
                ),
            };
            print!("{}", commands::cmd_eval_one(&checkpoint, sample, mode)?);
        }
        Command::Inspect { checkpoint } => print!("{}", commands::cmd_inspect(&checkpoint)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::Config(format!("--threads {t}: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
