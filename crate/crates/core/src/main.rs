use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarm_coord::cli::{self, CliError, PresetName};

#[derive(Parser)]
#[command(
    name = "swarm-coord",
    version,
    about = "Drone swarm task-assignment simulator"
)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file.
    Run {
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the event trace.
        #[arg(long)]
        trace: bool,
    },
    /// Run an experiment preset: fig2, fig3, fig4, fig5 or calibrate.
    Preset {
        name: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        repeats: u32,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Maximum parallel runs.
        #[arg(long, env = "SWARM_COORD_WORKERS")]
        workers: Option<usize>,
    },
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Args::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run {
            file,
            seed,
            out,
            trace,
        } => {
            let report = cli::cmd_run(&file, seed, &out, trace)?;
            print!("{}", report.summary_text());
        }
        Cmd::Preset {
            name,
            seed,
            repeats,
            out,
            workers,
        } => {
            let name: PresetName = name.parse()?;
            let outcome = cli::cmd_preset(name, seed, repeats, &out, workers)?;
            if let Some(c) = outcome.calibration {
                print!("{}", c.to_csv());
            } else {
                println!("{} cells written to {}", outcome.cells.len(), out.display());
            }
        }
        Cmd::Validate { file } => {
            cli::cmd_validate(&file)?;
            println!("ok");
        }
    }
    Ok(())
}
