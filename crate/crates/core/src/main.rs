use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use porflow::io::commands::{self, CommandError};

/// Two-phase compressible porous-media flow simulator.
#[derive(Parser)]
#[command(name = "porflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by an INI config file.
    Simulate { config: PathBuf },
    /// Report regularity, dual volumes and transmissibility signs of a mesh.
    CheckMesh {
        mesh: PathBuf,
        /// Permeability: one scalar, d diagonal entries or d*d row-major entries.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lambda: Option<Vec<f64>>,
    },
    /// Manufactured-solution refinement study of the stiffness discretisation.
    Convergence {
        config: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Simulate { config } => {
            let result = commands::simulate(&config)?;
            let steps = result.trajectory.reports.len();
            let t = result.trajectory.states.last().map_or(0.0, |s| s.time);
            println!("completed {steps} steps to t = {t}; output in {}", result.output_dir.display());
        }
        Command::CheckMesh { mesh, lambda } => {
            print!("{}", commands::check_mesh(&mesh, lambda.as_deref())?);
        }
        Command::Convergence { config, levels } => {
            let (table, path) = commands::convergence(&config, levels)?;
            print!("{}", table.to_csv());
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // exit code 2 is reserved for solver failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
