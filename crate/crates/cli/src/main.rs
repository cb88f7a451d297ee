use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sps_cli::{execute, preset, Command, CliError, Overrides, Preset, RunConfig};

/// Sign-perturbed sums confidence regions for ARX systems.
#[derive(Parser, Debug)]
#[command(name = "sps", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in reference experiment.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Master seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<u64>,
    /// Number of SPS statistics (overrides the config).
    #[arg(long)]
    m: Option<usize>,
    /// Number of excluded ranks (overrides the config).
    #[arg(long)]
    q: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match (&cli.config, cli.preset) {
        (Some(path), None) => RunConfig::from_path(path)?,
        (None, Some(p)) => preset(p, cli.command),
        _ => return Err(CliError::Config("exactly one of --config and --preset is required".into())),
    };
    match config.command {
        Some(c) if c != cli.command => {
            return Err(CliError::Config(format!(
                "command: config file is for `{c}`, not `{}`",
                cli.command
            )))
        }
        _ => config.command = Some(cli.command),
    }
    config.apply(&Overrides {
        seed: cli.seed,
        trials: cli.trials,
        m: cli.m,
        q: cli.q,
    });
    let artifacts = execute(&config)?;
    for path in artifacts.write_to(&cli.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
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
