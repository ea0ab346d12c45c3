use std::path::PathBuf;
use std::process::ExitCode;

use bmsi::commands::{self, RunOptions};
use bmsi::config::ExperimentConfig;
use bmsi::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bmsi", version, about = "Bayesian selection of coupling structure in oscillator networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions { seed: self.seed, out: self.out.clone(), threads: self.threads }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a network and write trajectory.csv and truth.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Infer the coupling structure from a trajectory CSV.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run reference configuration 1, 2 or 3 end to end.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        /// Optional config supplying inference settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat simulate-infer-score over a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Phase-difference model of two coupled metronomes.
    Metronome {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate { config, common } => commands::simulate(ExperimentConfig::load(&config)?, &common.options()),
        Command::Infer { config, trajectory, common } => {
            commands::infer(ExperimentConfig::load(&config)?, &trajectory, &common.options())
        }
        Command::Reproduce { id, config, common } => {
            let base = config.map(|p| ExperimentConfig::load(&p)).transpose()?;
            commands::reproduce(id, base, &common.options())
        }
        Command::Sweep { config, common } => commands::sweep(ExperimentConfig::load(&config)?, &common.options()),
        Command::Metronome { config, common } => commands::metronome(ExperimentConfig::load(&config)?, &common.options()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
