use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvtrack::config::ExperimentConfig;
use tvtrack::experiment;
use tvtrack::Error;

/// Asynchronous multi-agent tracking of time-varying optima.
#[derive(Parser)]
#[command(name = "tvtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions on every epoch and print its constants.
    Verify(Common),
    /// Run the asynchronous update law and compare errors with the bound.
    Simulate(Common),
    /// Compute cycle requirements and a budgeted cycle allocation.
    Plan(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sets both the problem and the schedule seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    problem_seed: Option<u64>,
    #[arg(long)]
    schedule_seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            config.set_problem_seed(s);
            config.set_schedule_seed(s);
        }
        if let Some(s) = self.problem_seed {
            config.set_problem_seed(s);
        }
        if let Some(s) = self.schedule_seed {
            config.set_schedule_seed(s);
        }
        Ok(config)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Assumption(_) => 2,
        Error::Solver { .. } | Error::Convergence { .. } | Error::InfeasibleBudget(_) | Error::SizeCap(_) => 3,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 4,
    }
}

fn execute(command: &Command) -> Result<(), Error> {
    match command {
        Command::Verify(args) => {
            let (_, report) = experiment::verify(&args.load()?)?;
            println!("{report}");
        }
        Command::Simulate(args) => {
            let outcome = experiment::simulate(&args.load()?, args.out.as_deref())?;
            println!("{outcome}");
        }
        Command::Plan(args) => {
            let outcome = experiment::plan(&args.load()?, args.out.as_deref())?;
            print!("{outcome}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
