use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinmid_cli::{run, CliError, Command, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "spinmid",
    version,
    about = "Structure-preserving integrators for spin systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate and write the trajectory.
    Simulate(Shared),
    /// Integrate, then run the configured checks.
    Verify(Shared),
    /// Global error against a reference for each configured dt.
    Converge(Shared),
    /// Drift and defect table for each configured method.
    Compare(Shared),
}

#[derive(Args)]
struct Shared {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(command: Command, args: Shared) -> Result<spinmid_cli::Outcome, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(out) = args.out {
        cfg.outputs = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    run(command, &cfg)
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::to_string(&err.record()).expect("error record serializes")
    );
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Config(e.to_string().trim_end().to_string())),
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Converge(a) => (Command::Converge, a),
        Cmd::Compare(a) => (Command::Compare, a),
    };
    match execute(command, args) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string(&outcome.summary).expect("summary serializes")
            );
            match outcome.failure {
                Some(err) => fail(&err),
                None => ExitCode::SUCCESS,
            }
        }
        Err(err) => fail(&err),
    }
}
