use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use egodiff_cli::{commands, config, CliError, RunConfig};

/// Node outlier detection by reconstructing ego-graphs with a score-based
/// diffusion model.
#[derive(Debug, Parser)]
#[command(name = "egodiff", version)]
struct Cli {
    /// JSON configuration file; absent keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.trials=2`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark network into paths.bundle.
    Synth,
    /// Train one model per trial into paths.checkpoint.
    Train,
    /// Score every node with every trial into paths.out_dir.
    Score,
    /// Compute ROC-AUC, AP and Recall@k from the score files.
    Eval,
    /// Reconstruction error per solver and noise level.
    SolverCompare,
    /// Original and reconstructed energies of sampled ego-graphs.
    EnergyHist,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides)?;
    if cli.print_config {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    match cli.command {
        None => Err(CliError::Usage("no command given; see --help".into())),
        Some(Command::Synth) => commands::cmd_synth(&cfg),
        Some(Command::Train) => commands::cmd_train(&cfg),
        Some(Command::Score) => commands::cmd_score(&cfg),
        Some(Command::Eval) => commands::cmd_eval(&cfg),
        Some(Command::SolverCompare) => commands::cmd_solver_compare(&cfg),
        Some(Command::EnergyHist) => commands::cmd_energy_hist(&cfg),
    }
}

fn main() -> ExitCode {
    let parsed = Cli::command()
        .after_long_help(config::reference())
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(cli) => cli,
        // help and version go to stdout with status 0
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("egodiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
