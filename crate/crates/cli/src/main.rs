use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rttp_cli::commands::{self, TrainArgs};
use rttp_cli::config::load_config;
use rttp_cli::CliError;

#[derive(Parser)]
#[command(name = "rttp", version, about = "Trend ranking from generated search queries")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set dpo.beta=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic world with planted trends.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank trends per window for each configured method.
    Run {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score rankings against trend labels.
    Eval {
        /// Directory holding the output of `run`.
        #[arg(long)]
        rankings: PathBuf,
        /// Defaults to truth.jsonl in the events directory.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Defaults to the rankings directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a tabular policy with mixed on/off-policy preference pairs.
    Train {
        #[arg(long, group = "source")]
        pairs: Option<PathBuf>,
        #[arg(long, group = "source")]
        events: Option<PathBuf>,
        #[arg(long, group = "source")]
        synthetic: bool,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Train only when recall has dropped below the configured baseline.
        #[arg(long)]
        monitor: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Simulate { out: dir } => commands::simulate(&cfg, dir.as_deref(), &mut out),
        Command::Run { events, out: dir } => {
            commands::run(&cfg, events.as_deref(), dir.as_deref(), &mut out).map(|_| ())
        }
        Command::Eval {
            rankings,
            truth,
            events,
            out: dir,
        } => commands::eval(
            &cfg,
            &rankings,
            truth.as_deref(),
            events.as_deref(),
            dir.as_deref(),
            &mut out,
        )
        .map(|_| ()),
        Command::Train {
            pairs,
            events,
            synthetic,
            policy,
            reference,
            monitor,
            out: dir,
        } => {
            let args = TrainArgs {
                pairs,
                events,
                synthetic,
                policy,
                reference,
                monitor,
                out: dir,
            };
            commands::train_cmd(&cfg, &args, &mut out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rttp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
