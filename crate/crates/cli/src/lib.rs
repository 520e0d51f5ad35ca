//! Command-line driver for the pruning pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fetch;

use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{flag_name, full_key, RawConfig, RunConfig, KEYS};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "prunenet",
    version,
    about = "Train, prune, retrain and compress LeNet-class networks"
)]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Deterministic execution. Every kernel is single-threaded with a fixed
    /// summation order, so `false` is accepted but changes nothing.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download the MNIST IDX files into the data directory and verify them.
    Fetch {
        /// File URL (http, https or file://); gzip is decompressed.
        #[arg(long)]
        url: Vec<String>,
        /// Directory URL holding the four standard `.gz` files.
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Train a baseline from scratch.
    Train,
    /// One pruning step without retraining.
    Prune {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Masked retraining of a pruned checkpoint.
    Retrain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Iterative prune and retrain rounds.
    Iterate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Per-layer pruning sensitivity curves and suggested qualities.
    Sensitivity {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the compressed model file and its storage breakdown.
    Export {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Check that an exported model reproduces a checkpoint bit-for-bit.
    ImportCheck {
        /// Exported model file.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Reference checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Parameter/FLOP table, mask bitmaps, histograms and energy estimate.
    Report {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Accuracy versus pruned fraction for five pruning variants.
    Tradeoff {
        #[arg(long)]
        l1_checkpoint: Option<PathBuf>,
        #[arg(long)]
        l2_checkpoint: Option<PathBuf>,
    },
}

/// The clap command with one flag per configuration key.
pub fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for (section, key, help) in KEYS {
        let flag = flag_name(section, key);
        cmd = cmd.arg(
            Arg::new(full_key(section, key))
                .long(flag)
                .value_name("VALUE")
                .help(*help)
                .global(true)
                .help_heading("Configuration"),
        );
    }
    cmd
}

/// Merges the config file with command-line overrides.
pub fn resolve_config(cli: &Cli, matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    let sub = matches.subcommand().map(|(_, m)| m);
    for (section, key, _) in KEYS {
        let id = full_key(section, key);
        let value = sub
            .and_then(|m| m.get_one::<String>(&id))
            .or_else(|| matches.get_one::<String>(&id));
        if let Some(v) = value {
            raw.set(&id, v)?;
        }
    }
    Ok(RunConfig::resolve(&raw)?)
}

/// Parses arguments and runs one command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("clap validated the arguments");
    let cfg = resolve_config(&cli, &matches)?;
    use commands::*;
    match &cli.command {
        Command::Fetch { url, base_url } => cmd_fetch(&cfg, url, base_url.as_deref()),
        Command::Train => cmd_train(&cfg).map(|_| ()),
        Command::Prune { checkpoint } => cmd_prune(&cfg, checkpoint.as_deref()),
        Command::Retrain { checkpoint } => cmd_retrain(&cfg, checkpoint.as_deref()),
        Command::Iterate { checkpoint } => cmd_iterate(&cfg, checkpoint.as_deref()).map(|_| ()),
        Command::Sensitivity { checkpoint } => cmd_sensitivity(&cfg, checkpoint.as_deref()),
        Command::Export { checkpoint } => cmd_export(&cfg, checkpoint.as_deref()),
        Command::ImportCheck { model, checkpoint } => {
            cmd_import_check(&cfg, model.as_deref(), checkpoint.as_deref())
        }
        Command::Report { checkpoint } => cmd_report(&cfg, checkpoint.as_deref()),
        Command::Tradeoff {
            l1_checkpoint,
            l2_checkpoint,
        } => cmd_tradeoff(&cfg, l1_checkpoint.as_deref(), l2_checkpoint.as_deref()),
    }
}
