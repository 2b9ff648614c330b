use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modelaid::config::{Preset, RunConfig};
use modelaid::run::{self, Command};
use modelaid::Error;

/// Model-aided training data, transfer learning and energy-efficiency experiments.
#[derive(Debug, Parser)]
#[command(name = "modelaid", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Scale preset: desk or paper.
    #[arg(long, global = true)]
    preset: Option<Preset>,

    /// Override one configuration key, e.g. `--set case2.transfer.replicates=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write the datasets of the selected case.
    Gen,
    /// Train on model data (protocol A for case 1).
    Train,
    /// Run the pre-train / fine-tune comparison.
    Transfer,
    /// Evaluate a saved model on the held-out data.
    Eval {
        /// Model file written by `train` or `transfer`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Compare candidate architectures at the sweep budget.
    Sweep,
    /// Print the resolved configuration as TOML.
    Config,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::NonConvergence(_) | Error::Divergence { .. } | Error::Infeasible(_) => 3,
        Error::Io { .. } => 4,
        Error::Shape(_) | Error::Format(_) => 1,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out = {:?}", out.to_string_lossy()));
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), cli.preset, &overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<(), Error> {
    let cfg = resolve(&cli)?;
    let (command, model) = match &cli.command {
        Cmd::Gen => (Command::Gen, None),
        Cmd::Train => (Command::Train, None),
        Cmd::Transfer => (Command::Transfer, None),
        Cmd::Eval { model } => (Command::Eval, Some(model.as_path())),
        Cmd::Sweep => (Command::Sweep, None),
        Cmd::Config => {
            let text = cfg.to_toml()?;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
            return Ok(());
        }
    };
    run::configure_workers(cfg.workers)?;
    run::execute(command, &cfg, model)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| writeln!(buf, "level={} {}", record.level(), record.args()))
        .init();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
