//! `ssmlab`: config-driven runner for collapse certificates, constructions,
//! PSD checks and training experiments.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::ConfigError;

#[derive(Parser)]
#[command(name = "ssmlab", version, about = "Finite-precision probes and experiments for diagonal linear recurrent models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config; every key is optional and unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (the SSMLAB_OUT environment variable takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Collapse certificate for one named model on a cyclic input family.
    Certify,
    /// Parity length-generalization table or offset-prediction runs.
    Train,
    /// Check a hand-built construction against its oracle.
    Construct,
    /// Eigenvalues of products of random PSD matrices.
    PsdCheck {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Collapse certificates over a random model zoo.
    Sweep,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Train => "train",
            Command::Construct => "construct",
            Command::PsdCheck { .. } => "psd-check",
            Command::Sweep => "sweep",
        }
    }
}

fn out_dir(flag: Option<&Path>, from_config: Option<&Path>) -> PathBuf {
    if let Some(env) = std::env::var_os("SSMLAB_OUT").filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    flag.or(from_config).map_or_else(|| PathBuf::from("results"), Path::to_path_buf)
}

fn dispatch(cli: &Cli) -> anyhow::Result<(PathBuf, Vec<String>)> {
    let path = cli.config.as_deref();
    let ctx = |cfg_out: Option<&Path>| -> anyhow::Result<Ctx> {
        let out = out_dir(cli.out.as_deref(), cfg_out);
        std::fs::create_dir_all(&out)?;
        Ok(Ctx {
            out,
            seed: cli.seed,
            jobs: cli.jobs,
        })
    };
    macro_rules! go {
        ($cfg:expr, $run:path) => {{
            let cfg = $cfg;
            let ctx = ctx(cfg.out.as_deref())?;
            let failures = $run(&cfg, &ctx)?;
            Ok((ctx.out, failures))
        }};
    }
    match &cli.command {
        Command::Certify => go!(config::load::<config::CertifyConfig>(path)?, commands::certify::run),
        Command::Train => go!(config::load::<config::TrainCommandConfig>(path)?, commands::train::run),
        Command::Construct => go!(config::load::<config::ConstructConfig>(path)?, commands::construct::run),
        Command::PsdCheck { dim, trials } => {
            let mut cfg = config::load::<config::PsdConfig>(path)?;
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.trials = trials.unwrap_or(cfg.trials);
            go!(cfg, commands::psd::run)
        }
        Command::Sweep => go!(config::load::<config::SweepConfig>(path)?, commands::sweep::run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match dispatch(&cli) {
        Ok((out, failures)) => {
            if let Err(e) = output::write_summary(&out, name, &failures) {
                eprintln!("error: {e:#}");
                return ExitCode::FAILURE;
            }
            if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
