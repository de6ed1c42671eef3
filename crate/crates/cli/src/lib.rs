//! Command-line harness: explore, evaluate, validate-dsp, export-wav.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use curio_core::explore::PolicyKind;

use crate::config::Experiment;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "curio", version, about = "Curiosity-driven audiovisual exploration experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; overrides CURIO_OUT and the config's out_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated policies (random, cycling, curiosity).
    #[arg(long, value_delimiter = ',')]
    pub policy: Option<Vec<String>>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run exploration for every policy and seed.
    Explore(RunArgs),
    /// Score explored runs on the enabled tasks.
    Evaluate(RunArgs),
    /// Check the audio front end against the built-in reference.
    ValidateDsp {
        /// Take DSP settings from this experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write stored clips as WAV files.
    ExportWav(RunArgs),
}

impl RunArgs {
    pub fn experiment(&self) -> CliResult<Experiment> {
        let mut exp = Experiment::load(&self.config)?;
        if let Some(seeds) = &self.seeds {
            exp.config.seeds = seeds.clone();
        }
        if let Some(names) = &self.policy {
            exp.config.policies = names
                .iter()
                .map(|n| n.trim().parse::<PolicyKind>())
                .collect::<Result<_, _>>()?;
        }
        exp.validate()?;
        Ok(exp)
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match workers {
        None => f(),
        Some(0) => Err(CliError::Validation("invalid --workers: must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(f),
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Explore(args) => {
            let exp = args.experiment()?;
            let root = exp.out_root(args.out.as_deref());
            let dirs = with_workers(args.workers, || commands::cmd_explore(&exp, &root))?;
            println!("explored {} runs under {}", dirs.len(), root.display());
        }
        Command::Evaluate(args) => {
            let exp = args.experiment()?;
            let root = exp.out_root(args.out.as_deref());
            with_workers(args.workers, || commands::cmd_evaluate(&exp, &root))?;
            println!("wrote {}", output::eval_dir(&root, exp.environment()).display());
        }
        Command::ValidateDsp { config } => {
            let exp = config.as_deref().map(Experiment::load).transpose()?;
            commands::cmd_validate_dsp(exp.as_ref())?;
        }
        Command::ExportWav(args) => {
            let exp = args.experiment()?;
            let root = exp.out_root(args.out.as_deref());
            let n = with_workers(args.workers, || commands::cmd_export_wav(&exp, &root))?;
            println!("wrote {n} WAV files under {}", root.join("wav").display());
        }
    }
    Ok(())
}
