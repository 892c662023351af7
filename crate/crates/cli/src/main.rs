//! `rglue`: synthesize phantoms, estimate displacement and strain, score and
//! compare GLUE against rGLUE from a TOML config.
//!
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 solver stalled
//! (partial outputs written), 4 I/O error.

mod config;
mod failure;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Method, RunConfig};
use failure::Failure;

#[derive(Parser)]
#[command(name = "rglue", version, about = "Robust ultrasound time-delay and strain estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic frame pair, its ground truth and a manifest.
    Synth(Common),
    /// Estimate displacement, strain and the weight map.
    Estimate(Common),
    /// Score a strain image: RMSE, SNR, CNR and the CNR histogram.
    Eval(Common),
    /// Run GLUE and rGLUE on the same input and tabulate their metrics.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `method`.
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::config(format!("--threads: {e}")))?;
        }
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(c) => run::synth(&c.load()?),
        Command::Estimate(c) => {
            let cfg = c.load()?;
            run::estimate_into(&cfg, cfg.method, &cfg.output.dir)?.into_result()
        }
        Command::Eval(c) => {
            let cfg = c.load()?;
            run::eval_in(&cfg, &cfg.output.dir, None).map(|_| ())
        }
        Command::Compare(c) => run::compare(&c.load()?)?.into_result(),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rglue: {f}");
            ExitCode::from(f.code)
        }
    }
}
