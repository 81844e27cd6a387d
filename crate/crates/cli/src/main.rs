//! `fpp`: synthesize datasets, calibrate, reconstruct, evaluate and render.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod calibrate;
mod config;
mod eval;
mod reconstruct;
mod render;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "fpp", version, about = "Fringe projection profilometry toolkit")]
struct Cli {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenes, render them and export a single-shot dataset.
    Synth(synth::Args),
    /// Fit a calibration model to gauge-plane stacks.
    Calibrate(calibrate::Args),
    /// Recover a height map from a full fringe stack.
    Reconstruct(reconstruct::Args),
    /// Score prediction directories against a dataset.
    Eval(eval::Args),
    /// Colour-map a height map into a PPM image.
    Render(render::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(config::config_err("--jobs: must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Synth(a) => synth::run(cfg, a),
        Command::Calibrate(a) => calibrate::run(cfg, a),
        Command::Reconstruct(a) => reconstruct::run(cfg, a),
        Command::Eval(a) => eval::run(cfg, a),
        Command::Render(a) => render::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
