use std::path::PathBuf;

use fpp_core::dataset::{read_stack, write_height_map, STACK_DIR};
use fpp_core::{reconstruct, Image, Model};

use crate::config::PipelineConfig;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Stack directory of f<freq>_s<shift>.pfm files, or a sample directory
    /// containing one.
    #[arg(long)]
    stack: PathBuf,
    /// Calibration file.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for height.pfm and mask.pgm.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cfg: PipelineConfig, args: Args) -> anyhow::Result<()> {
    cfg.validate()?;
    let dir = if args.stack.join(STACK_DIR).is_dir() {
        args.stack.join(STACK_DIR)
    } else {
        args.stack.clone()
    };
    let stack: Vec<Vec<Image>> = read_stack(&dir, &cfg.fringe.frequencies, cfg.fringe.steps)?
        .iter()
        .map(|row| row.iter().map(|i| i.cast()).collect())
        .collect();
    let (w, h) = stack[0][0].dims();
    let model = Model::load(&args.model)?;
    let rec = reconstruct(
        &stack,
        &cfg.fringe_spec(w, h),
        &model,
        cfg.nominal_modulation(),
        cfg.reconstruct.threshold,
    )?;
    write_height_map(&args.out, &rec.height)?;
    println!(
        "reconstruct: {} of {} pixels valid -> {}",
        rec.mask.count_valid(),
        w * h,
        args.out.display()
    );
    Ok(())
}
