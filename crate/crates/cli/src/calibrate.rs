use std::path::{Path, PathBuf};

use anyhow::Context;
use fpp_core::dataset::{read_stack, write_stack};
use fpp_core::simulator::{derive_seed, render_stack, HeightField, SceneSpec};
use fpp_core::{calibrate_from_planes, residual_stats, Image};

use crate::config::{config_err, PipelineConfig};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Gauge-plane heights in mm (overrides calibration.planes).
    #[arg(long, value_delimiter = ',', num_args = 1)]
    planes: Option<Vec<f64>>,
    /// Read recorded plane stacks from DIR/<height_mm>/ instead of simulating.
    #[arg(long, conflicts_with = "planes")]
    plane_stacks: Option<PathBuf>,
    /// Simulate planes without noise or quantization.
    #[arg(long)]
    noiseless: bool,
    /// Output calibration file (overrides calibration.out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Square image size for simulated planes.
    #[arg(long)]
    size: Option<usize>,
    /// Write the simulated plane stacks to DIR/<height_mm>/.
    #[arg(long)]
    save_stacks: Option<PathBuf>,
}

type Stack = Vec<Vec<Image>>;
type Planes = Vec<(f64, Stack)>;

fn recorded_planes(cfg: &PipelineConfig, dir: &Path) -> anyhow::Result<(Planes, (usize, usize))> {
    let mut planes = Vec::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if !path.is_dir() {
            continue;
        }
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let z: f64 = name
            .parse()
            .map_err(|_| anyhow::anyhow!("plane directory '{name}' is not a height in mm"))?;
        let stack = read_stack(&path, &cfg.fringe.frequencies, cfg.fringe.steps)?;
        planes.push((z, stack.iter().map(|row| row.iter().map(|i| i.cast()).collect()).collect()));
    }
    planes.sort_by(|a: &(f64, Stack), b| a.0.total_cmp(&b.0));
    let dims = planes
        .first()
        .map(|(_, s)| s[0][0].dims())
        .ok_or_else(|| anyhow::anyhow!("no plane stacks found in {}", dir.display()))?;
    Ok((planes, dims))
}

fn simulated_planes(cfg: &PipelineConfig, heights: &[f64], noiseless: bool) -> anyhow::Result<Planes> {
    let (w, h) = (cfg.dataset.width, cfg.dataset.height);
    let truth = cfg.truth_model()?;
    let spec = cfg.fringe_spec(w, h);
    heights
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let mut scene = SceneSpec::clean(HeightField::plane(w, h, z))?;
            if !noiseless {
                scene.contrast = cfg.scene.contrast;
                scene.ambient = cfg.scene.ambient;
                scene.noise_sigma = cfg.scene.noise_sigma;
                scene.quantize_8bit = cfg.scene.quantize_8bit;
            }
            scene.seed = derive_seed(cfg.seed, k as u64);
            Ok((z, render_stack(&scene, &truth, &spec)?.images))
        })
        .collect()
}

pub fn run(mut cfg: PipelineConfig, args: Args) -> anyhow::Result<()> {
    if let Some(p) = args.planes {
        cfg.calibration.planes = p;
    }
    if let Some(out) = args.out {
        cfg.calibration.out = out;
    }
    if let Some(s) = args.size {
        cfg.dataset.width = s;
        cfg.dataset.height = s;
    }
    cfg.calibration.noiseless |= args.noiseless;
    cfg.validate()?;

    let (planes, dims) = match &args.plane_stacks {
        Some(dir) => recorded_planes(&cfg, dir)?,
        None => {
            let mut distinct = cfg.calibration.planes.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() < 3 || distinct.iter().any(|z| !z.is_finite()) {
                return Err(config_err(format!(
                    "calibration.planes: need at least 3 distinct finite heights, got {:?}",
                    cfg.calibration.planes
                )));
            }
            let planes = simulated_planes(&cfg, &cfg.calibration.planes, cfg.calibration.noiseless)?;
            (planes, (cfg.dataset.width, cfg.dataset.height))
        }
    };
    if let Some(dir) = &args.save_stacks {
        for (z, stack) in &planes {
            write_stack(&dir.join(format!("{z}")), &cfg.fringe.frequencies, stack)?;
        }
    }

    let spec = cfg.fringe_spec(dims.0, dims.1);
    let (model, samples) = calibrate_from_planes(
        &planes,
        &spec,
        cfg.nominal_modulation(),
        cfg.reconstruct.threshold,
        cfg.calibration.stride,
    )?;
    let stats = residual_stats(&model, &samples)?;
    model.save(&cfg.calibration.out)?;
    println!(
        "calibrate: {} samples from {} planes, fit RMS {:.3e} mm, max |residual| {:.3e} mm -> {}",
        samples.len(),
        planes.len(),
        stats.rms_mm,
        stats.max_abs_mm,
        cfg.calibration.out.display()
    );
    Ok(())
}
