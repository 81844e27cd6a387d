use std::path::PathBuf;

use anyhow::Context;
use fpp_core::dataset::{
    assign_splits, finish_dataset, sample_dir, write_sample, write_stack, DatasetMeta, FringeSummary, Provenance, Sample,
    STACK_DIR,
};
use fpp_core::simulator::{derive_seed, random_scene, render_stack, SceneSummary};
use fpp_core::{reconstruct, HeightMap, SplitSpec};
use rayon::prelude::*;

use crate::config::{config_err, LabelSource, PipelineConfig};

pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Output directory (overrides dataset.out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explicit split sizes TRAIN,VALIDATION,TEST.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    counts: Option<Vec<usize>>,
    /// Square image size in pixels (overrides dataset.width and dataset.height).
    #[arg(long)]
    size: Option<usize>,
    /// Also store every fringe image of every sample.
    #[arg(long)]
    keep_stacks: bool,
    /// Where height labels come from.
    #[arg(long, value_enum)]
    label_source: Option<LabelSource>,
    /// Render without noise or quantization.
    #[arg(long)]
    noiseless: bool,
}

pub fn run(mut cfg: PipelineConfig, args: Args) -> anyhow::Result<()> {
    if let Some(out) = args.out {
        cfg.dataset.out = out;
    }
    if let Some(c) = args.counts {
        let [train, validation, test] = c[..] else {
            return Err(config_err("--counts: expected TRAIN,VALIDATION,TEST"));
        };
        cfg.dataset.split = SplitSpec::Counts { train, validation, test };
        cfg.dataset.count = None;
    }
    if let Some(s) = args.size {
        cfg.dataset.width = s;
        cfg.dataset.height = s;
    }
    cfg.dataset.keep_stacks |= args.keep_stacks;
    if let Some(l) = args.label_source {
        cfg.dataset.label_source = l;
    }
    if args.noiseless {
        cfg.scene = cfg.scene.noiseless();
    }
    cfg.validate()?;
    let [train, validation, test] = cfg.split_counts()?;
    let truth = cfg.truth_model()?;

    let d = &cfg.dataset;
    let (w, h) = (d.width, d.height);
    let spec = cfg.fringe_spec(w, h);
    let nominal = cfg.nominal_modulation();
    let n = train + validation + test;
    let out = d.out.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let ids: Vec<String> = (0..n)
        .into_par_iter()
        .map(|i| -> anyhow::Result<String> {
            let seed = derive_seed(cfg.seed, i as u64);
            let id = format!("scene_{i:05}");
            let scene = random_scene(seed, &cfg.scene, w, h)?;
            let stack = render_stack(&scene, &truth, &spec)?;
            let label = match d.label_source {
                LabelSource::Analytic => stack.truth.clone(),
                LabelSource::Reconstructed => {
                    reconstruct(&stack.images, &spec, truth.model(), nominal, cfg.reconstruct.threshold)?.height
                }
            };
            let sample = Sample::new(
                id.clone(),
                stack.single_shot_input().cast(),
                HeightMap::new(label.image.cast(), label.mask)?,
                Provenance {
                    seed,
                    label_source: match d.label_source {
                        LabelSource::Analytic => "analytic".into(),
                        LabelSource::Reconstructed => "reconstructed".into(),
                    },
                    scene: Some(SceneSummary::from(&scene)),
                },
            )?;
            write_sample(&out, &sample)?;
            if d.keep_stacks {
                write_stack(&sample_dir(&out, &id).join(STACK_DIR), &spec.frequencies, &stack.images)?;
            }
            Ok(id)
        })
        .collect::<anyhow::Result<_>>()?;

    let splits = assign_splits(&ids, &SplitSpec::Counts { train, validation, test }, cfg.seed)?;
    truth.model().save(out.join(MODEL_FILE))?;
    let (lo, hi) = truth.model().depth_range;
    finish_dataset(
        &out,
        (w, h),
        splits,
        cfg.seed,
        DatasetMeta {
            fringe: FringeSummary::from(&spec),
            calibration: Some(MODEL_FILE.into()),
            depth_range_mm: [lo, hi],
            has_stacks: d.keep_stacks,
        },
    )?;
    println!(
        "synth: {n} samples at {w}x{h} (train {train}, validation {validation}, test {test}) -> {}",
        out.display()
    );
    Ok(())
}
