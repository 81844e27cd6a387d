use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fpp_core::dataset::{read_height_map, SAMPLES_DIR};
use fpp_core::evaluation::{compare_models, format_table, ErrorAccumulator, EvalReport};
use fpp_core::load_dataset;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{config_err, PipelineConfig};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Prediction directory as NAME=DIR (or just DIR); repeatable.
    #[arg(long, required = true)]
    pred: Vec<String>,
    /// Dataset directory holding the ground truth.
    #[arg(long)]
    truth: PathBuf,
    /// Split to score: train, validation, test or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct NamedReport<'a> {
    name: &'a str,
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    split: &'a str,
    models: Vec<NamedReport<'a>>,
    ranking: Vec<String>,
}

fn parse_pred(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, dir)) if !name.is_empty() => (name.to_string(), PathBuf::from(dir)),
        _ => {
            let dir = PathBuf::from(arg);
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (name, dir)
        }
    }
}

/// Prediction for `id` lives in `DIR/<id>/` or `DIR/samples/<id>/`.
fn prediction_dir(root: &Path, id: &str) -> Option<PathBuf> {
    [root.join(id), root.join(SAMPLES_DIR).join(id)]
        .into_iter()
        .find(|d| d.is_dir())
}

pub fn run(_cfg: PipelineConfig, args: Args) -> anyhow::Result<()> {
    let preds: Vec<(String, PathBuf)> = args.pred.iter().map(|p| parse_pred(p)).collect();
    let dataset = load_dataset(&args.truth)?;
    let ids: Vec<String> = match args.split.as_str() {
        "all" => dataset.ids().cloned().collect(),
        name => dataset
            .manifest
            .splits
            .get(name)
            .ok_or_else(|| config_err(format!("--split: unknown split '{name}'")))?
            .to_vec(),
    };
    if ids.is_empty() {
        bail!("split '{}' of {} is empty", args.split, args.truth.display());
    }
    let [lo, hi] = dataset.manifest.depth_range_mm;

    let mut reports = Vec::with_capacity(preds.len());
    for (name, dir) in &preds {
        if !dir.is_dir() {
            bail!("prediction directory {} does not exist", dir.display());
        }
        let accs = ids
            .par_iter()
            .map(|id| -> anyhow::Result<(String, ErrorAccumulator)> {
                let pd = prediction_dir(dir, id)
                    .ok_or_else(|| anyhow::anyhow!("id mismatch: {} has no prediction for '{id}'", dir.display()))?;
                let pred = read_height_map(&pd)?;
                let truth = read_height_map(&dataset.sample_dir(id))?;
                let acc = ErrorAccumulator::from_maps(&pred, &truth).with_context(|| format!("sample '{id}'"))?;
                Ok((id.clone(), acc))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let report = EvalReport::from_accumulators(accs, hi - lo).with_context(|| format!("model '{name}'"))?;
        reports.push((name.clone(), report));
    }

    let ranking = if reports.len() >= 2 {
        compare_models(&reports)?
    } else {
        vec![reports[0].0.clone()]
    };
    let ordered: Vec<(String, EvalReport)> = ranking
        .iter()
        .map(|n| reports.iter().find(|(m, _)| m == n).cloned().expect("ranked name exists"))
        .collect();
    print!("{}", format_table(&ordered));
    if let Some(path) = &args.report {
        let file = ReportFile {
            split: &args.split,
            models: ordered.iter().map(|(name, report)| NamedReport { name, report }).collect(),
            ranking: ranking.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
