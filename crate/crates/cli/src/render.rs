use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fpp_core::dataset::{read_mask_pgm, read_pfm, MASK_FILE};
use fpp_core::{Image32, Mask};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Height map (PFM).
    #[arg(long)]
    input: PathBuf,
    /// Validity mask; defaults to mask.pgm next to the input when present.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output image (binary PPM).
    #[arg(long)]
    out: PathBuf,
}

/// Viridis sampled at five evenly spaced stops, interpolated linearly.
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    [0, 1, 2].map(|c| (a[c] + f * (b[c] - a[c])).round() as u8)
}

/// Valid heights are stretched over the colormap (a constant map takes the
/// middle colour); invalid pixels are black.
pub fn encode_ppm(heights: &Image32, mask: &Mask) -> anyhow::Result<Vec<u8>> {
    let (w, h) = heights.dims();
    if mask.dims() != (w, h) {
        bail!("mask is {:?} but height map is {:?}", mask.dims(), (w, h));
    }
    let valid = |k: usize| mask.flags()[k] && heights.data()[k].is_finite();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in (0..w * h).filter(|&k| valid(k)) {
        let z = f64::from(heights.data()[k]);
        lo = lo.min(z);
        hi = hi.max(z);
    }
    if lo > hi {
        bail!("height map has no valid pixels");
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for k in 0..w * h {
        let rgb = if !valid(k) {
            [0, 0, 0]
        } else if hi > lo {
            colormap((f64::from(heights.data()[k]) - lo) / (hi - lo))
        } else {
            colormap(0.5)
        };
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

fn default_mask(input: &Path) -> Option<PathBuf> {
    let p = input.with_file_name(MASK_FILE);
    p.is_file().then_some(p)
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let heights = read_pfm(&args.input)?;
    let (w, h) = heights.dims();
    let mask = match args.mask.or_else(|| default_mask(&args.input)) {
        Some(p) => read_mask_pgm(&p)?,
        None => Mask::all_valid(w, h)?,
    };
    let bytes = encode_ppm(&heights, &mask)?;
    std::fs::write(&args.out, bytes).with_context(|| format!("writing {}", args.out.display()))?;
    println!("render: {w}x{h} -> {}", args.out.display());
    Ok(())
}
