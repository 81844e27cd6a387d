//! Projector reference fringe patterns.

use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};
use crate::image::ScalarImage;
use crate::scalar::Real;

/// Fringe direction. Vertical fringes vary along `u`, horizontal along `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Vertical,
    Horizontal,
}

/// Projection protocol: frequency ladder, phase-shift count, modulation and
/// pattern size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSpec {
    /// Fringe counts across the pattern, strictly increasing, starting at 1.
    pub frequencies: Vec<u32>,
    pub steps: usize,
    /// Intensity modulation constant in gray levels.
    pub i0: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub orientation: Orientation,
}

pub const DEFAULT_FREQUENCIES: [u32; 4] = [1, 4, 20, 100];
pub const DEFAULT_STEPS: usize = 4;
pub const DEFAULT_I0: f64 = 100.0;

impl FringeSpec {
    /// Four frequencies (1, 4, 20, 100), four-step shifting, `I0 = 100`.
    pub fn default_ladder(width: usize, height: usize) -> Self {
        Self {
            frequencies: DEFAULT_FREQUENCIES.to_vec(),
            steps: DEFAULT_STEPS,
            i0: DEFAULT_I0,
            width,
            height,
            orientation: Orientation::Vertical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.first() != Some(&1) {
            return Err(FppError::invalid("frequency ladder must start at 1"));
        }
        if self.frequencies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FppError::invalid(format!(
                "frequencies must be strictly increasing, got {:?}",
                self.frequencies
            )));
        }
        if self.steps < 3 {
            return Err(FppError::invalid(format!(
                "phase retrieval needs at least 3 shifts, got {}",
                self.steps
            )));
        }
        if !(self.i0.is_finite() && self.i0 > 0.0) {
            return Err(FppError::invalid(format!("i0 must be positive, got {}", self.i0)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(FppError::invalid("pattern dimensions must be positive"));
        }
        Ok(())
    }

    pub fn highest_frequency(&self) -> u32 {
        *self.frequencies.last().expect("validated ladder is non-empty")
    }
}

/// Equally spaced shifts `2π j / m` for `j = 0..m`.
pub fn phase_shift_offsets<T: Real>(steps: usize) -> Result<Vec<T>> {
    if steps < 3 {
        return Err(FppError::invalid(format!(
            "phase retrieval needs at least 3 shifts, got {steps}"
        )));
    }
    let m = T::from_usize_lossy(steps);
    Ok((0..steps)
        .map(|j| T::TAU() * T::from_usize_lossy(j) / m)
        .collect())
}

/// Reference pattern `I0 [1 + cos(2π f u / w + δ_j)]` for frequency index
/// `freq_index` and shift index `step_index` (both zero-based).
pub fn reference_pattern<T: Real>(
    spec: &FringeSpec,
    freq_index: usize,
    step_index: usize,
) -> Result<ScalarImage<T>> {
    spec.validate()?;
    let f = *spec.frequencies.get(freq_index).ok_or_else(|| {
        FppError::OutOfRange(format!(
            "frequency index {freq_index} for a ladder of {}",
            spec.frequencies.len()
        ))
    })?;
    if step_index >= spec.steps {
        return Err(FppError::OutOfRange(format!(
            "step index {step_index} for {} steps",
            spec.steps
        )));
    }
    let delta = phase_shift_offsets::<T>(spec.steps)?[step_index];
    let i0 = T::lit(spec.i0);
    let f = T::lit(f64::from(f));
    let span = T::from_usize_lossy(match spec.orientation {
        Orientation::Vertical => spec.width,
        Orientation::Horizontal => spec.height,
    });
    let orientation = spec.orientation;
    ScalarImage::from_fn(spec.width, spec.height, |u, v| {
        let coord = match orientation {
            Orientation::Vertical => u,
            Orientation::Horizontal => v,
        };
        let phase = T::TAU() * f * T::from_usize_lossy(coord) / span;
        i0 * (T::one() + (phase + delta).cos())
    })
}
