//! Stack-to-height reconstruction and gauge-plane calibration.

use crate::calibration::{fit, height_from_phase, CalibrationModel, CalibrationSample};
use crate::error::{FppError, Result};
use crate::fringe::{phase_shift_offsets, FringeSpec};
use crate::image::{HeightMap, Mask, PhaseMap, ScalarImage};
use crate::phase::{extract_wrapped_phase, modulation_mask, unwrap_temporal, ModulationMap};
use crate::scalar::Real;

/// Intermediate and final products of one reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    pub wrapped: Vec<PhaseMap<T>>,
    /// Modulation of the highest frequency.
    pub modulation: ModulationMap<T>,
    pub mask: Mask,
    pub phase: PhaseMap<T>,
    pub height: HeightMap<T>,
}

/// Wrapped phases, top-frequency modulation, validity mask and unwrapped phase.
pub type UnwrappedStack<T> = (Vec<PhaseMap<T>>, ModulationMap<T>, Mask, PhaseMap<T>);

/// Extracts phase and modulation, masks and unwraps the stack.
///
/// A pixel is kept when its modulation reaches
/// `threshold × nominal_modulation` at every frequency; without modulation at
/// some rung the unwrapping order there is meaningless.
pub fn unwrap_stack<T: Real>(
    stack: &[Vec<ScalarImage<T>>],
    spec: &FringeSpec,
    nominal_modulation: T,
    threshold: T,
) -> Result<UnwrappedStack<T>> {
    spec.validate()?;
    if stack.len() != spec.frequencies.len() {
        return Err(FppError::invalid(format!(
            "stack has {} frequencies, ladder has {}",
            stack.len(),
            spec.frequencies.len()
        )));
    }
    let offsets = phase_shift_offsets::<T>(spec.steps)?;
    let mut wrapped = Vec::with_capacity(stack.len());
    let mut mask: Option<Mask> = None;
    let mut top_modulation = None;
    for images in stack {
        if images.len() != spec.steps {
            return Err(FppError::invalid(format!(
                "expected {} shifted images per frequency, got {}",
                spec.steps,
                images.len()
            )));
        }
        let (phase, modulation) = extract_wrapped_phase(images, &offsets)?;
        let m = modulation_mask(&modulation, nominal_modulation, threshold)?;
        mask = Some(match mask {
            Some(prev) => prev.intersect(&m)?,
            None => m,
        });
        wrapped.push(phase);
        top_modulation = Some(modulation);
    }
    let phase = unwrap_temporal(&wrapped, &spec.frequencies)?;
    Ok((
        wrapped,
        top_modulation.expect("ladder is non-empty"),
        mask.expect("ladder is non-empty"),
        phase,
    ))
}

/// Full chain from a fringe stack to a masked height map.
pub fn reconstruct<T: Real>(
    stack: &[Vec<ScalarImage<T>>],
    spec: &FringeSpec,
    model: &CalibrationModel<T>,
    nominal_modulation: T,
    threshold: T,
) -> Result<Reconstruction<T>> {
    let (wrapped, modulation, mask, phase) = unwrap_stack(stack, spec, nominal_modulation, threshold)?;
    let height = height_from_phase(model, &phase, &mask)?;
    Ok(Reconstruction {
        wrapped,
        modulation,
        mask,
        phase,
        height,
    })
}

/// Collects `(u, v, φ, z)` samples on a `stride`-spaced grid of valid pixels.
pub fn plane_samples<T: Real>(phase: &PhaseMap<T>, mask: &Mask, z: T, stride: usize) -> Result<Vec<CalibrationSample<T>>> {
    if phase.wrapped {
        return Err(FppError::invalid("calibration samples need an unwrapped phase map"));
    }
    if stride == 0 {
        return Err(FppError::invalid("sample stride must be positive"));
    }
    if mask.dims() != phase.dims() {
        return Err(FppError::DimensionMismatch {
            expected: phase.dims(),
            found: mask.dims(),
        });
    }
    let (w, h) = phase.dims();
    let mut out = Vec::new();
    for v in (0..h).step_by(stride) {
        for u in (0..w).step_by(stride) {
            if mask.is_valid(u, v) {
                out.push(CalibrationSample {
                    u: T::from_usize_lossy(u),
                    v: T::from_usize_lossy(v),
                    phi: phase.image.get(u, v),
                    z,
                });
            }
        }
    }
    Ok(out)
}

/// Fits a model to stacks recorded of flat planes at known heights.
pub fn calibrate_from_planes<T: Real>(
    planes: &[(T, Vec<Vec<ScalarImage<T>>>)],
    spec: &FringeSpec,
    nominal_modulation: T,
    threshold: T,
    stride: usize,
) -> Result<(CalibrationModel<T>, Vec<CalibrationSample<T>>)> {
    let mut samples = Vec::new();
    for (z, stack) in planes {
        let (_, _, mask, phase) = unwrap_stack(stack, spec, nominal_modulation, threshold)?;
        samples.extend(plane_samples(&phase, &mask, *z, stride)?);
    }
    let model = fit(&samples, (spec.width, spec.height))?;
    Ok((model, samples))
}
