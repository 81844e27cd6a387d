//! Phase-shifting analysis and multi-frequency temporal unwrapping.

use rayon::prelude::*;

use crate::error::{FppError, Result};
use crate::image::{wrap_finite, Mask, PhaseMap, ScalarImage};
use crate::scalar::Real;

/// Default fraction of the nominal modulation below which a pixel is masked.
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.05;

/// Fringe modulation amplitude per pixel, in gray levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationMap<T> {
    pub image: ScalarImage<T>,
}

/// Least-squares phase estimate from `m >= 3` equally shifted images.
///
/// With `S = Σ I_j sin δ_j` and `C = Σ I_j cos δ_j` the phase is
/// `atan2(−S, C)` and the modulation `(2/m)·√(S² + C²)`. The four-step case
/// uses the exact differences `atan2(I4 − I2, I1 − I3)`.
pub fn extract_wrapped_phase<T: Real>(
    images: &[ScalarImage<T>],
    offsets: &[T],
) -> Result<(PhaseMap<T>, ModulationMap<T>)> {
    let m = images.len();
    if m < 3 {
        return Err(FppError::invalid(format!(
            "phase extraction needs at least 3 images, got {m}"
        )));
    }
    if offsets.len() != m {
        return Err(FppError::invalid(format!(
            "{m} images but {} phase offsets",
            offsets.len()
        )));
    }
    let dims = images[0].dims();
    for img in &images[1..] {
        img.ensure_dims(dims)?;
    }

    let n_px = dims.0 * dims.1;
    let mut phase = vec![T::zero(); n_px];
    let mut modulation = vec![T::zero(); n_px];
    let half = T::lit(0.5);

    if m == 4 && is_quarter_shift(offsets) {
        let [i1, i2, i3, i4] = [0, 1, 2, 3].map(|k| images[k].data());
        phase
            .par_iter_mut()
            .zip(modulation.par_iter_mut())
            .enumerate()
            .for_each(|(k, (ph, md))| {
                let s = i4[k] - i2[k];
                let c = i1[k] - i3[k];
                *ph = wrap_finite_or_nan(s.atan2(c));
                *md = half * s.hypot(c);
            });
    } else {
        let sines: Vec<T> = offsets.iter().map(|d| d.sin()).collect();
        let cosines: Vec<T> = offsets.iter().map(|d| d.cos()).collect();
        let scale = T::lit(2.0) / T::from_usize_lossy(m);
        phase
            .par_iter_mut()
            .zip(modulation.par_iter_mut())
            .enumerate()
            .for_each(|(k, (ph, md))| {
                let mut s = T::zero();
                let mut c = T::zero();
                for (j, img) in images.iter().enumerate() {
                    let x = img.data()[k];
                    s = s + x * sines[j];
                    c = c + x * cosines[j];
                }
                *ph = wrap_finite_or_nan((-s).atan2(c));
                *md = scale * s.hypot(c);
            });
    }

    Ok((
        PhaseMap::wrapped(ScalarImage::new(dims.0, dims.1, phase)?),
        ModulationMap {
            image: ScalarImage::new(dims.0, dims.1, modulation)?,
        },
    ))
}

fn is_quarter_shift<T: Real>(offsets: &[T]) -> bool {
    let tol = T::lit(1e-12);
    offsets
        .iter()
        .enumerate()
        .all(|(j, &d)| (d - T::FRAC_PI_2() * T::from_usize_lossy(j)).abs() <= tol)
}

// atan2 may return exactly −π, which sits outside (−π, π].
#[inline]
fn wrap_finite_or_nan<T: Real>(x: T) -> T {
    if x.is_finite() {
        wrap_finite(x)
    } else {
        x
    }
}

/// Marks a pixel valid when its modulation reaches
/// `threshold_fraction × nominal_modulation`.
pub fn modulation_mask<T: Real>(
    modulation: &ModulationMap<T>,
    nominal_modulation: T,
    threshold_fraction: T,
) -> Result<Mask> {
    if !(threshold_fraction > T::zero() && threshold_fraction < T::one()) {
        return Err(FppError::invalid(format!(
            "threshold fraction must lie in (0, 1), got {threshold_fraction}"
        )));
    }
    if !(nominal_modulation > T::zero()) {
        return Err(FppError::invalid("nominal modulation must be positive"));
    }
    let cut = threshold_fraction * nominal_modulation;
    let img = &modulation.image;
    let valid = img.data().iter().map(|&md| md >= cut).collect();
    Mask::new(img.width(), img.height(), valid)
}

/// Temporal unwrapping along the frequency ladder.
///
/// The base map (one fringe across the field) is remapped to [0, 2π); each
/// higher rung adds the multiple of 2π that brings it closest to the scaled
/// lower rung. Works pixel by pixel, so discontinuities do not propagate.
pub fn unwrap_temporal<T: Real>(wrapped: &[PhaseMap<T>], frequencies: &[u32]) -> Result<PhaseMap<T>> {
    if wrapped.len() < 2 {
        return Err(FppError::invalid(format!(
            "temporal unwrapping needs at least 2 phase maps, got {}",
            wrapped.len()
        )));
    }
    if wrapped.len() != frequencies.len() {
        return Err(FppError::invalid(format!(
            "{} phase maps for a ladder of {} frequencies",
            wrapped.len(),
            frequencies.len()
        )));
    }
    if frequencies[0] != 1 || frequencies.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FppError::invalid(format!(
            "ladder must start at 1 and increase strictly, got {frequencies:?}"
        )));
    }
    let dims = wrapped[0].dims();
    for map in wrapped {
        map.image.ensure_dims(dims)?;
        if !map.wrapped {
            return Err(FppError::invalid("unwrap_temporal expects wrapped inputs"));
        }
    }

    let ratios: Vec<T> = frequencies
        .windows(2)
        .map(|w| T::lit(f64::from(w[1]) / f64::from(w[0])))
        .collect();
    let layers: Vec<&[T]> = wrapped.iter().map(|m| m.image.data()).collect();

    let out: Vec<T> = (0..dims.0 * dims.1)
        .into_par_iter()
        .map(|k| {
            let mut phi = layers[0][k];
            if phi < T::zero() {
                phi = phi + T::TAU();
            }
            for (rung, &ratio) in ratios.iter().enumerate() {
                phi = unwrap_step(phi, layers[rung + 1][k], ratio);
            }
            phi
        })
        .collect();
    Ok(PhaseMap::unwrapped(ScalarImage::new(dims.0, dims.1, out)?))
}

/// One rung of the ladder: `φw + INT((φ_prev·ratio − φw) / 2π)·2π`, with INT
/// rounding half away from zero.
#[inline]
pub fn unwrap_step<T: Real>(previous: T, wrapped: T, ratio: T) -> T {
    let order = ((previous * ratio - wrapped) / T::TAU()).round();
    wrapped + order * T::TAU()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fringe::phase_shift_offsets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn stack(phi: &ScalarImage<f64>, a: f64, b: f64, m: usize) -> Vec<ScalarImage<f64>> {
        phase_shift_offsets::<f64>(m)
            .unwrap()
            .into_iter()
            .map(|d| phi.map(|p| a + b * (p + d).cos()))
            .collect()
    }

    fn wrap_oracle(x: f64) -> f64 {
        // independent of the library path: remainder arithmetic, not atan2
        let r = (x + PI).rem_euclid(TAU) - PI;
        if r <= -PI {
            PI
        } else {
            r
        }
    }

    #[test]
    fn exact_signal_four_step() {
        let phi = ScalarImage::filled(2, 2, PI / 3.0).unwrap();
        let imgs = stack(&phi, 100.0, 100.0, 4);
        let (ph, md) = extract_wrapped_phase(&imgs, &phase_shift_offsets(4).unwrap()).unwrap();
        assert!(ph.wrapped);
        for (&p, &m) in ph.image.data().iter().zip(md.image.data()) {
            assert!((p - PI / 3.0).abs() < 1e-12);
            assert!((m - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_images_have_no_modulation() {
        let imgs = vec![ScalarImage::filled(3, 3, 50.0_f64).unwrap(); 4];
        let (ph, md) = extract_wrapped_phase(&imgs, &phase_shift_offsets(4).unwrap()).unwrap();
        assert!(ph.image.data().iter().all(|&p| p == 0.0));
        assert!(md.image.data().iter().all(|&m| m == 0.0));
        let mask = modulation_mask(&md, 100.0, 0.05).unwrap();
        assert_eq!(mask.count_valid(), 0);
    }

    #[test]
    fn extraction_errors() {
        let imgs = vec![ScalarImage::filled(3, 3, 1.0_f64).unwrap(); 2];
        assert!(extract_wrapped_phase(&imgs, &[0.0, 1.0]).is_err());
        let mut imgs = vec![ScalarImage::filled(3, 3, 1.0_f64).unwrap(); 3];
        imgs[2] = ScalarImage::filled(2, 3, 1.0).unwrap();
        let offs = phase_shift_offsets(3).unwrap();
        assert!(matches!(
            extract_wrapped_phase(&imgs, &offs),
            Err(FppError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_field_is_recovered_for_several_step_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phi = ScalarImage::from_fn(64, 64, |_, _| rng.random_range(-50.0..50.0)).unwrap();
        for m in [3, 4, 5, 6, 8] {
            let imgs = stack(&phi, 80.0, 37.5, m);
            let (ph, md) = extract_wrapped_phase(&imgs, &phase_shift_offsets(m).unwrap()).unwrap();
            for k in 0..phi.len() {
                let want = wrap_oracle(phi.data()[k]);
                let got = ph.image.data()[k];
                assert!(got > -PI && got <= PI);
                let d = (got - want).rem_euclid(TAU);
                assert!(d.min(TAU - d) < 1e-9, "m={m} pixel {k}: {got} vs {want}");
                assert!((md.image.data()[k] - 37.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mask_examples() {
        let md = ModulationMap {
            image: ScalarImage::filled(4, 4, 100.0_f64).unwrap(),
        };
        assert_eq!(modulation_mask(&md, 100.0, 0.05).unwrap().count_valid(), 16);
        let md = ModulationMap {
            image: ScalarImage::filled(4, 4, 0.0_f64).unwrap(),
        };
        assert_eq!(modulation_mask(&md, 100.0, 0.05).unwrap().count_valid(), 0);
        assert!(modulation_mask(&md, 100.0, 1.0).is_err());
        assert!(modulation_mask(&md, 100.0, 0.0).is_err());
    }

    fn wrapped_map(values: &[f64], w: usize) -> PhaseMap<f64> {
        PhaseMap::wrapped(
            ScalarImage::new(w, values.len() / w, values.iter().map(|&x| wrap_oracle(x)).collect()).unwrap(),
        )
    }

    #[test]
    fn unwrap_single_pixel_example() {
        let base = wrapped_map(&[2.0], 1);
        let high = wrapped_map(&[8.0], 1);
        assert!((high.image.get(0, 0) - 1.716_814_692_820_414).abs() < 1e-12);
        let out = unwrap_temporal(&[base, high], &[1, 4]).unwrap();
        assert!(!out.wrapped);
        assert!((out.image.get(0, 0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn unwrap_zero_phase() {
        let maps: Vec<_> = (0..4).map(|_| wrapped_map(&[0.0; 6], 3)).collect();
        let out = unwrap_temporal(&maps, &[1, 4, 20, 100]).unwrap();
        assert!(out.image.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unwrap_errors() {
        let one = wrapped_map(&[0.0], 1);
        assert!(unwrap_temporal(std::slice::from_ref(&one), &[1]).is_err());
        assert!(unwrap_temporal(&[one.clone(), one.clone()], &[1, 4, 20]).is_err());
        assert!(unwrap_temporal(&[one.clone(), one.clone()], &[2, 4]).is_err());
        let other = wrapped_map(&[0.0, 0.0], 2);
        assert!(unwrap_temporal(&[one, other], &[1, 4]).is_err());
    }

    #[test]
    fn ties_round_away_from_zero() {
        assert_eq!(unwrap_step(PI / 4.0, 0.0, 4.0), TAU);
        assert_eq!(unwrap_step(-PI / 4.0, 0.0, 4.0), -TAU);
    }

    #[test]
    fn full_ladder_smooth_field() {
        let ladder = [1u32, 4, 20, 100];
        let (w, h) = (128, 96);
        let truth = ScalarImage::from_fn(w, h, |u, v| {
            let x = u as f64 / w as f64;
            let y = v as f64 / h as f64;
            1.0 + (200.0 * PI - 2.0) * (0.5 * x + 0.3 * y * y + 0.2 * (3.0 * x * y).sin().abs())
        })
        .unwrap();
        let maps: Vec<_> = ladder
            .iter()
            .map(|&f| {
                let scale = f64::from(f) / 100.0;
                PhaseMap::wrapped(truth.map(|p| wrap_oracle(p * scale)))
            })
            .collect();
        let out = unwrap_temporal(&maps, &ladder).unwrap();
        for (a, b) in out.image.data().iter().zip(truth.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        // only 2π multiples were added
        for (a, b) in out.image.data().iter().zip(maps[3].image.data()) {
            let d = (wrap_oracle(*a) - b).rem_euclid(TAU);
            assert!(d.min(TAU - d) < 1e-9);
        }
    }

    #[test]
    fn unwrapping_commutes_with_pixel_shuffles() {
        let ladder = [1u32, 4, 20, 100];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..200.0 * PI)).collect();
        let maps: Vec<_> = ladder
            .iter()
            .map(|&f| wrapped_map(&truth.iter().map(|p| p * f64::from(f) / 100.0).collect::<Vec<_>>(), 20))
            .collect();
        let mut perm: Vec<usize> = (0..400).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let shuffled: Vec<_> = maps
            .iter()
            .map(|m| {
                let d = m.image.data();
                PhaseMap::wrapped(ScalarImage::new(20, 20, perm.iter().map(|&k| d[k]).collect()).unwrap())
            })
            .collect();
        let a = unwrap_temporal(&maps, &ladder).unwrap();
        let b = unwrap_temporal(&shuffled, &ladder).unwrap();
        for (i, &k) in perm.iter().enumerate() {
            assert_eq!(b.image.data()[i].to_bits(), a.image.data()[k].to_bits());
        }
    }

    #[test]
    fn f32_pipeline() {
        let phi = ScalarImage::filled(2, 2, 1.0_f32).unwrap();
        let offs = phase_shift_offsets::<f32>(4).unwrap();
        let imgs: Vec<_> = offs.iter().map(|&d| phi.map(|p| 100.0 + 90.0 * (p + d).cos())).collect();
        let (ph, _) = extract_wrapped_phase(&imgs, &offs).unwrap();
        assert!((ph.image.get(1, 1) - 1.0).abs() < 1e-5);
    }
}
