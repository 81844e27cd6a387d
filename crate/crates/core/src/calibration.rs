//! Rational phase-to-height model `z = (C·p) / (D·p)` and its calibration.
//!
//! The basis is `p = {1, φ, u, uφ, v, vφ, u², u²φ, v², v²φ, uv, uvφ}` over
//! normalized pixel coordinates. `C` has its leading entry fixed to 1, which
//! removes the scale ambiguity of the ratio and makes fitting linear in the
//! remaining 23 coefficients.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};
use crate::image::{HeightMap, Mask, PhaseMap, ScalarImage};
use crate::linalg::LeastSquares;
use crate::scalar::Real;

pub const BASIS_LEN: usize = 12;
pub const UNKNOWNS: usize = 23;

/// Affine map from pixel coordinates to normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordNorm<T> {
    pub u_scale: T,
    pub u_offset: T,
    pub v_scale: T,
    pub v_offset: T,
}

impl<T: Real> CoordNorm<T> {
    /// Maps pixel centres `0..=w−1` and `0..=h−1` onto [−1, 1].
    pub fn for_dims(width: usize, height: usize) -> Self {
        let axis = |n: usize| {
            if n > 1 {
                (T::lit(2.0) / T::from_usize_lossy(n - 1), -T::one())
            } else {
                (T::zero(), T::zero())
            }
        };
        let (u_scale, u_offset) = axis(width);
        let (v_scale, v_offset) = axis(height);
        Self {
            u_scale,
            u_offset,
            v_scale,
            v_offset,
        }
    }

    pub fn identity() -> Self {
        Self {
            u_scale: T::one(),
            u_offset: T::zero(),
            v_scale: T::one(),
            v_offset: T::zero(),
        }
    }

    #[inline]
    pub fn apply(&self, u: T, v: T) -> (T, T) {
        (u * self.u_scale + self.u_offset, v * self.v_scale + self.v_offset)
    }
}

/// The ordered 12-term basis at normalized coordinates and phase.
#[inline]
pub fn build_basis<T: Real>(u: T, v: T, phi: T) -> [T; BASIS_LEN] {
    let one = T::one();
    let uu = u * u;
    let vv = v * v;
    let uv = u * v;
    [one, phi, u, u * phi, v, v * phi, uu, uu * phi, vv, vv * phi, uv, uv * phi]
}

/// The six phase-free monomials `{1, u, v, u², v², uv}`; basis entry `2k`
/// is `g_k` and entry `2k + 1` is `g_k φ`.
#[inline]
fn spatial_terms<T: Real>(u: T, v: T) -> [T; 6] {
    [T::one(), u, v, u * u, v * v, u * v]
}

/// Fitted or prescribed rational height model.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel<T> {
    /// `c1..c11`; the implicit `c0` is 1.
    pub c: [T; 11],
    /// `d0..d11`.
    pub d: [T; 12],
    pub coord_norm: CoordNorm<T>,
    /// Heights in mm over which the model is trusted.
    pub depth_range: (T, T),
    /// RMS of the fit residuals in mm (zero for prescribed models).
    pub fit_rms_mm: T,
}

/// Terms of `C·p` and `D·p` split by their phase dependence:
/// `C·p = a_c + φ b_c`, `D·p = a_d + φ b_d`.
#[derive(Debug, Clone, Copy)]
pub struct PhaseSplit<T> {
    pub a_c: T,
    pub b_c: T,
    pub a_d: T,
    pub b_d: T,
    /// Same sums with absolute values, used as magnitude scales.
    pub abs: [T; 4],
}

impl<T: Real> CalibrationModel<T> {
    /// Builds a model from full numerator and denominator vectors, dividing
    /// both by the numerator's constant term so that `c0 = 1`.
    pub fn from_full(numerator: [T; 12], denominator: [T; 12], coord_norm: CoordNorm<T>, depth_range: (T, T)) -> Result<Self> {
        let lead = numerator[0];
        if lead == T::zero() || !lead.is_finite() {
            return Err(FppError::InvalidModel(
                "numerator constant term must be finite and non-zero".into(),
            ));
        }
        let mut c = [T::zero(); 11];
        for (ck, &n) in c.iter_mut().zip(&numerator[1..]) {
            *ck = n / lead;
        }
        let d = denominator.map(|x| x / lead);
        let model = Self {
            c,
            d,
            coord_norm,
            depth_range,
            fit_rms_mm: T::zero(),
        };
        model.check_finite()?;
        Ok(model)
    }

    fn check_finite(&self) -> Result<()> {
        if self.c.iter().chain(&self.d).any(|x| !x.is_finite()) {
            return Err(FppError::InvalidModel("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// `C` including the fixed leading 1.
    pub fn numerator(&self) -> [T; 12] {
        let mut out = [T::one(); 12];
        out[1..].copy_from_slice(&self.c);
        out
    }

    /// Splits the numerator and denominator at pixel `(u, v)`.
    pub fn split_at(&self, u: T, v: T) -> PhaseSplit<T> {
        let (un, vn) = self.coord_norm.apply(u, v);
        let g = spatial_terms(un, vn);
        let num = self.numerator();
        let mut s = [T::zero(); 4];
        let mut abs = [T::zero(); 4];
        for (k, &gk) in g.iter().enumerate() {
            let terms = [num[2 * k], num[2 * k + 1], self.d[2 * k], self.d[2 * k + 1]];
            for i in 0..4 {
                s[i] = s[i] + terms[i] * gk;
                abs[i] = abs[i] + (terms[i] * gk).abs();
            }
        }
        PhaseSplit {
            a_c: s[0],
            b_c: s[1],
            a_d: s[2],
            b_d: s[3],
            abs,
        }
    }

    /// `D·p` and its magnitude scale `Σ |d_k p_k|`.
    pub fn denominator(&self, u: T, v: T, phi: T) -> (T, T) {
        let sp = self.split_at(u, v);
        (sp.a_d + phi * sp.b_d, sp.abs[2] + phi.abs() * sp.abs[3])
    }

    /// Height at pixel `(u, v)` for unwrapped phase `phi`, or `None` when the
    /// denominator is numerically zero.
    pub fn predict(&self, u: T, v: T, phi: T) -> Option<T> {
        let sp = self.split_at(u, v);
        let den = sp.a_d + phi * sp.b_d;
        let scale = sp.abs[2] + phi.abs() * sp.abs[3];
        if den.abs() <= T::lit(1e-12) * scale || den == T::zero() {
            return None;
        }
        Some((sp.a_c + phi * sp.b_c) / den)
    }

    pub fn to_file(&self) -> CalibrationFile {
        CalibrationFile {
            c: self.c.iter().map(|x| x.as_f64()).collect(),
            d: self.d.iter().map(|x| x.as_f64()).collect(),
            coord_norm: CoordNormFile {
                u_scale: self.coord_norm.u_scale.as_f64(),
                u_offset: self.coord_norm.u_offset.as_f64(),
                v_scale: self.coord_norm.v_scale.as_f64(),
                v_offset: self.coord_norm.v_offset.as_f64(),
            },
            depth_range: [self.depth_range.0.as_f64(), self.depth_range.1.as_f64()],
            fit_rms_mm: self.fit_rms_mm.as_f64(),
        }
    }

    pub fn from_file(file: &CalibrationFile) -> Result<Self> {
        if file.c.len() != 11 || file.d.len() != 12 {
            return Err(FppError::InvalidModel(format!(
                "expected 11 c and 12 d coefficients, got {} and {}",
                file.c.len(),
                file.d.len()
            )));
        }
        let mut c = [T::zero(); 11];
        let mut d = [T::zero(); 12];
        for (dst, &src) in c.iter_mut().zip(&file.c) {
            *dst = T::lit(src);
        }
        for (dst, &src) in d.iter_mut().zip(&file.d) {
            *dst = T::lit(src);
        }
        let n = &file.coord_norm;
        let model = Self {
            c,
            d,
            coord_norm: CoordNorm {
                u_scale: T::lit(n.u_scale),
                u_offset: T::lit(n.u_offset),
                v_scale: T::lit(n.v_scale),
                v_offset: T::lit(n.v_offset),
            },
            depth_range: (T::lit(file.depth_range[0]), T::lit(file.depth_range[1])),
            fit_rms_mm: T::lit(file.fit_rms_mm),
        };
        model.check_finite()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.to_file()).map_err(|source| FppError::Json {
            path: path.into(),
            source,
        })?;
        text.push('\n');
        fs::write(path, text).map_err(|e| FppError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FppError::io(path, e))?;
        let file: CalibrationFile = serde_json::from_str(&text).map_err(|source| FppError::Json {
            path: path.into(),
            source,
        })?;
        Self::from_file(&file)
    }
}

/// On-disk calibration record. Numbers are written in shortest round-trip
/// form, so `f64` coefficients survive a save/load cycle bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub coord_norm: CoordNormFile,
    pub depth_range: [f64; 2],
    pub fit_rms_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordNormFile {
    pub u_scale: f64,
    pub u_offset: f64,
    pub v_scale: f64,
    pub v_offset: f64,
}

/// Observation of unwrapped phase `phi` at pixel `(u, v)` on a surface of
/// known height `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample<T> {
    pub u: T,
    pub v: T,
    pub phi: T,
    pub z: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Normalize pixel coordinates to [−1, 1]² before building the basis.
    pub normalize_coords: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            normalize_coords: true,
        }
    }
}

/// Fits the 23 free coefficients by linear least squares on
/// `z·(D·p) − (C·p) = 0` with `c0 = 1`.
pub fn fit<T: Real>(samples: &[CalibrationSample<T>], dims: (usize, usize)) -> Result<CalibrationModel<T>> {
    fit_with(samples, dims, FitOptions::default())
}

pub fn fit_with<T: Real>(
    samples: &[CalibrationSample<T>],
    dims: (usize, usize),
    options: FitOptions,
) -> Result<CalibrationModel<T>> {
    if samples.len() < UNKNOWNS {
        return Err(FppError::DegenerateCalibration {
            condition: f64::INFINITY,
            reason: format!("{} samples for {UNKNOWNS} unknowns", samples.len()),
        });
    }
    if samples
        .iter()
        .any(|s| !(s.u.is_finite() && s.v.is_finite() && s.phi.is_finite() && s.z.is_finite()))
    {
        return Err(FppError::invalid("calibration samples must be finite"));
    }
    let mut heights: Vec<f64> = samples.iter().map(|s| s.z.as_f64()).collect();
    heights.sort_by(f64::total_cmp);
    heights.dedup();
    if heights.len() < 3 {
        return Err(FppError::DegenerateCalibration {
            condition: f64::INFINITY,
            reason: format!("samples span {} distinct heights, need at least 3", heights.len()),
        });
    }

    let coord_norm = if options.normalize_coords {
        CoordNorm::for_dims(dims.0, dims.1)
    } else {
        CoordNorm::identity()
    };

    let mut ls = LeastSquares::new(UNKNOWNS);
    let mut row = [T::zero(); UNKNOWNS];
    for s in samples {
        let (un, vn) = coord_norm.apply(s.u, s.v);
        let p = build_basis(un, vn, s.phi);
        row[..11].copy_from_slice(&p[1..]);
        for k in 0..BASIS_LEN {
            row[11 + k] = -s.z * p[k];
        }
        ls.push_row(&row, -T::one());
    }
    let solution = ls.solve(T::condition_limit());

    let mut c = [T::zero(); 11];
    let mut d = [T::zero(); 12];
    c.copy_from_slice(&solution.x[..11]);
    d.copy_from_slice(&solution.x[11..]);
    let phi_range = samples.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), s| {
        (lo.min(s.phi), hi.max(s.phi))
    });
    let mut model = CalibrationModel {
        c,
        d,
        coord_norm,
        depth_range: (T::lit(heights[0]), T::lit(*heights.last().unwrap())),
        fit_rms_mm: T::zero(),
    };
    model.check_finite().map_err(|_| FppError::DegenerateCalibration {
        condition: solution.condition.as_f64(),
        reason: "solution is not finite".into(),
    })?;

    let grid = ValidationGrid::new(dims, phi_range);
    for direction in &solution.null_space {
        let sensitivity = prediction_sensitivity(&model, direction, &grid);
        if !(sensitivity < T::lit(1e-6)) {
            return Err(FppError::DegenerateCalibration {
                condition: solution.condition.as_f64(),
                reason: format!(
                    "samples do not determine the model: a singular direction changes predictions \
                     (relative sensitivity {:.3e})",
                    sensitivity.as_f64()
                ),
            });
        }
    }

    validate_denominator(&model, &grid)?;

    let stats = residual_stats(&model, samples)?;
    model.fit_rms_mm = stats.rms_mm;
    Ok(model)
}

/// Pixel × phase grid on which fitted models are checked.
struct ValidationGrid<T> {
    pixels: Vec<(T, T)>,
    phases: Vec<T>,
}

impl<T: Real> ValidationGrid<T> {
    const STEPS: usize = 9;

    fn new(dims: (usize, usize), phi_range: (T, T)) -> Self {
        let lin = |lo: T, hi: T| -> Vec<T> {
            (0..Self::STEPS)
                .map(|i| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(Self::STEPS - 1))
                .collect()
        };
        let us = lin(T::zero(), T::from_usize_lossy(dims.0.saturating_sub(1)));
        let vs = lin(T::zero(), T::from_usize_lossy(dims.1.saturating_sub(1)));
        let pixels = vs.iter().flat_map(|&v| us.iter().map(move |&u| (u, v))).collect();
        Self {
            pixels,
            phases: lin(phi_range.0, phi_range.1),
        }
    }
}

/// Largest relative change of the predicted height when moving the
/// coefficients along `direction` (23 entries, `c1..c11, d0..d11`).
///
/// Directions that merely rescale a common factor shared by numerator and
/// denominator leave predictions untouched and score ~ε; directions that the
/// data fail to pin down score O(1).
fn prediction_sensitivity<T: Real>(model: &CalibrationModel<T>, direction: &[T], grid: &ValidationGrid<T>) -> T {
    let mut worst = T::zero();
    let mut scale = T::zero();
    for &(u, v) in &grid.pixels {
        let (un, vn) = model.coord_norm.apply(u, v);
        for &phi in &grid.phases {
            let p = build_basis(un, vn, phi);
            let Some(z) = model.predict(u, v, phi) else {
                return T::infinity();
            };
            let mut dc = T::zero();
            let mut dd = T::zero();
            let mut magnitude = T::zero();
            for k in 1..BASIS_LEN {
                dc = dc + direction[k - 1] * p[k];
                magnitude = magnitude + (direction[k - 1] * p[k]).abs();
            }
            for k in 0..BASIS_LEN {
                dd = dd + direction[11 + k] * p[k];
                magnitude = magnitude + (z * direction[11 + k] * p[k]).abs();
            }
            worst = worst.max((dc - z * dd).abs());
            scale = scale.max(magnitude);
        }
    }
    if scale > T::zero() {
        worst / scale
    } else {
        T::zero()
    }
}

fn validate_denominator<T: Real>(model: &CalibrationModel<T>, grid: &ValidationGrid<T>) -> Result<()> {
    let mut sign = 0i8;
    for &(u, v) in &grid.pixels {
        for &phi in &grid.phases {
            let (den, scale) = model.denominator(u, v, phi);
            if den.abs() <= T::lit(1e-12) * scale || !den.is_finite() {
                return Err(FppError::InvalidModel(format!(
                    "denominator vanishes at pixel ({u}, {v}), phase {phi}"
                )));
            }
            let s = if den > T::zero() { 1 } else { -1 };
            if sign == 0 {
                sign = s;
            } else if s != sign {
                return Err(FppError::InvalidModel(format!(
                    "denominator changes sign at pixel ({u}, {v}), phase {phi}"
                )));
            }
        }
    }
    Ok(())
}

/// Converts an unwrapped phase map into heights; masked pixels become NaN.
pub fn height_from_phase<T: Real>(model: &CalibrationModel<T>, phase: &PhaseMap<T>, mask: &Mask) -> Result<HeightMap<T>> {
    if phase.wrapped {
        return Err(FppError::invalid("height_from_phase needs an unwrapped phase map"));
    }
    if phase.dims() != mask.dims() {
        return Err(FppError::DimensionMismatch {
            expected: phase.dims(),
            found: mask.dims(),
        });
    }
    let (w, h) = phase.dims();
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            if !mask.is_valid(u, v) {
                out.push(T::nan());
                continue;
            }
            let phi = phase.image.get(u, v);
            let z = model
                .predict(T::from_usize_lossy(u), T::from_usize_lossy(v), phi)
                .ok_or(FppError::SingularDenominator { u, v })?;
            out.push(z);
        }
    }
    HeightMap::new(ScalarImage::new(w, h, out)?, mask.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats<T> {
    pub rms_mm: T,
    pub max_abs_mm: T,
    pub mean_mm: T,
    pub std_mm: T,
    pub count: usize,
}

/// Statistics of `z_pred − z_true` over the samples.
pub fn residual_stats<T: Real>(model: &CalibrationModel<T>, samples: &[CalibrationSample<T>]) -> Result<ResidualStats<T>> {
    if samples.is_empty() {
        return Err(FppError::invalid("residual statistics need at least one sample"));
    }
    let mut sum_sq = T::zero();
    let mut max_abs = T::zero();
    // Welford running moments
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for (i, s) in samples.iter().enumerate() {
        let pred = model.predict(s.u, s.v, s.phi).ok_or_else(|| {
            FppError::InvalidModel(format!("denominator vanishes at sample ({}, {})", s.u, s.v))
        })?;
        let r = pred - s.z;
        sum_sq = sum_sq + r * r;
        max_abs = max_abs.max(r.abs());
        let delta = r - mean;
        mean = mean + delta / T::from_usize_lossy(i + 1);
        m2 = m2 + delta * (r - mean);
    }
    let n = T::from_usize_lossy(samples.len());
    Ok(ResidualStats {
        rms_mm: (sum_sq / n).sqrt(),
        max_abs_mm: max_abs,
        mean_mm: mean,
        std_mm: (m2 / n).sqrt(),
        count: samples.len(),
    })
}
