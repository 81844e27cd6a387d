//! Synthetic scenes and the fringe stacks a camera would record of them.
//!
//! Rendering skips ray tracing: the camera-plane phase at each pixel is
//! obtained by inverting a ground-truth rational height model, so the
//! simulated data are exactly consistent with the reconstruction chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationModel, CoordNorm};
use crate::error::{FppError, Result};
use crate::fringe::{phase_shift_offsets, FringeSpec};
use crate::image::{HeightMap, Mask, ScalarImage};
use crate::phase::DEFAULT_MASK_THRESHOLD;
use crate::scalar::Real;

/// Depth span of the built-in ground-truth model, in mm.
pub const DEFAULT_DEPTH_RANGE_MM: (f64, f64) = (0.0, 50.0);

/// Nominal field of view the built-in model stands for, in mm across the
/// image width.
pub const FIELD_OF_VIEW_MM: f64 = 155.0;

/// Fraction of the nominal fringe amplitude left inside shadow regions.
pub const SHADOW_ATTENUATION: f64 = 0.01;

/// Analytic surface element. Centres and sizes are in pixels, heights in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// `amplitude · exp(−r² / 2σ²)`.
    GaussianBump { center: (f64, f64), amplitude: f64, sigma: f64 },
    /// Cap of a sphere with the given base radius and apex height.
    SphericalCap { center: (f64, f64), radius: f64, height: f64 },
    Cone { center: (f64, f64), radius: f64, height: f64 },
    /// Unbounded plane `offset + slope_u·u + slope_v·v`.
    PlaneRamp { offset: f64, slope_u: f64, slope_v: f64 },
    /// Axis-aligned block with a tilted top; its edges are height
    /// discontinuities.
    Block {
        min: (f64, f64),
        max: (f64, f64),
        base: f64,
        slope_u: f64,
        slope_v: f64,
    },
}

impl Primitive {
    fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Primitive::GaussianBump { center, amplitude, sigma } => {
                let r2 = (u - center.0).powi(2) + (v - center.1).powi(2);
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            Primitive::SphericalCap { center, radius, height } => {
                let r2 = (u - center.0).powi(2) + (v - center.1).powi(2);
                if r2 >= radius * radius || height <= 0.0 {
                    return 0.0;
                }
                let sphere = (radius * radius + height * height) / (2.0 * height);
                ((sphere * sphere - r2).sqrt() - (sphere - height)).max(0.0)
            }
            Primitive::Cone { center, radius, height } => {
                let r = ((u - center.0).powi(2) + (v - center.1).powi(2)).sqrt();
                if r >= radius {
                    0.0
                } else {
                    height * (1.0 - r / radius)
                }
            }
            Primitive::PlaneRamp { offset, slope_u, slope_v } => offset + slope_u * u + slope_v * v,
            Primitive::Block {
                min,
                max,
                base,
                slope_u,
                slope_v,
            } => {
                if u >= min.0 && u <= max.0 && v >= min.1 && v <= max.1 {
                    base + slope_u * (u - min.0) + slope_v * (v - min.1)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Primitive::GaussianBump { .. } => "gaussian_bump",
            Primitive::SphericalCap { .. } => "spherical_cap",
            Primitive::Cone { .. } => "cone",
            Primitive::PlaneRamp { .. } => "plane_ramp",
            Primitive::Block { .. } => "block",
        }
    }

    fn scale_heights(&mut self, k: f64) {
        match self {
            Primitive::GaussianBump { amplitude, .. } => *amplitude *= k,
            Primitive::SphericalCap { height, .. } | Primitive::Cone { height, .. } => *height *= k,
            Primitive::PlaneRamp { offset, slope_u, slope_v } => {
                *offset *= k;
                *slope_u *= k;
                *slope_v *= k;
            }
            Primitive::Block { base, slope_u, slope_v, .. } => {
                *base *= k;
                *slope_u *= k;
                *slope_v *= k;
            }
        }
    }
}

/// Ground-truth surface: the `z = 0` background plus a sum of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub primitives: Vec<Primitive>,
    pub width: usize,
    pub height: usize,
}

impl HeightField {
    pub fn new(width: usize, height: usize, primitives: Vec<Primitive>) -> Self {
        Self {
            primitives,
            width,
            height,
        }
    }

    /// Flat gauge plane at height `z`.
    pub fn plane(width: usize, height: usize, z: f64) -> Self {
        Self::new(
            width,
            height,
            vec![Primitive::PlaneRamp {
                offset: z,
                slope_u: 0.0,
                slope_v: 0.0,
            }],
        )
    }

    pub fn sample_height(&self, u: f64, v: f64) -> Result<f64> {
        let inside = |x: f64, n: usize| x >= 0.0 && x <= (n as f64 - 1.0);
        if !(inside(u, self.width) && inside(v, self.height)) {
            return Err(FppError::OutOfRange(format!(
                "pixel ({u}, {v}) outside {}x{} extent",
                self.width, self.height
            )));
        }
        Ok(self.eval(u, v))
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        self.primitives.iter().map(|p| p.eval(u, v)).sum()
    }

    pub fn to_image<T: Real>(&self) -> Result<ScalarImage<T>> {
        ScalarImage::from_fn(self.width, self.height, |u, v| T::lit(self.eval(u as f64, v as f64)))
    }
}

/// Closed polygon in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    /// Even-odd point-in-polygon test.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let pts = &self.vertices;
        let mut inside = false;
        let mut j = pts.len().wrapping_sub(1);
        for i in 0..pts.len() {
            let (xi, yi) = pts[i];
            let (xj, yj) = pts[j];
            if (yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

/// A ground-truth model whose inversion is well conditioned over its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel<T> {
    model: CalibrationModel<T>,
    width: usize,
    height: usize,
}

impl<T: Real> GroundTruthModel<T> {
    /// Validates `model` over an image extent and its depth range.
    ///
    /// Both `D·p` and the inversion denominator `z·B_D − B_C` must stay at
    /// least `1e−6` of their magnitude scale away from zero, with a fixed
    /// sign, on a 17×17×17 grid.
    pub fn new(model: CalibrationModel<T>, width: usize, height: usize) -> Result<Self> {
        const STEPS: usize = 17;
        let (z_lo, z_hi) = model.depth_range;
        if !(z_lo.is_finite() && z_hi.is_finite() && z_lo <= z_hi) {
            return Err(FppError::InvalidModel("depth range must be finite and ordered".into()));
        }
        let lin = |lo: T, hi: T, i: usize| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(STEPS - 1);
        let bound = T::lit(1e-6);
        let mut signs = (0i8, 0i8);
        let check_sign = |slot: &mut i8, x: T| -> bool {
            let s = if x > T::zero() { 1 } else { -1 };
            if *slot == 0 {
                *slot = s;
            }
            *slot == s
        };
        for iv in 0..STEPS {
            for iu in 0..STEPS {
                let u = lin(T::zero(), T::from_usize_lossy(width.saturating_sub(1)), iu);
                let v = lin(T::zero(), T::from_usize_lossy(height.saturating_sub(1)), iv);
                let sp = model.split_at(u, v);
                for iz in 0..STEPS {
                    let z = lin(z_lo, z_hi, iz);
                    let inv = z * sp.b_d - sp.b_c;
                    let inv_scale = z.abs() * sp.abs[3] + sp.abs[1];
                    if !(inv.abs() >= bound * inv_scale) || inv == T::zero() || !check_sign(&mut signs.0, inv) {
                        return Err(FppError::InvalidModel(format!(
                            "inversion denominator degenerate at ({u}, {v}), z = {z}"
                        )));
                    }
                    let phi = (sp.a_c - z * sp.a_d) / inv;
                    let (den, den_scale) = model.denominator(u, v, phi);
                    if !(den.abs() >= bound * den_scale) || den == T::zero() || !check_sign(&mut signs.1, den) {
                        return Err(FppError::InvalidModel(format!(
                            "height denominator degenerate at ({u}, {v}), phase {phi}"
                        )));
                    }
                }
            }
        }
        Ok(Self { model, width, height })
    }

    /// Built-in model for a `width × height` camera.
    ///
    /// In normalized coordinates the reference (z = 0) phase is a gently
    /// curved carrier spanning roughly 28π to 172π, and 50 mm of height adds
    /// about 21π, so the whole depth range stays inside the single-fringe
    /// base interval [0, 200π) of the default ladder.
    pub fn builtin(width: usize, height: usize) -> Result<Self> {
        let (numerator, denominator) = builtin_coefficients();
        Self::from_full_f64(numerator, denominator, width, height)
    }

    /// Built-in model with every coefficient perturbed by up to
    /// `relative` of its magnitude (plus a small absolute jitter on the zero
    /// entries), revalidated before returning.
    pub fn perturbed(width: usize, height: usize, seed: u64, relative: f64) -> Result<Self> {
        let (num, den) = builtin_coefficients();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |x: f64, absolute: f64| {
            x * (1.0 + rng.random_range(-relative..=relative)) + absolute * relative * rng.random_range(-1.0..=1.0)
        };
        let mut n2 = [0.0; 12];
        let mut d2 = [0.0; 12];
        for k in 0..12 {
            let odd = k % 2 == 1;
            n2[k] = jitter(num[k], if odd { 1e-2 } else { 1.0 });
            d2[k] = jitter(den[k], if odd { 2e-5 } else { 2e-3 });
        }
        Self::from_full_f64(n2, d2, width, height)
    }

    fn from_full_f64(numerator: [f64; 12], denominator: [f64; 12], width: usize, height: usize) -> Result<Self> {
        let model = CalibrationModel::from_full(
            numerator.map(T::lit),
            denominator.map(T::lit),
            CoordNorm::for_dims(width, height),
            (T::lit(DEFAULT_DEPTH_RANGE_MM.0), T::lit(DEFAULT_DEPTH_RANGE_MM.1)),
        )?;
        Self::new(model, width, height)
    }

    pub fn model(&self) -> &CalibrationModel<T> {
        &self.model
    }

    pub fn into_model(self) -> CalibrationModel<T> {
        self.model
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Phase that the model maps to height `z` at pixel `(u, v)`:
    /// `φ = (A_C − z·A_D) / (z·B_D − B_C)`.
    pub fn phase_from_height(&self, u: T, v: T, z: T) -> Result<T> {
        let sp = self.model.split_at(u, v);
        let den = z * sp.b_d - sp.b_c;
        let scale = z.abs() * sp.abs[3] + sp.abs[1];
        if !(den.abs() >= T::lit(1e-6) * scale) || den == T::zero() {
            return Err(FppError::DegenerateGeometry {
                u: u.as_f64(),
                v: v.as_f64(),
                z: z.as_f64(),
            });
        }
        Ok((sp.a_c - z * sp.a_d) / den)
    }
}

/// Raw numerator and denominator of the built-in model, before division by
/// the numerator's constant term.
fn builtin_coefficients() -> ([f64; 12], [f64; 12]) {
    use std::f64::consts::PI;
    let s = 0.8; // mm per radian near the reference plane
    let reference = [100.0 * PI, 65.0 * PI, 5.0 * PI, 1.5 * PI, -PI, 0.5 * PI];
    let numerator = [
        -s * reference[0],
        s,
        -s * reference[1],
        0.0,
        -s * reference[2],
        0.0,
        -s * reference[3],
        0.0,
        -s * reference[4],
        0.0,
        -s * reference[5],
        0.0,
    ];
    let denominator = [1.0, 1e-4, 0.0, 2e-5, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    (numerator, denominator)
}

/// Everything needed to render one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height_field: HeightField,
    /// Surface reflectance in (0, 1].
    pub albedo: ScalarImage<f64>,
    /// Additive gray-level offset.
    pub ambient: f64,
    /// Fringe visibility γ in (0, 1].
    pub contrast: f64,
    pub noise_sigma: f64,
    pub quantize_8bit: bool,
    pub shadow_regions: Vec<Polygon>,
    pub seed: u64,
}

impl SceneSpec {
    /// Noiseless, unit-albedo, full-contrast scene without shadows.
    pub fn clean(height_field: HeightField) -> Result<Self> {
        let albedo = ScalarImage::filled(height_field.width, height_field.height, 1.0)?;
        Ok(Self {
            height_field,
            albedo,
            ambient: 0.0,
            contrast: 1.0,
            noise_sigma: 0.0,
            quantize_8bit: false,
            shadow_regions: Vec::new(),
            seed: 0,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height_field.width, self.height_field.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.albedo.ensure_dims(self.dims())?;
        let (lo, hi) = self
            .albedo
            .finite_range()
            .ok_or_else(|| FppError::invalid("albedo has no finite values"))?;
        if self.albedo.data().iter().any(|a| !a.is_finite()) || lo <= 0.0 || hi > 1.0 {
            return Err(FppError::invalid(format!("albedo must lie in (0, 1], got [{lo}, {hi}]")));
        }
        // unshadowed modulation γ·I0·albedo must clear the default mask cut
        // with margin for noise
        if lo < 2.0 * DEFAULT_MASK_THRESHOLD {
            return Err(FppError::invalid(format!(
                "minimum albedo {lo} leaves too little modulation to pass the mask threshold"
            )));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(FppError::invalid(format!("contrast must lie in (0, 1], got {}", self.contrast)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(FppError::invalid(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.ambient.is_finite() {
            return Err(FppError::invalid("ambient must be finite"));
        }
        Ok(())
    }

    pub fn shadow_mask(&self) -> Result<Mask> {
        let (w, h) = self.dims();
        Mask::from_fn(w, h, |u, v| {
            !self.shadow_regions.iter().any(|p| p.contains(u as f64, v as f64))
        })
    }
}

/// Rendered fringe images `images[i][j]` (frequency `i`, shift `j`) with the
/// ground truth.
#[derive(Debug, Clone)]
pub struct RenderedStack<T> {
    pub images: Vec<Vec<ScalarImage<T>>>,
    pub truth: HeightMap<T>,
    pub mask: Mask,
    /// Highest-frequency phase the scene was rendered with.
    pub phase: ScalarImage<T>,
}

impl<T: Real> RenderedStack<T> {
    /// First shift of the highest frequency: the single-shot network input.
    pub fn single_shot_input(&self) -> &ScalarImage<T> {
        &self.images.last().expect("non-empty ladder")[0]
    }
}

/// Renders `I = albedo·I0·[1 + γ cos(φ_i + δ_j)] + ambient` for every
/// frequency and shift, then adds seeded Gaussian noise and optional 8-bit
/// quantization.
///
/// The highest-frequency phase comes from inverting the model at the scene
/// height; lower rungs are scaled by `f_i / f_n`.
pub fn render_stack<T: Real>(scene: &SceneSpec, model: &GroundTruthModel<T>, spec: &FringeSpec) -> Result<RenderedStack<T>> {
    spec.validate()?;
    scene.validate()?;
    let (w, h) = scene.dims();
    if (spec.width, spec.height) != (w, h) {
        return Err(FppError::DimensionMismatch {
            expected: (w, h),
            found: (spec.width, spec.height),
        });
    }
    if model.dims() != (w, h) {
        return Err(FppError::DimensionMismatch {
            expected: (w, h),
            found: model.dims(),
        });
    }

    let (z_lo, z_hi) = model.model().depth_range;
    let slack = T::lit(1e-9);
    let heights: ScalarImage<T> = scene.height_field.to_image()?;
    let mut phase = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let z = heights.get(u, v);
            if z < z_lo - slack || z > z_hi + slack {
                return Err(FppError::invalid(format!(
                    "scene height {z} mm at ({u}, {v}) is outside the model depth range [{z_lo}, {z_hi}]"
                )));
            }
            phase.push(model.phase_from_height(T::from_usize_lossy(u), T::from_usize_lossy(v), z)?);
        }
    }
    let phase = ScalarImage::new(w, h, phase)?;

    let mask = scene.shadow_mask()?;
    let attenuation: Vec<T> = mask
        .flags()
        .iter()
        .zip(scene.albedo.data())
        .map(|(&lit, &a)| T::lit(if lit { a } else { a * SHADOW_ATTENUATION }))
        .collect();

    let n = spec.frequencies.len();
    let m = spec.steps;
    let offsets = phase_shift_offsets::<T>(m)?;
    let f_top = f64::from(spec.highest_frequency());
    let i0 = T::lit(spec.i0);
    let gamma = T::lit(scene.contrast);
    let ambient = T::lit(scene.ambient);
    let noise = if scene.noise_sigma > 0.0 {
        Some(Normal::new(0.0, scene.noise_sigma).map_err(|e| FppError::invalid(e.to_string()))?)
    } else {
        None
    };

    let mut flat: Vec<ScalarImage<T>> = (0..n * m)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            let ratio = T::lit(f64::from(spec.frequencies[i]) / f_top);
            let delta = offsets[j];
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
            rng.set_stream(idx as u64);
            let data = phase
                .data()
                .iter()
                .zip(&attenuation)
                .map(|(&phi, &a)| {
                    let mut x = a * i0 * (T::one() + gamma * (phi * ratio + delta).cos()) + ambient;
                    if let Some(dist) = &noise {
                        x = x + T::lit(dist.sample(&mut rng));
                    }
                    if scene.quantize_8bit {
                        x = x.max(T::zero()).min(T::lit(255.0)).round();
                    }
                    x
                })
                .collect();
            ScalarImage::new(w, h, data)
        })
        .collect::<Result<_>>()?;

    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        images.push(flat.drain(..m).collect());
    }
    let truth = HeightMap::new(heights, mask.clone())?;
    Ok(RenderedStack {
        images,
        truth,
        mask,
        phase,
    })
}

/// Ranges random scenes are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub primitive_count: (usize, usize),
    pub amplitude_mm: (f64, f64),
    /// Primitive radius as a fraction of the shorter image side.
    pub radius_fraction: (f64, f64),
    pub shadow_count: (usize, usize),
    pub albedo: (f64, f64),
    pub ambient: f64,
    pub contrast: f64,
    pub noise_sigma: f64,
    pub quantize_8bit: bool,
    /// Heights are rescaled to stay below this value.
    pub max_height_mm: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            primitive_count: (1, 4),
            amplitude_mm: (5.0, 35.0),
            radius_fraction: (0.06, 0.22),
            shadow_count: (0, 2),
            albedo: (0.6, 1.0),
            ambient: 20.0,
            contrast: 0.9,
            noise_sigma: 0.5,
            quantize_8bit: true,
            max_height_mm: DEFAULT_DEPTH_RANGE_MM.1,
        }
    }
}

impl SceneParams {
    pub fn noiseless(mut self) -> Self {
        self.noise_sigma = 0.0;
        self.quantize_8bit = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, lo: f64, hi: f64| {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                Err(FppError::invalid(format!("{name}: empty range [{lo}, {hi}]")))
            } else {
                Ok(())
            }
        };
        if self.primitive_count.0 > self.primitive_count.1 {
            return Err(FppError::invalid("primitive_count: min exceeds max"));
        }
        if self.shadow_count.0 > self.shadow_count.1 {
            return Err(FppError::invalid("shadow_count: min exceeds max"));
        }
        ordered("amplitude_mm", self.amplitude_mm.0, self.amplitude_mm.1)?;
        ordered("radius_fraction", self.radius_fraction.0, self.radius_fraction.1)?;
        ordered("albedo", self.albedo.0, self.albedo.1)?;
        if self.amplitude_mm.0 < 0.0 || self.amplitude_mm.1 > self.max_height_mm {
            return Err(FppError::invalid(format!(
                "amplitude_mm: [{}, {}] must lie within [0, {}]",
                self.amplitude_mm.0, self.amplitude_mm.1, self.max_height_mm
            )));
        }
        if self.radius_fraction.0 <= 0.0 {
            return Err(FppError::invalid("radius_fraction: must be positive"));
        }
        if self.albedo.0 < 2.0 * DEFAULT_MASK_THRESHOLD || self.albedo.1 > 1.0 {
            return Err(FppError::invalid(format!(
                "albedo: [{}, {}] must lie within [{}, 1]",
                self.albedo.0,
                self.albedo.1,
                2.0 * DEFAULT_MASK_THRESHOLD
            )));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(FppError::invalid("contrast: must lie in (0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(FppError::invalid("noise_sigma: must be >= 0"));
        }
        if !(self.max_height_mm > 0.0) {
            return Err(FppError::invalid("max_height_mm: must be positive"));
        }
        Ok(())
    }
}

/// Draws a scene deterministically from `seed`.
pub fn random_scene(seed: u64, params: &SceneParams, width: usize, height: usize) -> Result<SceneSpec> {
    params.validate()?;
    if width < 2 || height < 2 {
        return Err(FppError::invalid("random scenes need at least 2x2 pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wf, hf) = (width as f64, height as f64);
    let side = wf.min(hf);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..hi) };

    let count = rng.random_range(params.primitive_count.0..=params.primitive_count.1);
    let mut primitives = Vec::with_capacity(count);
    for _ in 0..count {
        let center = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
        let amplitude = draw(&mut rng, params.amplitude_mm);
        let radius = side * draw(&mut rng, params.radius_fraction);
        let p = match rng.random_range(0..4) {
            0 => Primitive::GaussianBump {
                center,
                amplitude,
                sigma: radius / 2.0,
            },
            1 => Primitive::SphericalCap {
                center,
                radius,
                height: amplitude,
            },
            2 => Primitive::Cone {
                center,
                radius,
                height: amplitude,
            },
            _ => {
                let base = 0.5 * amplitude;
                let tilt = 0.5 * amplitude / (2.0 * radius);
                let (su, sv) = if rng.random_bool(0.5) { (tilt, 0.0) } else { (0.0, tilt) };
                Primitive::Block {
                    min: (center.0 - radius, center.1 - radius),
                    max: (center.0 + radius, center.1 + radius),
                    base,
                    slope_u: su,
                    slope_v: sv,
                }
            }
        };
        primitives.push(p);
    }
    let mut field = HeightField::new(width, height, primitives);

    let peak = (0..height)
        .flat_map(|v| (0..width).map(move |u| (u, v)))
        .map(|(u, v)| field.eval(u as f64, v as f64))
        .fold(0.0_f64, f64::max);
    if peak > params.max_height_mm {
        let k = 0.98 * params.max_height_mm / peak;
        field.primitives.iter_mut().for_each(|p| p.scale_heights(k));
    }

    let shadows = rng.random_range(params.shadow_count.0..=params.shadow_count.1);
    let shadow_regions = (0..shadows)
        .map(|_| {
            let c = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
            let r = side * rng.random_range(0.04..0.12);
            let k = rng.random_range(3..=6);
            let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            Polygon {
                vertices: angles
                    .into_iter()
                    .map(|a| {
                        let rr = r * rng.random_range(0.6..1.0);
                        (c.0 + rr * a.cos(), c.1 + rr * a.sin())
                    })
                    .collect(),
            }
        })
        .collect();

    let (a_lo, a_hi) = params.albedo;
    let fx = rng.random_range(0.5..2.0);
    let fy = rng.random_range(0.5..2.0);
    let ph = rng.random_range(0.0..std::f64::consts::TAU);
    let albedo = ScalarImage::from_fn(width, height, |u, v| {
        let t = 0.5 * (1.0 + (std::f64::consts::TAU * (fx * u as f64 / wf + fy * v as f64 / hf) + ph).sin());
        a_lo + (a_hi - a_lo) * t
    })?;

    let scene = SceneSpec {
        height_field: field,
        albedo,
        ambient: params.ambient,
        contrast: params.contrast,
        noise_sigma: params.noise_sigma,
        quantize_8bit: params.quantize_8bit,
        shadow_regions,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}

/// Independent per-item seed: the first output of stream `index` of a
/// generator seeded with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.random()
}

/// Compact description of a scene for provenance records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub seed: u64,
    pub primitives: Vec<Primitive>,
    pub shadow_regions: usize,
    pub noise_sigma: f64,
    pub quantize_8bit: bool,
    pub contrast: f64,
    pub ambient: f64,
}

impl From<&SceneSpec> for SceneSummary {
    fn from(s: &SceneSpec) -> Self {
        Self {
            seed: s.seed,
            primitives: s.height_field.primitives.clone(),
            shadow_regions: s.shadow_regions.len(),
            noise_sigma: s.noise_sigma,
            quantize_8bit: s.quantize_8bit,
            contrast: s.contrast,
            ambient: s.ambient,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fringe::reference_pattern;

    #[test]
    fn sample_height_examples() {
        let empty = HeightField::new(32, 32, vec![]);
        assert_eq!(empty.sample_height(3.0, 7.0).unwrap(), 0.0);

        let bump = HeightField::new(
            32,
            32,
            vec![Primitive::GaussianBump {
                center: (10.0, 12.0),
                amplitude: 10.0,
                sigma: 4.0,
            }],
        );
        assert_eq!(bump.sample_height(10.0, 12.0).unwrap(), 10.0);
        let at_sigma = bump.sample_height(14.0, 12.0).unwrap();
        assert!((at_sigma - 10.0 * (-0.5f64).exp()).abs() < 1e-12);
        assert!((at_sigma - 6.065_306_597_126_334).abs() < 1e-12);

        assert!(matches!(bump.sample_height(32.0, 0.0), Err(FppError::OutOfRange(_))));
        assert!(bump.sample_height(-0.5, 0.0).is_err());
    }

    #[test]
    fn primitive_shapes() {
        let cap = Primitive::SphericalCap {
            center: (0.0, 0.0),
            radius: 10.0,
            height: 4.0,
        };
        assert!((cap.eval(0.0, 0.0) - 4.0).abs() < 1e-12);
        assert!(cap.eval(10.0, 0.0).abs() < 1e-12);
        let cone = Primitive::Cone {
            center: (0.0, 0.0),
            radius: 10.0,
            height: 4.0,
        };
        assert!((cone.eval(5.0, 0.0) - 2.0).abs() < 1e-12);
        let block = Primitive::Block {
            min: (0.0, 0.0),
            max: (4.0, 4.0),
            base: 3.0,
            slope_u: 0.5,
            slope_v: 0.0,
        };
        assert_eq!(block.eval(2.0, 1.0), 4.0);
        assert_eq!(block.eval(4.5, 1.0), 0.0);
    }

    #[test]
    fn polygon_membership() {
        let sq = Polygon {
            vertices: vec![(1.0, 1.0), (5.0, 1.0), (5.0, 5.0), (1.0, 5.0)],
        };
        assert!(sq.contains(3.0, 3.0));
        assert!(!sq.contains(0.0, 3.0));
        assert!(!sq.contains(3.0, 6.0));
    }

    fn linear_truth(w: usize, h: usize) -> GroundTruthModel<f64> {
        let mut num = [0.0; 12];
        num[0] = 1.0;
        num[1] = 1.0;
        let mut den = [0.0; 12];
        den[0] = 1.0;
        let model = CalibrationModel::from_full(num, den, CoordNorm::for_dims(w, h), (0.0, 10.0)).unwrap();
        GroundTruthModel::new(model, w, h).unwrap()
    }

    #[test]
    fn linear_inversion() {
        let m = linear_truth(8, 8);
        assert!((m.phase_from_height(1.0, 2.0, 5.0).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inversion_is_reported() {
        // z = (1 + φ)/(1 + φ) ≡ 1: phase cannot be recovered from height
        let mut num = [0.0; 12];
        num[0] = 1.0;
        num[1] = 1.0;
        let mut den = [0.0; 12];
        den[0] = 1.0;
        den[1] = 1.0;
        let model = CalibrationModel::from_full(num, den, CoordNorm::for_dims(8, 8), (0.0, 2.0)).unwrap();
        assert!(GroundTruthModel::new(model.clone(), 8, 8).is_err());
        let raw = GroundTruthModel {
            model,
            width: 8,
            height: 8,
        };
        assert!(matches!(
            raw.phase_from_height(0.0, 0.0, 1.0),
            Err(FppError::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn builtin_model_stays_in_base_interval() {
        let m = GroundTruthModel::<f64>::builtin(256, 256).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in (0..256).step_by(15) {
            for u in (0..256).step_by(15) {
                for z in [0.0, 25.0, 50.0] {
                    let phi = m.phase_from_height(u as f64, v as f64, z).unwrap();
                    lo = lo.min(phi);
                    hi = hi.max(phi);
                    let back = m.model().predict(u as f64, v as f64, phi).unwrap();
                    assert!((back - z).abs() < 1e-10);
                }
            }
        }
        assert!(lo > 0.05 * std::f64::consts::TAU * 100.0, "{lo}");
        assert!(hi < 0.99 * std::f64::consts::TAU * 100.0, "{hi}");
    }

    #[test]
    fn random_round_trip_through_perturbed_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..5 {
            let m = GroundTruthModel::<f64>::perturbed(200, 150, seed, 0.2).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..1000 {
                let u = rng.random_range(0.0..199.0);
                let v = rng.random_range(0.0..149.0);
                let z = rng.random_range(0.0..50.0);
                let phi = m.phase_from_height(u, v, z).unwrap();
                let back = m.model().predict(u, v, phi).unwrap();
                worst = worst.max((back - z).abs());
                let phi_back = m.phase_from_height(u, v, back).unwrap();
                assert!((phi_back - phi).abs() < 1e-10);
            }
            assert!(worst < 1e-9, "seed {seed}: {worst}");
        }
    }

    #[test]
    fn zero_phase_scene_reproduces_reference_patterns() {
        let (w, h) = (16, 4);
        let spec = FringeSpec::default_ladder(w, h);
        let scene = SceneSpec::clean(HeightField::plane(w, h, 1.0)).unwrap();
        let stack = render_stack(&scene, &linear_truth(w, h), &spec).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let reference: ScalarImage<f64> = reference_pattern(&spec, i, j).unwrap();
                // zero phase everywhere: the carrier-free value of each pattern
                let want = reference.get(0, 0);
                for &x in stack.images[i][j].data() {
                    assert!((x - want).abs() < 1e-12);
                }
            }
        }
        assert_eq!(stack.mask.count_valid(), w * h);
    }

    #[test]
    fn rendering_is_deterministic() {
        let (w, h) = (48, 40);
        let spec = FringeSpec::default_ladder(w, h);
        let model = GroundTruthModel::<f64>::builtin(w, h).unwrap();
        let scene = random_scene(17, &SceneParams::default(), w, h).unwrap();
        let a = render_stack(&scene, &model, &spec).unwrap();
        let b = render_stack(&scene, &model, &spec).unwrap();
        for (ra, rb) in a.images.iter().flatten().zip(b.images.iter().flatten()) {
            assert!(ra.data().iter().zip(rb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // quantized output is integral and in 8-bit range
        assert!(a.images.iter().flatten().flat_map(|i| i.data()).all(|&x| x == x.round() && (0.0..=255.0).contains(&x)));
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    #[test]
    fn random_scene_determinism_and_variety() {
        let p = SceneParams::default();
        let a = random_scene(1, &p, 64, 64).unwrap();
        let b = random_scene(1, &p, 64, 64).unwrap();
        assert_eq!(a, b);
        let c = random_scene(2, &p, 64, 64).unwrap();
        assert_ne!(a.height_field.primitives, c.height_field.primitives);
    }

    #[test]
    fn random_scenes_respect_depth_bound() {
        let p = SceneParams {
            primitive_count: (6, 8),
            amplitude_mm: (40.0, 50.0),
            ..SceneParams::default()
        };
        for seed in 0..20 {
            let s = random_scene(seed, &p, 64, 64).unwrap();
            let img: ScalarImage<f64> = s.height_field.to_image().unwrap();
            let (lo, hi) = img.finite_range().unwrap();
            assert!(lo >= 0.0 && hi <= 50.0, "seed {seed}: [{lo}, {hi}]");
        }
    }

    #[test]
    fn infeasible_params_are_rejected() {
        let bad = SceneParams {
            amplitude_mm: (10.0, 5.0),
            ..SceneParams::default()
        };
        assert!(random_scene(0, &bad, 32, 32).is_err());
        let bad = SceneParams {
            amplitude_mm: (10.0, 80.0),
            ..SceneParams::default()
        };
        assert!(random_scene(0, &bad, 32, 32).is_err());
        let bad = SceneParams {
            primitive_count: (3, 1),
            ..SceneParams::default()
        };
        assert!(random_scene(0, &bad, 32, 32).is_err());
    }

    #[test]
    fn render_rejects_out_of_range_heights_and_bad_dims() {
        let (w, h) = (16, 16);
        let model = GroundTruthModel::<f64>::builtin(w, h).unwrap();
        let spec = FringeSpec::default_ladder(w, h);
        let scene = SceneSpec::clean(HeightField::plane(w, h, 60.0)).unwrap();
        assert!(render_stack(&scene, &model, &spec).is_err());
        let scene = SceneSpec::clean(HeightField::plane(w, h, 10.0)).unwrap();
        let spec = FringeSpec::default_ladder(w + 1, h);
        assert!(matches!(render_stack(&scene, &model, &spec), Err(FppError::DimensionMismatch { .. })));
    }

    #[test]
    fn shadows_suppress_modulation() {
        let (w, h) = (32, 32);
        let model = GroundTruthModel::<f64>::builtin(w, h).unwrap();
        let spec = FringeSpec::default_ladder(w, h);
        let mut scene = SceneSpec::clean(HeightField::plane(w, h, 5.0)).unwrap();
        scene.shadow_regions.push(Polygon {
            vertices: vec![(4.0, 4.0), (20.0, 6.0), (10.0, 18.0)],
        });
        let stack = render_stack(&scene, &model, &spec).unwrap();
        assert!(stack.mask.count_valid() < w * h);
        assert!(stack.truth.image.get(10, 8).is_nan());
        assert!(!stack.mask.is_valid(10, 8));
    }
}
