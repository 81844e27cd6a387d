//! Raster types and phase arithmetic.
//!
//! Storage is row-major with pixel `(u, v)` = (column, row) and the origin at
//! the top-left corner. Invalid pixels carry NaN in float rasters, but the
//! accompanying [`Mask`] is what decides validity.

use crate::error::{FppError, Result};
use crate::scalar::Real;

/// Dense 2D grid of real values (intensity, phase or height).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> ScalarImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(FppError::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(FppError::invalid(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(u, v)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Converts to another scalar type through `f64`.
    pub fn cast<U: Real>(&self) -> ScalarImage<U> {
        ScalarImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64(x.as_f64()).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(FppError::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }

    /// Minimum and maximum over finite values, or `None` when there are none.
    pub fn finite_range(&self) -> Option<(T, T)> {
        self.data
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(None, |acc, x| match acc {
                None => Some((x, x)),
                Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
            })
    }
}

/// Element-wise combination of two equally sized images.
pub fn image_map_binary<T: Real>(
    a: &ScalarImage<T>,
    b: &ScalarImage<T>,
    f: impl Fn(T, T) -> T,
) -> Result<ScalarImage<T>> {
    b.ensure_dims(a.dims())?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    ScalarImage::new(a.width, a.height, data)
}

/// Per-pixel validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || valid.len() != width * height {
            return Err(FppError::invalid(format!(
                "mask of {} flags does not fit {width}x{height}",
                valid.len()
            )));
        }
        Ok(Self {
            width,
            height,
            valid,
        })
    }

    pub fn all_valid(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut valid = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                valid.push(f(u, v));
            }
        }
        Self::new(width, height, valid)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, valid: bool) {
        self.valid[v * self.width + u] = valid;
    }

    #[inline]
    pub fn flags(&self) -> &[bool] {
        &self.valid
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        if self.dims() != other.dims() {
            return Err(FppError::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        let valid = self.valid.iter().zip(&other.valid).map(|(&a, &b)| a && b).collect();
        Mask::new(self.width, self.height, valid)
    }
}

/// Phase raster in radians, either wrapped to (−π, π] or unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap<T> {
    pub image: ScalarImage<T>,
    pub wrapped: bool,
}

impl<T: Real> PhaseMap<T> {
    pub fn wrapped(image: ScalarImage<T>) -> Self {
        Self {
            image,
            wrapped: true,
        }
    }

    pub fn unwrapped(image: ScalarImage<T>) -> Self {
        Self {
            image,
            wrapped: false,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// Height raster in millimetres with its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap<T> {
    pub image: ScalarImage<T>,
    pub mask: Mask,
}

impl<T: Real> HeightMap<T> {
    /// Pairs heights with a mask; masked pixels are overwritten with NaN.
    pub fn new(mut image: ScalarImage<T>, mask: Mask) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(FppError::DimensionMismatch {
                expected: image.dims(),
                found: mask.dims(),
            });
        }
        for (z, &ok) in image.data_mut().iter_mut().zip(mask.flags()) {
            if !ok {
                *z = T::nan();
            } else if !z.is_finite() {
                return Err(FppError::invalid("valid height pixel is not finite"));
            }
        }
        Ok(Self { image, mask })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// Wraps an angle into the principal interval (−π, π].
///
/// Values already inside the interval are returned unchanged, which makes the
/// operation idempotent bit for bit.
pub fn wrap_to_principal<T: Real>(theta: T) -> Result<T> {
    if !theta.is_finite() {
        return Err(FppError::invalid(format!("cannot wrap non-finite angle {theta}")));
    }
    Ok(wrap_finite(theta))
}

/// Infallible variant of [`wrap_to_principal`] for values known to be finite.
#[inline]
pub(crate) fn wrap_finite<T: Real>(theta: T) -> T {
    let pi = T::PI();
    if theta > -pi && theta <= pi {
        return theta;
    }
    let r = theta.sin().atan2(theta.cos());
    if r <= -pi {
        pi
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn circular_distance(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(TAU);
        d.min(TAU - d)
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_to_principal(0.0_f64).unwrap(), 0.0);
        assert!((wrap_to_principal(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        let w = wrap_to_principal(8.0_f64).unwrap();
        assert!((w - (8.0 - TAU)).abs() < 1e-12);
        assert!((w - 1.716_814_692_820_414).abs() < 1e-12);
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(wrap_to_principal(f64::NAN).is_err());
        assert!(wrap_to_principal(f64::INFINITY).is_err());
    }

    #[test]
    fn wrap_never_returns_minus_pi() {
        assert_eq!(wrap_to_principal(-PI).unwrap(), PI);
        assert!(wrap_to_principal(-3.0 * PI).unwrap() > -PI);
        assert!(wrap_to_principal(-PI as f32).unwrap() > -std::f32::consts::PI);
    }

    #[test]
    fn binary_map_examples() {
        let a = ScalarImage::from_fn(3, 2, |u, v| (u * 10 + v) as f64).unwrap();
        let zero = image_map_binary(&a, &a, |x, y| x - y).unwrap();
        assert!(zero.data().iter().all(|&x| x == 0.0));

        let ones = ScalarImage::filled(2, 2, 1.0_f64).unwrap();
        let twos = image_map_binary(&ones, &ones, |x, y| x + y).unwrap();
        assert_eq!(twos.data(), &[2.0; 4]);

        let a = ScalarImage::filled(3, 3, 0.0_f64).unwrap();
        let b = ScalarImage::filled(2, 2, 0.0_f64).unwrap();
        assert!(matches!(
            image_map_binary(&a, &b, |x, _| x),
            Err(FppError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn image_invariants() {
        assert!(ScalarImage::<f64>::new(0, 3, vec![]).is_err());
        assert!(ScalarImage::new(2, 2, vec![0.0_f64; 3]).is_err());
        assert!(Mask::new(2, 2, vec![true; 5]).is_err());
    }

    #[test]
    fn height_map_blanks_masked_pixels() {
        let img = ScalarImage::filled(2, 1, 3.0_f64).unwrap();
        let mask = Mask::new(2, 1, vec![true, false]).unwrap();
        let hm = HeightMap::new(img, mask).unwrap();
        assert_eq!(hm.image.get(0, 0), 3.0);
        assert!(hm.image.get(1, 0).is_nan());
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(x in -1.0e4f64..1.0e4) {
            let w = wrap_to_principal(x).unwrap();
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_to_principal(w).unwrap().to_bits(), w.to_bits());
        }

        #[test]
        fn wrap_is_periodic(x in -10.0f64..10.0, k in -1000i32..=1000) {
            // Forming x + 2πk in f64 already perturbs the input by up to
            // ~1e-12; track that perturbation exactly so only the error of
            // the wrap itself is measured.
            const TAU_LO: f64 = 2.449_293_598_294_706_4e-16;
            let k = f64::from(k);
            let y = TAU * k;
            let e_mul = TAU.mul_add(k, -y);
            let shifted = x + y;
            let bb = shifted - x;
            let e_add = (x - (shifted - bb)) + (y - bb);
            let input_error = -(e_mul + e_add) - TAU_LO * k;

            let a = wrap_to_principal(x).unwrap();
            let b = wrap_to_principal(shifted).unwrap();
            prop_assert!(circular_distance(a + input_error, b) < 1e-12, "{} vs {}", a, b);
            prop_assert!(circular_distance(a, b) < 2e-12);
        }
    }
}
