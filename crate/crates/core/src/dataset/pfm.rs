//! Grayscale Portable Float Map: `Pf` header, 32-bit floats, rows stored
//! bottom to top. Written little-endian (scale −1); big-endian files are
//! read as well.

use std::fs;
use std::path::Path;

use super::pnm::{header_tokens, parse_dim};
use crate::error::{FppError, Result};
use crate::image::ScalarImage;
use crate::scalar::Real;

pub fn encode_pfm<T: Real>(image: &ScalarImage<T>) -> Result<Vec<u8>> {
    let (w, h) = image.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for v in (0..h).rev() {
        for &x in &image.data()[v * w..(v + 1) * w] {
            if x.is_infinite() {
                return Err(FppError::invalid("PFM rasters must be finite or NaN"));
            }
            let f = x.to_f32().unwrap_or(f32::NAN);
            out.extend_from_slice(&f.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

/// `path` is only used in error messages.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<ScalarImage<f32>> {
    let (tok, offset) = header_tokens(bytes, 4, path)?;
    match tok[0] {
        "Pf" => {}
        "PF" => return Err(FppError::format(path, "colour PFM (PF) is not supported; expected Pf")),
        other => return Err(FppError::format(path, format!("bad magic '{other}'"))),
    }
    let w = parse_dim(tok[1], "width", path)?;
    let h = parse_dim(tok[2], "height", path)?;
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| FppError::format(path, format!("bad scale '{}'", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FppError::format(path, format!("bad scale '{}'", tok[3])));
    }
    let little = scale < 0.0;
    let payload = &bytes[offset..];
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FppError::format(path, "dimensions overflow"))?;
    if payload.len() != need {
        return Err(FppError::format(
            path,
            format!("payload is {} bytes, expected {need}", payload.len()),
        ));
    }
    let mut data = vec![0f32; w * h];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let bits = if little { u32::from_le_bytes(raw) } else { u32::from_be_bytes(raw) };
        let (row, col) = (k / w, k % w);
        data[(h - 1 - row) * w + col] = f32::from_bits(bits);
    }
    ScalarImage::new(w, h, data)
}

pub fn write_pfm<T: Real>(image: &ScalarImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(image)?).map_err(|e| FppError::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ScalarImage<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FppError::io(path, e))?;
    decode_pfm(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem.pfm")
    }

    #[test]
    fn single_zero_pixel() {
        let img = ScalarImage::filled(1, 1, 0f32).unwrap();
        let bytes = encode_pfm(&img).unwrap();
        assert_eq!(&bytes[..], b"Pf\n1 1\n-1.0\n\0\0\0\0");
        assert_eq!(decode_pfm(&bytes, p()).unwrap(), img);
    }

    #[test]
    fn nan_pixel_survives() {
        let img = ScalarImage::new(2, 2, vec![1.0f32, f32::NAN, 2.5, -3.0]).unwrap();
        let back = decode_pfm(&encode_pfm(&img).unwrap(), p()).unwrap();
        assert!(back.get(1, 0).is_nan());
        assert_eq!(back.get(0, 0), 1.0);
        assert_eq!(back.get(0, 1), 2.5);
    }

    #[test]
    fn rows_are_bottom_to_top() {
        let img = ScalarImage::new(1, 2, vec![1.0f32, 2.0]).unwrap();
        let bytes = encode_pfm(&img).unwrap();
        let body = &bytes[bytes.len() - 8..];
        assert_eq!(&body[..4], &2.0f32.to_le_bytes());
        assert_eq!(&body[4..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn big_endian_input() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        let img = decode_pfm(&bytes, p()).unwrap();
        assert_eq!(img.data(), &[1.5, -2.0]);
    }

    #[test]
    fn format_errors() {
        let good = encode_pfm(&ScalarImage::filled(2, 2, 1f32).unwrap()).unwrap();
        assert!(matches!(decode_pfm(&good[..good.len() - 1], p()), Err(FppError::Format { .. })));
        let mut colour = good.clone();
        colour[1] = b'F';
        assert!(matches!(decode_pfm(&colour, p()), Err(FppError::Format { .. })));
        assert!(decode_pfm(b"Pf\n2 x\n-1.0\n", p()).is_err());
        assert!(decode_pfm(b"Pf\n0 1\n-1.0\n", p()).is_err());
        assert!(decode_pfm(b"Pf\n1 1\n0\n\0\0\0\0", p()).is_err());
        assert!(decode_pfm(b"Pf", p()).is_err());
        let mut long = good;
        long.push(0);
        assert!(decode_pfm(&long, p()).is_err());
        assert!(encode_pfm(&ScalarImage::filled(1, 1, f32::INFINITY).unwrap()).is_err());
    }

    #[test]
    fn ten_thousand_random_bit_patterns() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f32> = (0..10_000)
            .map(|_| loop {
                let x = f32::from_bits(rng.random());
                if !x.is_infinite() {
                    break x;
                }
            })
            .collect();
        let img = ScalarImage::new(125, 80, data).unwrap();
        let back = decode_pfm(&encode_pfm(&img).unwrap(), p()).unwrap();
        assert!(img.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    proptest! {
        #[test]
        fn encode_decode_encode_is_identity(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..w * h).map(|_| rng.random_range(-1e6..1e6)).collect();
            let img = ScalarImage::new(w, h, data).unwrap();
            let bytes = encode_pfm(&img).unwrap();
            let back = decode_pfm(&bytes, p()).unwrap();
            prop_assert_eq!(encode_pfm(&back).unwrap(), bytes);
        }
    }
}
