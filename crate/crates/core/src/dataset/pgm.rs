//! Binary validity masks as 8-bit PGM (P5): 255 valid, 0 invalid.

use std::fs;
use std::path::Path;

use super::pnm::{header_tokens, parse_dim};
use crate::error::{FppError, Result};
use crate::image::Mask;

pub fn encode_mask_pgm(mask: &Mask) -> Vec<u8> {
    let (w, h) = mask.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.flags().iter().map(|&ok| if ok { 255u8 } else { 0 }));
    out
}

pub fn decode_mask_pgm(bytes: &[u8], path: &Path) -> Result<Mask> {
    let (tok, offset) = header_tokens(bytes, 4, path)?;
    if tok[0] != "P5" {
        return Err(FppError::format(path, format!("bad magic '{}', expected P5", tok[0])));
    }
    let w = parse_dim(tok[1], "width", path)?;
    let h = parse_dim(tok[2], "height", path)?;
    if tok[3] != "255" {
        return Err(FppError::format(path, format!("maxval must be 255, got {}", tok[3])));
    }
    let payload = &bytes[offset..];
    if payload.len() != w * h {
        return Err(FppError::format(
            path,
            format!("payload is {} bytes, expected {}", payload.len(), w * h),
        ));
    }
    let mut flags = Vec::with_capacity(w * h);
    for (k, &b) in payload.iter().enumerate() {
        flags.push(match b {
            255 => true,
            0 => false,
            other => {
                return Err(FppError::format(
                    path,
                    format!("value {other} at pixel ({}, {}); only 0 and 255 allowed", k % w, k / w),
                ))
            }
        });
    }
    Mask::new(w, h, flags)
}

pub fn write_mask_pgm(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mask_pgm(mask)).map_err(|e| FppError::io(path, e))
}

pub fn read_mask_pgm(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FppError::io(path, e))?;
    decode_mask_pgm(&bytes, path)
}
