//! Shared header parsing for the PNM family (PGM, PFM).

use std::path::Path;

use crate::error::{FppError, Result};

/// Splits `count` whitespace-separated header tokens off `bytes`, skipping
/// `#` comments, and returns them with the payload offset. Exactly one
/// whitespace byte separates the last token from the payload.
pub(crate) fn header_tokens<'a>(bytes: &'a [u8], count: usize, path: &Path) -> Result<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(FppError::format(path, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| FppError::format(path, "non-ASCII header"))?;
        tokens.push(tok);
    }
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(FppError::format(path, "header not terminated by whitespace"));
    }
    Ok((tokens, i + 1))
}

pub(crate) fn parse_dim(tok: &str, what: &str, path: &Path) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(FppError::format(path, format!("bad {what} '{tok}'"))),
    }
}
