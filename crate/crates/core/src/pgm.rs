//! Binary 8-bit PGM (P5) encoding for grids.
//!
//! Grids are stored with row 0 at the lowest y; images put the highest y in
//! the first row, so rows are flipped on the way in and out.

use std::io::Write;
use std::path::Path;

use crate::error::{NavError, Result};
use crate::grid::{CellState, Grid2, GridGeometry};

/// Encodes row-major grid bytes (row 0 = lowest y) as a P5 image.
pub fn encode(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height, "pixel count must match dimensions");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(gray.len());
    for row in (0..height).rev() {
        out.extend_from_slice(&gray[row * width..(row + 1) * width]);
    }
    out
}

/// Decodes a P5 image into `(width, height, bytes)` with row 0 = lowest y.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(NavError::format("pgm", "truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| NavError::format("pgm", "non-ascii header"))?);
    }
    if fields[0] != "P5" {
        return Err(NavError::format("pgm", "expected P5 magic"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| NavError::format("pgm", format!("bad header field `{s}`")));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(NavError::format("pgm", "only 8-bit images are supported"));
    }
    pos += 1;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != width * height {
        return Err(NavError::format("pgm", "pixel data length does not match header"));
    }
    let mut gray = vec![0u8; data.len()];
    for row in 0..height {
        let src = (height - 1 - row) * width;
        gray[row * width..(row + 1) * width].copy_from_slice(&data[src..src + width]);
    }
    Ok((width, height, gray))
}

/// Trinary grid as PGM: 0 occupied, 255 free, 127 unknown.
pub fn encode_states(grid: &Grid2<CellState>) -> Vec<u8> {
    let gray: Vec<u8> = grid.data.iter().map(|c| c.to_gray()).collect();
    encode(grid.width(), grid.height(), &gray)
}

/// Reads a trinary PGM back onto a grid with the given origin and resolution.
pub fn decode_states(bytes: &[u8], origin: [f64; 2], resolution: f64) -> Result<Grid2<CellState>> {
    let (w, h, gray) = decode(bytes)?;
    let data = gray
        .iter()
        .map(|&g| CellState::from_gray(g).ok_or_else(|| NavError::format("pgm", format!("gray value {g} is not in the palette"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid2 { geometry: GridGeometry::new(origin, resolution, w, h), data })
}

pub fn write_file(path: impl AsRef<Path>, image: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(image)?;
    Ok(())
}
