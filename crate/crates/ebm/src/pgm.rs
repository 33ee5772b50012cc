//! Binary greyscale PGM (P5, maxval 255) output for weights and images.

use std::path::Path;

use ebm_core::Matrix;

use crate::error::{write_file, IoError, IoResult};

/// Maps `values` linearly onto 0..=255 from their min and max. A constant
/// input maps to mid-grey.
pub fn to_grey(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Tiles each row of `m` as a `tile_h × tile_w` image into a grid with
/// `ceil(sqrt(rows))` columns, separated by one-pixel black borders. Every
/// tile is scaled over the whole matrix so tiles stay comparable.
pub fn tile_rows(m: &Matrix, tile_h: usize, tile_w: usize) -> IoResult<(usize, usize, Vec<u8>)> {
    if tile_h * tile_w != m.cols() || m.rows() == 0 {
        return Err(IoError::Config(format!(
            "cannot tile {}×{} matrix as {tile_h}×{tile_w} images",
            m.rows(),
            m.cols()
        )));
    }
    let grey = to_grey(m.as_slice());
    let n = m.rows();
    let grid_w = (n as f64).sqrt().ceil() as usize;
    let grid_h = n.div_ceil(grid_w);
    let width = grid_w * (tile_w + 1) - 1;
    let height = grid_h * (tile_h + 1) - 1;
    let mut px = vec![0u8; width * height];
    for t in 0..n {
        let (gy, gx) = (t / grid_w, t % grid_w);
        for y in 0..tile_h {
            let src = &grey[t * m.cols() + y * tile_w..][..tile_w];
            let dst = (gy * (tile_h + 1) + y) * width + gx * (tile_w + 1);
            px[dst..dst + tile_w].copy_from_slice(src);
        }
    }
    Ok((width, height, px))
}

/// Writes a matrix as a single image, one pixel per entry.
pub fn write_matrix_pgm(path: &Path, m: &Matrix) -> IoResult<()> {
    write_file(
        path,
        &encode_pgm(m.cols(), m.rows(), &to_grey(m.as_slice())),
    )
}

/// Writes the rows of `m` as a grid of square tiles if the row length is a
/// perfect square, otherwise as a plain matrix image.
pub fn write_tiles_pgm(path: &Path, m: &Matrix) -> IoResult<()> {
    let side = (m.cols() as f64).sqrt().round() as usize;
    if side * side != m.cols() || m.rows() == 0 {
        return write_matrix_pgm(path, m);
    }
    let (w, h, px) = tile_rows(m, side, side)?;
    write_file(path, &encode_pgm(w, h, &px))
}

/// Parses a P5 file with maxval 255. Comments are not supported.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> IoResult<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::format(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| IoError::format(path, format!("bad PGM field '{s}'")))
    };
    if fields[0] != "P5" || num(&fields[3])? != 255 {
        return Err(IoError::format(
            path,
            "only P5 with maxval 255 is supported",
        ));
    }
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let px = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| IoError::format(path, "truncated PGM data"))?;
    Ok((w, h, px.to_vec()))
}
