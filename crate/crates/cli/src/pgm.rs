//! Plain-text greymap (P2) export of RBM weight filters.

use std::fmt::Write as _;

/// Grey levels for one filter: min–max scaled to `[0, 255]`, or uniform 128
/// when the filter is constant.
pub fn normalize(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo || hi.is_nan() {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Encodes a `width × height` greymap. Lines stay within 70 characters.
pub fn encode(width: usize, height: usize, pixels: &[u8]) -> String {
    assert_eq!(pixels.len(), width * height, "pixel count");
    let mut out = format!("P2\n{width} {height}\n255\n");
    let mut line_len = 0;
    for p in pixels {
        let token = p.to_string();
        if line_len > 0 && line_len + 1 + token.len() > 70 {
            out.push('\n');
            line_len = 0;
        }
        if line_len > 0 {
            out.push(' ');
            line_len += 1;
        }
        write!(out, "{token}").unwrap();
        line_len += token.len();
    }
    out.push('\n');
    out
}

/// Tiles equally sized images row-major, `ceil(√count)` per row, no gaps.
/// Unused tiles stay black. Returns width, height and pixels.
pub fn montage(tiles: &[Vec<u8>], tile_w: usize, tile_h: usize) -> (usize, usize, Vec<u8>) {
    let per_row = (tiles.len() as f64).sqrt().ceil() as usize;
    let rows = tiles.len().div_ceil(per_row.max(1));
    let width = per_row * tile_w;
    let height = rows * tile_h;
    let mut pixels = vec![0u8; width * height];
    for (t, tile) in tiles.iter().enumerate() {
        let (tr, tc) = (t / per_row, t % per_row);
        for y in 0..tile_h {
            let dst = (tr * tile_h + y) * width + tc * tile_w;
            pixels[dst..dst + tile_w].copy_from_slice(&tile[y * tile_w..(y + 1) * tile_w]);
        }
    }
    (width, height, pixels)
}
