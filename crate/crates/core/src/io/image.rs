use std::path::Path;

use super::{format_err, write_atomic};
use crate::error::{bail_shape, Result};
use crate::numeric::{Real, Tensor};

/// Single-channel PFM, little-endian, rows stored bottom to top.
pub fn write_pfm(path: &Path, map: &Tensor) -> Result<()> {
    let s = map.shape();
    if s.len() != 2 {
        bail_shape!("PFM expects [H,W], got {s:?}");
    }
    let (h, w) = (s[0], s[1]);
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * h * w);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(map.data()[y * w + x] as f32).to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

/// Header tokens separated by whitespace, and the offset of the payload
/// after the single whitespace byte that ends the last token.
fn header(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    (i < bytes.len()).then_some((tokens, i + 1))
}

pub fn read_pfm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let err = |r: &str| format_err("PFM", path, r);
    let (t, off) = header(&bytes, 4).ok_or_else(|| err("truncated header"))?;
    if t[0] != "Pf" {
        return Err(err(&format!("expected single-channel 'Pf', got {:?}", t[0])));
    }
    let w: usize = t[1].parse().map_err(|_| err("bad width"))?;
    let h: usize = t[2].parse().map_err(|_| err("bad height"))?;
    let scale: f32 = t[3].parse().map_err(|_| err("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(err("scale must be nonzero"));
    }
    let payload = &bytes[off..];
    if payload.len() != 4 * w * h {
        return Err(err(&format!("expected {} payload bytes, found {}", 4 * w * h, payload.len())));
    }
    let mut data = vec![0.0; w * h];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, col) = (h - 1 - k / w, k % w);
        data[row * w + col] = v as Real;
    }
    Tensor::new(vec![h, w], data)
}

fn quantize(v: Real) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary P6 from an RGB tensor `[3,H,W]` with values in `[0,1]`.
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        bail_shape!("PPM expects [3,H,W], got {s:?}");
    }
    let (h, w) = (s[1], s[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for p in 0..h * w {
        for c in 0..3 {
            out.push(quantize(image.data()[c * h * w + p]));
        }
    }
    write_atomic(path, &out)
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let err = |r: &str| format_err("PPM", path, r);
    let (t, off) = header(&bytes, 4).ok_or_else(|| err("truncated header"))?;
    if t[0] != "P6" || t[3] != "255" {
        return Err(err("expected binary P6 with max value 255"));
    }
    let w: usize = t[1].parse().map_err(|_| err("bad width"))?;
    let h: usize = t[2].parse().map_err(|_| err("bad height"))?;
    let payload = &bytes[off..];
    if payload.len() != 3 * w * h {
        return Err(err(&format!("expected {} payload bytes, found {}", 3 * w * h, payload.len())));
    }
    Ok(Tensor::from_fn(vec![3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        payload[3 * p + c] as Real / 255.0
    }))
}

/// Binary P5 graymap from `[H,W]` values in `[0,1]`.
pub fn write_pgm(path: &Path, map: &Tensor) -> Result<()> {
    let s = map.shape();
    if s.len() != 2 {
        bail_shape!("PGM expects [H,W], got {s:?}");
    }
    let mut out = format!("P5\n{} {}\n255\n", s[1], s[0]).into_bytes();
    out.extend(map.data().iter().map(|&v| quantize(v)));
    write_atomic(path, &out)
}
