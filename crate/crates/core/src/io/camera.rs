use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{format_err, write_atomic};
use crate::error::Result;
use crate::mvs::Camera;

/// Depth bins assumed when writing the interval column.
const INTERVAL_BINS: usize = 32;

/// `(reference, [(source, score)])` rows of a pair file.
pub type PairList = Vec<(usize, Vec<(usize, f64)>)>;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// MVSNet-style text camera: 4×4 world-to-camera, 3×3 intrinsics and a
/// `d_min d_interval d_max` line, every value with 17 significant digits.
pub fn write_camera(path: &Path, cam: &Camera) -> Result<()> {
    let mut s = String::from("extrinsic\n");
    let e = cam.extrinsic();
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| num(e[(r, c)])).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    s.push_str("\nintrinsic\n");
    for r in 0..3 {
        let row: Vec<String> = (0..3).map(|c| num(cam.intrinsics[(r, c)])).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    let interval = (cam.depth_max - cam.depth_min) / (INTERVAL_BINS - 1) as f64;
    writeln!(s, "\n{} {} {}", num(cam.depth_min), num(interval), num(cam.depth_max)).unwrap();
    write_atomic(path, s.as_bytes())
}

/// Reads a camera file. The depth line may be `d_min d_interval d_max` or
/// the four-value `d_min d_interval count d_max` variant.
pub fn read_camera(path: &Path) -> Result<Camera> {
    let text = std::fs::read_to_string(path)?;
    let err = |r: &str| format_err("camera", path, r);
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() != 10 || lines[0] != "extrinsic" || lines[5] != "intrinsic" {
        return Err(err("expected 'extrinsic', 4 rows, 'intrinsic', 3 rows and a depth line"));
    }
    let numbers = |line: &str, n: Option<usize>| -> Result<Vec<f64>> {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(&format!("non-numeric line {line:?}")))?;
        match n {
            Some(n) if v.len() != n => Err(err(&format!("expected {n} values in {line:?}"))),
            _ => Ok(v),
        }
    };
    let ext = lines[1..5].iter().map(|l| numbers(l, Some(4))).collect::<Result<Vec<_>>>()?;
    if ext[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(err("extrinsic last row must be 0 0 0 1"));
    }
    let k = lines[6..9].iter().map(|l| numbers(l, Some(3))).collect::<Result<Vec<_>>>()?;
    let d = numbers(lines[9], None)?;
    let (dmin, dmax) = match d.len() {
        3 => (d[0], d[2]),
        4 => (d[0], d[3]),
        n => return Err(err(&format!("depth line needs 3 or 4 values, got {n}"))),
    };
    let rot = Matrix3::from_fn(|r, c| ext[r][c]);
    let t = Vector3::new(ext[0][3], ext[1][3], ext[2][3]);
    let k = Matrix3::from_fn(|r, c| k[r][c]);
    Camera::new(k, rot, t, dmin, dmax).map_err(|e| err(&e.to_string()))
}

pub fn write_pairs(path: &Path, pairs: &PairList) -> Result<()> {
    let mut s = format!("{}\n", pairs.len());
    for (r, srcs) in pairs {
        writeln!(s, "{r}").unwrap();
        write!(s, "{}", srcs.len()).unwrap();
        for (v, score) in srcs {
            write!(s, " {v} {score}").unwrap();
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_pairs(path: &Path) -> Result<PairList> {
    let text = std::fs::read_to_string(path)?;
    let err = |r: &str| format_err("pair", path, r);
    let mut tok = text.split_whitespace();
    let mut next = |what: &str| tok.next().ok_or_else(|| err(&format!("missing {what}")));
    let n: usize = next("view count")?.parse().map_err(|_| err("bad view count"))?;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let r: usize = next("reference index")?.parse().map_err(|_| err("bad reference index"))?;
        let m: usize = next("source count")?.parse().map_err(|_| err("bad source count"))?;
        let mut srcs = Vec::with_capacity(m);
        for _ in 0..m {
            let v: usize = next("source index")?.parse().map_err(|_| err("bad source index"))?;
            let s: f64 = next("score")?.parse().map_err(|_| err("bad score"))?;
            srcs.push((v, s));
        }
        pairs.push((r, srcs));
    }
    Ok(pairs)
}
