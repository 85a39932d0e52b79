//! Procedural ray-cast scenes with exact depth: tilted planes, an optional
//! sphere and world-space value-noise textures seen from cameras on an arc.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};

use crate::config::SynthConfig;
use crate::error::{bail_arg, Result};
use crate::io::Scene;
use crate::mvs::{Camera, CameraView};
use crate::nn::Rng64;
use crate::numeric::{Real, Tensor};

/// Relative margin added around the rendered depth extremes.
pub const RANGE_MARGIN: f64 = 0.01;

/// Points `x` with `normal · x = offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub tint: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub tint: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub planes: Vec<Plane>,
    pub sphere: Option<Sphere>,
    pub texture_seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, i: i64, j: i64, k: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((i as u64) ^ splitmix((j as u64) ^ splitmix(k as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Smoothly interpolated lattice noise in `[-1, 1]`.
pub fn value_noise(seed: u64, p: Vector3<f64>) -> f64 {
    let f = p.map(f64::floor);
    let t = (p - f).map(|u| u * u * (3.0 - 2.0 * u));
    let (i, j, k) = (f.x as i64, f.y as i64, f.z as i64);
    let mut acc = 0.0;
    for (di, wx) in [(0, 1.0 - t.x), (1, t.x)] {
        for (dj, wy) in [(0, 1.0 - t.y), (1, t.y)] {
            for (dk, wz) in [(0, 1.0 - t.z), (1, t.z)] {
                acc += wx * wy * wz * lattice(seed, i + di, j + dj, k + dk);
            }
        }
    }
    acc
}

fn texture(seed: u64, tint: [f64; 3], p: Vector3<f64>) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let s = seed.wrapping_add(c as u64 * 7919);
        let n = 0.65 * value_noise(s, p * 1.5) + 0.35 * value_noise(s ^ 0x5555, p * 4.0);
        *o = (tint[c] + 0.35 * n).clamp(0.0, 1.0);
    }
    out
}

impl Geometry {
    /// Nearest hit along `origin + t·dir` with `t > 0`: `(t, color)`.
    pub fn cast(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<(f64, [f64; 3])> {
        let mut best: Option<(f64, [f64; 3])> = None;
        let mut consider = |t: f64, tint: [f64; 3]| {
            if t > 1e-9 && best.is_none_or(|(b, _)| t < b) {
                best = Some((t, tint));
            }
        };
        for p in &self.planes {
            let den = p.normal.dot(&dir);
            if den.abs() > 1e-12 {
                consider((p.offset - p.normal.dot(&origin)) / den, p.tint);
            }
        }
        if let Some(s) = &self.sphere {
            let oc = origin - s.center;
            let (a, b, c) = (dir.dot(&dir), oc.dot(&dir), oc.dot(&oc) - s.radius * s.radius);
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let r = disc.sqrt();
                for t in [(-b - r) / a, (-b + r) / a] {
                    consider(t, s.tint);
                }
            }
        }
        best.map(|(t, tint)| (t, texture(self.texture_seed, tint, origin + dir * t)))
    }

    /// RGB image `[3,H,W]` and z-depth `[H,W]`; pixels without a hit get depth 0.
    pub fn render(&self, cam: &Camera, height: usize, width: usize) -> Result<(Tensor, Tensor)> {
        let k_inv = cam.intrinsics.try_inverse().ok_or_else(|| crate::Error::Argument("singular intrinsics".into()))?;
        let center = cam.center();
        let rt = cam.rotation.transpose();
        let mut image = vec![0.0; 3 * height * width];
        let mut depth = vec![0.0; height * width];
        let hw = height * width;
        for y in 0..height {
            for x in 0..width {
                let ray = k_inv * Vector3::new(x as f64, y as f64, 1.0);
                let dir = rt * (ray / ray.z);
                if let Some((t, rgb)) = self.cast(center, dir) {
                    let p = y * width + x;
                    depth[p] = t as Real;
                    for c in 0..3 {
                        image[c * hw + p] = rgb[c] as Real;
                    }
                }
            }
        }
        Ok((Tensor::new(vec![3, height, width], image)?, Tensor::new(vec![height, width], depth)?))
    }
}

/// Camera looking from `center` toward `target` with image y pointing along
/// world +y as closely as possible.
pub fn look_at(intrinsics: Matrix3<f64>, center: Vector3<f64>, target: Vector3<f64>, dmin: f64, dmax: f64) -> Result<Camera> {
    let z = (target - center).normalize();
    let x = Vector3::y().cross(&z).normalize();
    let y = z.cross(&x);
    let rot = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Camera::new(intrinsics, rot, -(rot * center), dmin, dmax)
}

/// Arc angle of view `v`: 0, +step, −step, +2·step, ...
fn arc_angle(v: usize, step_deg: f64) -> f64 {
    let m = v.div_ceil(2) as f64;
    let sign = if v % 2 == 1 { 1.0 } else { -1.0 };
    (sign * m * step_deg).to_radians()
}

/// Default geometry: a tilted back wall, optional floor and side wall, and a
/// sphere, each jittered by the seed.
pub fn default_geometry(cfg: &SynthConfig) -> Result<Geometry> {
    if !(1..=3).contains(&cfg.planes) {
        bail_arg!("synth.planes must be 1, 2 or 3, got {}", cfg.planes);
    }
    let mut rng = Rng64::seed_from_u64(cfg.seed);
    let mut jit = |s: f64| rng.gen_range(-s..s);
    let r = cfg.arc_radius;
    let mut planes = Vec::new();
    let mut add = |n: Vector3<f64>, through: Vector3<f64>, tint| {
        let n = n.normalize();
        planes.push(Plane { normal: n, offset: n.dot(&through), tint });
    };
    add(Vector3::new(0.12 + jit(0.05), -0.08 + jit(0.05), -1.0), Vector3::new(0.0, 0.0, 1.45 * r + jit(0.2)), [0.55, 0.45, 0.4]);
    if cfg.planes >= 2 {
        add(Vector3::new(jit(0.05), -1.0, -0.45 + jit(0.05)), Vector3::new(0.0, 0.22 * r + jit(0.05), r), [0.35, 0.5, 0.45]);
    }
    if cfg.planes >= 3 {
        add(Vector3::new(1.0, jit(0.05), -0.4 + jit(0.05)), Vector3::new(-0.3 * r + jit(0.05), 0.0, r), [0.45, 0.4, 0.6]);
    }
    let sphere = cfg.sphere.then(|| Sphere {
        center: Vector3::new(0.08 * r + jit(0.05), -0.05 * r + jit(0.05), 0.8 * r + jit(0.1)),
        radius: 0.18 * r,
        tint: [0.6, 0.55, 0.3],
    });
    Ok(Geometry { planes, sphere, texture_seed: splitmix(cfg.seed ^ 0x7e57) })
}

fn check(cfg: &SynthConfig) -> Result<()> {
    if cfg.views < 2 {
        bail_arg!("synthetic scenes need at least 2 views, got {}", cfg.views);
    }
    if cfg.height == 0 || cfg.width == 0 || cfg.height % 16 != 0 || cfg.width % 16 != 0 {
        bail_arg!("resolution {}x{} must be a positive multiple of 16", cfg.height, cfg.width);
    }
    if !(cfg.focal > 0.0 && cfg.arc_radius > 0.0 && cfg.arc_step_deg.is_finite()) {
        bail_arg!("focal and arc radius must be positive");
    }
    Ok(())
}

/// Renders `geometry` from the arc cameras of `cfg`. Each view's depth range
/// brackets its own rendered depth with [`RANGE_MARGIN`].
pub fn render_scene(cfg: &SynthConfig, geometry: &Geometry) -> Result<Scene> {
    check(cfg)?;
    let (h, w) = (cfg.height, cfg.width);
    let f = cfg.focal * w as f64;
    let k = Matrix3::new(f, 0.0, (w as f64 - 1.0) / 2.0, 0.0, f, (h as f64 - 1.0) / 2.0, 0.0, 0.0, 1.0);
    let target = Vector3::new(0.0, 0.0, cfg.arc_radius);
    let mut views = Vec::with_capacity(cfg.views);
    let angles: Vec<f64> = (0..cfg.views).map(|v| arc_angle(v, cfg.arc_step_deg)).collect();
    for &a in &angles {
        let center = target + Vector3::new(a.sin(), 0.0, -a.cos()) * cfg.arc_radius;
        let probe = look_at(k, center, target, 1.0, 2.0)?;
        let (image, depth) = geometry.render(&probe, h, w)?;
        let valid = depth.data().iter().copied().filter(|&d| d > 0.0);
        let (lo, hi) = valid.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d as f64), hi.max(d as f64)));
        if !lo.is_finite() {
            bail_arg!("camera at angle {a:.3} rad sees no geometry");
        }
        let camera = look_at(k, center, target, lo * (1.0 - RANGE_MARGIN), hi * (1.0 + RANGE_MARGIN))?;
        views.push(CameraView { camera, image, gt_depth: Some(depth) });
    }
    let pairs = (0..cfg.views)
        .map(|r| {
            let mut srcs: Vec<(usize, f64)> =
                (0..cfg.views).filter(|&v| v != r).map(|v| (v, 1.0 / (1.0 + (angles[v] - angles[r]).abs().to_degrees()))).collect();
            srcs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            (r, srcs)
        })
        .collect();
    Ok(Scene { views, pairs })
}

pub fn generate(cfg: &SynthConfig) -> Result<Scene> {
    check(cfg)?;
    render_scene(cfg, &default_geometry(cfg)?)
}
