use super::Camera;
use crate::error::{bail_arg, bail_shape, Result};
use crate::numeric::{Real, Tape, Tensor, Var};

const MIN_Z: f64 = 1e-9;
const OUTSIDE: Real = -1e6;
const SNAP: f64 = 1e-9;

/// Rounds coordinates within `SNAP` of an integer so exact pixel hits stay
/// inside the grid after the projection round trip.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Source-image coordinates `[2, D·H, W]` (row, column) of every reference
/// pixel at every hypothesized depth, plus a mask of points in front of the
/// source camera.
pub fn warp_coords(ref_cam: &Camera, src_cam: &Camera, hyps: &Tensor) -> Result<(Tensor, Vec<bool>)> {
    let s = hyps.shape();
    if s.len() != 3 {
        bail_shape!("hypotheses must be [D,H,W], got {s:?}");
    }
    let (d, h, w) = (s[0], s[1], s[2]);
    let k_inv = ref_cam
        .intrinsics
        .try_inverse()
        .ok_or_else(|| crate::Error::Argument("reference intrinsics are singular".into()))?;
    if src_cam.intrinsics.determinant().abs() < 1e-300 {
        bail_arg!("source intrinsics are singular");
    }
    let rot = src_cam.rotation * ref_cam.rotation.transpose();
    let trans = src_cam.translation - rot * ref_cam.translation;
    let proj_rot = src_cam.intrinsics * rot * k_inv;
    let proj_t = src_cam.intrinsics * trans;
    let n = d * h * w;
    let mut coords = vec![0.0; 2 * n];
    let mut front = vec![true; n];
    for di in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (di * h + y) * w + x;
                let depth = hyps.data()[i] as f64;
                if !(depth > 0.0) {
                    bail_arg!("hypothesis {depth} is not positive");
                }
                let ray = proj_rot * nalgebra::Vector3::new(x as f64, y as f64, 1.0);
                let p = ray * depth + proj_t;
                if p.z <= MIN_Z {
                    front[i] = false;
                    coords[i] = OUTSIDE;
                    coords[n + i] = OUTSIDE;
                } else {
                    coords[i] = snap(p.y / p.z) as Real;
                    coords[n + i] = snap(p.x / p.z) as Real;
                }
            }
        }
    }
    Ok((Tensor::new(vec![2, d * h, w], coords)?, front))
}

/// Warps `src_feat[C,H,W]` into the reference view for each hypothesis,
/// giving `[C,D,H,W]` and a validity mask `[D,H,W]` (1 inside the source
/// frame and in front of the camera).
pub fn homography_warp(
    tape: &mut Tape,
    src_feat: Var,
    ref_cam: &Camera,
    src_cam: &Camera,
    hyps: &Tensor,
) -> Result<(Var, Tensor)> {
    let fs = tape.shape(src_feat).to_vec();
    if fs.len() != 3 {
        bail_shape!("source feature must be [C,H,W], got {fs:?}");
    }
    let (d, h, w) = (hyps.shape()[0], hyps.shape()[1], hyps.shape()[2]);
    let (coords, front) = warp_coords(ref_cam, src_cam, hyps)?;
    let cv = tape.constant(coords);
    let (sampled, mask) = tape.bilinear_sample(src_feat, cv)?;
    let mut mask = mask.reshape(vec![d, h, w])?;
    for (m, f) in mask.data_mut().iter_mut().zip(front) {
        if !f {
            *m = 0.0;
        }
    }
    let warped = tape.reshape(sampled, vec![fs[0], d, h, w])?;
    Ok((warped, mask))
}
