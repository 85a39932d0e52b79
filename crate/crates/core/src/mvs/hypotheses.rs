use crate::error::{bail_arg, bail_shape, Result};
use crate::numeric::{Real, Tensor};

/// Inverse-depth step of the full range split into `base_count − 1` gaps.
pub fn base_step(depth_min: Real, depth_max: Real, base_count: usize) -> Real {
    (1.0 / depth_min - 1.0 / depth_max) / (base_count.max(2) - 1) as Real
}

/// `count` depths uniform in inverse depth; index 0 is `depth_min`.
pub fn uniform_inverse(depth_min: Real, depth_max: Real, count: usize) -> Result<Vec<Real>> {
    if count < 2 {
        bail_arg!("uniform hypotheses need at least 2 samples, got {count}");
    }
    if !(depth_min > 0.0 && depth_min < depth_max) {
        bail_arg!("bad depth range [{depth_min}, {depth_max}]");
    }
    let (hi, lo) = (1.0 / depth_min, 1.0 / depth_max);
    let last = (count - 1) as Real;
    Ok((0..count)
        .map(|i| match i {
            0 => depth_min,
            i if i + 1 == count => depth_max,
            i => 1.0 / (hi - (hi - lo) * i as Real / last),
        })
        .collect())
}

/// Per-pixel hypotheses `[count,H,W]` centered on `prev[H,W]` in inverse
/// depth, spaced `step` apart. Windows crossing the range are shifted back
/// inside; windows wider than the range fall back to uniform sampling.
pub fn local_hypotheses(prev: &Tensor, count: usize, step: Real, depth_min: Real, depth_max: Real) -> Result<Tensor> {
    let s = prev.shape();
    if s.len() != 2 {
        bail_shape!("previous depth must be [H,W], got {s:?}");
    }
    if count == 0 || !(step > 0.0) {
        bail_arg!("local hypotheses need count ≥ 1 and a positive step");
    }
    let (hi, lo) = (1.0 / depth_min, 1.0 / depth_max);
    let hw = s[0] * s[1];
    let half = (count - 1) as Real / 2.0;
    let width = (count - 1) as Real * step;
    let fallback = if width > hi - lo && count >= 2 { Some(uniform_inverse(depth_min, depth_max, count)?) } else { None };
    let mut out = vec![0.0; count * hw];
    for p in 0..hw {
        if let Some(u) = &fallback {
            for (i, &d) in u.iter().enumerate() {
                out[i * hw + p] = d;
            }
            continue;
        }
        let d = prev.data()[p];
        let c = if d.is_finite() && d > 0.0 { 1.0 / d } else { 0.5 * (hi + lo) };
        let mut top = (c + half * step).min(hi);
        if top - width < lo {
            top = lo + width;
        }
        for i in 0..count {
            let inv = if i == 0 { top } else { top - i as Real * step };
            out[i * hw + p] = 1.0 / inv.clamp(lo, hi);
        }
    }
    Tensor::new(vec![count, s[0], s[1]], out)
}
