use std::rc::Rc;

use crate::error::{bail_shape, Result};
use crate::numeric::{Real, Tape, Tensor, Var};

pub const LOG_FLOOR: Real = 1e-12;

/// Supervision applied to each probability volume.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    /// Cross-entropy against the nearest hypothesis bin.
    #[default]
    CrossEntropy,
    /// L1 between expectation depth and ground truth.
    L1,
}

/// Scalar loss plus bookkeeping.
#[derive(Clone, Copy, Debug)]
pub struct ScaleLoss {
    pub loss: Var,
    pub valid_pixels: usize,
    /// Set when no pixel was usable and the loss is defined as zero.
    pub empty: bool,
}

/// Pixels with finite positive ground truth inside the hypothesis span and a
/// nonzero mask, each with its nearest bin.
pub fn loss_targets(gt: &Tensor, hyps: &Tensor, mask: Option<&Tensor>) -> Result<Vec<(usize, usize)>> {
    let s = hyps.shape();
    if s.len() != 3 || gt.shape() != &s[1..] || mask.is_some_and(|m| m.shape() != &s[1..]) {
        bail_shape!("hypotheses {s:?}, ground truth {:?} and mask must agree", gt.shape());
    }
    let (d, hw) = (s[0], s[1] * s[2]);
    let mut out = Vec::new();
    for p in 0..hw {
        let g = gt.data()[p];
        if !(g.is_finite() && g > 0.0) || mask.is_some_and(|m| m.data()[p] == 0.0) {
            continue;
        }
        let col = |i: usize| hyps.data()[i * hw + p];
        let (lo, hi) = (0..d).map(col).fold((Real::INFINITY, Real::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if g < lo || g > hi {
            continue;
        }
        let mut best = 0;
        for i in 1..d {
            if (col(i) - g).abs() < (col(best) - g).abs() {
                best = i;
            }
        }
        out.push((p, best));
    }
    Ok(out)
}

/// Mean of `−ln max(p[target], 1e-12)` over usable pixels.
pub fn ce_loss(tape: &mut Tape, prob: Var, gt: &Tensor, hyps: &Tensor, mask: Option<&Tensor>) -> Result<ScaleLoss> {
    if tape.shape(prob) != hyps.shape() {
        bail_shape!("probability {:?} vs hypotheses {:?}", tape.shape(prob), hyps.shape());
    }
    let targets = loss_targets(gt, hyps, mask)?;
    if targets.is_empty() {
        return Ok(empty_loss(tape));
    }
    let hw = gt.numel();
    let idx: Rc<[usize]> = targets.iter().map(|&(p, b)| b * hw + p).collect();
    let picked = tape.gather(prob, idx, vec![targets.len()])?;
    let picked = tape.clamp_min(picked, LOG_FLOOR);
    let logp = tape.ln(picked);
    let m = tape.mean(logp);
    Ok(ScaleLoss { loss: tape.neg(m), valid_pixels: targets.len(), empty: false })
}

/// Mean absolute error of the expectation depth over usable pixels.
pub fn l1_loss(tape: &mut Tape, prob: Var, gt: &Tensor, hyps: &Tensor, mask: Option<&Tensor>) -> Result<ScaleLoss> {
    if tape.shape(prob) != hyps.shape() {
        bail_shape!("probability {:?} vs hypotheses {:?}", tape.shape(prob), hyps.shape());
    }
    let targets = loss_targets(gt, hyps, mask)?;
    if targets.is_empty() {
        return Ok(empty_loss(tape));
    }
    let hv = tape.constant(hyps.clone());
    let weighted = tape.mul(prob, hv)?;
    let expect = tape.sum_axis(weighted, 0)?;
    let idx: Rc<[usize]> = targets.iter().map(|&(p, _)| p).collect();
    let picked = tape.gather(expect, idx, vec![targets.len()])?;
    let truth = tape.constant(Tensor::new(vec![targets.len()], targets.iter().map(|&(p, _)| gt.data()[p]).collect())?);
    let diff = tape.sub(picked, truth)?;
    let diff = tape.abs(diff);
    Ok(ScaleLoss { loss: tape.mean(diff), valid_pixels: targets.len(), empty: false })
}

fn empty_loss(tape: &mut Tape) -> ScaleLoss {
    log::warn!("no pixel with usable ground truth; scale loss defined as 0");
    ScaleLoss { loss: tape.constant(Tensor::scalar(0.0)), valid_pixels: 0, empty: true }
}

pub fn scale_loss(
    tape: &mut Tape,
    kind: LossKind,
    prob: Var,
    gt: &Tensor,
    hyps: &Tensor,
    mask: Option<&Tensor>,
) -> Result<ScaleLoss> {
    match kind {
        LossKind::CrossEntropy => ce_loss(tape, prob, gt, hyps, mask),
        LossKind::L1 => l1_loss(tape, prob, gt, hyps, mask),
    }
}

/// Nearest downsampling `out[i,j] = gt[i·f, j·f]`.
pub fn downsample_nearest(gt: &Tensor, factor: usize) -> Result<Tensor> {
    let s = gt.shape();
    if s.len() != 2 || factor == 0 || s[0] % factor != 0 || s[1] % factor != 0 {
        bail_shape!("cannot downsample {s:?} by {factor}");
    }
    let (h, w) = (s[0] / factor, s[1] / factor);
    Ok(Tensor::from_fn(vec![h, w], |i| gt.data()[(i / w) * factor * s[1] + (i % w) * factor]))
}
