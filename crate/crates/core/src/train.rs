//! Adam training loop over cascade losses with a per-iteration record.

use std::fmt::Write as _;

use crate::config::TrainConfig;
use crate::error::{bail_arg, Result};
use crate::mvs::{cascade_forward, cascade_loss, downsample_nearest, CameraView, CascadeState, MvsModel};
use crate::network::NUM_SCALES;
use crate::numeric::{ParamStore, Real, Tape, Tensor};

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: &TrainConfig) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.shape().to_vec())).collect();
        Self { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, step: 0, m: zeros(), v: zeros() }
    }

    /// Applies one update from the gradients stored in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (vals, g) = (p.value.data_mut(), p.grad.data());
            for i in 0..vals.len() {
                let mi = &mut m.data_mut()[i];
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g[i];
                let vi = &mut v.data_mut()[i];
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g[i] * g[i];
                vals[i] -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Loss and accuracy of one iteration, measured before the update.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: Real,
    pub scale_loss: [Real; NUM_SCALES],
    pub scale_mae: [Real; NUM_SCALES],
}

pub const CSV_HEADER: &str = "iter,loss,loss_s0,loss_s1,loss_s2,loss_s3,mae_s0,mae_s1,mae_s2,mae_s3";

impl IterRecord {
    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{}", self.iter, self.loss);
        for v in self.scale_loss.iter().chain(&self.scale_mae) {
            write!(s, ",{v}").unwrap();
        }
        s
    }
}

/// Mean absolute error of each scale's depth against nearest-downsampled
/// ground truth, over pixels with positive finite truth.
pub fn scale_mae(state: &CascadeState, gt: &Tensor) -> Result<[Real; NUM_SCALES]> {
    let mut out = [Real::NAN; NUM_SCALES];
    for (s, sc) in state.scales.iter().enumerate() {
        let f = gt.shape()[0] / sc.depth.shape()[0];
        let g = downsample_nearest(gt, f)?;
        let (sum, n) = g
            .data()
            .iter()
            .zip(sc.depth.data())
            .filter(|(t, _)| t.is_finite() && **t > 0.0)
            .fold((0.0, 0usize), |(s, n), (t, d)| (s + (d - t).abs(), n + 1));
        out[s] = if n > 0 { sum / n as Real } else { Real::NAN };
    }
    Ok(out)
}

/// Runs `cfg.iters` Adam steps, cycling through `samples` (each a reference
/// view with ground truth followed by its sources).
pub fn train(
    model: &MvsModel,
    store: &mut ParamStore,
    samples: &[Vec<CameraView>],
    cfg: &TrainConfig,
    mut on_iter: impl FnMut(&IterRecord),
) -> Result<Vec<IterRecord>> {
    if samples.is_empty() {
        bail_arg!("no training samples");
    }
    if let Some(i) = samples.iter().position(|s| s.first().is_none_or(|v| v.gt_depth.is_none())) {
        bail_arg!("training sample {i} has no ground-truth depth for its reference");
    }
    let mut opt = Adam::new(store, cfg);
    let mut log = Vec::with_capacity(cfg.iters);
    for iter in 0..cfg.iters {
        let views = &samples[iter % samples.len()];
        let gt = views[0].gt_depth.as_ref().expect("checked above");
        let mut tape = Tape::new();
        let state = cascade_forward(&mut tape, store, model, views)?;
        let (loss, parts) = cascade_loss(&mut tape, &state, gt, model.cfg.cascade.loss)?;
        let rec = IterRecord {
            iter,
            loss: tape.item(loss),
            scale_loss: std::array::from_fn(|s| parts.get(s).map_or(Real::NAN, |p| tape.item(p.loss))),
            scale_mae: scale_mae(&state, gt)?,
        };
        if !rec.loss.is_finite() {
            bail_arg!("loss became non-finite at iteration {iter}");
        }
        tape.backward(loss)?;
        store.zero_grad();
        tape.accumulate_param_grads(store);
        opt.step(store);
        on_iter(&rec);
        log.push(rec);
    }
    Ok(log)
}
