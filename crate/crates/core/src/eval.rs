//! Depth-map error metrics.

use std::fmt::Write as _;

use crate::error::{bail_arg, bail_shape, Result};
use crate::numeric::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub mae: Real,
    pub rmse: Real,
    /// `(threshold, fraction of pixels with error below it)`.
    pub precision: Vec<(Real, Real)>,
    pub valid_pixels: usize,
}

/// Errors over pixels whose ground truth is finite and positive.
pub fn depth_metrics(pred: &Tensor, gt: &Tensor, thresholds: &[Real]) -> Result<Metrics> {
    if pred.shape() != gt.shape() {
        bail_shape!("prediction {:?} and ground truth {:?} differ", pred.shape(), gt.shape());
    }
    let errs: Vec<Real> = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, g)| g.is_finite() && **g > 0.0)
        .map(|(p, g)| (p - g).abs())
        .collect();
    if errs.is_empty() {
        bail_arg!("no pixel has valid ground truth");
    }
    let n = errs.len() as Real;
    let mae = errs.iter().sum::<Real>() / n;
    let rmse = (errs.iter().map(|e| e * e).sum::<Real>() / n).sqrt();
    let precision = thresholds.iter().map(|&t| (t, errs.iter().filter(|&&e| e < t).count() as Real / n)).collect();
    Ok(Metrics { mae, rmse, precision, valid_pixels: errs.len() })
}

impl Metrics {
    pub fn csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        writeln!(s, "mae,{}", self.mae).unwrap();
        writeln!(s, "rmse,{}", self.rmse).unwrap();
        for (t, p) in &self.precision {
            writeln!(s, "prec@{t},{}", 100.0 * p).unwrap();
        }
        writeln!(s, "valid_pixels,{}", self.valid_pixels).unwrap();
        s
    }

    pub fn text(&self) -> String {
        let mut s = format!("MAE {:.6}\nRMSE {:.6}\n", self.mae, self.rmse);
        for (t, p) in &self.precision {
            writeln!(s, "Prec@{t} {:.2}%", 100.0 * p).unwrap();
        }
        writeln!(s, "valid pixels {}", self.valid_pixels).unwrap();
        s
    }
}
