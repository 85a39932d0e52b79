//! Three-component PCA of feature maps for visualization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{bail_shape, Result};
use crate::numeric::{Real, Tensor};

pub const COMPONENTS: usize = 3;

/// Mean and up to three principal directions of a `[C,H,W]` feature map.
/// Missing directions (rank below 3) are zero rows.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `COMPONENTS × C`, ordered by decreasing variance.
    pub basis: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

fn dims(feat: &Tensor) -> Result<(usize, usize)> {
    let s = feat.shape();
    if s.len() != 3 || s[0] == 0 {
        bail_shape!("PCA expects [C,H,W], got {s:?}");
    }
    Ok((s[0], s[1] * s[2]))
}

impl Pca {
    pub fn fit(feat: &Tensor) -> Result<Self> {
        let (c, n) = dims(feat)?;
        let d = feat.data();
        let mean: Vec<f64> = (0..c).map(|ch| d[ch * n..(ch + 1) * n].iter().map(|&v| v as f64).sum::<f64>() / n as f64).collect();
        let centered = DMatrix::from_fn(c, n, |ch, p| d[ch * n + p] as f64 - mean[ch]);
        let cov = &centered * centered.transpose() / n.max(1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let tol = 1e-12 * eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
        let mut basis = Vec::with_capacity(COMPONENTS);
        let mut variances = Vec::with_capacity(COMPONENTS);
        for k in 0..COMPONENTS {
            match order.get(k).filter(|&&i| eig.eigenvalues[i] > tol) {
                Some(&i) => {
                    let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
                    let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                    if pivot < 0.0 {
                        v.iter_mut().for_each(|x| *x = -*x);
                    }
                    basis.push(v);
                    variances.push(eig.eigenvalues[i]);
                }
                None => {
                    basis.push(vec![0.0; c]);
                    variances.push(0.0);
                }
            }
        }
        Ok(Self { mean, basis, variances })
    }

    /// Coordinates `[3,H,W]` of `feat` in this basis.
    pub fn project(&self, feat: &Tensor) -> Result<Tensor> {
        let (c, n) = dims(feat)?;
        if c != self.mean.len() {
            bail_shape!("feature has {c} channels, basis has {}", self.mean.len());
        }
        let d = feat.data();
        let (h, w) = (feat.shape()[1], feat.shape()[2]);
        Ok(Tensor::from_fn(vec![COMPONENTS, h, w], |i| {
            let (k, p) = (i / n, i % n);
            (0..c).map(|ch| self.basis[k][ch] * (d[ch * n + p] as f64 - self.mean[ch])).sum::<f64>() as Real
        }))
    }

    /// Inverse of [`Pca::project`] restricted to the retained components.
    pub fn reconstruct(&self, coords: &Tensor) -> Result<Tensor> {
        let s = coords.shape();
        if s.len() != 3 || s[0] != COMPONENTS {
            bail_shape!("expected [3,H,W] coordinates, got {s:?}");
        }
        let (c, n) = (self.mean.len(), s[1] * s[2]);
        let d = coords.data();
        Ok(Tensor::from_fn(vec![c, s[1], s[2]], |i| {
            let (ch, p) = (i / n, i % n);
            (self.mean[ch] + (0..COMPONENTS).map(|k| self.basis[k][ch] * d[k * n + p] as f64).sum::<f64>()) as Real
        }))
    }
}

/// Maps projected coordinates to `[0,1]` RGB using per-component ranges
/// `(min, max)`; a degenerate range maps to mid-gray.
pub fn to_rgb(coords: &Tensor, ranges: &[(Real, Real); COMPONENTS]) -> Tensor {
    let n = coords.numel() / COMPONENTS;
    Tensor::from_fn(coords.shape().to_vec(), |i| {
        let (lo, hi) = ranges[i / n];
        if hi - lo > 1e-12 {
            ((coords.data()[i] - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    })
}

pub fn component_ranges(coords: &Tensor) -> [(Real, Real); COMPONENTS] {
    let n = coords.numel() / COMPONENTS;
    std::array::from_fn(|k| {
        coords.data()[k * n..(k + 1) * n].iter().fold((Real::INFINITY, Real::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    })
}
