use super::tensor::axis_split;
use super::{Real, Tape, Tensor, Var};
use crate::error::{bail_arg, bail_shape, Result};

pub const LAYER_NORM_EPS: Real = 1e-5;

impl Tape {
    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            bail_arg!("softmax: axis {axis} out of range for {shape:?}");
        }
        if shape.iter().product::<usize>() == 0 {
            bail_arg!("softmax of an empty tensor");
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let m = (0..n).map(|k| xd[at(k)]).fold(Real::NEG_INFINITY, Real::max);
                let mut z = 0.0;
                for k in 0..n {
                    let e = (xd[at(k)] - m).exp();
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..n {
                    out[at(k)] /= z;
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            vec![x],
            Box::new(move |a| {
                let (y, g) = (a.output.data(), a.grad);
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * n + k) * inner + i;
                        let dot: Real = (0..n).map(|k| g[at(k)] * y[at(k)]).sum();
                        for k in 0..n {
                            gx[at(k)] = y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        self.softmax(x, rank - 1)
    }

    /// Normalizes over `axis` (the channel axis) to zero mean and unit
    /// variance, then applies per-channel `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            bail_arg!("layer_norm: axis {axis} out of range for {shape:?}");
        }
        let (outer, c, inner) = axis_split(&shape, axis);
        if c == 0 {
            bail_arg!("layer_norm over an empty channel axis");
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            bail_shape!(
                "layer_norm: gamma {:?} / beta {:?} for {c} channels",
                self.shape(gamma),
                self.shape(beta)
            );
        }
        let xd = self.value(x).data();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * c + k) * inner + i;
                let (mean, rstd) = moments(|k| xd[at(k)], c);
                for k in 0..c {
                    out[at(k)] = gd[k] * (xd[at(k)] - mean) * rstd + bd[k];
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            vec![x, gamma, beta],
            Box::new(move |a| {
                let (xd, gd, g) = (a.inputs[0].data(), a.inputs[1].data(), a.grad);
                let mut gx = vec![0.0; xd.len()];
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                let mut xhat = vec![0.0; c];
                let mut gxhat = vec![0.0; c];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * c + k) * inner + i;
                        let (mean, rstd) = moments(|k| xd[at(k)], c);
                        for k in 0..c {
                            xhat[k] = (xd[at(k)] - mean) * rstd;
                            gxhat[k] = g[at(k)] * gd[k];
                            ggamma[k] += g[at(k)] * xhat[k];
                            gbeta[k] += g[at(k)];
                        }
                        let m1 = gxhat.iter().sum::<Real>() / c as Real;
                        let m2 = gxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<Real>() / c as Real;
                        for k in 0..c {
                            gx[at(k)] = rstd * (gxhat[k] - m1 - xhat[k] * m2);
                        }
                    }
                }
                vec![a.needs[0].then_some(gx), a.needs[1].then_some(ggamma), a.needs[2].then_some(gbeta)]
            }),
        ))
    }
}

/// Mean and reciprocal standard deviation (biased variance plus epsilon).
fn moments(at: impl Fn(usize) -> Real, c: usize) -> (Real, Real) {
    let mean = (0..c).map(&at).sum::<Real>() / c as Real;
    let var = (0..c).map(|k| (at(k) - mean).powi(2)).sum::<Real>() / c as Real;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn softmax_of(data: &[Real]) -> Vec<Real> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![data.len()], data.to_vec()).unwrap());
        let y = tape.softmax_lastdim(x).unwrap();
        tape.value(y).data().to_vec()
    }

    #[test]
    fn softmax_uniform() {
        for v in softmax_of(&[0.0, 0.0, 0.0]) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_of_logs_is_proportional() {
        let p = softmax_of(&[0.0, (2.0 as Real).ln(), (3.0 as Real).ln()]);
        for (v, e) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        assert_eq!(softmax_of(&[1000.0, 1000.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_empty_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![2, 0]));
        assert!(tape.softmax_lastdim(x).is_err());
    }

    fn ln_of(x: &[Real], gamma: Real, beta: Real) -> Vec<Real> {
        let c = x.len();
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![1, c], x.to_vec()).unwrap());
        let g = tape.constant(Tensor::full(vec![c], gamma));
        let b = tape.constant(Tensor::full(vec![c], beta));
        let y = tape.layer_norm(xv, g, b, 1).unwrap();
        tape.value(y).data().to_vec()
    }

    #[test]
    fn layer_norm_constant_channels_vanish() {
        assert_eq!(ln_of(&[5.0; 4], 1.0, 0.0), vec![0.0; 4]);
    }

    #[test]
    fn layer_norm_two_values() {
        let y = ln_of(&[1.0, 3.0], 1.0, 0.0);
        assert!((y[0] + 1.0).abs() < 1e-4 && (y[1] - 1.0).abs() < 1e-4, "{y:?}");
    }

    #[test]
    fn layer_norm_affine_collapse() {
        assert_eq!(ln_of(&[0.3, -2.0, 7.5], 0.0, 7.0), vec![7.0; 3]);
    }

    #[test]
    fn layer_norm_empty_channels_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![3, 0]));
        let g = tape.constant(Tensor::zeros(vec![0]));
        assert!(tape.layer_norm(x, g, g, 1).is_err());
    }
}
