//! Dense 2-D/3-D convolutions and the depthwise causal 1-D convolution.

use super::{Real, Tape, Tensor, Var};
use crate::error::{bail_arg, bail_shape, Result};

/// Geometry of a 3-D convolution; 2-D convolutions use a unit depth axis.
#[derive(Clone, Copy, Debug)]
struct Geom {
    cin: usize,
    cout: usize,
    input: [usize; 3],
    output: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
}

impl Geom {
    fn new(cin: usize, cout: usize, input: [usize; 3], kernel: [usize; 3], stride: [usize; 3], pad: [usize; 3]) -> Result<Self> {
        let mut output = [0; 3];
        for a in 0..3 {
            if stride[a] == 0 {
                bail_arg!("convolution stride must be positive");
            }
            let padded = input[a] + 2 * pad[a];
            if padded < kernel[a] {
                bail_shape!("kernel {:?} larger than padded input {:?}", kernel, input);
            }
            output[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Ok(Self { cin, cout, input, output, kernel, stride, pad })
    }

    fn in_len(&self) -> usize {
        self.cin * self.input.iter().product::<usize>()
    }

    fn out_len(&self) -> usize {
        self.cout * self.output.iter().product::<usize>()
    }

    fn w_len(&self) -> usize {
        self.cout * self.cin * self.kernel.iter().product::<usize>()
    }

    /// Output index range along one axis whose input coordinate is in bounds.
    fn valid(&self, axis: usize, k: usize) -> (usize, usize) {
        let (n, s, p, on) = (self.input[axis], self.stride[axis], self.pad[axis], self.output[axis]);
        let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
        let hi = if n + p > k { ((n + p - k - 1) / s + 1).min(on) } else { 0 };
        (lo, hi.max(lo))
    }

    /// Visits every (weight, input row, output row) triple with the valid
    /// output column range, which is where all three kernels spend their time.
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let [_, ih, iw] = self.input;
        let [od, oh, ow] = self.output;
        let [kd, kh, kw] = self.kernel;
        let [sd, sh, sw] = self.stride;
        let [pd, ph, pw] = self.pad;
        let id = self.input[0];
        for co in 0..self.cout {
            for ci in 0..self.cin {
                for kz in 0..kd {
                    let (z0, z1) = self.valid(0, kz);
                    for ky in 0..kh {
                        let (y0, y1) = self.valid(1, ky);
                        for kx in 0..kw {
                            let (x0, x1) = self.valid(2, kx);
                            if x0 >= x1 {
                                continue;
                            }
                            let wi = (((co * self.cin + ci) * kd + kz) * kh + ky) * kw + kx;
                            for oz in z0..z1 {
                                let iz = oz * sd + kz - pd;
                                for oy in y0..y1 {
                                    let iy = oy * sh + ky - ph;
                                    let in_row = ((ci * id + iz) * ih + iy) * iw;
                                    let out_row = ((co * od + oz) * oh + oy) * ow;
                                    let ix0 = x0 * sw + kx - pw;
                                    f(wi, in_row + ix0, out_row + x0, x1 - x0, sw, co);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward(g: &Geom, x: &[Real], w: &[Real], b: &[Real]) -> Vec<Real> {
    let plane: usize = g.output.iter().product();
    let mut out = vec![0.0; g.out_len()];
    for (co, chunk) in out.chunks_mut(plane).enumerate() {
        chunk.fill(b[co]);
    }
    g.for_each_row(|wi, xi, oi, n, s, _| {
        let wv = w[wi];
        let dst = &mut out[oi..oi + n];
        if s == 1 {
            dst.iter_mut().zip(&x[xi..xi + n]).for_each(|(o, x)| *o += wv * x);
        } else {
            for (j, o) in dst.iter_mut().enumerate() {
                *o += wv * x[xi + j * s];
            }
        }
    });
    out
}

fn conv_backward(g: &Geom, a: &super::BackwardArgs) -> Vec<Option<Vec<Real>>> {
    let (x, w, gout) = (a.inputs[0].data(), a.inputs[1].data(), a.grad);
    let gx = a.needs[0].then(|| {
        let mut gx = vec![0.0; g.in_len()];
        g.for_each_row(|wi, xi, oi, n, s, _| {
            let wv = w[wi];
            let src = &gout[oi..oi + n];
            if s == 1 {
                gx[xi..xi + n].iter_mut().zip(src).for_each(|(d, g)| *d += wv * g);
            } else {
                for (j, gv) in src.iter().enumerate() {
                    gx[xi + j * s] += wv * gv;
                }
            }
        });
        gx
    });
    let gw = a.needs[1].then(|| {
        let mut gw = vec![0.0; g.w_len()];
        g.for_each_row(|wi, xi, oi, n, s, _| {
            let src = &gout[oi..oi + n];
            let acc: Real = if s == 1 {
                src.iter().zip(&x[xi..xi + n]).map(|(g, x)| g * x).sum()
            } else {
                src.iter().enumerate().map(|(j, g)| g * x[xi + j * s]).sum()
            };
            gw[wi] += acc;
        });
        gw
    });
    let gb = a.needs[2].then(|| {
        let plane: usize = g.output.iter().product();
        gout.chunks(plane).map(|c| c.iter().sum()).collect()
    });
    vec![gx, gw, gb]
}

impl Tape {
    fn conv_generic(&mut self, x: Var, w: Var, b: Var, geom: Geom, out_shape: Vec<usize>) -> Result<Var> {
        if self.shape(b) != [geom.cout] {
            bail_shape!("conv bias {:?} for {} output channels", self.shape(b), geom.cout);
        }
        let out = conv_forward(&geom, self.value(x).data(), self.value(w).data(), self.value(b).data());
        Ok(self.push(
            Tensor::from_parts(out_shape, out),
            vec![x, w, b],
            Box::new(move |a| conv_backward(&geom, a)),
        ))
    }

    /// `x[Cin,H,W]` convolved with `w[Cout,Cin,kh,kw]` plus bias `b[Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 4 || sx[0] != sw[1] {
            bail_shape!("conv2d: input {sx:?} with weight {sw:?}");
        }
        let geom = Geom::new(sx[0], sw[0], [1, sx[1], sx[2]], [1, sw[2], sw[3]], [1, stride, stride], [0, pad, pad])?;
        let out_shape = vec![geom.cout, geom.output[1], geom.output[2]];
        self.conv_generic(x, w, b, geom, out_shape)
    }

    /// `x[Cin,D,H,W]` convolved with `w[Cout,Cin,k,k,k]` plus bias `b[Cout]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 5 || sx[0] != sw[1] {
            bail_shape!("conv3d: input {sx:?} with weight {sw:?}");
        }
        let geom = Geom::new(
            sx[0],
            sw[0],
            [sx[1], sx[2], sx[3]],
            [sw[2], sw[3], sw[4]],
            [stride; 3],
            [pad; 3],
        )?;
        let out_shape = vec![geom.cout, geom.output[0], geom.output[1], geom.output[2]];
        self.conv_generic(x, w, b, geom, out_shape)
    }

    /// Depthwise causal convolution over a sequence `x[L,E]` with per-channel
    /// taps `w[E,k]` and bias `b[E]`; step `t` sees inputs `t-k+1..=t`.
    pub fn conv1d_causal(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] || self.shape(b) != [sx[1]] {
            bail_shape!("conv1d_causal: input {sx:?}, weight {sw:?}, bias {:?}", self.shape(b));
        }
        let (l, e, k) = (sx[0], sx[1], sw[1]);
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; l * e];
        for t in 0..l {
            for c in 0..e {
                let mut acc = bd[c];
                for j in 0..k {
                    if let Some(src) = (t + j).checked_sub(k - 1) {
                        acc += wd[c * k + j] * xd[src * e + c];
                    }
                }
                out[t * e + c] = acc;
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![l, e], out),
            vec![x, w, b],
            Box::new(move |a| {
                let (xd, wd, g) = (a.inputs[0].data(), a.inputs[1].data(), a.grad);
                let mut gx = vec![0.0; l * e];
                let mut gw = vec![0.0; e * k];
                let mut gb = vec![0.0; e];
                for t in 0..l {
                    for c in 0..e {
                        let gv = g[t * e + c];
                        gb[c] += gv;
                        for j in 0..k {
                            if let Some(src) = (t + j).checked_sub(k - 1) {
                                gx[src * e + c] += wd[c * k + j] * gv;
                                gw[c * k + j] += xd[src * e + c] * gv;
                            }
                        }
                    }
                }
                vec![a.needs[0].then_some(gx), a.needs[1].then_some(gw), a.needs[2].then_some(gb)]
            }),
        ))
    }
}
