//! Elementwise, reduction, linear-algebra and indexing operations.

use std::rc::Rc;

use super::tensor::axis_split;
use super::{BackwardArgs, Real, Tape, Tensor, Var};
use crate::error::{bail_arg, bail_shape, Result};

type Unary = fn(Real) -> Real;
/// Local derivative given (input, output).
type UnaryGrad = fn(Real, Real) -> Real;

fn softplus(x: Real) -> Real {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    fn unary(&mut self, x: Var, f: Unary, df: UnaryGrad) -> Var {
        let xv = self.value(x);
        let out = Tensor::from_parts(xv.shape().to_vec(), xv.data().iter().map(|&v| f(v)).collect());
        self.push(
            out,
            vec![x],
            Box::new(move |a: &BackwardArgs| {
                let g = a.inputs[0]
                    .data()
                    .iter()
                    .zip(a.output.data())
                    .zip(a.grad)
                    .map(|((&x, &y), &g)| g * df(x, y))
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, |_, _| -1.0)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Real::exp, |_, y| y)
    }

    /// Natural logarithm. Inputs must be positive.
    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Real::ln, |x, _| 1.0 / x)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, Real::sin, |x, _| x.cos())
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Real::abs, |x, _| if x >= 0.0 { 1.0 } else { -1.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (1.0 - y))
    }

    /// x * sigmoid(x)
    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v * sigmoid(v),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, |x, _| sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, c: Real) -> Var {
        let xv = self.value(x);
        let out = xv.map(|v| v * c);
        self.push(out, vec![x], Box::new(move |a| vec![Some(a.grad.iter().map(|g| g * c).collect())]))
    }

    pub fn add_scalar(&mut self, x: Var, c: Real) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.push(out, vec![x], Box::new(|a| vec![Some(a.grad.to_vec())]))
    }

    /// max(x, lo); the gradient passes only where x > lo.
    pub fn clamp_min(&mut self, x: Var, lo: Real) -> Var {
        let out = self.value(x).map(|v| v.max(lo));
        self.push(
            out,
            vec![x],
            Box::new(move |a| {
                let g = a.inputs[0]
                    .data()
                    .iter()
                    .zip(a.grad)
                    .map(|(&x, &g)| if x > lo { g } else { 0.0 })
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    fn check_same(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            bail_shape!("{op}: {:?} vs {:?}", self.shape(a), self.shape(b));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, f: fn(Real, Real) -> Real) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_parts(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let out = self.binary(a, b, |x, y| x + y);
        Ok(self.push(
            out,
            vec![a, b],
            Box::new(|a| {
                let g = a.grad.to_vec();
                vec![a.needs[0].then(|| g.clone()), a.needs[1].then_some(g)]
            }),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "sub")?;
        let out = self.binary(a, b, |x, y| x - y);
        Ok(self.push(
            out,
            vec![a, b],
            Box::new(|a| {
                vec![
                    a.needs[0].then(|| a.grad.to_vec()),
                    a.needs[1].then(|| a.grad.iter().map(|g| -g).collect()),
                ]
            }),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let out = self.binary(a, b, |x, y| x * y);
        Ok(self.push(
            out,
            vec![a, b],
            Box::new(|a| {
                let (x, y) = (a.inputs[0].data(), a.inputs[1].data());
                vec![
                    a.needs[0].then(|| a.grad.iter().zip(y).map(|(g, y)| g * y).collect()),
                    a.needs[1].then(|| a.grad.iter().zip(x).map(|(g, x)| g * x).collect()),
                ]
            }),
        ))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "div")?;
        let out = self.binary(a, b, |x, y| x / y);
        Ok(self.push(
            out,
            vec![a, b],
            Box::new(|a| {
                let (y, q) = (a.inputs[1].data(), a.output.data());
                vec![
                    a.needs[0].then(|| a.grad.iter().zip(y).map(|(g, y)| g / y).collect()),
                    a.needs[1]
                        .then(|| a.grad.iter().zip(y).zip(q).map(|((g, y), q)| -g * q / y).collect()),
                ]
            }),
        ))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor::scalar(xv.sum());
        let n = xv.numel();
        self.push(out, vec![x], Box::new(move |a| vec![Some(vec![a.grad[0]; n])]))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as Real)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            bail_arg!("sum_axis: axis {axis} out of range for {shape:?}");
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &xd[(o * n + k) * inner..(o * n + k + 1) * inner];
                out[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok(self.push(
            Tensor::from_parts(out_shape, out),
            vec![x],
            Box::new(move |a| {
                let mut g = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let src = &a.grad[o * inner..(o + 1) * inner];
                    for k in 0..n {
                        g[(o * n + k) * inner..(o * n + k + 1) * inner].copy_from_slice(src);
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    /// Maximum along `axis` (removed from the shape). The gradient goes to
    /// the first maximal entry.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            bail_arg!("max_axis: bad axis {axis} for {shape:?}");
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let xd = self.value(x).data();
        let mut out = vec![Real::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                for i in 0..inner {
                    let v = xd[(o * n + k) * inner + i];
                    let slot = o * inner + i;
                    if v > out[slot] {
                        out[slot] = v;
                        arg[slot] = k;
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok(self.push(
            Tensor::from_parts(out_shape, out),
            vec![x],
            Box::new(move |a| {
                let mut g = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let slot = o * inner + i;
                        g[(o * n + arg[slot]) * inner + i] = a.grad[slot];
                    }
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, vec![x], Box::new(|a| vec![Some(a.grad.to_vec())])))
    }

    /// `out[i] = x[indices[i]]`. The backward pass scatter-adds.
    pub fn gather(&mut self, x: Var, indices: Rc<[usize]>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != indices.len() {
            bail_shape!("gather: {} indices for output shape {:?}", indices.len(), shape);
        }
        let xd = self.value(x).data();
        let n = xd.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            bail_arg!("gather: index {bad} out of range {n}");
        }
        let out = indices.iter().map(|&i| xd[i]).collect();
        Ok(self.push(
            Tensor::from_parts(shape, out),
            vec![x],
            Box::new(move |a| {
                let mut g = vec![0.0; n];
                for (&i, &v) in indices.iter().zip(a.grad) {
                    g[i] += v;
                }
                vec![Some(g)]
            }),
        ))
    }

    /// `out[indices[i]] += x[i]` into a zero tensor of `shape`.
    pub fn scatter(&mut self, x: Var, indices: Rc<[usize]>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let xd = self.value(x).data();
        if xd.len() != indices.len() {
            bail_shape!("scatter: {} values for {} indices", xd.len(), indices.len());
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            bail_arg!("scatter: index {bad} out of range {n}");
        }
        let mut out = vec![0.0; n];
        for (&i, &v) in indices.iter().zip(xd) {
            out[i] += v;
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            vec![x],
            Box::new(move |a| vec![Some(indices.iter().map(|&i| a.grad[i]).collect())]),
        ))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            bail_arg!("slice: [{start}, {}) out of range on axis {axis} of {shape:?}", start + len);
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let mut idx = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for k in start..start + len {
                idx.extend((0..inner).map(|i| (o * n + k) * inner + i));
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.gather(x, idx.into(), out_shape)
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            bail_arg!("permute: {perm:?} is not a permutation of rank {}", shape.len());
        }
        let in_strides = strides(&shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let strides_perm: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let idx = strided_indices(&out_shape, &strides_perm);
        self.gather(x, idx.into(), out_shape)
    }

    /// Numpy-style broadcast to `shape` (leading axes may be added, extent-1
    /// axes may be stretched). The backward pass sums the copies.
    pub fn expand(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let target = shape.into();
        let src = self.shape(x).to_vec();
        if src.len() > target.len() {
            bail_shape!("expand: cannot broadcast {src:?} to {target:?}");
        }
        let pad = target.len() - src.len();
        let src_strides = strides(&src);
        let mut bstrides = vec![0; target.len()];
        for (i, (&s, &st)) in src.iter().zip(&src_strides).enumerate() {
            let t = target[pad + i];
            if s == t {
                bstrides[pad + i] = st;
            } else if s != 1 {
                bail_shape!("expand: cannot broadcast {src:?} to {target:?}");
            }
        }
        let idx = strided_indices(&target, &bstrides);
        self.gather(x, idx.into(), target)
    }

    /// Concatenation along `axis`.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else { bail_arg!("concat of nothing") };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            bail_arg!("concat: axis {axis} out of range for {base:?}");
        }
        let mut extents = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                bail_shape!("concat: {:?} vs {:?} on axis {axis}", s, base);
            }
            extents.push(s[axis]);
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let total: usize = extents.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&x, &n) in xs.iter().zip(&extents) {
                let d = self.value(x).data();
                out.extend_from_slice(&d[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut out_shape = base;
        out_shape[axis] = total;
        Ok(self.push(
            Tensor::from_parts(out_shape, out),
            xs.to_vec(),
            Box::new(move |a| {
                let mut grads: Vec<Vec<Real>> =
                    extents.iter().map(|&n| Vec::with_capacity(outer * n * inner)).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (g, &n) in grads.iter_mut().zip(&extents) {
                        g.extend_from_slice(&a.grad[pos..pos + n * inner]);
                        pos += n * inner;
                    }
                }
                grads.into_iter().zip(a.needs).map(|(g, &need)| need.then_some(g)).collect()
            }),
        ))
    }

    /// Matrix product of `[m,k]` and `[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            bail_shape!("matmul: {sa:?} x {sb:?}");
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            vec![a, b],
            Box::new(move |args| {
                let (ad, bd, g) = (args.inputs[0].data(), args.inputs[1].data(), args.grad);
                let ga = args.needs[0].then(|| {
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for p in 0..k {
                                ga[i * k + p] += gij * bd[p * n + j];
                            }
                        }
                    }
                    ga
                });
                let gb = args.needs[1].then(|| {
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            let row = &mut gb[p * n..(p + 1) * n];
                            row.iter_mut().zip(&g[i * n..(i + 1) * n]).for_each(|(r, g)| *r += aip * g);
                        }
                    }
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Affine map over the last axis: `x[L,in] · w[out,in]ᵀ + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            bail_shape!("linear: input {sx:?} with weight {sw:?}");
        }
        let (rows, fin, fout) = (sx[0], sx[1], sw[0]);
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                bail_shape!("linear: bias {:?} for {fout} outputs", self.shape(b));
            }
        }
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        let bd = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; rows * fout];
        for r in 0..rows {
            let xr = &xd[r * fin..(r + 1) * fin];
            for o in 0..fout {
                let wr = &wd[o * fin..(o + 1) * fin];
                let dot: Real = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
                out[r * fout + o] = dot + bd.map_or(0.0, |b| b[o]);
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(
            Tensor::from_parts(vec![rows, fout], out),
            inputs,
            Box::new(move |a| {
                let (xd, wd, g) = (a.inputs[0].data(), a.inputs[1].data(), a.grad);
                let gx = a.needs[0].then(|| {
                    let mut gx = vec![0.0; rows * fin];
                    for r in 0..rows {
                        let gxr = &mut gx[r * fin..(r + 1) * fin];
                        for o in 0..fout {
                            let go = g[r * fout + o];
                            if go != 0.0 {
                                gxr.iter_mut().zip(&wd[o * fin..(o + 1) * fin]).for_each(|(a, w)| *a += go * w);
                            }
                        }
                    }
                    gx
                });
                let gw = a.needs[1].then(|| {
                    let mut gw = vec![0.0; fout * fin];
                    for r in 0..rows {
                        let xr = &xd[r * fin..(r + 1) * fin];
                        for o in 0..fout {
                            let go = g[r * fout + o];
                            if go != 0.0 {
                                gw[o * fin..(o + 1) * fin].iter_mut().zip(xr).for_each(|(a, x)| *a += go * x);
                            }
                        }
                    }
                    gw
                });
                let mut res = vec![gx, gw];
                if a.inputs.len() == 3 {
                    res.push(a.needs[2].then(|| {
                        let mut gb = vec![0.0; fout];
                        for r in 0..rows {
                            gb.iter_mut().zip(&g[r * fout..(r + 1) * fout]).for_each(|(a, g)| *a += g);
                        }
                        gb
                    }));
                }
                res
            }),
        ))
    }
}

pub(crate) fn matmul_raw(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            row.iter_mut().zip(&b[p * n..(p + 1) * n]).for_each(|(o, b)| *o += aip * b);
        }
    }
    out
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Flat source index for every position of `shape` under `strides`.
fn strided_indices(shape: &[usize], strides: &[usize]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let mut idx = Vec::with_capacity(n);
    let mut counter = vec![0usize; shape.len()];
    for _ in 0..n {
        idx.push(counter.iter().zip(strides).map(|(c, s)| c * s).sum());
        for ax in (0..shape.len()).rev() {
            counter[ax] += 1;
            if counter[ax] < shape[ax] {
                break;
            }
            counter[ax] = 0;
        }
    }
    idx
}
