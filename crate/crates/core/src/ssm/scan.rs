//! Discretization and the two evaluation routes of the diagonal SSM:
//! the sequential recurrence and the causal kernel convolution.

use crate::error::{bail_arg, bail_shape, Result};
use crate::numeric::{Real, Tape, Tensor, Var};

/// How the input matrix is discretized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InputRule {
    /// `Bbar = Δ·B`.
    #[default]
    Euler,
    /// `Bbar = (exp(ΔA) − 1)/A · B`, the exact zero-order hold.
    ZeroOrderHold,
}

impl InputRule {
    /// Input coefficient and its partials with respect to Δ and A.
    #[inline]
    fn coef(self, delta: Real, a: Real, abar: Real) -> (Real, Real, Real) {
        match self {
            InputRule::Euler => (delta, 1.0, 0.0),
            InputRule::ZeroOrderHold => {
                let c = (abar - 1.0) / a;
                let dd = abar;
                let da = (delta * a * abar - (abar - 1.0)) / (a * a);
                (c, dd, da)
            }
        }
    }
}

/// Per-step inputs of a scan over width `E` with state size `N`.
#[derive(Clone, Debug)]
pub struct ScanInputs {
    /// `[L,E]`, strictly positive.
    pub delta: Tensor,
    /// `[E,N]`, strictly negative.
    pub a: Tensor,
    /// `[L,N]`
    pub b: Tensor,
    /// `[L,N]`
    pub c: Tensor,
    /// `[E]`
    pub d_skip: Tensor,
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    l: usize,
    e: usize,
    n: usize,
}

fn dims(x: &[usize], delta: &[usize], a: &[usize], b: &[usize], c: &[usize], d: &[usize]) -> Result<Dims> {
    if x.len() != 2 || a.len() != 2 {
        bail_shape!("scan: x {x:?}, A {a:?}");
    }
    let (l, e, n) = (x[0], x[1], a[1]);
    if l == 0 {
        bail_arg!("scan over an empty sequence");
    }
    if delta != [l, e] || a != [e, n] || b != [l, n] || c != [l, n] || d != [e] {
        bail_shape!("scan: x {x:?}, delta {delta:?}, A {a:?}, B {b:?}, C {c:?}, D {d:?}");
    }
    if n == 0 || e == 0 {
        bail_arg!("scan needs positive width and state size");
    }
    Ok(Dims { l, e, n })
}

fn check_signs(delta: &[Real], a: &[Real]) -> Result<()> {
    if let Some(d) = delta.iter().find(|&&d| !(d > 0.0)) {
        bail_arg!("step size must be positive, got {d}");
    }
    if let Some(v) = a.iter().find(|&&v| !(v < 0.0)) {
        bail_arg!("state matrix must be strictly negative, got {v}");
    }
    Ok(())
}

/// `Abar = exp(Δ⊙A)` and `Bbar = coef(Δ,A)⊙B`, both `[L,E,N]`.
pub fn discretize(delta: &Tensor, a: &Tensor, b: &Tensor, rule: InputRule) -> Result<(Tensor, Tensor)> {
    let (sd, sa, sb) = (delta.shape(), a.shape(), b.shape());
    if sd.len() != 2 || sa.len() != 2 || sb.len() != 2 || sd[1] != sa[0] || sb[0] != sd[0] || sb[1] != sa[1] {
        bail_shape!("discretize: delta {sd:?}, A {sa:?}, B {sb:?}");
    }
    check_signs(delta.data(), a.data())?;
    let (l, e, n) = (sd[0], sd[1], sa[1]);
    let mut abar = Vec::with_capacity(l * e * n);
    let mut bbar = Vec::with_capacity(l * e * n);
    for t in 0..l {
        for ch in 0..e {
            let dt = delta.data()[t * e + ch];
            for s in 0..n {
                let av = a.data()[ch * n + s];
                let ab = (dt * av).exp();
                abar.push(ab);
                bbar.push(rule.coef(dt, av, ab).0 * b.data()[t * n + s]);
            }
        }
    }
    Ok((
        Tensor::new(vec![l, e, n], abar)?,
        Tensor::new(vec![l, e, n], bbar)?,
    ))
}

/// Output and hidden states of a recurrent scan.
#[derive(Clone, Debug)]
pub struct ScanTrace {
    /// `[L,E]`
    pub y: Tensor,
    /// `[L,E,N]`, the state after each step.
    pub h: Tensor,
}

fn run_scan(x: &[Real], delta: &[Real], a: &[Real], b: &[Real], c: &[Real], d: &[Real], dm: Dims, rule: InputRule) -> (Vec<Real>, Vec<Real>) {
    let Dims { l, e, n } = dm;
    let mut y = vec![0.0; l * e];
    let mut hs = vec![0.0; l * e * n];
    let mut h = vec![0.0; e * n];
    for t in 0..l {
        let (bt, ct) = (&b[t * n..(t + 1) * n], &c[t * n..(t + 1) * n]);
        for ch in 0..e {
            let xv = x[t * e + ch];
            let dt = delta[t * e + ch];
            let hrow = &mut h[ch * n..(ch + 1) * n];
            let arow = &a[ch * n..(ch + 1) * n];
            let mut acc = 0.0;
            for s in 0..n {
                let ab = (dt * arow[s]).exp();
                let coef = rule.coef(dt, arow[s], ab).0;
                hrow[s] = ab * hrow[s] + coef * bt[s] * xv;
                acc += ct[s] * hrow[s];
            }
            y[t * e + ch] = acc + d[ch] * xv;
        }
        hs[t * e * n..(t + 1) * e * n].copy_from_slice(&h);
    }
    (y, hs)
}

/// Sequential left-to-right evaluation from the zero state.
pub fn scan_recurrent(x: &Tensor, inp: &ScanInputs, rule: InputRule) -> Result<ScanTrace> {
    let dm = dims(x.shape(), inp.delta.shape(), inp.a.shape(), inp.b.shape(), inp.c.shape(), inp.d_skip.shape())?;
    check_signs(inp.delta.data(), inp.a.data())?;
    let (y, h) = run_scan(
        x.data(),
        inp.delta.data(),
        inp.a.data(),
        inp.b.data(),
        inp.c.data(),
        inp.d_skip.data(),
        dm,
        rule,
    );
    Ok(ScanTrace {
        y: Tensor::new(vec![dm.l, dm.e], y)?,
        h: Tensor::new(vec![dm.l, dm.e, dm.n], h)?,
    })
}

fn rows_constant(t: &Tensor) -> bool {
    let w = t.shape()[1];
    let first = &t.data()[..w];
    t.data().chunks(w).all(|row| row == first)
}

/// Kernel taps `K[τ,e] = Σ_n C[n]·Abar[e,n]^τ·Bbar[e,n]` for τ < L.
pub fn ssm_kernel(inp: &ScanInputs, len: usize, rule: InputRule) -> Result<Tensor> {
    let (e, n) = (inp.a.shape()[0], inp.a.shape()[1]);
    let (abar, bbar) = discretize(&inp.delta, &inp.a, &inp.b, rule)?;
    let (abar, bbar) = (&abar.data()[..e * n], &bbar.data()[..e * n]);
    let c = &inp.c.data()[..n];
    let mut k = vec![0.0; len * e];
    let mut power = vec![1.0; e * n];
    for tau in 0..len {
        for ch in 0..e {
            k[tau * e + ch] = (0..n).map(|s| c[s] * power[ch * n + s] * bbar[ch * n + s]).sum();
        }
        power.iter_mut().zip(abar).for_each(|(p, a)| *p *= a);
    }
    Tensor::new(vec![len, e], k)
}

/// Time-invariant evaluation as a causal convolution with the SSM kernel,
/// plus the direct `D⊙x` path. Errors if any per-step input varies in time.
pub fn kernel_convolve(x: &Tensor, inp: &ScanInputs, rule: InputRule) -> Result<Tensor> {
    let dm = dims(x.shape(), inp.delta.shape(), inp.a.shape(), inp.b.shape(), inp.c.shape(), inp.d_skip.shape())?;
    if !(rows_constant(&inp.delta) && rows_constant(&inp.b) && rows_constant(&inp.c)) {
        bail_arg!("kernel form requires time-invariant step size, B and C");
    }
    let Dims { l, e, .. } = dm;
    let k = ssm_kernel(inp, l, rule)?;
    let (xd, kd, dd) = (x.data(), k.data(), inp.d_skip.data());
    let y = Tensor::from_fn(vec![l, e], |i| {
        let (t, ch) = (i / e, i % e);
        let conv: Real = (0..=t).map(|tau| kd[tau * e + ch] * xd[(t - tau) * e + ch]).sum();
        conv + dd[ch] * xd[i]
    });
    Ok(y)
}

impl Tape {
    /// Fused selective scan: `x[L,E]`, `delta[L,E]`, `a[E,N]`, `b[L,N]`,
    /// `c[L,N]`, `d_skip[E]` to `y[L,E]`, differentiable in every input.
    #[allow(clippy::too_many_arguments)]
    pub fn selective_scan_raw(
        &mut self,
        x: Var,
        delta: Var,
        a: Var,
        b: Var,
        c: Var,
        d_skip: Var,
        rule: InputRule,
    ) -> Result<Var> {
        let dm = dims(
            self.shape(x),
            self.shape(delta),
            self.shape(a),
            self.shape(b),
            self.shape(c),
            self.shape(d_skip),
        )?;
        check_signs(self.value(delta).data(), self.value(a).data())?;
        let (y, hs) = run_scan(
            self.value(x).data(),
            self.value(delta).data(),
            self.value(a).data(),
            self.value(b).data(),
            self.value(c).data(),
            self.value(d_skip).data(),
            dm,
            rule,
        );
        let out = Tensor::new(vec![dm.l, dm.e], y)?;
        Ok(self.push(
            out,
            vec![x, delta, a, b, c, d_skip],
            Box::new(move |args| scan_backward(args.inputs, args.grad, &hs, dm, rule)),
        ))
    }
}

fn scan_backward(inputs: &[&Tensor], gy: &[Real], hs: &[Real], dm: Dims, rule: InputRule) -> Vec<Option<Vec<Real>>> {
    let Dims { l, e, n } = dm;
    let (x, delta, a, b, c, d) = (
        inputs[0].data(),
        inputs[1].data(),
        inputs[2].data(),
        inputs[3].data(),
        inputs[4].data(),
        inputs[5].data(),
    );
    let mut gx = vec![0.0; l * e];
    let mut gdelta = vec![0.0; l * e];
    let mut ga = vec![0.0; e * n];
    let mut gb = vec![0.0; l * n];
    let mut gc = vec![0.0; l * n];
    let mut gd = vec![0.0; e];
    // Adjoint of the hidden state carried backwards in time.
    let mut dh = vec![0.0; e * n];
    for t in (0..l).rev() {
        let h_t = &hs[t * e * n..(t + 1) * e * n];
        let h_prev = (t > 0).then(|| &hs[(t - 1) * e * n..t * e * n]);
        for ch in 0..e {
            let g = gy[t * e + ch];
            let xv = x[t * e + ch];
            let dt = delta[t * e + ch];
            gd[ch] += g * xv;
            gx[t * e + ch] += g * d[ch];
            for s in 0..n {
                let i = ch * n + s;
                gc[t * n + s] += g * h_t[i];
                dh[i] += c[t * n + s] * g;
                let av = a[i];
                let ab = (dt * av).exp();
                let (coef, dcoef_dd, dcoef_da) = rule.coef(dt, av, ab);
                let adj = dh[i];
                let hp = h_prev.map_or(0.0, |h| h[i]);
                // h_t = ab·h_{t−1} + coef·B·x
                let g_ab = adj * hp;
                let g_coef = adj * b[t * n + s] * xv;
                gb[t * n + s] += adj * coef * xv;
                gx[t * e + ch] += adj * coef * b[t * n + s];
                gdelta[t * e + ch] += g_ab * ab * av + g_coef * dcoef_dd;
                ga[i] += g_ab * ab * dt + g_coef * dcoef_da;
                dh[i] = adj * ab;
            }
        }
    }
    vec![Some(gx), Some(gdelta), Some(ga), Some(gb), Some(gc), Some(gd)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[Real]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn discretize_half_life() {
        let ln2 = (2.0 as Real).ln();
        let (abar, _) = discretize(&t(&[1, 1], &[ln2]), &t(&[1, 1], &[-1.0]), &t(&[1, 1], &[1.0]), InputRule::Euler).unwrap();
        assert!((abar.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn discretize_euler_input() {
        let (_, bbar) = discretize(&t(&[1, 1], &[0.1]), &t(&[1, 1], &[-3.0]), &t(&[1, 1], &[2.0]), InputRule::Euler).unwrap();
        assert!((bbar.data()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn discretize_small_step_freezes_state() {
        let (abar, bbar) =
            discretize(&t(&[1, 1], &[1e-12]), &t(&[1, 1], &[-2.0]), &t(&[1, 1], &[5.0]), InputRule::Euler).unwrap();
        assert!((abar.data()[0] - 1.0).abs() < 1e-10);
        assert!(bbar.data()[0].abs() < 1e-10);
    }

    #[test]
    fn discretize_rejects_nonpositive_step() {
        let r = discretize(&t(&[1, 1], &[0.0]), &t(&[1, 1], &[-1.0]), &t(&[1, 1], &[1.0]), InputRule::Euler);
        assert!(r.is_err());
    }

    #[test]
    fn kernel_taps_closed_form() {
        let inp = ScanInputs {
            delta: t(&[3, 1], &[1.0; 3]),
            a: t(&[1, 1], &[-1.0]),
            b: t(&[3, 1], &[1.0; 3]),
            c: t(&[3, 1], &[1.0; 3]),
            d_skip: t(&[1], &[0.0]),
        };
        let y = kernel_convolve(&t(&[3, 1], &[1.0, 0.0, 0.0]), &inp, InputRule::Euler).unwrap();
        let e = std::f64::consts::E as Real;
        for (v, want) in y.data().iter().zip([1.0, 1.0 / e, 1.0 / (e * e)]) {
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_rejects_time_varying_inputs() {
        let inp = ScanInputs {
            delta: t(&[2, 1], &[1.0, 0.5]),
            a: t(&[1, 1], &[-1.0]),
            b: t(&[2, 1], &[1.0; 2]),
            c: t(&[2, 1], &[1.0; 2]),
            d_skip: t(&[1], &[0.0]),
        };
        assert!(kernel_convolve(&t(&[2, 1], &[1.0, 0.0]), &inp, InputRule::Euler).is_err());
    }

    #[test]
    fn single_step_unrolls() {
        let inp = ScanInputs {
            delta: t(&[1, 2], &[0.3, 0.7]),
            a: t(&[2, 2], &[-1.0, -2.0, -0.5, -4.0]),
            b: t(&[1, 2], &[0.4, -1.1]),
            c: t(&[1, 2], &[2.0, 0.25]),
            d_skip: t(&[2], &[0.5, -1.0]),
        };
        let x = t(&[1, 2], &[1.5, -0.8]);
        let tr = scan_recurrent(&x, &inp, InputRule::Euler).unwrap();
        for ch in 0..2 {
            let dt = inp.delta.data()[ch];
            let expect: Real = (0..2).map(|s| inp.c.data()[s] * dt * inp.b.data()[s] * x.data()[ch]).sum::<Real>()
                + inp.d_skip.data()[ch] * x.data()[ch];
            assert!((tr.y.data()[ch] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let inp = ScanInputs {
            delta: Tensor::full(vec![4, 3], 0.2),
            a: Tensor::full(vec![3, 2], -1.0),
            b: Tensor::full(vec![4, 2], 0.7),
            c: Tensor::full(vec![4, 2], -0.3),
            d_skip: Tensor::ones(vec![3]),
        };
        let tr = scan_recurrent(&Tensor::zeros(vec![4, 3]), &inp, InputRule::ZeroOrderHold).unwrap();
        assert!(tr.y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_sequence_rejected() {
        let inp = ScanInputs {
            delta: Tensor::zeros(vec![0, 1]),
            a: Tensor::full(vec![1, 1], -1.0),
            b: Tensor::zeros(vec![0, 1]),
            c: Tensor::zeros(vec![0, 1]),
            d_skip: Tensor::ones(vec![1]),
        };
        assert!(scan_recurrent(&Tensor::zeros(vec![0, 1]), &inp, InputRule::Euler).is_err());
    }
}
