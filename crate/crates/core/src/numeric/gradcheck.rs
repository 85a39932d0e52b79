//! Central-difference gradient oracle.

use super::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Relative disagreement between an analytic and a numerical derivative.
pub fn relative_error(analytic: Real, numeric: Real) -> Real {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_scalar(tape: &Tape, out: Var) -> Result<Real> {
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(Error::Argument(format!("gradient check needs a scalar function, got {:?}", v.shape())));
    }
    let y = v.data()[0];
    if !y.is_finite() {
        return Err(Error::Oracle(format!("function value {y} is not finite")));
    }
    Ok(y)
}

/// Compares the tape gradient of a scalar function `f` at `x` against
/// central differences; returns the maximum relative error over coordinates.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: Real) -> Result<Real>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    eval_scalar(&tape, out)?;
    tape.backward(out)?;
    let analytic = tape.grad_tensor(xv);

    let probe = |shifted: Tensor| -> Result<Real> {
        let mut t = Tape::new();
        let v = t.leaf(shifted);
        let o = f(&mut t, v)?;
        eval_scalar(&t, o)
    };
    let mut worst: Real = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (probe(plus)? - probe(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Same oracle over selected scalar entries `(param, flat index)` of a
/// parameter store; `f` builds the loss from the store.
pub fn finite_diff_check_params<F>(f: F, store: &ParamStore, probes: &[(ParamId, usize)], eps: Real) -> Result<Real>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    eval_scalar(&tape, out)?;
    tape.backward(out)?;
    let mut grads = store.clone();
    grads.zero_grad();
    tape.accumulate_param_grads(&mut grads);

    let mut scratch = store.clone();
    let mut worst: Real = 0.0;
    for &(id, i) in probes {
        let base = store.value(id).data()[i];
        let mut eval_at = |v: Real| -> Result<Real> {
            scratch.value_mut(id).data_mut()[i] = v;
            let mut t = Tape::new();
            let o = f(&mut t, &scratch)?;
            eval_scalar(&t, o)
        };
        let numeric = (eval_at(base + eps)? - eval_at(base - eps)?) / (2.0 * eps);
        scratch.value_mut(id).data_mut()[i] = base;
        worst = worst.max(relative_error(grads.grad(id).data()[i], numeric));
    }
    Ok(worst)
}

/// Every scalar entry of every parameter, for exhaustive checks.
pub fn all_probes(store: &ParamStore) -> Vec<(ParamId, usize)> {
    store.iter().flat_map(|(id, p)| (0..p.value.numel()).map(move |i| (id, i))).collect()
}
