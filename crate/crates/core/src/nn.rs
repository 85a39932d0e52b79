//! Parameterized layers built on the tape.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::numeric::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::Result;

pub type Rng64 = ChaCha8Rng;

/// Uniform in `[-bound, bound]` with `bound = gain / sqrt(fan_in)`.
pub fn uniform_init(rng: &mut Rng64, shape: Vec<usize>, fan_in: usize, gain: Real) -> Tensor {
    let bound = gain / (fan_in.max(1) as Real).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fin: usize, fout: usize, bias: bool, rng: &mut Rng64) -> Self {
        let weight = store.add(format!("{name}.weight"), uniform_init(rng, vec![fout, fin], fin, 1.0));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(vec![fout])));
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.linear(x, w, b)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        store.value_mut(self.weight).data_mut().fill(0.0);
        if let Some(b) = self.bias {
            store.value_mut(b).data_mut().fill(0.0);
        }
    }
}

/// 2-D convolution over `[C,H,W]` feature maps.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut Rng64,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let weight = store.add(
            format!("{name}.weight"),
            uniform_init(rng, vec![cout, cin, kernel, kernel], fan_in, 3f64.sqrt() as Real),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![cout]));
        Self { weight, bias, stride, pad: kernel / 2 }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv2d(x, w, b, self.stride, self.pad)
    }
}

/// 3-D convolution over `[C,D,H,W]` volumes.
#[derive(Clone, Debug)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv3d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut Rng64,
    ) -> Self {
        let fan_in = cin * kernel.pow(3);
        let weight = store.add(
            format!("{name}.weight"),
            uniform_init(rng, vec![cout, cin, kernel, kernel, kernel], fan_in, 3f64.sqrt() as Real),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![cout]));
        Self { weight, bias, stride, pad: kernel / 2 }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv3d(x, w, b, self.stride, self.pad)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        store.value_mut(self.weight).data_mut().fill(0.0);
        store.value_mut(self.bias).data_mut().fill(0.0);
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::ones(vec![channels]));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(vec![channels]));
        Self { gamma, beta }
    }

    /// Normalizes over `axis`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, axis: usize) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b, axis)
    }
}

/// Two-layer perceptron with a SiLU hidden activation, applied row-wise to `[L,C]`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut Rng64) -> Self {
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, true, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, x)?;
        let h = tape.silu(h);
        self.fc2.forward(tape, store, h)
    }

    /// Makes the output identically zero.
    pub fn zero_output(&self, store: &mut ParamStore) {
        self.fc2.zero(store);
    }
}

/// Nearest-neighbour resize of the trailing `out.len()` axes of `x`.
pub fn resize_nearest(tape: &mut Tape, x: Var, out: &[usize]) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let k = out.len();
    if k == 0 || k > shape.len() {
        crate::error::bail_shape!("resize_nearest: {out:?} for input {shape:?}");
    }
    let lead: usize = shape[..shape.len() - k].iter().product();
    let inn = &shape[shape.len() - k..];
    if inn == out {
        return Ok(x);
    }
    let in_n: usize = inn.iter().product();
    let out_n: usize = out.iter().product();
    let maps: Vec<Vec<usize>> = inn.iter().zip(out).map(|(&i, &o)| (0..o).map(|j| j * i / o).collect()).collect();
    let mut idx = Vec::with_capacity(lead * out_n);
    for l in 0..lead {
        for flat in 0..out_n {
            let (mut rem, mut src, mut stride) = (flat, 0, 1);
            for a in (0..k).rev() {
                let j = rem % out[a];
                rem /= out[a];
                src += maps[a][j] * stride;
                stride *= inn[a];
            }
            idx.push(l * in_n + src);
        }
    }
    let mut new_shape = shape[..shape.len() - k].to_vec();
    new_shape.extend_from_slice(out);
    tape.gather(x, idx.into(), new_shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_doubling() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 2, 2], vec![1., 2., 3., 4.]).unwrap());
        let y = resize_nearest(&mut tape, x, &[4, 4]).unwrap();
        assert_eq!(
            tape.value(y).data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
        let z = resize_nearest(&mut tape, y, &[2, 2]).unwrap();
        assert_eq!(tape.value(z).data(), &[1., 2., 3., 4.]);
    }
}
