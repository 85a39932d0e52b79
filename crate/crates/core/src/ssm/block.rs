use rand::Rng;

use super::InputRule;
use crate::error::{bail_arg, Result};
use crate::nn::{uniform_init, Linear, Rng64};
use crate::numeric::{ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Hyperparameters of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MambaConfig {
    pub d_model: usize,
    pub d_state: usize,
    pub expand: usize,
    pub conv_kernel: usize,
    pub input_rule: InputRule,
}

impl MambaConfig {
    pub fn new(d_model: usize) -> Self {
        Self { d_model, d_state: 8, expand: 2, conv_kernel: 3, input_rule: InputRule::Euler }
    }

    pub fn inner(&self) -> usize {
        self.expand * self.d_model
    }

    /// Rank of the low-rank step-size projection.
    pub fn dt_rank(&self) -> usize {
        self.d_model.div_ceil(16)
    }

    fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_state == 0 || self.expand == 0 || self.conv_kernel == 0 {
            bail_arg!("mamba config needs positive extents: {self:?}");
        }
        Ok(())
    }
}

/// Parameter handles of one block. The diagonal state matrix is stored as
/// `a_log` with `A = −exp(a_log)`.
#[derive(Clone, Debug)]
pub struct MambaBlock {
    pub cfg: MambaConfig,
    pub in_proj: Linear,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    pub dt_down: Linear,
    pub dt_up: Linear,
    pub b_proj: Linear,
    pub c_proj: Linear,
    pub a_log: ParamId,
    pub d_skip: ParamId,
    pub out_proj: Linear,
}

const DT_MIN: Real = 1e-3;
const DT_MAX: Real = 1e-1;

impl MambaBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: MambaConfig, rng: &mut Rng64) -> Result<Self> {
        cfg.validate()?;
        let (c, e, n, r, k) = (cfg.d_model, cfg.inner(), cfg.d_state, cfg.dt_rank(), cfg.conv_kernel);
        let in_proj = Linear::new(store, &format!("{name}.in_proj"), c, 2 * e, false, rng);
        let conv_w = store.add(format!("{name}.conv.weight"), uniform_init(rng, vec![e, k], k, 1.0));
        let conv_b = store.add(format!("{name}.conv.bias"), Tensor::zeros(vec![e]));
        let dt_down = Linear::new(store, &format!("{name}.dt_down"), e, r, false, rng);
        let dt_up = Linear::new(store, &format!("{name}.dt_up"), r, e, true, rng);
        // Softplus of the bias lands log-uniformly in [DT_MIN, DT_MAX].
        let bias = store.value_mut(dt_up.bias.expect("dt_up has a bias"));
        for v in bias.data_mut() {
            let u: Real = rng.gen();
            let dt = (DT_MIN.ln() + u * (DT_MAX.ln() - DT_MIN.ln())).exp();
            *v = dt + (-(-dt).exp_m1()).ln();
        }
        let b_proj = Linear::new(store, &format!("{name}.b_proj"), e, n, false, rng);
        let c_proj = Linear::new(store, &format!("{name}.c_proj"), e, n, false, rng);
        let a_log = store.add(
            format!("{name}.a_log"),
            Tensor::from_fn(vec![e, n], |i| ((i % n + 1) as Real).ln()),
        );
        let d_skip = store.add(format!("{name}.d_skip"), Tensor::ones(vec![e]));
        let out_proj = Linear::new(store, &format!("{name}.out_proj"), e, c, false, rng);
        Ok(Self { cfg, in_proj, conv_w, conv_b, dt_down, dt_up, b_proj, c_proj, a_log, d_skip, out_proj })
    }

    /// Zeroes the output projection, turning the block into the identity.
    pub fn zero_output(&self, store: &mut ParamStore) {
        self.out_proj.zero(store);
    }

    /// `seq[L,C]` to `seq + f(seq)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, seq: Var) -> Result<Var> {
        let shape = tape.shape(seq).to_vec();
        if shape.len() != 2 || shape[1] != self.cfg.d_model {
            bail_arg!("mamba block expects [L,{}], got {shape:?}", self.cfg.d_model);
        }
        let e = self.cfg.inner();
        let xz = self.in_proj.forward(tape, store, seq)?;
        let x = tape.slice(xz, 1, 0, e)?;
        let z = tape.slice(xz, 1, e, e)?;
        let w = tape.param(store, self.conv_w);
        let b = tape.param(store, self.conv_b);
        let x = tape.conv1d_causal(x, w, b)?;
        let x = tape.silu(x);
        let y = selective_scan(tape, store, self, x)?;
        let gate = tape.silu(z);
        let y = tape.mul(y, gate)?;
        let out = self.out_proj.forward(tape, store, y)?;
        tape.add(seq, out)
    }
}

/// Selective scan over the inner sequence `x[L,E]`, with step size, B and C
/// projected from `x` itself.
pub fn selective_scan(tape: &mut Tape, store: &ParamStore, block: &MambaBlock, x: Var) -> Result<Var> {
    let dt = block.dt_down.forward(tape, store, x)?;
    let dt = block.dt_up.forward(tape, store, dt)?;
    let delta = tape.softplus(dt);
    let b = block.b_proj.forward(tape, store, x)?;
    let c = block.c_proj.forward(tape, store, x)?;
    let a_log = tape.param(store, block.a_log);
    let a = tape.exp(a_log);
    let a = tape.neg(a);
    let d = tape.param(store, block.d_skip);
    tape.selective_scan_raw(x, delta, a, b, c, d, block.cfg.input_rule)
}
