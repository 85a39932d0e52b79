//! Four-scale feature pyramid with dynamic-scan enhancement at the coarse
//! end of the decoder.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dynscan::{DmModule, DynamicScan, Enhancer, SdmModule};
use crate::error::{bail_arg, Result};
use crate::nn::{resize_nearest, Conv2d, LayerNorm, Rng64};
use crate::numeric::{ParamStore, Tape, Var};
use crate::ssm::{InputRule, MambaConfig};

pub const NUM_SCALES: usize = 4;

/// Backbone hyperparameters. Scale 0 is the coarsest (`H/8`).
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub channels: [usize; NUM_SCALES],
    pub dm_scales: Vec<usize>,
    pub sdm_scales: Vec<usize>,
    pub use_dm: bool,
    pub use_mlp: bool,
    pub share_scan_weights: bool,
    pub d_state: usize,
    pub expand: usize,
    pub conv_kernel: usize,
    pub input_rule: InputRule,
    pub zigzag: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: [64, 32, 16, 8],
            dm_scales: vec![0],
            sdm_scales: vec![1],
            use_dm: true,
            use_mlp: true,
            share_scan_weights: false,
            d_state: 8,
            expand: 2,
            conv_kernel: 3,
            input_rule: InputRule::Euler,
            zigzag: false,
        }
    }
}

impl NetConfig {
    fn mamba(&self, s: usize) -> MambaConfig {
        MambaConfig {
            d_model: self.channels[s],
            d_state: self.d_state,
            expand: self.expand,
            conv_kernel: self.conv_kernel,
            input_rule: self.input_rule,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels.iter().any(|&c| c < 3) {
            bail_arg!("channel schedule {:?} needs at least 3 channels per scale", self.channels);
        }
        if let Some(s) = self.dm_scales.iter().chain(&self.sdm_scales).find(|&&s| s >= NUM_SCALES) {
            bail_arg!("enhancement scale {s} outside 0..{NUM_SCALES}");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ConvUnit {
    conv: Conv2d,
    norm: LayerNorm,
}

impl ConvUnit {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.conv.forward(tape, store, x)?;
        let y = self.norm.forward(tape, store, y, 0)?;
        Ok(tape.silu(y))
    }
}

/// Encoder, top-down decoder and the enhancement modules.
#[derive(Clone, Debug)]
pub struct FeatureNet {
    pub cfg: NetConfig,
    encoder: Vec<ConvUnit>,
    lateral: Vec<Conv2d>,
    reduce: Vec<Conv2d>,
    output: Vec<Conv2d>,
    pub dm: BTreeMap<usize, DmModule>,
    pub sdm: BTreeMap<usize, SdmModule>,
}

impl FeatureNet {
    pub fn new(store: &mut ParamStore, cfg: NetConfig, rng: &mut Rng64) -> Result<Self> {
        cfg.validate()?;
        let ch = cfg.channels;
        let mut encoder = Vec::with_capacity(2 * NUM_SCALES);
        let mut cin = 3;
        for (i, s) in (0..NUM_SCALES).rev().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            for (j, st) in [stride, 1].into_iter().enumerate() {
                let name = format!("enc{s}.{j}");
                encoder.push(ConvUnit {
                    conv: Conv2d::new(store, &name, cin, ch[s], 3, st, rng),
                    norm: LayerNorm::new(store, &format!("{name}.norm"), ch[s]),
                });
                cin = ch[s];
            }
        }
        let lateral = (0..NUM_SCALES).map(|s| Conv2d::new(store, &format!("lat{s}"), ch[s], ch[s], 1, 1, rng)).collect();
        let reduce =
            (1..NUM_SCALES).map(|s| Conv2d::new(store, &format!("red{s}"), ch[s - 1], ch[s], 1, 1, rng)).collect();
        let output = (0..NUM_SCALES).map(|s| Conv2d::new(store, &format!("out{s}"), ch[s], ch[s], 3, 1, rng)).collect();
        let strategy = Arc::new(DynamicScan::with_zigzag(cfg.zigzag));
        let mut dm = BTreeMap::new();
        if cfg.use_dm {
            for &s in &cfg.dm_scales {
                let e = Enhancer::new(store, &format!("dm{s}"), cfg.mamba(s), cfg.share_scan_weights, cfg.use_mlp, rng)?;
                dm.insert(s, DmModule::with_strategy(e, strategy.clone()));
            }
        }
        let mut sdm = BTreeMap::new();
        for &s in &cfg.sdm_scales {
            let e = Enhancer::new(store, &format!("sdm{s}"), cfg.mamba(s), cfg.share_scan_weights, cfg.use_mlp, rng)?;
            sdm.insert(s, SdmModule::with_strategy(e, strategy.clone()));
        }
        Ok(Self { cfg, encoder, lateral, reduce, output, dm, sdm })
    }

    /// Turns every enhancement module into an exact identity.
    pub fn make_enhancers_identity(&self, store: &mut ParamStore) {
        for m in self.dm.values() {
            m.enhancer.make_identity(store);
        }
        for m in self.sdm.values() {
            m.enhancer.make_identity(store);
        }
    }

    /// `image[3,H,W]` to encoder features indexed by scale.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, image: Var) -> Result<Vec<Var>> {
        let s = tape.shape(image).to_vec();
        if s.len() != 3 || s[0] != 3 || s[1] % 16 != 0 || s[2] % 16 != 0 || s[1] == 0 || s[2] == 0 {
            bail_arg!("image must be [3,H,W] with H, W positive multiples of 16, got {s:?}");
        }
        let mut feats = Vec::with_capacity(NUM_SCALES);
        let mut x = image;
        for pair in self.encoder.chunks(2) {
            x = pair[0].forward(tape, store, x)?;
            x = pair[1].forward(tape, store, x)?;
            feats.push(x);
        }
        feats.reverse();
        Ok(feats)
    }

    /// Top-down decoding of all views. `encs[v][s]`; view 0 is the reference.
    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, encs: &[Vec<Var>]) -> Result<Vec<Vec<Var>>> {
        if encs.len() < 2 {
            bail_arg!("decoding needs a reference and at least one source view, got {} views", encs.len());
        }
        let nv = encs.len();
        let mut inner: Vec<Option<Var>> = vec![None; nv];
        let mut out = vec![Vec::with_capacity(NUM_SCALES); nv];
        for s in 0..NUM_SCALES {
            let mut xs: Vec<Var> = encs.iter().map(|e| e[s]).collect();
            if let Some(dm) = self.dm.get(&s) {
                let (r, srcs) = dm.forward(tape, store, xs[0], &xs[1..])?;
                xs = std::iter::once(r).chain(srcs).collect();
            }
            for v in 0..nv {
                let mut x = self.lateral[s].forward(tape, store, xs[v])?;
                if let Some(prev) = inner[v] {
                    let up = self.reduce[s - 1].forward(tape, store, prev)?;
                    let dims = tape.shape(x)[1..].to_vec();
                    let up = resize_nearest(tape, up, &dims)?;
                    x = tape.add(x, up)?;
                }
                inner[v] = Some(x);
                if let Some(sdm) = self.sdm.get(&s) {
                    x = sdm.forward(tape, store, x)?;
                }
                out[v].push(self.output[s].forward(tape, store, x)?);
            }
        }
        Ok(out)
    }

    /// Decoder features `[view][scale]` for a list of `[3,H,W]` images.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, images: &[Var]) -> Result<Vec<Vec<Var>>> {
        let encs = images.iter().map(|&im| self.encode(tape, store, im)).collect::<Result<Vec<_>>>()?;
        self.decode(tape, store, &encs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;
    use rand::SeedableRng;

    fn net(cfg: NetConfig) -> (ParamStore, FeatureNet) {
        let mut store = ParamStore::new();
        let mut rng = Rng64::seed_from_u64(0);
        let n = FeatureNet::new(&mut store, cfg, &mut rng).unwrap();
        (store, n)
    }

    #[test]
    fn encoder_shapes() {
        let (store, n) = net(NetConfig::default());
        let mut tape = Tape::new();
        let im = tape.constant(Tensor::full(vec![3, 64, 64], 0.5));
        let f = n.encode(&mut tape, &store, im).unwrap();
        let shapes: Vec<_> = f.iter().map(|&v| tape.shape(v).to_vec()).collect();
        assert_eq!(shapes, vec![vec![64, 8, 8], vec![32, 16, 16], vec![16, 32, 32], vec![8, 64, 64]]);
    }

    #[test]
    fn zero_image_zero_features() {
        let (store, n) = net(NetConfig::default());
        let mut tape = Tape::new();
        let im = tape.constant(Tensor::zeros(vec![3, 32, 48]));
        for f in n.encode(&mut tape, &store, im).unwrap() {
            assert!(tape.value(f).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn indivisible_rejected() {
        let (store, n) = net(NetConfig::default());
        let mut tape = Tape::new();
        let im = tape.constant(Tensor::zeros(vec![3, 24, 32]));
        assert!(n.encode(&mut tape, &store, im).is_err());
    }

    #[test]
    fn single_view_rejected() {
        let (store, n) = net(NetConfig::default());
        let mut tape = Tape::new();
        let im = tape.constant(Tensor::zeros(vec![3, 16, 16]));
        assert!(n.forward(&mut tape, &store, &[im]).is_err());
    }

    #[test]
    fn ablation_wiring() {
        let (_, n) = net(NetConfig { use_dm: false, ..NetConfig::default() });
        assert!(n.dm.is_empty());
        assert_eq!(n.sdm.keys().copied().collect::<Vec<_>>(), vec![1]);
        let (_, n) = net(NetConfig::default());
        assert_eq!(n.dm.keys().copied().collect::<Vec<_>>(), vec![0]);
    }
}
