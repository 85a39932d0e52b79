use crate::error::{bail_arg, bail_shape, Result};
use crate::nn::{resize_nearest, Conv3d, Rng64};
use crate::numeric::{ParamStore, Real, Tape, Tensor, Var};

/// Channel-grouped correlation: `ref[C,H,W]`, `warped[C,D,H,W]` to
/// `[G,D,H,W]`, each group's dot product scaled by `G/C`.
pub fn group_correlation(tape: &mut Tape, reference: Var, warped: Var, groups: usize) -> Result<Var> {
    let (sr, sw) = (tape.shape(reference).to_vec(), tape.shape(warped).to_vec());
    if sr.len() != 3 || sw.len() != 4 || sw[0] != sr[0] || sw[2..] != sr[1..] {
        bail_shape!("correlation of reference {sr:?} with warped {sw:?}");
    }
    let (c, d, h, w) = (sw[0], sw[1], sw[2], sw[3]);
    if groups == 0 || c % groups != 0 {
        bail_arg!("{c} channels cannot be split into {groups} groups");
    }
    let r = tape.reshape(reference, vec![c, 1, h, w])?;
    let r = tape.expand(r, vec![c, d, h, w])?;
    let p = tape.mul(r, warped)?;
    let p = tape.reshape(p, vec![groups, c / groups, d, h, w])?;
    let s = tape.sum_axis(p, 1)?;
    Ok(tape.scale(s, groups as Real / c as Real))
}

pub const FUSION_MIN_WEIGHT: Real = 1e-6;

/// Per-view pixel weight: 1×1×1 conv over groups, max over depth, sigmoid.
pub fn view_weight(tape: &mut Tape, store: &ParamStore, head: &Conv3d, sim: Var) -> Result<Var> {
    let s = head.forward(tape, store, sim)?;
    let m = tape.max_axis(s, 1)?;
    Ok(tape.sigmoid(m))
}

/// `Σ wₖ·simₖ / max(Σ wₖ, 1e-6)` with weights `[1,H,W]`.
pub fn fuse_weighted(tape: &mut Tape, sims: &[Var], weights: &[Var]) -> Result<Var> {
    if sims.is_empty() || sims.len() != weights.len() {
        bail_arg!("fusion needs one weight per similarity volume, got {} and {}", sims.len(), weights.len());
    }
    let shape = tape.shape(sims[0]).to_vec();
    let mut total = weights[0];
    for &w in &weights[1..] {
        total = tape.add(total, w)?;
    }
    let total = tape.clamp_min(total, FUSION_MIN_WEIGHT);
    let mut acc: Option<Var> = None;
    for (&s, &w) in sims.iter().zip(weights) {
        if tape.shape(s) != shape.as_slice() {
            bail_shape!("similarity volumes differ in shape");
        }
        let a = tape.div(w, total)?;
        let a = tape.reshape(a, vec![1, 1, shape[2], shape[3]])?;
        let a = tape.expand(a, shape.clone())?;
        let t = tape.mul(a, s)?;
        acc = Some(match acc {
            None => t,
            Some(x) => tape.add(x, t)?,
        });
    }
    Ok(acc.expect("nonempty"))
}

/// Attention-weighted fusion of per-view similarity volumes `[G,D,H,W]`.
pub fn view_weight_fusion(tape: &mut Tape, store: &ParamStore, head: &Conv3d, sims: &[Var]) -> Result<Var> {
    let weights = sims.iter().map(|&s| view_weight(tape, store, head, s)).collect::<Result<Vec<_>>>()?;
    fuse_weighted(tape, sims, &weights)
}

/// Small 3-D U-Net mapping a `[G,D,H,W]` volume to depth logits `[D,H,W]`.
#[derive(Clone, Debug)]
pub struct Unet3d {
    stem: Conv3d,
    down1: Conv3d,
    conv1: Conv3d,
    down2: Conv3d,
    conv2: Conv3d,
    up2: Conv3d,
    up1: Conv3d,
    pub head: Conv3d,
}

impl Unet3d {
    pub fn new(store: &mut ParamStore, name: &str, groups: usize, base: usize, rng: &mut Rng64) -> Self {
        let (c0, c1, c2) = (base, 2 * base, 4 * base);
        let mut conv = |n: &str, i, o, s| Conv3d::new(store, &format!("{name}.{n}"), i, o, 3, s, rng);
        let net = Self {
            stem: conv("stem", groups, c0, 1),
            down1: conv("down1", c0, c1, 2),
            conv1: conv("conv1", c1, c1, 1),
            down2: conv("down2", c1, c2, 2),
            conv2: conv("conv2", c2, c2, 1),
            up2: conv("up2", c2, c1, 1),
            up1: conv("up1", c1, c0, 1),
            head: conv("head", c0, 1, 1),
        };
        net.head.zero(store);
        net
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, vol: Var) -> Result<Var> {
        let s = tape.shape(vol).to_vec();
        if s.len() != 4 {
            bail_shape!("cost volume must be [G,D,H,W], got {s:?}");
        }
        let act = |tape: &mut Tape, c: &Conv3d, x: Var| -> Result<Var> {
            let y = c.forward(tape, store, x)?;
            Ok(tape.silu(y))
        };
        let x0 = act(tape, &self.stem, vol)?;
        let x1 = act(tape, &self.down1, x0)?;
        let x1 = act(tape, &self.conv1, x1)?;
        let x2 = act(tape, &self.down2, x1)?;
        let x2 = act(tape, &self.conv2, x2)?;
        let u = act(tape, &self.up2, x2)?;
        let dims = tape.shape(x1)[1..].to_vec();
        let u = resize_nearest(tape, u, &dims)?;
        let u = tape.add(u, x1)?;
        let u = act(tape, &self.up1, u)?;
        let dims = tape.shape(x0)[1..].to_vec();
        let u = resize_nearest(tape, u, &dims)?;
        let u = tape.add(u, x0)?;
        let logits = self.head.forward(tape, store, u)?;
        tape.reshape(logits, vec![s[1], s[2], s[3]])
    }
}

/// Probability volume `[D,H,W]` from a fused volume.
pub fn regularize(tape: &mut Tape, store: &ParamStore, unet: &Unet3d, fused: Var) -> Result<Var> {
    if tape.shape(fused).get(1).is_none_or(|&d| d < 2) {
        bail_arg!("regularization needs at least two hypotheses");
    }
    let logits = unet.forward(tape, store, fused)?;
    tape.softmax(logits, 0)
}

/// Winner-take-all depth and confidence `[H,W]`; ties go to the smaller index.
pub fn wta_depth(prob: &Tensor, hyps: &Tensor) -> Result<(Tensor, Tensor)> {
    let s = prob.shape();
    if s.len() != 3 || hyps.shape() != s {
        bail_shape!("probability {s:?} and hypotheses {:?} must be equal [D,H,W]", hyps.shape());
    }
    let (d, hw) = (s[0], s[1] * s[2]);
    let mut depth = vec![0.0; hw];
    let mut conf = vec![0.0; hw];
    for p in 0..hw {
        let mut best = 0;
        for i in 1..d {
            if prob.data()[i * hw + p] > prob.data()[best * hw + p] {
                best = i;
            }
        }
        depth[p] = hyps.data()[best * hw + p];
        conf[p] = prob.data()[best * hw + p];
    }
    Ok((Tensor::new(vec![s[1], s[2]], depth)?, Tensor::new(vec![s[1], s[2]], conf)?))
}

/// Default-initialized fusion head for `groups` channels.
pub fn fusion_head(store: &mut ParamStore, name: &str, groups: usize, rng: &mut Rng64) -> Conv3d {
    Conv3d::new(store, name, groups, 1, 1, 1, rng)
}
