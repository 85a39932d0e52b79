use rand::SeedableRng;

use super::{
    base_step, downsample_nearest, fusion_head, group_correlation, homography_warp, local_hypotheses, regularize,
    scale_loss, uniform_inverse, view_weight_fusion, wta_depth, CameraView, LossKind, ScaleLoss, Unet3d,
};
use crate::error::{bail_arg, bail_shape, Result};
use crate::network::{FeatureNet, NetConfig, NUM_SCALES};
use crate::nn::{Conv3d, Rng64};
use crate::numeric::{ParamStore, Real, Tape, Tensor, Var};

/// Per-scale cost-volume settings, coarsest first.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeConfig {
    pub depths: [usize; NUM_SCALES],
    pub intervals: [Real; NUM_SCALES],
    pub groups: [usize; NUM_SCALES],
    pub unet_base: usize,
    pub loss: LossKind,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self { depths: [32, 16, 8, 4], intervals: [2.0, 1.0, 1.0, 0.5], groups: [4, 4, 4, 4], unet_base: 8, loss: LossKind::CrossEntropy }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelConfig {
    pub net: NetConfig,
    pub cascade: CascadeConfig,
}

/// Feature network plus one fusion head and regularizer per scale.
#[derive(Clone, Debug)]
pub struct MvsModel {
    pub cfg: ModelConfig,
    pub features: FeatureNet,
    pub fusion: Vec<Conv3d>,
    pub regularizers: Vec<Unet3d>,
}

impl MvsModel {
    pub fn new(store: &mut ParamStore, cfg: ModelConfig, seed: u64) -> Result<Self> {
        let c = &cfg.cascade;
        if c.depths[0] < 2 || c.depths.contains(&0) {
            bail_arg!("hypothesis counts {:?} must be positive with at least 2 at the coarsest scale", c.depths);
        }
        for s in 0..NUM_SCALES {
            if c.groups[s] == 0 || cfg.net.channels[s] % c.groups[s] != 0 {
                bail_arg!("scale {s}: {} channels not divisible into {} groups", cfg.net.channels[s], c.groups[s]);
            }
            if !(c.intervals[s] > 0.0) {
                bail_arg!("scale {s}: interval scale must be positive");
            }
        }
        let mut rng = Rng64::seed_from_u64(seed);
        let features = FeatureNet::new(store, cfg.net.clone(), &mut rng)?;
        let fusion = (0..NUM_SCALES).map(|s| fusion_head(store, &format!("fuse{s}"), c.groups[s], &mut rng)).collect();
        let regularizers =
            (0..NUM_SCALES).map(|s| Unet3d::new(store, &format!("reg{s}"), c.groups[s], c.unet_base, &mut rng)).collect();
        Ok(Self { cfg, features, fusion, regularizers })
    }
}

/// Outputs of one cascade scale.
#[derive(Clone, Debug)]
pub struct ScaleState {
    /// `[D,H,W]`
    pub hyps: Tensor,
    /// `[D,H,W]`
    pub prob: Var,
    /// `[H,W]`
    pub depth: Tensor,
    /// `[H,W]`
    pub confidence: Tensor,
}

#[derive(Clone, Debug)]
pub struct CascadeState {
    pub scales: Vec<ScaleState>,
    /// Decoder features `[view][scale]`.
    pub features: Vec<Vec<Var>>,
}

impl CascadeState {
    pub fn finest(&self) -> &ScaleState {
        self.scales.last().expect("at least one scale")
    }
}

/// Bilinear ×2 upsampling where output pixel `i` reads input coordinate `i/2`.
pub fn upsample_depth(depth: &Tensor) -> Tensor {
    let (h, w) = (depth.shape()[0], depth.shape()[1]);
    let d = depth.data();
    Tensor::from_fn(vec![2 * h, 2 * w], |i| {
        let (y, x) = ((i / (2 * w)) as Real / 2.0, (i % (2 * w)) as Real / 2.0);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (y - y0 as Real, x - x0 as Real);
        let top = d[y0 * w + x0] * (1.0 - fx) + d[y0 * w + x1] * fx;
        let bot = d[y1 * w + x0] * (1.0 - fx) + d[y1 * w + x1] * fx;
        top * (1.0 - fy) + bot * fy
    })
}

fn check_views(views: &[CameraView]) -> Result<(usize, usize)> {
    if views.len() < 2 {
        bail_arg!("cascade needs a reference and at least one source view");
    }
    let (h, w) = (views[0].height(), views[0].width());
    if h % 16 != 0 || w % 16 != 0 || h == 0 {
        bail_arg!("image extents {h}x{w} must be positive multiples of 16");
    }
    if let Some(v) = views.iter().find(|v| v.image.shape() != [3, h, w]) {
        bail_arg!("view image {:?} differs from reference [3,{h},{w}]", v.image.shape());
    }
    Ok((h, w))
}

/// Runs the first `num_scales` scales of the coarse-to-fine loop.
pub fn cascade_forward_scales(
    tape: &mut Tape,
    store: &ParamStore,
    model: &MvsModel,
    views: &[CameraView],
    num_scales: usize,
) -> Result<CascadeState> {
    check_views(views)?;
    let images: Vec<Var> = views.iter().map(|v| tape.constant(v.image.clone())).collect();
    let features = model.features.forward(tape, store, &images)?;
    cascade_from_features(tape, store, model, views, features, num_scales)
}

/// The depth loop on externally supplied per-view, per-scale features
/// (`features[v][s]` is `[C,H/2^(3-s),W/2^(3-s)]`); images are only used
/// for their extents.
pub fn cascade_from_features(
    tape: &mut Tape,
    store: &ParamStore,
    model: &MvsModel,
    views: &[CameraView],
    features: Vec<Vec<Var>>,
    num_scales: usize,
) -> Result<CascadeState> {
    let (h, w) = check_views(views)?;
    let c = &model.cfg.cascade;
    if features.len() != views.len() {
        bail_arg!("{} feature sets for {} views", features.len(), views.len());
    }
    for (v, fs) in features.iter().enumerate() {
        for s in 0..num_scales.min(NUM_SCALES) {
            let f = 1usize << (NUM_SCALES - 1 - s);
            match fs.get(s).map(|&x| tape.shape(x)) {
                Some([_, fh, fw]) if *fh == h / f && *fw == w / f => {}
                other => bail_shape!("view {v} scale {s}: feature {other:?}, expected [C,{},{}]", h / f, w / f),
            }
        }
    }
    let cam0 = &views[0].camera;
    let (dmin, dmax) = (cam0.depth_min as Real, cam0.depth_max as Real);
    let base = base_step(dmin, dmax, c.depths[0]);
    let mut scales: Vec<ScaleState> = Vec::with_capacity(num_scales);
    for s in 0..num_scales.min(NUM_SCALES) {
        let f = 1usize << (NUM_SCALES - 1 - s);
        let (hs, ws) = (h / f, w / f);
        let hyps = match scales.last() {
            None => {
                let u = uniform_inverse(dmin, dmax, c.depths[0])?;
                Tensor::from_fn(vec![u.len(), hs, ws], |i| u[i / (hs * ws)])
            }
            Some(prev) => local_hypotheses(&upsample_depth(&prev.depth), c.depths[s], c.intervals[s] * base, dmin, dmax)?,
        };
        let ref_cam = cam0.scaled(1.0 / f as f64);
        let mut sims = Vec::with_capacity(views.len() - 1);
        for (v, view) in views.iter().enumerate().skip(1) {
            let (warped, _) = homography_warp(tape, features[v][s], &ref_cam, &view.camera.scaled(1.0 / f as f64), &hyps)?;
            sims.push(group_correlation(tape, features[0][s], warped, c.groups[s])?);
        }
        let fused = view_weight_fusion(tape, store, &model.fusion[s], &sims)?;
        let prob = regularize(tape, store, &model.regularizers[s], fused)?;
        let (depth, confidence) = wta_depth(tape.value(prob), &hyps)?;
        scales.push(ScaleState { hyps, prob, depth, confidence });
    }
    Ok(CascadeState { scales, features })
}

pub fn cascade_forward(tape: &mut Tape, store: &ParamStore, model: &MvsModel, views: &[CameraView]) -> Result<CascadeState> {
    cascade_forward_scales(tape, store, model, views, NUM_SCALES)
}

/// Unweighted sum of per-scale losses against full-resolution ground truth.
pub fn cascade_loss(tape: &mut Tape, state: &CascadeState, gt: &Tensor, kind: LossKind) -> Result<(Var, Vec<ScaleLoss>)> {
    let n = state.scales.len();
    let mut parts = Vec::with_capacity(n);
    let mut total: Option<Var> = None;
    for sc in &state.scales {
        let f = gt.shape()[0] / sc.depth.shape()[0];
        let g = downsample_nearest(gt, f)?;
        let l = scale_loss(tape, kind, sc.prob, &g, &sc.hyps, None)?;
        total = Some(match total {
            None => l.loss,
            Some(t) => tape.add(t, l.loss)?,
        });
        parts.push(l);
    }
    match total {
        Some(t) => Ok((t, parts)),
        None => bail_arg!("no scales to supervise"),
    }
}
