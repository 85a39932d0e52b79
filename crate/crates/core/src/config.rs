//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default and
//! unknown keys are rejected. [`RunConfig::to_text`] prints the effective
//! configuration in a form [`RunConfig::parse`] reads back unchanged.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mvs::{LossKind, ModelConfig};
use crate::network::NUM_SCALES;
use crate::numeric::Real;
use crate::ssm::InputRule;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: Real,
    pub iters: usize,
    pub seed: u64,
    /// Views per training sample (reference plus sources).
    pub views: usize,
    /// Reference views cycled through during training.
    pub refs: Vec<usize>,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, iters: 200, seed: 0, views: 3, refs: vec![0], beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Procedural scene parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub views: usize,
    pub seed: u64,
    /// Number of tilted planes, 1 to 3.
    pub planes: usize,
    pub sphere: bool,
    /// Angle between neighbouring cameras on the arc, in degrees.
    pub arc_step_deg: Real,
    /// Distance from the cameras to the arc center.
    pub arc_radius: Real,
    /// Focal length as a multiple of the image width.
    pub focal: Real,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 80,
            views: 3,
            seed: 0,
            planes: 2,
            sphere: true,
            arc_step_deg: 6.0,
            arc_radius: 5.0,
            focal: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub thresholds: Vec<Real>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { thresholds: vec![1.0, 2.0, 4.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct IoConfig {
    pub scene: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_one(key, s.trim())).collect()
}

fn parse_scales<T: FromStr + Copy>(key: &str, v: &str) -> Result<[T; NUM_SCALES]> {
    let items: Vec<T> = parse_list(key, v)?;
    items.try_into().map_err(|_| Error::Config(format!("{key}: expected {NUM_SCALES} comma-separated values")))
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

pub fn parse_loss_kind(v: &str) -> Result<LossKind> {
    match v {
        "ce" => Ok(LossKind::CrossEntropy),
        "l1" => Ok(LossKind::L1),
        _ => Err(Error::Config(format!("loss.kind: expected ce or l1, got {v:?}"))),
    }
}

fn loss_kind_text(k: LossKind) -> &'static str {
    match k {
        LossKind::CrossEntropy => "ce",
        LossKind::L1 => "l1",
    }
}

impl RunConfig {
    /// Effective configuration as `(key, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let n = &self.model.net;
        let c = &self.model.cascade;
        let t = &self.train;
        let s = &self.synth;
        vec![
            ("model.channels", join(&n.channels)),
            ("model.dm_scales", join(&n.dm_scales)),
            ("model.sdm_scales", join(&n.sdm_scales)),
            ("model.use_dm", n.use_dm.to_string()),
            ("model.use_mlp", n.use_mlp.to_string()),
            ("model.share_scan_weights", n.share_scan_weights.to_string()),
            ("model.d_state", n.d_state.to_string()),
            ("model.expand", n.expand.to_string()),
            ("model.conv_kernel", n.conv_kernel.to_string()),
            (
                "model.input_rule",
                match n.input_rule {
                    InputRule::Euler => "euler",
                    InputRule::ZeroOrderHold => "zoh",
                }
                .into(),
            ),
            ("scan.zigzag", n.zigzag.to_string()),
            ("cascade.depths", join(&c.depths)),
            ("cascade.intervals", join(&c.intervals)),
            ("cascade.groups", join(&c.groups)),
            ("cascade.unet_base", c.unet_base.to_string()),
            ("loss.kind", loss_kind_text(c.loss).into()),
            ("train.lr", t.lr.to_string()),
            ("train.iters", t.iters.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.views", t.views.to_string()),
            ("train.refs", join(&t.refs)),
            ("train.beta1", t.beta1.to_string()),
            ("train.beta2", t.beta2.to_string()),
            ("train.eps", t.eps.to_string()),
            ("synth.height", s.height.to_string()),
            ("synth.width", s.width.to_string()),
            ("synth.views", s.views.to_string()),
            ("synth.seed", s.seed.to_string()),
            ("synth.planes", s.planes.to_string()),
            ("synth.sphere", s.sphere.to_string()),
            ("synth.arc_step_deg", s.arc_step_deg.to_string()),
            ("synth.arc_radius", s.arc_radius.to_string()),
            ("synth.focal", s.focal.to_string()),
            ("eval.thresholds", join(&self.eval.thresholds)),
            ("io.scene", path_text(&self.io.scene)),
            ("io.checkpoint", path_text(&self.io.checkpoint)),
            ("io.out", path_text(&self.io.out)),
        ]
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        let n = &mut self.model.net;
        let c = &mut self.model.cascade;
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "model.channels" => n.channels = parse_scales(key, v)?,
            "model.dm_scales" => n.dm_scales = parse_list(key, v)?,
            "model.sdm_scales" => n.sdm_scales = parse_list(key, v)?,
            "model.use_dm" => n.use_dm = parse_bool(key, v)?,
            "model.use_mlp" => n.use_mlp = parse_bool(key, v)?,
            "model.share_scan_weights" => n.share_scan_weights = parse_bool(key, v)?,
            "model.d_state" => n.d_state = parse_one(key, v)?,
            "model.expand" => n.expand = parse_one(key, v)?,
            "model.conv_kernel" => n.conv_kernel = parse_one(key, v)?,
            "model.input_rule" => {
                n.input_rule = match v {
                    "euler" => InputRule::Euler,
                    "zoh" => InputRule::ZeroOrderHold,
                    _ => return Err(Error::Config(format!("{key}: expected euler or zoh, got {v:?}"))),
                }
            }
            "scan.zigzag" => n.zigzag = parse_bool(key, v)?,
            "cascade.depths" => c.depths = parse_scales(key, v)?,
            "cascade.intervals" => c.intervals = parse_scales(key, v)?,
            "cascade.groups" => c.groups = parse_scales(key, v)?,
            "cascade.unet_base" => c.unet_base = parse_one(key, v)?,
            "loss.kind" => c.loss = parse_loss_kind(v)?,
            "train.lr" => t.lr = parse_one(key, v)?,
            "train.iters" => t.iters = parse_one(key, v)?,
            "train.seed" => t.seed = parse_one(key, v)?,
            "train.views" => t.views = parse_one(key, v)?,
            "train.refs" => t.refs = parse_list(key, v)?,
            "train.beta1" => t.beta1 = parse_one(key, v)?,
            "train.beta2" => t.beta2 = parse_one(key, v)?,
            "train.eps" => t.eps = parse_one(key, v)?,
            "synth.height" => s.height = parse_one(key, v)?,
            "synth.width" => s.width = parse_one(key, v)?,
            "synth.views" => s.views = parse_one(key, v)?,
            "synth.seed" => s.seed = parse_one(key, v)?,
            "synth.planes" => s.planes = parse_one(key, v)?,
            "synth.sphere" => s.sphere = parse_bool(key, v)?,
            "synth.arc_step_deg" => s.arc_step_deg = parse_one(key, v)?,
            "synth.arc_radius" => s.arc_radius = parse_one(key, v)?,
            "synth.focal" => s.focal = parse_one(key, v)?,
            "eval.thresholds" => self.eval.thresholds = parse_list(key, v)?,
            "io.scene" => self.io.scene = opt_path(v),
            "io.checkpoint" => self.io.checkpoint = opt_path(v),
            "io.out" => self.io.out = opt_path(v),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", no + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", no + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Sets every seed key at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.synth.seed = seed;
    }
}
