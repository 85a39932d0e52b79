use std::sync::Arc;

use super::{inverse_scan, skip_scan, ArrangementKind, Direction, DynamicScan, Region, ScanStrategy};
use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::nn::{LayerNorm, Mlp, Rng64};
use crate::numeric::{ParamStore, Tape, Var};
use crate::ssm::{MambaBlock, MambaConfig};

/// One concatenated reference/source map with its region bookkeeping.
#[derive(Clone, Copy, Debug)]
pub struct Arrangement {
    pub kind: ArrangementKind,
    /// `[C,H',W']`
    pub map: Var,
    pub height: usize,
    pub width: usize,
    pub ref_region: Region,
    pub src_region: Region,
}

fn check_pair(tape: &Tape, reference: Var, source: Var) -> Result<(usize, usize, usize)> {
    let (sr, ss) = (tape.shape(reference), tape.shape(source));
    if sr != ss || sr.len() != 3 {
        bail_shape!("reference {sr:?} and source {ss:?} must be equal [C,h,w] maps");
    }
    let (c, h, w) = (sr[0], sr[1], sr[2]);
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        bail_arg!("feature extents {h}x{w} must be even and positive");
    }
    Ok((c, h, w))
}

/// The four arrangements of a pair, in `ArrangementKind::ALL` order.
pub fn arrange(tape: &mut Tape, reference: Var, source: Var) -> Result<[Arrangement; 4]> {
    let (_, h, w) = check_pair(tape, reference, source)?;
    let mut out = Vec::with_capacity(4);
    for kind in ArrangementKind::ALL {
        let ((height, width), ref_region, src_region) = kind.regions(h, w);
        let map = match kind {
            ArrangementKind::Hr => tape.concat(&[reference, source], 2)?,
            ArrangementKind::Hl => tape.concat(&[source, reference], 2)?,
            ArrangementKind::Vb => tape.concat(&[reference, source], 1)?,
            ArrangementKind::Vt => tape.concat(&[source, reference], 1)?,
        };
        out.push(Arrangement { kind, map, height, width, ref_region, src_region });
    }
    Ok(out.try_into().expect("four kinds"))
}

/// An arrangement-grid map holding one scattered parity class.
#[derive(Clone, Copy, Debug)]
pub struct ScannedMap {
    pub kind: ArrangementKind,
    pub start: (usize, usize),
    pub map: Var,
    pub ref_region: Region,
    pub src_region: Region,
}

fn check_partition(starts: &[(usize, usize)]) -> Result<()> {
    for (i, a) in starts.iter().enumerate() {
        if starts[..i].contains(a) {
            return Err(Error::Invariant(format!("parity collision: start {a:?} used twice in {starts:?}")));
        }
    }
    Ok(())
}

/// Sums each map's reference region and source region over the four kinds.
pub fn merge(tape: &mut Tape, maps: &[ScannedMap]) -> Result<(Var, Var)> {
    if maps.len() != 4 {
        bail_arg!("merge needs four scanned maps, got {}", maps.len());
    }
    let starts: Vec<_> = maps.iter().map(|m| m.start).collect();
    check_partition(&starts)?;
    let mut acc: Option<(Var, Var)> = None;
    for m in maps {
        let r = m.ref_region.extract(tape, m.map)?;
        let s = m.src_region.extract(tape, m.map)?;
        acc = Some(match acc {
            None => (r, s),
            Some((ar, as_)) => (tape.add(ar, r)?, tape.add(as_, s)?),
        });
    }
    Ok(acc.expect("four maps"))
}

/// Per-direction sequence enhancement: a Mamba block followed by
/// `s + LN(MLP(s))`.
#[derive(Clone, Debug)]
pub struct Enhancer {
    /// Four blocks, or one when weights are shared across directions.
    pub blocks: Vec<MambaBlock>,
    pub mlp: Option<(Mlp, LayerNorm)>,
}

impl Enhancer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: MambaConfig,
        share_weights: bool,
        use_mlp: bool,
        rng: &mut Rng64,
    ) -> Result<Self> {
        let count = if share_weights { 1 } else { 4 };
        let blocks = (0..count)
            .map(|d| MambaBlock::new(store, &format!("{name}.block{d}"), cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        let c = cfg.d_model;
        let mlp = use_mlp.then(|| {
            (Mlp::new(store, &format!("{name}.mlp"), c, 2 * c, rng), LayerNorm::new(store, &format!("{name}.mlp_norm"), c))
        });
        Ok(Self { blocks, mlp })
    }

    pub fn channels(&self) -> usize {
        self.blocks[0].cfg.d_model
    }

    /// Enhances `seq[L,C]` scanned in direction `d ∈ 1..=4`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, d: usize, seq: Var) -> Result<Var> {
        let block = &self.blocks[(d - 1) % self.blocks.len()];
        let s = block.forward(tape, store, seq)?;
        match &self.mlp {
            None => Ok(s),
            Some((mlp, norm)) => {
                let m = mlp.forward(tape, store, s)?;
                let m = norm.forward(tape, store, m, 1)?;
                tape.add(s, m)
            }
        }
    }

    /// Zero output projections and MLP output: every sequence passes unchanged.
    pub fn make_identity(&self, store: &mut ParamStore) {
        for b in &self.blocks {
            b.zero_output(store);
        }
        if let Some((mlp, norm)) = &self.mlp {
            mlp.zero_output(store);
            store.value_mut(norm.beta).data_mut().fill(0.0);
        }
    }
}

/// Pairwise reference/source enhancement over dynamic skip scans.
#[derive(Clone, Debug)]
pub struct DmModule {
    pub enhancer: Enhancer,
    pub strategy: Arc<dyn ScanStrategy + Send + Sync>,
}

impl DmModule {
    pub fn new(enhancer: Enhancer) -> Self {
        Self { enhancer, strategy: Arc::new(DynamicScan::default()) }
    }

    pub fn with_strategy(enhancer: Enhancer, strategy: Arc<dyn ScanStrategy + Send + Sync>) -> Self {
        Self { enhancer, strategy }
    }

    /// Enhanced pair for source index `k ≥ 1`.
    pub fn forward_pair(&self, tape: &mut Tape, store: &ParamStore, reference: Var, source: Var, k: usize) -> Result<(Var, Var)> {
        let arrs = arrange(tape, reference, source)?;
        let mut maps = Vec::with_capacity(4);
        for d in 1..=4 {
            let dir = Direction::from_index(d)?;
            let arr = arrs.iter().find(|a| a.kind == dir.arrangement()).expect("all kinds arranged");
            let start = self.strategy.start(d, k)?;
            let layout = self.strategy.layout(dir, start, arr.height, arr.width)?;
            let seq = skip_scan(tape, arr.map, &layout)?;
            let seq = self.enhancer.forward(tape, store, d, seq)?;
            let map = inverse_scan(tape, seq, &layout)?;
            maps.push(ScannedMap { kind: arr.kind, start, map, ref_region: arr.ref_region, src_region: arr.src_region });
        }
        merge(tape, &maps)
    }

    /// Returns the reference averaged over all pairs and each enhanced source.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, reference: Var, sources: &[Var]) -> Result<(Var, Vec<Var>)> {
        if sources.is_empty() {
            bail_arg!("dm module needs at least one source view");
        }
        let mut mean: Option<Var> = None;
        let mut out = Vec::with_capacity(sources.len());
        for (i, &src) in sources.iter().enumerate() {
            let (r, s) = self.forward_pair(tape, store, reference, src, i + 1)?;
            out.push(s);
            mean = Some(match mean {
                None => r,
                Some(m) => {
                    let delta = tape.sub(r, m)?;
                    let delta = tape.scale(delta, 1.0 / (i + 1) as crate::Real);
                    tape.add(m, delta)?
                }
            });
        }
        Ok((mean.expect("nonempty"), out))
    }
}

/// Single-map variant: the four directional scans of one feature, summed.
#[derive(Clone, Debug)]
pub struct SdmModule {
    pub enhancer: Enhancer,
    pub strategy: Arc<dyn ScanStrategy + Send + Sync>,
}

impl SdmModule {
    pub fn new(enhancer: Enhancer) -> Self {
        Self { enhancer, strategy: Arc::new(DynamicScan::default()) }
    }

    pub fn with_strategy(enhancer: Enhancer, strategy: Arc<dyn ScanStrategy + Send + Sync>) -> Self {
        Self { enhancer, strategy }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, feat: Var) -> Result<Var> {
        let s = tape.shape(feat).to_vec();
        if s.len() != 3 {
            bail_shape!("sdm module expects [C,h,w], got {s:?}");
        }
        let (h, w) = (s[1], s[2]);
        if h % 2 != 0 || w % 2 != 0 {
            bail_arg!("feature extents {h}x{w} must be even");
        }
        let starts = (1..=4).map(|d| self.strategy.start(d, 1)).collect::<Result<Vec<_>>>()?;
        check_partition(&starts)?;
        let mut acc: Option<Var> = None;
        for (d, &start) in (1..=4).zip(&starts) {
            let layout = self.strategy.layout(Direction::from_index(d)?, start, h, w)?;
            let seq = skip_scan(tape, feat, &layout)?;
            let seq = self.enhancer.forward(tape, store, d, seq)?;
            let map = inverse_scan(tape, seq, &layout)?;
            acc = Some(match acc {
                None => map,
                Some(a) => tape.add(a, map)?,
            });
        }
        Ok(acc.expect("four directions"))
    }
}
