use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};

use super::gradcheck_instance;
use crate::dynscan::{
    inverse_scan, skip_scan, ArrangementKind, Direction, DmModule, DynamicScan, Enhancer, ScanStrategy,
    SdmModule, BASE_STARTS,
};
use crate::error::Result;
use crate::mvs::{group_correlation, homography_warp, regularize, Camera, ModelConfig, MvsModel, Unet3d};
use crate::nn::Rng64;
use crate::numeric::{all_probes, finite_diff_check, finite_diff_check_params, ParamStore, Real, Tape, Tensor};
use crate::ssm::{kernel_convolve, scan_recurrent, InputRule, MambaBlock, MambaConfig, ScanInputs};

const GRAD_TOL: Real = 1e-4;
const EPS: Real = 1e-6;

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub zigzag: bool,
    /// Start-coordinate table handed to the scan strategy.
    pub start_table: [(usize, usize); 4],
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { zigzag: false, start_table: BASE_STARTS, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub checks: Vec<CheckResult>,
    pub param_count: usize,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            writeln!(s, "[{}] {:<26} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).unwrap();
        }
        writeln!(s, "parameters (default model): {}", self.param_count).unwrap();
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(s, "{} checks, {failed} failed", self.checks.len()).unwrap();
        s
    }
}

type Check = fn(&SuiteOptions, &Arc<DynamicScan>) -> Result<(bool, String)>;

/// Runs every invariant check; errors are reported as failures.
pub fn run_suite(opts: &SuiteOptions) -> Report {
    let strategy = Arc::new(DynamicScan { table: opts.start_table, zigzag: opts.zigzag });
    let checks: [(&'static str, Check); 12] = [
        ("scan partition", check_partition),
        ("scan round trip", check_round_trip),
        ("reference precedence", check_precedence),
        ("start cycling", check_cycling),
        ("merge parity", check_merge),
        ("ssm equivalence", check_ssm),
        ("grad mamba_block", check_grad_block),
        ("grad dm_module", check_grad_dm),
        ("grad group_correlation", check_grad_corr),
        ("grad homography_warp", check_grad_warp),
        ("grad regularize", check_grad_reg),
        ("warp identity", check_warp_identity),
    ];
    let mut results: Vec<CheckResult> = checks
        .iter()
        .map(|(name, f)| {
            let (passed, detail) = f(opts, &strategy).unwrap_or_else(|e| (false, format!("error: {e}")));
            CheckResult { name, passed, detail }
        })
        .collect();
    let (passed, detail) = check_probability(opts).unwrap_or_else(|e| (false, format!("error: {e}")));
    results.push(CheckResult { name: "probability normalization", passed, detail });
    let mut store = ParamStore::new();
    let param_count = MvsModel::new(&mut store, ModelConfig::default(), opts.seed).map(|_| store.num_scalars()).unwrap_or(0);
    Report { checks: results, param_count }
}

const EXTENTS: [usize; 4] = [2, 4, 6, 8];

fn check_partition(_: &SuiteOptions, s: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut bad = 0;
    let mut cases = 0;
    for h in EXTENTS {
        for w in EXTENTS {
            for kind in ArrangementKind::ALL {
                let ((hh, ww), _, _) = kind.regions(h, w);
                for k in 1..=4 {
                    cases += 1;
                    let mut seen = vec![0u8; hh * ww];
                    for d in 1..=4 {
                        let l = s.layout(Direction::from_index(d)?, s.start(d, k)?, hh, ww)?;
                        for &(r, c) in &l.positions {
                            seen[r * ww + c] += 1;
                        }
                    }
                    bad += usize::from(seen.iter().any(|&n| n != 1));
                }
            }
        }
    }
    Ok((bad == 0, format!("{cases} grids, {bad} not partitioned")))
}

fn check_round_trip(o: &SuiteOptions, s: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut rng = Rng64::seed_from_u64(o.seed);
    let mut bad = 0;
    for h in EXTENTS {
        for w in EXTENTS {
            let x = Tensor::from_fn(vec![2, h, w], |_| rng.gen_range(-1.0..1.0));
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let mut acc = Tensor::zeros(vec![2, h, w]);
            for d in 1..=4 {
                let l = s.layout(Direction::from_index(d)?, s.start(d, 1)?, h, w)?;
                let seq = skip_scan(&mut tape, xv, &l)?;
                let back = inverse_scan(&mut tape, seq, &l)?;
                for (a, b) in acc.data_mut().iter_mut().zip(tape.value(back).data()) {
                    *a += b;
                }
            }
            bad += usize::from(acc.data() != x.data());
        }
    }
    Ok((bad == 0, format!("{} maps, {bad} not reassembled bit-exactly", EXTENTS.len().pow(2))))
}

fn check_precedence(o: &SuiteOptions, s: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut rng = Rng64::seed_from_u64(o.seed ^ 0x51);
    let mut violations = 0;
    for _ in 0..200 {
        let (h, w, k) = (2 * rng.gen_range(1..=6), 2 * rng.gen_range(1..=6), rng.gen_range(1..=12));
        for d in 1..=4 {
            let dir = Direction::from_index(d)?;
            let ((hh, ww), rr, _) = dir.arrangement().regions(h, w);
            let l = s.layout(dir, s.start(d, k)?, hh, ww)?;
            let last_ref = l.positions.iter().rposition(|&p| rr.contains(p));
            let first_src = l.positions.iter().position(|&p| !rr.contains(p));
            if let (Some(a), Some(b)) = (last_ref, first_src) {
                violations += usize::from(a > b);
            }
        }
    }
    Ok((violations == 0, format!("200 cases, {violations} violations")))
}

fn check_cycling(_: &SuiteOptions, s: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut ok = s.start(1, 1)? == (1, 0);
    for k in 1..=16 {
        let set: HashSet<_> = (1..=4).map(|d| s.start(d, k)).collect::<Result<_>>()?;
        ok &= set.len() == 4;
        for d in 1..=4 {
            ok &= s.start(d, k)? == s.start(d, k + 4)?;
        }
    }
    Ok((ok, "period 4 and parity bijection for k in 1..=16".into()))
}

fn check_merge(o: &SuiteOptions, s: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut store = ParamStore::new();
    let mut rng = Rng64::seed_from_u64(o.seed);
    let e = Enhancer::new(&mut store, "dm", MambaConfig::new(4), false, true, &mut rng)?;
    e.make_identity(&mut store);
    let dm = DmModule::with_strategy(e.clone(), s.clone());
    let sdm = SdmModule::with_strategy(e, s.clone());
    let r = Tensor::from_fn(vec![4, 4, 6], |_| rng.gen_range(-1.0..1.0));
    let srcs: Vec<Tensor> = (0..3).map(|_| Tensor::from_fn(vec![4, 4, 6], |_| rng.gen_range(-1.0..1.0))).collect();
    let mut tape = Tape::new();
    let rv = tape.constant(r.clone());
    let sv: Vec<_> = srcs.iter().map(|t| tape.constant(t.clone())).collect();
    let (re, se) = dm.forward(&mut tape, &store, rv, &sv)?;
    let mut exact = tape.value(re).data() == r.data();
    for (v, t) in se.iter().zip(&srcs) {
        exact &= tape.value(*v).data() == t.data();
    }
    let y = sdm.forward(&mut tape, &store, rv)?;
    exact &= tape.value(y).data() == r.data();
    Ok((exact, "identity DM (3 sources) and SDM reproduce inputs exactly".into()))
}

fn check_ssm(o: &SuiteOptions, _: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut rng = Rng64::seed_from_u64(o.seed ^ 0x55);
    let mut worst: Real = 0.0;
    for i in 0..50 {
        let (l, e, n) = (rng.gen_range(1..=64), rng.gen_range(1..=4), rng.gen_range(1..=8));
        let const_rows = |rng: &mut Rng64, w: usize, lo: Real, hi: Real| {
            let r: Vec<Real> = (0..w).map(|_| rng.gen_range(lo..hi)).collect();
            Tensor::from_fn(vec![l, w], move |i| r[i % w])
        };
        let inp = ScanInputs {
            delta: const_rows(&mut rng, e, 0.01, 1.0),
            a: Tensor::from_fn(vec![e, n], |_| rng.gen_range(-3.0..-0.05)),
            b: const_rows(&mut rng, n, -1.0, 1.0),
            c: const_rows(&mut rng, n, -1.0, 1.0),
            d_skip: Tensor::from_fn(vec![e], |_| rng.gen_range(-1.0..1.0)),
        };
        let x = Tensor::from_fn(vec![l, e], |_| rng.gen_range(-1.0..1.0));
        let rule = if i % 2 == 0 { InputRule::Euler } else { InputRule::ZeroOrderHold };
        let rec = scan_recurrent(&x, &inp, rule)?.y;
        worst = worst.max(rec.max_abs_diff(&kernel_convolve(&x, &inp, rule)?));
    }
    Ok((worst < 1e-10, format!("50 instances, max abs diff {worst:.2e}")))
}

fn grad_result(err: Real) -> (bool, String) {
    (err < GRAD_TOL, format!("max rel err {err:.2e}"))
}

fn check_grad_block(_: &SuiteOptions, _: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut store = ParamStore::new();
    let mut rng = Rng64::seed_from_u64(0);
    let block = MambaBlock::new(&mut store, "m", MambaConfig::new(4), &mut rng)?;
    gradcheck_instance(&mut store, 0);
    let x = Tensor::from_fn(vec![8, 4], |_| rng.gen_range(-1.0..1.0));
    let err = finite_diff_check_params(
        |tape, store| {
            let v = tape.constant(x.clone());
            let y = block.forward(tape, store, v)?;
            Ok(tape.sum(y))
        },
        &store,
        &all_probes(&store),
        EPS,
    )?;
    Ok(grad_result(err))
}

fn check_grad_dm(_: &SuiteOptions, s: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut store = ParamStore::new();
    let mut rng = Rng64::seed_from_u64(0);
    let dm = DmModule::with_strategy(Enhancer::new(&mut store, "dm", MambaConfig::new(4), false, true, &mut rng)?, s.clone());
    gradcheck_instance(&mut store, 1);
    let mut rng = Rng64::seed_from_u64(2);
    let mut map = || Tensor::from_fn(vec![4, 4, 4], |_| rng.gen_range(-1.0..1.0));
    let (r, srcs) = (map(), [map(), map()]);
    let err = finite_diff_check_params(
        |tape, store| {
            let rv = tape.constant(r.clone());
            let sv: Vec<_> = srcs.iter().map(|t| tape.constant(t.clone())).collect();
            let (re, se) = dm.forward(tape, store, rv, &sv)?;
            let mut all = vec![re];
            all.extend(se);
            let all = tape.concat(&all, 0)?;
            Ok(tape.sum(all))
        },
        &store,
        &all_probes(&store),
        EPS,
    )?;
    Ok(grad_result(err))
}

fn check_grad_corr(o: &SuiteOptions, _: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut rng = Rng64::seed_from_u64(o.seed ^ 0xc0);
    let r = Tensor::from_fn(vec![4, 4, 4], |_| rng.gen_range(-1.0..1.0));
    let x = Tensor::from_fn(vec![4, 3, 4, 4], |_| rng.gen_range(-1.0..1.0));
    let err = finite_diff_check(
        |tape, v| {
            let rv = tape.constant(r.clone());
            let y = group_correlation(tape, rv, v, 2)?;
            let y = tape.mul(y, y)?;
            Ok(tape.sum(y))
        },
        &x,
        EPS,
    )?;
    Ok(grad_result(err))
}

fn toy_camera(t: [f64; 3]) -> Result<Camera> {
    Camera::new(Matrix3::new(5.0, 0.0, 1.7, 0.0, 5.0, 1.4, 0.0, 0.0, 1.0), Matrix3::identity(), Vector3::from(t), 2.0, 8.0)
}

fn check_grad_warp(o: &SuiteOptions, _: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut rng = Rng64::seed_from_u64(o.seed ^ 0x3a);
    let (rc, sc) = (toy_camera([0.0; 3])?, toy_camera([0.3, -0.2, 0.1])?);
    let hyps = Tensor::from_fn(vec![3, 4, 4], |i| [2.5, 4.0, 6.5][i / 16]);
    let feat = Tensor::from_fn(vec![3, 4, 4], |_| rng.gen_range(-1.0..1.0));
    let wts = Tensor::from_fn(vec![3, 3, 4, 4], |_| rng.gen_range(-1.0..1.0));
    let err = finite_diff_check(
        |tape, v| {
            let (y, _) = homography_warp(tape, v, &rc, &sc, &hyps)?;
            let c = tape.constant(wts.clone());
            let y = tape.mul(y, c)?;
            Ok(tape.sum(y))
        },
        &feat,
        EPS,
    )?;
    Ok(grad_result(err))
}

/// The zero-initialized output layer would make every probability uniform.
fn randomize_head(store: &mut ParamStore, rng: &mut Rng64) {
    for p in store.iter_mut().filter(|p| p.name.contains(".head.")) {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
}

fn check_grad_reg(o: &SuiteOptions, _: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut store = ParamStore::new();
    let mut rng = Rng64::seed_from_u64(0);
    let u = Unet3d::new(&mut store, "reg", 2, 8, &mut rng);
    randomize_head(&mut store, &mut rng);
    let mut rng = Rng64::seed_from_u64(o.seed ^ 0x7e);
    let x = Tensor::from_fn(vec![2, 4, 4, 4], |_| rng.gen_range(-1.0..1.0));
    let wts = Tensor::from_fn(vec![4, 4, 4], |_| rng.gen_range(-1.0..1.0));
    let err = finite_diff_check(
        |tape, v| {
            let p = regularize(tape, &store, &u, v)?;
            let c = tape.constant(wts.clone());
            let y = tape.mul(p, c)?;
            Ok(tape.sum(y))
        },
        &x,
        EPS,
    )?;
    Ok(grad_result(err))
}

fn check_warp_identity(o: &SuiteOptions, _: &Arc<DynamicScan>) -> Result<(bool, String)> {
    let mut rng = Rng64::seed_from_u64(o.seed ^ 0x1d);
    let c = toy_camera([0.1, -0.2, 0.3])?;
    let feat = Tensor::from_fn(vec![3, 6, 8], |_| rng.gen_range(-1.0..1.0));
    let hyps = Tensor::from_fn(vec![3, 6, 8], |i| [2.0, 3.5, 8.0][i / 48]);
    let mut tape = Tape::new();
    let fv = tape.constant(feat.clone());
    let (w, mask) = homography_warp(&mut tape, fv, &c, &c, &hyps)?;
    let out = tape.value(w);
    let mut worst: Real = 0.0;
    for (i, v) in out.data().iter().enumerate() {
        let (ch, p) = (i / (3 * 48), i % 48);
        worst = worst.max((v - feat.data()[ch * 48 + p]).abs());
    }
    let all_valid = mask.data().iter().all(|&m| m == 1.0);
    Ok((all_valid && worst < 1e-12, format!("max abs diff {worst:.1e}, mask all valid: {all_valid}")))
}

fn check_probability(o: &SuiteOptions) -> Result<(bool, String)> {
    let mut store = ParamStore::new();
    let mut rng = Rng64::seed_from_u64(o.seed);
    let u = Unet3d::new(&mut store, "reg", 4, 8, &mut rng);
    randomize_head(&mut store, &mut rng);
    let x = Tensor::from_fn(vec![4, 8, 6, 6], |_| rng.gen_range(-1.0..1.0));
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let p = regularize(&mut tape, &store, &u, v)?;
    let p = tape.value(p);
    let worst = (0..36)
        .map(|px| ((0..8).map(|d| p.data()[d * 36 + px]).sum::<Real>() - 1.0).abs())
        .fold(0.0, Real::max);
    Ok((worst <= 1e-6, format!("max |sum - 1| = {worst:.1e}")))
}
