use mvsmamba_core::mvs::{
    cascade_forward, cascade_forward_scales, cascade_from_features, cascade_loss, ce_loss, fuse_weighted, fusion_head,
    group_correlation,
    homography_warp, l1_loss, local_hypotheses, regularize, uniform_inverse, upsample_depth, view_weight_fusion,
    warp_coords, wta_depth, Camera, CameraView, LossKind, ModelConfig, MvsModel, Unet3d,
};
use mvsmamba_core::nn::Rng64;
use mvsmamba_core::numeric::{all_probes, finite_diff_check, finite_diff_check_params};
use mvsmamba_core::{ParamStore, Tape, Tensor, Var};
use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

fn rand_t(rng: &mut Rng64, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn cam(f: f64, cx: f64, cy: f64, t: [f64; 3]) -> Camera {
    let k = Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0);
    Camera::new(k, Matrix3::identity(), Vector3::from(t), 2.0, 8.0).unwrap()
}

fn const_hyps(depths: &[f64], h: usize, w: usize) -> Tensor {
    Tensor::from_fn(vec![depths.len(), h, w], |i| depths[i / (h * w)])
}

#[test]
fn inverse_depth_examples() {
    assert_eq!(uniform_inverse(1.0, 2.0, 2).unwrap(), vec![1.0, 2.0]);
    let u = uniform_inverse(1.0, 2.0, 3).unwrap();
    assert_eq!((u[0], u[2]), (1.0, 2.0));
    assert!((u[1] - 4.0 / 3.0).abs() < 1e-15);
    assert!(uniform_inverse(2.0, 1.0, 4).is_err());
}

#[test]
fn local_hypotheses_clamped_and_increasing() {
    let prev = Tensor::new(vec![1, 4], vec![1.0, 1.01, 1.5, 2.0]).unwrap();
    let step = (1.0 - 0.5) / 31.0;
    let h = local_hypotheses(&prev, 8, step, 1.0, 2.0).unwrap();
    for p in 0..4 {
        let col: Vec<f64> = (0..8).map(|i| h.data()[i * 4 + p]).collect();
        assert!(col.windows(2).all(|w| w[0] < w[1]), "{col:?}");
        assert!(col.iter().all(|&d| (1.0..=2.0).contains(&d)));
        let span = 1.0 / col[0] - 1.0 / col[7];
        assert!((span - 7.0 * step).abs() < 1e-12);
    }
}

#[test]
fn identical_cameras_warp_to_identity() {
    let mut rng = Rng64::seed_from_u64(3);
    let (h, w) = (6, 8);
    let c = cam(20.0, 3.7, 2.9, [0.1, -0.2, 0.3]);
    let feat = rand_t(&mut rng, &[4, h, w]);
    let hyps = const_hyps(&[2.0, 3.5, 8.0], h, w);
    let mut tape = Tape::new();
    let fv = tape.constant(feat.clone());
    let (warped, mask) = homography_warp(&mut tape, fv, &c, &c, &hyps).unwrap();
    let out = tape.value(warped);
    assert!(mask.data().iter().all(|&m| m == 1.0));
    for ch in 0..4 {
        for d in 0..3 {
            for p in 0..h * w {
                let a = out.data()[(ch * 3 + d) * h * w + p];
                let b = feat.data()[ch * h * w + p];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn axial_translation_plane_oracle() {
    // Features linear in pixel coordinates are reproduced exactly by bilinear sampling.
    let (h, w) = (16, 16);
    let (f, cx, cy) = (12.0, 7.5, 7.5);
    let (tz, depth) = (1.0, 4.0);
    let r = cam(f, cx, cy, [0.0; 3]);
    let s = cam(f, cx, cy, [0.0, 0.0, tz]);
    let lin = |ch: usize, y: f64, x: f64| (ch as f64 + 1.0) * 0.3 * x - 0.2 * y + ch as f64;
    let src = Tensor::from_fn(vec![2, h, w], |i| lin(i / (h * w), ((i / w) % h) as f64, (i % w) as f64));
    let hyps = const_hyps(&[depth], h, w);
    let mut tape = Tape::new();
    let sv = tape.constant(src);
    let (warped, mask) = homography_warp(&mut tape, sv, &r, &s, &hyps).unwrap();
    let out = tape.value(warped);
    let scale = depth / (depth + tz);
    let mut checked = 0;
    for ch in 0..2 {
        for y in 0..h {
            for x in 0..w {
                if mask.data()[y * w + x] == 0.0 {
                    continue;
                }
                let (ys, xs) = (cy + (y as f64 - cy) * scale, cx + (x as f64 - cx) * scale);
                let expect = lin(ch, ys, xs);
                assert!((out.data()[(ch * h + y) * w + x] - expect).abs() < 1e-6);
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 2 * h * w);
}

#[test]
fn points_behind_source_are_masked() {
    let (h, w) = (4, 4);
    let r = cam(10.0, 1.5, 1.5, [0.0; 3]);
    let s = cam(10.0, 1.5, 1.5, [0.0, 0.0, -5.0]);
    let hyps = const_hyps(&[2.0, 7.0], h, w);
    let (_, front) = warp_coords(&r, &s, &hyps).unwrap();
    assert!(front[..h * w].iter().all(|&v| !v));
    assert!(front[h * w..].iter().all(|&v| v));
    let mut tape = Tape::new();
    let fv = tape.constant(Tensor::ones(vec![1, h, w]));
    let (warped, mask) = homography_warp(&mut tape, fv, &r, &s, &hyps).unwrap();
    assert!(mask.data()[..h * w].iter().all(|&m| m == 0.0));
    assert!(tape.value(warped).data()[..h * w].iter().all(|&v| v == 0.0));
}

#[test]
fn correlation_matches_brute_force() {
    let mut rng = Rng64::seed_from_u64(5);
    let (c, d, h, w, g) = (8, 3, 2, 4, 4);
    let r = rand_t(&mut rng, &[c, h, w]);
    let x = rand_t(&mut rng, &[c, d, h, w]);
    let mut tape = Tape::new();
    let (rv, xv) = (tape.constant(r.clone()), tape.constant(x.clone()));
    let out = group_correlation(&mut tape, rv, xv, g).unwrap();
    let out = tape.value(out);
    assert_eq!(out.shape(), [g, d, h, w]);
    let cg = c / g;
    for gi in 0..g {
        for di in 0..d {
            for p in 0..h * w {
                let mut s = 0.0;
                for j in 0..cg {
                    let ch = gi * cg + j;
                    s += r.data()[ch * h * w + p] * x.data()[(ch * d + di) * h * w + p];
                }
                let got = out.data()[(gi * d + di) * h * w + p];
                assert!((got - s / cg as f64).abs() < 1e-14);
            }
        }
    }
    let mut tape = Tape::new();
    let ones = tape.constant(Tensor::ones(vec![4, 2, 2]));
    let onesd = tape.constant(Tensor::ones(vec![4, 3, 2, 2]));
    let o = group_correlation(&mut tape, ones, onesd, 4).unwrap();
    assert!(tape.value(o).data().iter().all(|&v| v == 1.0));
    assert!(group_correlation(&mut tape, ones, onesd, 3).is_err());
}

#[test]
fn fusion_contracts() {
    let mut rng = Rng64::seed_from_u64(6);
    let mut store = ParamStore::new();
    let head = fusion_head(&mut store, "fuse", 4, &mut rng);
    let a = rand_t(&mut rng, &[4, 3, 2, 2]);
    let b = rand_t(&mut rng, &[4, 3, 2, 2]);
    let mut tape = Tape::new();
    let av = tape.constant(a.clone());
    let single = view_weight_fusion(&mut tape, &store, &head, &[av]).unwrap();
    assert!(tape.value(single).max_abs_diff(&a) < 1e-15);
    let av2 = tape.constant(a.clone());
    let twin = view_weight_fusion(&mut tape, &store, &head, &[av, av2]).unwrap();
    assert!(tape.value(twin).max_abs_diff(&a) < 1e-15);
    let bv = tape.constant(b.clone());
    let one = tape.constant(Tensor::ones(vec![1, 2, 2]));
    let mean = fuse_weighted(&mut tape, &[av, bv], &[one, one]).unwrap();
    let brute = Tensor::from_fn(a.shape().to_vec(), |i| 0.5 * (a.data()[i] + b.data()[i]));
    assert!(tape.value(mean).max_abs_diff(&brute) < 1e-15);
}

fn unet(store: &mut ParamStore, seed: u64) -> Unet3d {
    let mut rng = Rng64::seed_from_u64(seed);
    Unet3d::new(store, "reg", 2, 8, &mut rng)
}

#[test]
fn zero_head_gives_uniform_probability() {
    let mut store = ParamStore::new();
    let u = unet(&mut store, 0);
    let mut rng = Rng64::seed_from_u64(1);
    let mut tape = Tape::new();
    let v = tape.constant(rand_t(&mut rng, &[2, 6, 4, 4]));
    let p = regularize(&mut tape, &store, &u, v).unwrap();
    assert!(tape.value(p).data().iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
    let one = tape.constant(rand_t(&mut rng, &[2, 1, 4, 4]));
    assert!(regularize(&mut tape, &store, &u, one).is_err());
}

#[test]
fn probability_sums_to_one() {
    let mut store = ParamStore::new();
    let u = unet(&mut store, 0);
    randomize_heads(&mut store, 4);
    let mut rng = Rng64::seed_from_u64(2);
    let mut tape = Tape::new();
    let v = tape.constant(rand_t(&mut rng, &[2, 5, 4, 6]));
    let p = regularize(&mut tape, &store, &u, v).unwrap();
    let p = tape.value(p);
    for px in 0..24 {
        let s: f64 = (0..5).map(|d| p.data()[d * 24 + px]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn regularize_gradient() {
    let mut store = ParamStore::new();
    let u = unet(&mut store, 0);
    randomize_heads(&mut store, 0);
    let mut rng = Rng64::seed_from_u64(3);
    let x = rand_t(&mut rng, &[2, 4, 4, 4]);
    let wts = rand_t(&mut rng, &[4, 4, 4]);
    let err = finite_diff_check(
        |tape, v| {
            let p = regularize(tape, &store, &u, v)?;
            let c = tape.constant(wts.clone());
            let y = tape.mul(p, c)?;
            Ok(tape.sum(y))
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn correlation_and_warp_gradients() {
    let mut rng = Rng64::seed_from_u64(8);
    let r = rand_t(&mut rng, &[4, 4, 4]);
    let x = rand_t(&mut rng, &[4, 3, 4, 4]);
    let err = finite_diff_check(
        |tape, v| {
            let rv = tape.constant(r.clone());
            let y = group_correlation(tape, rv, v, 2)?;
            let y = tape.mul(y, y)?;
            Ok(tape.sum(y))
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "correlation {err}");

    let rc = cam(5.0, 1.7, 1.4, [0.0; 3]);
    let sc = cam(5.0, 1.7, 1.4, [0.3, -0.2, 0.1]);
    let hyps = const_hyps(&[2.5, 4.0, 6.5], 4, 4);
    let feat = rand_t(&mut rng, &[3, 4, 4]);
    let wts = rand_t(&mut rng, &[3, 3, 4, 4]);
    let err = finite_diff_check(
        |tape, v| {
            let (y, _) = homography_warp(tape, v, &rc, &sc, &hyps)?;
            let c = tape.constant(wts.clone());
            let y = tape.mul(y, c)?;
            Ok(tape.sum(y))
        },
        &feat,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "warp {err}");
}

#[test]
fn wta_rules() {
    let hyps = const_hyps(&[2.0, 3.0, 4.0, 5.0], 2, 2);
    let uniform = Tensor::full(vec![4, 2, 2], 0.25);
    let (d, c) = wta_depth(&uniform, &hyps).unwrap();
    assert!(d.data().iter().all(|&v| v == 2.0) && c.data().iter().all(|&v| v == 0.25));
    let hyps8 = const_hyps(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 1, 1);
    let onehot = Tensor::from_fn(vec![8, 1, 1], |i| if i == 5 { 1.0 } else { 0.0 });
    let (d, c) = wta_depth(&onehot, &hyps8).unwrap();
    assert_eq!((d.data()[0], c.data()[0]), (6.0, 1.0));
    let mut rng = Rng64::seed_from_u64(9);
    let prob = Tensor::from_fn(vec![6, 3, 3], |_| rng.gen_range(0.0..1.0));
    let hyps = Tensor::from_fn(vec![6, 3, 3], |i| 1.0 + i as f64);
    let (d, c) = wta_depth(&prob, &hyps).unwrap();
    for p in 0..9 {
        let best = (0..6).max_by(|&a, &b| prob.data()[a * 9 + p].total_cmp(&prob.data()[b * 9 + p])).unwrap();
        assert_eq!(d.data()[p], hyps.data()[best * 9 + p]);
        assert_eq!(c.data()[p], prob.data()[best * 9 + p]);
    }
}

#[test]
fn cross_entropy_rules() {
    let hyps = const_hyps(&[2.0, 3.0, 4.0, 5.0], 2, 3);
    let gt = Tensor::new(vec![2, 3], vec![2.1, 3.4, 4.6, 5.0, 2.0, 3.9]).unwrap();
    let mut tape = Tape::new();
    let u = tape.constant(Tensor::full(vec![4, 2, 3], 0.25));
    let l = ce_loss(&mut tape, u, &gt, &hyps, None).unwrap();
    assert!((tape.item(l.loss) - 4f64.ln()).abs() < 1e-14);
    assert_eq!(l.valid_pixels, 6);
    let target = [0usize, 1, 3, 3, 0, 2];
    let oh = tape.constant(Tensor::from_fn(vec![4, 2, 3], |i| if target[i % 6] == i / 6 { 1.0 } else { 0.0 }));
    let l = ce_loss(&mut tape, oh, &gt, &hyps, None).unwrap();
    assert!(tape.item(l.loss).abs() < 1e-15);
    let out_of_range = Tensor::new(vec![2, 3], vec![1.0, 9.0, 0.0, -1.0, f64::NAN, 1.5]).unwrap();
    let l = ce_loss(&mut tape, u, &out_of_range, &hyps, None).unwrap();
    assert!(l.empty && tape.item(l.loss) == 0.0);
    let mask = Tensor::zeros(vec![2, 3]);
    let l = ce_loss(&mut tape, u, &gt, &hyps, Some(&mask)).unwrap();
    assert!(l.empty);
    let l = l1_loss(&mut tape, u, &gt, &hyps, None).unwrap();
    let expect: f64 = gt.data().iter().map(|g| (3.5 - g).abs()).sum::<f64>() / 6.0;
    assert!((tape.item(l.loss) - expect).abs() < 1e-14);
}

#[test]
fn upsample_is_bilinear_half_grid() {
    let d = Tensor::new(vec![2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
    let u = upsample_depth(&d);
    assert_eq!(u.shape(), [4, 4]);
    assert_eq!(u.data()[..4], [1.0, 2.0, 3.0, 3.0]);
    assert_eq!(u.data()[4..8], [3.0, 4.0, 5.0, 5.0]);
    assert_eq!(u.data()[12..], [5.0, 6.0, 7.0, 7.0]);
}

fn toy_views(h: usize, w: usize, n: usize, seed: u64) -> Vec<CameraView> {
    let mut rng = Rng64::seed_from_u64(seed);
    (0..n)
        .map(|v| {
            let camera = cam(w as f64, w as f64 / 2.0, h as f64 / 2.0, [0.2 * v as f64, 0.0, 0.0]);
            let image = Tensor::from_fn(vec![3, h, w], |_| rng.gen_range(0.0..1.0));
            let gt = (v == 0).then(|| Tensor::from_fn(vec![h, w], |i| 2.0 + 4.0 * (i % w) as f64 / w as f64));
            CameraView { camera, image, gt_depth: gt }
        })
        .collect()
}

fn small_model(store: &mut ParamStore) -> MvsModel {
    let mut cfg = ModelConfig::default();
    cfg.net.channels = [16, 8, 8, 4];
    cfg.cascade.groups = [4, 4, 4, 2];
    cfg.cascade.unet_base = 4;
    MvsModel::new(store, cfg, 0).unwrap()
}

fn randomize_heads(store: &mut ParamStore, seed: u64) {
    let mut rng = Rng64::seed_from_u64(seed);
    for p in store.iter_mut().filter(|p| p.name.contains(".head.")) {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
}

#[test]
fn cascade_shape_ladder_and_normalization() {
    let mut store = ParamStore::new();
    let model = small_model(&mut store);
    randomize_heads(&mut store, 2);
    let views = toy_views(32, 48, 3, 1);
    let mut tape = Tape::new();
    let st = cascade_forward(&mut tape, &store, &model, &views).unwrap();
    let dims: Vec<_> = st.scales.iter().map(|s| s.depth.shape().to_vec()).collect();
    assert_eq!(dims, vec![vec![4, 6], vec![8, 12], vec![16, 24], vec![32, 48]]);
    for (s, sc) in st.scales.iter().enumerate() {
        let p = tape.value(sc.prob);
        let d = [32, 16, 8, 4][s];
        assert_eq!(p.shape()[0], d);
        let hw = p.numel() / d;
        for px in 0..hw {
            let sum: f64 = (0..d).map(|i| p.data()[i * hw + px]).sum();
            assert!((sum - 1.0).abs() < 1e-6);
            let col: Vec<f64> = (0..d).map(|i| sc.hyps.data()[i * hw + px]).collect();
            assert!(col.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(sc.depth.data().iter().all(|&z| (2.0..=8.0).contains(&z)));
    }
}

#[test]
fn cascade_is_deterministic() {
    let mut store = ParamStore::new();
    let model = small_model(&mut store);
    let views = toy_views(32, 32, 2, 4);
    let run = || {
        let mut tape = Tape::new();
        let st = cascade_forward(&mut tape, &store, &model, &views).unwrap();
        st.scales.iter().map(|s| (s.depth.clone(), s.confidence.clone())).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn initial_loss_is_uniform_value() {
    let mut store = ParamStore::new();
    let model = small_model(&mut store);
    let views = toy_views(32, 32, 3, 5);
    let mut tape = Tape::new();
    let st = cascade_forward(&mut tape, &store, &model, &views).unwrap();
    let (total, parts) = cascade_loss(&mut tape, &st, views[0].gt_depth.as_ref().unwrap(), LossKind::CrossEntropy).unwrap();
    assert!(parts.iter().all(|p| !p.empty));
    let expect = [32f64, 16.0, 8.0, 4.0].iter().map(|d| d.ln()).sum::<f64>();
    assert!((tape.item(total) - expect).abs() < 1e-9, "{}", tape.item(total));
}

#[test]
fn cascade_rejects_bad_inputs() {
    let mut store = ParamStore::new();
    let model = small_model(&mut store);
    let mut tape = Tape::new();
    assert!(cascade_forward(&mut tape, &store, &model, &toy_views(32, 32, 1, 0)).is_err());
    assert!(cascade_forward(&mut tape, &store, &model, &toy_views(24, 32, 2, 0)).is_err());
}

#[test]
fn scale0_loss_gradient() {
    let mut store = ParamStore::new();
    let model = small_model(&mut store);
    randomize_heads(&mut store, 0);
    let views = toy_views(32, 32, 2, 7);
    let gt = views[0].gt_depth.clone().unwrap();
    let f = |tape: &mut Tape, store: &ParamStore| -> mvsmamba_core::Result<Var> {
        let st = cascade_forward_scales(tape, store, &model, &views, 1)?;
        let (loss, _) = cascade_loss(tape, &st, &gt, LossKind::CrossEntropy)?;
        Ok(loss)
    };
    let mut tape = Tape::new();
    let loss = f(&mut tape, &store).unwrap();
    tape.backward(loss).unwrap();
    let mut grads = store.clone();
    grads.zero_grad();
    tape.accumulate_param_grads(&mut grads);
    let resolvable: Vec<_> = all_probes(&store).into_iter().filter(|&(id, i)| grads.grad(id).data()[i].abs() > 1e-6).collect();
    let mut rng = Rng64::seed_from_u64(11);
    let probes: Vec<_> = resolvable.choose_multiple(&mut rng, 32).copied().collect();
    assert_eq!(probes.len(), 32);
    let err = finite_diff_check_params(f, &store, &probes, 1e-6).unwrap();
    assert!(err < 1e-3, "{err}");
}


/// Argmax-preserving regularizer: logits are a scaled, shifted SiLU of the
/// group-averaged similarity; fusion weights are all equal.
fn pass_through_heads(store: &mut ParamStore, groups: usize) {
    for p in store.iter_mut().filter(|p| p.name.starts_with("reg") || p.name.starts_with("fuse")) {
        p.value.data_mut().fill(0.0);
    }
    for s in 0..4 {
        let stem = store.id(&format!("reg{s}.stem.weight")).unwrap();
        let w = store.value_mut(stem);
        for g in 0..groups {
            w.set(&[0, g, 1, 1, 1], 1.0 / groups as f64);
        }
        let bias = store.id(&format!("reg{s}.stem.bias")).unwrap();
        store.value_mut(bias).data_mut()[0] = 2.0;
        let head = store.id(&format!("reg{s}.head.weight")).unwrap();
        store.value_mut(head).set(&[0, 0, 1, 1, 1], 200.0);
    }
}

/// Unit phasors of the world point on the plane `Z = z0` seen through pixel
/// centers of `cam`; the same world point gives the same feature in any view.
fn plane_features(cam: &Camera, z0: f64, h: usize, w: usize) -> Tensor {
    let k_inv = cam.intrinsics.try_inverse().unwrap();
    let freqs: Vec<(f64, f64)> = (0..4).map(|j| (0.9 + 0.6 * j as f64, 0.4 * j as f64 - 0.5)).collect();
    let mut out = Tensor::zeros(vec![8, h, w]);
    for y in 0..h {
        for x in 0..w {
            let ray = k_inv * Vector3::new(x as f64, y as f64, 1.0);
            let zc = z0 + cam.translation.z;
            let p = ray * zc - cam.translation;
            for (j, &(fx, fy)) in freqs.iter().enumerate() {
                let phase = fx * p.x + fy * p.y;
                out.set(&[2 * j, y, x], phase.cos());
                out.set(&[2 * j + 1, y, x], phase.sin());
            }
        }
    }
    out
}

#[test]
fn perfect_features_recover_plane_depth() {
    let (h, w, z0) = (64usize, 80usize, 5.0);
    let f = 72.0;
    // Baseline giving an 8-pixel disparity at z0: one pixel at the coarsest scale.
    let b = 8.0 * z0 / f;
    let views: Vec<CameraView> = [0.0, -b]
        .iter()
        .map(|&tx| CameraView {
            camera: cam(f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, [tx, 0.0, 0.0]),
            image: Tensor::zeros(vec![3, h, w]),
            gt_depth: None,
        })
        .collect();
    let mut store = ParamStore::new();
    let model = MvsModel::new(&mut store, ModelConfig::default(), 0).unwrap();
    pass_through_heads(&mut store, model.cfg.cascade.groups[0]);
    let mut tape = Tape::new();
    let feats: Vec<Vec<Var>> = views
        .iter()
        .map(|v| {
            (0..4)
                .map(|s| {
                    let sf = 1usize << (3 - s);
                    tape.constant(plane_features(&v.camera.scaled(1.0 / sf as f64), z0, h / sf, w / sf))
                })
                .collect()
        })
        .collect();
    let st = cascade_from_features(&mut tape, &store, &model, &views, feats, 4).unwrap();
    let depth = &st.finest().depth;
    // Pixels whose match falls inside the source image.
    let covisible: Vec<f64> = (0..h * w).filter(|i| i % w >= 8).map(|i| (depth.data()[i] - z0).abs()).collect();
    let mae = covisible.iter().sum::<f64>() / covisible.len() as f64;
    let base = (1.0 / 2.0 - 1.0 / 8.0) / 31.0;
    let interval = z0 * z0 * model.cfg.cascade.intervals[3] * base;
    assert!(mae < interval, "MAE {mae} vs finest interval {interval}");
}

#[test]
fn injected_features_are_shape_checked() {
    let views = toy_views(32, 32, 2, 0);
    let mut store = ParamStore::new();
    let model = small_model(&mut store);
    let mut tape = Tape::new();
    let bad: Vec<Vec<Var>> = (0..2).map(|_| (0..4).map(|_| tape.constant(Tensor::zeros(vec![4, 5, 5]))).collect()).collect();
    assert!(cascade_from_features(&mut tape, &store, &model, &views, bad, 4).is_err());
    let one: Vec<Vec<Var>> = vec![(0..4).map(|_| tape.constant(Tensor::zeros(vec![4, 4, 4]))).collect()];
    assert!(cascade_from_features(&mut tape, &store, &model, &views, one, 1).is_err());
}
