use mvsmamba_core::network::{FeatureNet, NetConfig};
use mvsmamba_core::nn::Rng64;
use mvsmamba_core::{ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};

fn build(cfg: NetConfig) -> (ParamStore, FeatureNet) {
    let mut store = ParamStore::new();
    let mut rng = Rng64::seed_from_u64(7);
    let net = FeatureNet::new(&mut store, cfg, &mut rng).unwrap();
    (store, net)
}

fn images(n: usize, h: usize, w: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = Rng64::seed_from_u64(seed);
    (0..n).map(|_| Tensor::from_fn(vec![3, h, w], |_| rng.gen_range(0.0..1.0))).collect()
}

fn run(net: &FeatureNet, store: &ParamStore, ims: &[Tensor]) -> Vec<Vec<Tensor>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = ims.iter().map(|t| tape.constant(t.clone())).collect();
    let out = net.forward(&mut tape, store, &vars).unwrap();
    out.iter().map(|v| v.iter().map(|&x| tape.value(x).clone()).collect()).collect()
}

#[test]
fn decoder_shape_table() {
    let (store, net) = build(NetConfig::default());
    let out = run(&net, &store, &images(3, 64, 80, 1));
    for view in &out {
        let shapes: Vec<_> = view.iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![64, 8, 10], vec![32, 16, 20], vec![16, 32, 40], vec![8, 64, 80]]);
        for t in view {
            assert!(t.shape()[1] % 2 == 0 && t.shape()[2] % 2 == 0);
            assert!(t.is_finite());
        }
    }
}

#[test]
fn identity_enhancers_match_plain_fpn() {
    let (mut store, net) = build(NetConfig::default());
    net.make_enhancers_identity(&mut store);
    let mut plain = net.clone();
    plain.dm.clear();
    plain.sdm.clear();
    let ims = images(3, 32, 48, 2);
    assert_eq!(run(&net, &store, &ims).iter().flatten().map(|t| t.data().to_vec()).collect::<Vec<_>>(),
        run(&plain, &store, &ims).iter().flatten().map(|t| t.data().to_vec()).collect::<Vec<_>>());
}

fn perturbed_decode(net: &FeatureNet, store: &ParamStore, ims: &[Tensor], view: usize, bump: f64) -> Vec<Vec<Tensor>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = ims.iter().map(|t| tape.constant(t.clone())).collect();
    let mut encs: Vec<_> = vars.iter().map(|&v| net.encode(&mut tape, store, v).unwrap()).collect();
    let mut e0 = tape.value(encs[view][0]).clone();
    e0.data_mut()[5] += bump;
    encs[view][0] = tape.constant(e0);
    let out = net.decode(&mut tape, store, &encs).unwrap();
    out.iter().map(|v| v.iter().map(|&x| tape.value(x).clone()).collect()).collect()
}

#[test]
fn reference_perturbation_reaches_every_source_scale() {
    let (store, net) = build(NetConfig::default());
    let ims = images(3, 32, 32, 3);
    let (a, b) = (perturbed_decode(&net, &store, &ims, 0, 0.0), perturbed_decode(&net, &store, &ims, 0, 0.5));
    for v in 1..3 {
        for s in 0..4 {
            assert!(a[v][s].max_abs_diff(&b[v][s]) > 0.0, "view {v} scale {s} unchanged");
        }
    }
}

#[test]
fn reference_features_ignore_sources() {
    let (store, net) = build(NetConfig::default());
    let ims = images(3, 32, 32, 3);
    let (a, b) = (perturbed_decode(&net, &store, &ims, 2, 0.0), perturbed_decode(&net, &store, &ims, 2, 0.5));
    assert_eq!(a[0], b[0]);
    assert!(a[2][0].max_abs_diff(&b[2][0]) > 0.0);
}

#[test]
fn without_dm_sources_do_not_reach_reference() {
    let (store, net) = build(NetConfig { use_dm: false, ..NetConfig::default() });
    let mut ims = images(2, 32, 32, 4);
    let a = run(&net, &store, &ims);
    ims[1].data_mut()[17] += 1.0;
    let b = run(&net, &store, &ims);
    assert_eq!(a[0], b[0]);
}

#[test]
fn deterministic() {
    let (store, net) = build(NetConfig::default());
    let ims = images(2, 16, 32, 5);
    assert_eq!(run(&net, &store, &ims), run(&net, &store, &ims));
    let same = vec![ims[0].clone(), ims[0].clone()];
    let (_, net2) = build(NetConfig { use_dm: false, ..NetConfig::default() });
    let mut tape = Tape::new();
    let v = tape.constant(ims[0].clone());
    let a = net2.encode(&mut tape, &store, v).unwrap();
    let v2 = tape.constant(same[1].clone());
    let b = net2.encode(&mut tape, &store, v2).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(tape.value(*x).data(), tape.value(*y).data());
    }
}

#[test]
fn parameter_budget_reported() {
    let (store, _) = build(NetConfig::default());
    let n = store.num_scalars();
    println!("feature network parameters: {n}");
    assert!(n > 100_000);
}
