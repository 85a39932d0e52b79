use std::collections::HashSet;
use std::sync::Arc;

use mvsmamba_core::dynscan::{
    arrange, inverse_scan, merge, skip_scan, start_coords, ArrangementKind, Direction, DmModule, DynamicScan, Enhancer,
    ScanLayout, ScanStrategy, ScannedMap, SdmModule,
};
use mvsmamba_core::nn::Rng64;
use mvsmamba_core::numeric::{all_probes, finite_diff_check_params};
use mvsmamba_core::selfcheck::gradcheck_instance;
use mvsmamba_core::ssm::MambaConfig;
use mvsmamba_core::{Error, ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

const EXTENTS: [usize; 4] = [2, 4, 6, 8];

fn rand_map(rng: &mut Rng64, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(vec![c, h, w], |_| rng.gen_range(-1.0..1.0))
}

fn enhancer(store: &mut ParamStore, c: usize, share: bool, seed: u64) -> Enhancer {
    let mut rng = Rng64::seed_from_u64(seed);
    Enhancer::new(store, "dm", MambaConfig::new(c), share, true, &mut rng).unwrap()
}

#[test]
fn four_parities_partition_every_grid() {
    for zigzag in [false, true] {
        for h in EXTENTS {
            for w in EXTENTS {
                for kind in ArrangementKind::ALL {
                    let ((hh, ww), _, _) = kind.regions(h, w);
                    for k in 1..=4 {
                        let mut seen = vec![0u8; hh * ww];
                        for d in 1..=4 {
                            let l = ScanLayout::new(Direction::from_index(d).unwrap(), start_coords(d, k).unwrap(), hh, ww, zigzag)
                                .unwrap();
                            assert_eq!(l.len(), hh * ww / 4);
                            let uniq: HashSet<_> = l.positions.iter().collect();
                            assert_eq!(uniq.len(), l.len());
                            for &(r, c) in &l.positions {
                                assert_eq!((r % 2, c % 2), l.start);
                                seen[r * ww + c] += 1;
                            }
                        }
                        assert!(seen.iter().all(|&n| n == 1), "{kind} {h}x{w} k={k}");
                    }
                }
            }
        }
    }
}

#[test]
fn scan_scatter_reassembles() {
    let mut rng = Rng64::seed_from_u64(1);
    for h in EXTENTS {
        for w in EXTENTS {
            let x = rand_map(&mut rng, 3, h, w);
            let mut tape = Tape::new();
            let v = tape.constant(x.clone());
            let mut total = Tensor::zeros(vec![3, h, w]);
            for (d, start) in [(1, (0, 0)), (2, (0, 1)), (3, (1, 0)), (4, (1, 1))] {
                let l = ScanLayout::new(Direction::from_index(d).unwrap(), start, h, w, false).unwrap();
                let s = skip_scan(&mut tape, v, &l).unwrap();
                let back = inverse_scan(&mut tape, s, &l).unwrap();
                let b = tape.value(back);
                for (i, (t, &bv)) in total.data_mut().iter_mut().zip(b.data()).enumerate() {
                    let (r, c) = ((i / w) % h, i % w);
                    if (r % 2, c % 2) == start {
                        assert_eq!(bv, x.data()[i]);
                    } else {
                        assert_eq!(bv, 0.0);
                    }
                    *t += bv;
                }
            }
            assert_eq!(total.data(), x.data());
        }
    }
}

#[test]
fn zero_sequence_scatters_to_zero() {
    let mut tape = Tape::new();
    let l = ScanLayout::new(Direction::Z, (1, 0), 4, 6, false).unwrap();
    let s = tape.constant(Tensor::zeros(vec![l.len(), 2]));
    let m = inverse_scan(&mut tape, s, &l).unwrap();
    assert!(tape.value(m).data().iter().all(|&v| v == 0.0));
}

fn assert_reference_first(l: &ScanLayout, kind: ArrangementKind, h: usize, w: usize) {
    let (_, rr, sr) = kind.regions(h, w);
    let last_ref = l.positions.iter().rposition(|&p| rr.contains(p));
    let first_src = l.positions.iter().position(|&p| sr.contains(p));
    if let (Some(a), Some(b)) = (last_ref, first_src) {
        assert!(a < b, "{kind} {h}x{w} start {:?}", l.start);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reference_precedes_source(hi in 1usize..=6, wi in 1usize..=6, k in 1usize..=12, zigzag in any::<bool>()) {
        let (h, w) = (2 * hi, 2 * wi);
        for d in 1..=4 {
            let dir = Direction::from_index(d).unwrap();
            let kind = dir.arrangement();
            let ((hh, ww), _, _) = kind.regions(h, w);
            let l = DynamicScan::with_zigzag(zigzag).layout(dir, start_coords(d, k).unwrap(), hh, ww).unwrap();
            assert_reference_first(&l, kind, h, w);
        }
    }

    #[test]
    fn starts_cycle_and_partition(d in 1usize..=4, k in 1usize..=64) {
        prop_assert_eq!(start_coords(d, k).unwrap(), start_coords(d, k + 4).unwrap());
        let all: HashSet<_> = (1..=4).map(|d| start_coords(d, k).unwrap()).collect();
        prop_assert_eq!(all.len(), 4);
    }
}

#[test]
fn precedence_all_parities() {
    for h in EXTENTS {
        for w in EXTENTS {
            for dir in Direction::ALL {
                let kind = dir.arrangement();
                let ((hh, ww), _, _) = kind.regions(h, w);
                for start in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    for zigzag in [false, true] {
                        assert_reference_first(&ScanLayout::new(dir, start, hh, ww, zigzag).unwrap(), kind, h, w);
                    }
                }
            }
        }
    }
}

fn identity_dm(c: usize, seed: u64) -> (ParamStore, DmModule) {
    let mut store = ParamStore::new();
    let e = enhancer(&mut store, c, false, seed);
    e.make_identity(&mut store);
    (store, DmModule::new(e))
}

#[test]
fn identity_dm_round_trip() {
    let mut rng = Rng64::seed_from_u64(4);
    let (store, dm) = identity_dm(4, 0);
    for (h, w) in [(2, 2), (4, 6), (8, 4)] {
        for nsrc in 1..=3 {
            let r = rand_map(&mut rng, 4, h, w);
            let srcs: Vec<_> = (0..nsrc).map(|_| rand_map(&mut rng, 4, h, w)).collect();
            let mut tape = Tape::new();
            let rv = tape.constant(r.clone());
            let sv: Vec<_> = srcs.iter().map(|s| tape.constant(s.clone())).collect();
            let (re, se) = dm.forward(&mut tape, &store, rv, &sv).unwrap();
            assert_eq!(tape.value(re).data(), r.data());
            for (s, v) in srcs.iter().zip(se) {
                assert_eq!(tape.value(v).data(), s.data());
            }
        }
    }
}

#[test]
fn identity_sdm_round_trip() {
    let mut store = ParamStore::new();
    let e = enhancer(&mut store, 4, false, 2);
    e.make_identity(&mut store);
    let sdm = SdmModule::new(e);
    let mut rng = Rng64::seed_from_u64(8);
    let x = rand_map(&mut rng, 4, 6, 8);
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let y = sdm.forward(&mut tape, &store, v).unwrap();
    assert_eq!(tape.value(y).data(), x.data());
}

#[test]
fn sdm_finite_and_odd_rejected() {
    let mut store = ParamStore::new();
    let sdm = SdmModule::new(enhancer(&mut store, 4, false, 3));
    let mut rng = Rng64::seed_from_u64(5);
    let mut tape = Tape::new();
    let v = tape.constant(rand_map(&mut rng, 4, 8, 8));
    let y = sdm.forward(&mut tape, &store, v).unwrap();
    assert!(tape.value(y).is_finite());
    let odd = tape.constant(Tensor::zeros(vec![4, 3, 4]));
    assert!(sdm.forward(&mut tape, &store, odd).is_err());
}

#[test]
fn merge_of_identity_scans_and_zeroed_class() {
    let mut rng = Rng64::seed_from_u64(6);
    let (c, h, w) = (2, 4, 6);
    let r = rand_map(&mut rng, c, h, w);
    let s = rand_map(&mut rng, c, h, w);
    for zeroed in 0..5 {
        let mut tape = Tape::new();
        let (rv, sv) = (tape.constant(r.clone()), tape.constant(s.clone()));
        let arrs = arrange(&mut tape, rv, sv).unwrap();
        let mut maps = Vec::new();
        for d in 1..=4 {
            let dir = Direction::from_index(d).unwrap();
            let arr = arrs.iter().find(|a| a.kind == dir.arrangement()).unwrap();
            let start = start_coords(d, 1).unwrap();
            let l = ScanLayout::new(dir, start, arr.height, arr.width, false).unwrap();
            let mut seq = skip_scan(&mut tape, arr.map, &l).unwrap();
            if d == zeroed {
                seq = tape.scale(seq, 0.0);
            }
            let map = inverse_scan(&mut tape, seq, &l).unwrap();
            maps.push(ScannedMap { kind: arr.kind, start, map, ref_region: arr.ref_region, src_region: arr.src_region });
        }
        let (re, se) = merge(&mut tape, &maps).unwrap();
        assert_eq!(tape.shape(re), &[c, h, w]);
        assert_eq!(tape.shape(se), &[c, h, w]);
        let zero_parity = (zeroed > 0).then(|| start_coords(zeroed, 1).unwrap());
        for (out, orig) in [(re, &r), (se, &s)] {
            for (i, (&o, &x)) in tape.value(out).data().iter().zip(orig.data()).enumerate() {
                let p = ((i / w) % h % 2, i % w % 2);
                if Some(p) == zero_parity {
                    assert_eq!(o, 0.0);
                } else {
                    assert_eq!(o, x);
                }
            }
        }
    }
}

#[test]
fn merge_rejects_parity_collision() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(vec![1, 2, 2]));
    let arrs = arrange(&mut tape, z, z).unwrap();
    let maps: Vec<_> = arrs
        .iter()
        .map(|a| ScannedMap { kind: a.kind, start: (0, 0), map: a.map, ref_region: a.ref_region, src_region: a.src_region })
        .collect();
    assert!(matches!(merge(&mut tape, &maps), Err(Error::Invariant(_))));
}

#[test]
fn corrupted_table_trips_collision() {
    let (store, dm) = identity_dm(4, 1);
    let bad = DynamicScan { table: [(0, 0), (0, 0), (0, 1), (1, 1)], zigzag: false };
    let dm = DmModule::with_strategy(dm.enhancer, Arc::new(bad.clone()));
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(vec![4, 4, 4]));
    assert!(matches!(dm.forward(&mut tape, &store, z, &[z]), Err(Error::Invariant(_))));
    let sdm = SdmModule::with_strategy(dm.enhancer.clone(), Arc::new(bad));
    assert!(matches!(sdm.forward(&mut tape, &store, z), Err(Error::Invariant(_))));
}

#[test]
fn sources_rotate_reference_assignment() {
    let (h, w) = (4, 4);
    let assignment = |k: usize| -> Vec<usize> {
        let mut owner = vec![0; h * w];
        for d in 1..=4 {
            let dir = Direction::from_index(d).unwrap();
            let kind = dir.arrangement();
            let ((hh, ww), rr, _) = kind.regions(h, w);
            let l = ScanLayout::new(dir, start_coords(d, k).unwrap(), hh, ww, false).unwrap();
            for &(r, c) in l.positions.iter().filter(|&&p| rr.contains(p)) {
                owner[(r - rr.row0) * w + (c - rr.col0)] = d;
            }
        }
        owner
    };
    let (a1, a2) = (assignment(1), assignment(2));
    assert!(a1.iter().all(|&d| d > 0) && a2.iter().all(|&d| d > 0));
    assert!(a1.iter().zip(&a2).all(|(x, y)| x != y));
    assert_eq!(assignment(1), assignment(5));
}

#[test]
fn empty_sources_rejected() {
    let (store, dm) = identity_dm(4, 1);
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(vec![4, 2, 2]));
    assert!(dm.forward(&mut tape, &store, z, &[]).is_err());
}

#[test]
fn shared_weights_use_one_block() {
    let mut store = ParamStore::new();
    let e = enhancer(&mut store, 4, true, 0);
    assert_eq!(e.blocks.len(), 1);
    let mut store4 = ParamStore::new();
    let e4 = enhancer(&mut store4, 4, false, 0);
    assert_eq!(e4.blocks.len(), 4);
    assert!(store4.num_scalars() > store.num_scalars());
}

#[test]
fn dm_gradient() {
    let mut store = ParamStore::new();
    let dm = DmModule::new(enhancer(&mut store, 4, false, 0));
    gradcheck_instance(&mut store, 1);
    let mut rng = Rng64::seed_from_u64(2);
    let r = rand_map(&mut rng, 4, 4, 4);
    let srcs = [rand_map(&mut rng, 4, 4, 4), rand_map(&mut rng, 4, 4, 4)];
    let f = |tape: &mut Tape, store: &ParamStore| {
        let rv = tape.constant(r.clone());
        let sv: Vec<_> = srcs.iter().map(|s| tape.constant(s.clone())).collect();
        let (re, se) = dm.forward(tape, store, rv, &sv)?;
        let mut all = vec![re];
        all.extend(se);
        let all = tape.concat(&all, 0)?;
        Ok(tape.sum(all))
    };
    let err = finite_diff_check_params(f, &store, &all_probes(&store), 1e-6).unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn sequence_length_is_quarter() {
    for h in EXTENTS {
        for w in EXTENTS {
            for kind in ArrangementKind::ALL {
                let ((hh, ww), _, _) = kind.regions(h, w);
                let l = ScanLayout::new(kind.direction(), (1, 0), hh, ww, false).unwrap();
                assert_eq!(4 * l.len(), 2 * h * w);
            }
        }
    }
}
