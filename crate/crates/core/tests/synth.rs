use mvsmamba_core::config::SynthConfig;
use mvsmamba_core::mvs::Camera;
use mvsmamba_core::synth::{generate, render_scene, Geometry, Plane};
use mvsmamba_core::Error;
use nalgebra::{Matrix3, Vector3};

fn pinhole() -> Camera {
    Camera::new(Matrix3::new(40.0, 0.0, 23.5, 0.0, 40.0, 15.5, 0.0, 0.0, 1.0), Matrix3::identity(), Vector3::zeros(), 1.0, 20.0)
        .unwrap()
}

fn single_plane(normal: Vector3<f64>, offset: f64) -> Geometry {
    Geometry { planes: vec![Plane { normal, offset, tint: [0.5; 3] }], sphere: None, texture_seed: 3 }
}

fn small() -> SynthConfig {
    SynthConfig { height: 32, width: 48, ..SynthConfig::default() }
}

#[test]
fn fronto_parallel_plane_has_constant_depth() {
    let (_, depth) = single_plane(Vector3::z(), 10.0).render(&pinhole(), 32, 48).unwrap();
    assert!(depth.data().iter().all(|&d| d == 10.0));
}

#[test]
fn tilted_plane_matches_ray_plane_intersection() {
    let n = Vector3::new(0.3, -0.2, 1.0).normalize();
    let cam = pinhole();
    let (_, depth) = single_plane(n, 7.5).render(&cam, 32, 48).unwrap();
    let k_inv = cam.intrinsics.try_inverse().unwrap();
    for y in 0..32 {
        for x in 0..48 {
            let ray = k_inv * Vector3::new(x as f64, y as f64, 1.0);
            let z = 7.5 / n.dot(&ray);
            assert!((depth.get(&[y, x]) - z).abs() < 1e-9);
        }
    }
}

#[test]
fn coincident_poses_render_identical_images() {
    let cfg = SynthConfig { arc_step_deg: 0.0, ..small() };
    let scene = generate(&cfg).unwrap();
    for v in &scene.views[1..] {
        assert_eq!(v.image, scene.views[0].image);
        assert_eq!(v.gt_depth, scene.views[0].gt_depth);
    }
}

#[test]
fn deterministic_per_seed() {
    let a = generate(&small()).unwrap();
    let b = generate(&small()).unwrap();
    assert_eq!(a.views, b.views);
    let c = generate(&SynthConfig { seed: 1, ..small() }).unwrap();
    assert_ne!(a.views[0].image, c.views[0].image);
}

#[test]
fn depth_ranges_bracket_ground_truth() {
    let scene = generate(&SynthConfig::default()).unwrap();
    assert_eq!(scene.views.len(), 3);
    for v in &scene.views {
        let gt = v.gt_depth.as_ref().unwrap();
        assert_eq!(gt.shape(), [64, 80]);
        for &d in gt.data().iter().filter(|&&d| d > 0.0) {
            assert!(v.camera.depth_min < d && d < v.camera.depth_max);
        }
    }
    for (r, srcs) in &scene.pairs {
        assert_eq!(srcs.len(), 2);
        assert!(srcs.iter().all(|(s, _)| s != r));
        assert!(srcs.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}

#[test]
fn invalid_configs_are_argument_errors() {
    let cases = [
        SynthConfig { views: 1, ..small() },
        SynthConfig { width: 40, ..small() },
        SynthConfig { height: 0, ..small() },
        SynthConfig { planes: 0, ..small() },
        SynthConfig { planes: 4, ..small() },
        SynthConfig { focal: -1.0, ..small() },
    ];
    for cfg in cases {
        assert!(matches!(generate(&cfg), Err(Error::Argument(_))), "{cfg:?}");
    }
    let empty = Geometry { planes: vec![], sphere: None, texture_seed: 0 };
    assert!(matches!(render_scene(&small(), &empty), Err(Error::Argument(_))));
}
