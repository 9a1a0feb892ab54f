use approx::assert_relative_eq;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::geometry::{normalize_points, rotation_error_deg, CameraIntrinsics, Frame, PointCloud, Pose};
use crate::raster::Mask;
use crate::render::render_depth;
use crate::shape::{decode_surface, ShapeBasis, ShapeLatent};

type V3 = Vector3<f64>;

fn intr() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 319.5, 239.5, 640, 480).unwrap()
}

fn camera() -> ShapeBasis {
    ShapeBasis::category("camera").unwrap()
}

fn gt_pose() -> Pose {
    Pose::new(UnitQuaternion::from_euler_angles(0.4, -0.3, 0.8), V3::new(0.03, -0.02, 0.9))
}

/// Rendered, back-projected points of `latent` at `pose`, size 0.2.
fn observed(basis: &ShapeBasis, latent: &ShapeLatent, pose: &Pose) -> PointCloud {
    let depth = render_depth(basis, latent, pose, 0.2, &intr()).unwrap();
    observed_points(&depth, &depth.valid_mask(), &intr(), 0, 500).unwrap()
}

fn with_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> PointCloud {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let pts = cloud
        .points()
        .iter()
        .map(|p| p * (1.0 + sigma * r.sample::<f64, _>(StandardNormal) / p.z))
        .collect();
    PointCloud::new(pts, Frame::Camera)
}

fn square(w: usize, h: usize, u0: usize, v0: usize, side: usize) -> Mask {
    let mut m = Mask::new(w, h);
    for v in v0..v0 + side {
        for u in u0..u0 + side {
            m.set(u, v, true);
        }
    }
    m
}

#[test]
fn erosion_examples() {
    let m = square(20, 20, 5, 5, 10);
    assert_eq!(erode_mask(&m, 0), m);
    let e = erode_mask(&m, 1);
    assert_eq!(e, square(20, 20, 6, 6, 8));
    assert_eq!(erode_mask(&Mask::new(7, 5), 2), Mask::new(7, 5));
    // Touching the border erodes from the outside too.
    let full = Mask::filled(6, 6, true);
    assert_eq!(erode_mask(&full, 1), square(6, 6, 1, 1, 4));
}

#[test]
fn object_mask_selects_the_ball() {
    let basis = camera();
    let pose = gt_pose();
    let depth = render_depth(&basis, &basis.canonical_latent(), &pose, 0.2, &intr()).unwrap();
    let m = object_mask(&depth, &pose, 0.2, &intr(), 1.0);
    assert_eq!(m.count(), depth.valid_mask().count());
    let far = Pose::from_translation(V3::new(1.0, 0.0, 0.9));
    assert!(object_mask(&depth, &far, 0.2, &intr(), 1.5).is_empty());
}

#[test]
fn huber_is_continuous() {
    use super::objective::rho;
    let d = 0.01;
    for r in [d, -d] {
        let (a, ga) = rho(r * (1.0 - 1e-12), d, Loss::Huber);
        let (b, gb) = rho(r * (1.0 + 1e-12), d, Loss::Huber);
        assert_relative_eq!(a, b, epsilon = 1e-12);
        assert_relative_eq!(ga, gb, epsilon = 1e-9);
    }
    assert_eq!(rho(-0.3, d, Loss::L1), (0.3, -1.0));
}

/// Random state with residuals spread over both Huber regimes, or `None`
/// when a point lies too close to an SDF kink or the Huber threshold.
fn random_state(rng: &mut ChaCha8Rng, basis: &ShapeBasis) -> Option<(Vec<V3>, ShapeLatent, Pose, f64, f64)> {
    let latent = ShapeLatent::new((0..basis.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    let axis = V3::new(rng.random(), rng.random(), rng.random()) - V3::repeat(0.5);
    let pose = Pose::new(
        UnitQuaternion::from_scaled_axis(axis * 4.0),
        V3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 1.0 + rng.random::<f64>()),
    );
    let size = 0.1 + 0.2 * rng.random::<f64>();
    let delta = 0.02 * size;
    let points: Vec<V3> = (0..20)
        .map(|_| {
            let q = (V3::new(rng.random(), rng.random(), rng.random()) - V3::repeat(0.5)) * 1.2;
            pose.transform_point(&(q * size))
        })
        .collect();
    for p in &points {
        let q = pose.inverse_transform_point(p) / size;
        let r = size * basis.sdf(&latent, &q);
        if basis.kink_distance(&q) < 1e-3 || (r.abs() - delta).abs() < 1e-3 * delta {
            return None;
        }
    }
    Some((points, latent, pose, size, delta))
}

fn fd_gradient(points: &[V3], basis: &ShapeBasis, latent: &ShapeLatent, pose: &Pose, size: f64, delta: f64) -> Vec<f64> {
    let h = 1e-5;
    let f = |pose: &Pose, size: f64, latent: &ShapeLatent| pose_objective(points, basis, latent, pose, size, delta, Loss::Huber);
    let mut out = Vec::new();
    for k in 0..3 {
        let e = V3::ith(k, h);
        let plus = Pose::new(pose.rotation, pose.translation + e);
        let minus = Pose::new(pose.rotation, pose.translation - e);
        out.push((f(&plus, size, latent) - f(&minus, size, latent)) / (2.0 * h));
    }
    for k in 0..3 {
        let e = V3::ith(k, h);
        let plus = Pose::new(UnitQuaternion::from_scaled_axis(e) * pose.rotation, pose.translation);
        let minus = Pose::new(UnitQuaternion::from_scaled_axis(-e) * pose.rotation, pose.translation);
        out.push((f(&plus, size, latent) - f(&minus, size, latent)) / (2.0 * h));
    }
    out.push((f(pose, size + h, latent) - f(pose, size - h, latent)) / (2.0 * h));
    for k in 0..latent.len() {
        let mut up = latent.raw().to_vec();
        let mut down = up.clone();
        up[k] += h;
        down[k] -= h;
        out.push((f(pose, size, &ShapeLatent::new(up)) - f(pose, size, &ShapeLatent::new(down))) / (2.0 * h));
    }
    out
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let basis = camera();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 100 {
        let Some((points, latent, pose, size, delta)) = random_state(&mut rng, &basis) else { continue };
        let (f, g) = pose_objective_grad(&points, &basis, &latent, &pose, size, delta, Loss::Huber);
        assert_relative_eq!(f, pose_objective(&points, &basis, &latent, &pose, size, delta, Loss::Huber), epsilon = 1e-12);
        let analytic: Vec<f64> = g
            .translation
            .iter()
            .chain(g.rotation.iter())
            .copied()
            .chain([g.size])
            .chain(g.latent.iter().copied())
            .collect();
        let numeric = fd_gradient(&points, &basis, &latent, &pose, size, delta);
        let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-8);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() <= 1e-4 * scale, "analytic {analytic:?}\nnumeric {numeric:?}");
        }
        checked += 1;
    }
}

#[test]
fn latent_fit_recovers_each_element() {
    let basis = camera();
    let cfg = RefineConfig::default();
    for i in 0..basis.len() {
        let truth = ShapeLatent::one_hot(basis.len(), i, 30.0);
        let pts = decode_surface(&basis, &truth, 500, i as u64).unwrap();
        let fit = fit_latent(&pts, &basis.uniform_latent(), &basis, &cfg).unwrap();
        assert!(fit.weights()[i] >= 0.9, "element {i}: {:?}", fit.weights());
    }
}

#[test]
fn latent_fit_keeps_a_fitting_init() {
    let basis = camera();
    let cfg = RefineConfig::default();
    let init = basis.uniform_latent();
    let pts = decode_surface(&basis, &init, 500, 3).unwrap();
    let before = latent_objective(&pts, &basis, &init, cfg.latent_reg);
    let fit = fit_latent(&pts, &init, &basis, &cfg).unwrap();
    let after = latent_objective(&pts, &basis, &fit, cfg.latent_reg);
    assert!(after <= before);
    assert!(after <= 1e-3, "{after}");
}

#[test]
fn heavy_regularization_pulls_towards_uniform() {
    let basis = camera();
    let cfg = RefineConfig {
        latent_reg: 1e6,
        ..RefineConfig::default()
    };
    let pts = decode_surface(&basis, &basis.canonical_latent(), 200, 1).unwrap();
    let init = ShapeLatent::new(vec![2.0, -1.0, 0.5, 3.0]);
    let fit = fit_latent(&pts, &init, &basis, &cfg).unwrap();
    assert!(fit.raw_norm_sq().sqrt() < 1e-3, "{:?}", fit.raw());
}

#[test]
fn too_few_points_and_wrong_frame() {
    let basis = camera();
    let cfg = RefineConfig::default();
    let few = PointCloud::new(vec![V3::zeros(); 9], Frame::ObjectNormalized);
    assert!(matches!(
        fit_latent(&few, &basis.uniform_latent(), &basis, &cfg),
        Err(crate::Error::InsufficientPoints { needed: 10, got: 9 })
    ));
    let cam = PointCloud::new(vec![V3::zeros(); 20], Frame::Camera);
    assert!(fit_latent(&cam, &basis.uniform_latent(), &basis, &cfg).is_err());
    let few = PointCloud::new(vec![V3::z(); 3], Frame::Camera);
    assert!(refine_pose(&few, &basis.uniform_latent(), &basis, &gt_pose(), 0.2, &cfg).is_err());
    assert!(refine_pose(&cam, &basis.uniform_latent(), &basis, &gt_pose(), 0.0, &cfg).is_err());
}

#[test]
fn ground_truth_is_a_fixed_point() {
    let basis = camera();
    let latent = basis.canonical_latent();
    let pose = gt_pose();
    let pts = observed(&basis, &latent, &pose);
    let (p, s) = refine_pose(&pts, &latent, &basis, &pose, 0.2, &RefineConfig::default()).unwrap();
    assert!((p.translation - pose.translation).norm() < 1e-6);
    assert!(p.rotation.angle_to(&pose.rotation) < 1e-6);
    assert_eq!(s, 0.2);
}

#[test]
fn recovers_translation_and_rotation_offsets() {
    let basis = camera();
    let latent = basis.canonical_latent();
    let pose = gt_pose();
    let pts = observed(&basis, &latent, &pose);
    let cfg = RefineConfig::default();

    let shifted = Pose::new(pose.rotation, pose.translation + V3::new(0.01, 0.0, 0.0));
    let r = refine_pose_traced(&pts, &latent, &basis, &shifted, 0.2, &cfg).unwrap();
    assert!((r.pose.translation - pose.translation).norm() < 1e-3);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));

    let turned = Pose::new(UnitQuaternion::from_axis_angle(&V3::z_axis(), 10f64.to_radians()) * pose.rotation, pose.translation);
    let r = refine_pose_traced(&pts, &latent, &basis, &turned, 0.2, &cfg).unwrap();
    let errs: Vec<f64> = r
        .path
        .iter()
        .map(|p| rotation_error_deg(&p.rotation, &pose.rotation, None).unwrap())
        .collect();
    assert!(errs.len() > 1);
    // Strict decrease until the error reaches the float noise floor of the
    // rendered points.
    let settled = errs.iter().position(|&e| e < 1e-3).unwrap_or(errs.len());
    assert!(errs[..settled].windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(*errs.last().unwrap() < 1.0, "{errs:?}");
}

#[test]
fn refinement_is_equivariant() {
    let basis = camera();
    let latent = basis.canonical_latent();
    let pose = gt_pose();
    let pts = observed(&basis, &latent, &pose);
    let start = Pose::new(UnitQuaternion::from_euler_angles(0.05, 0.0, -0.05) * pose.rotation, pose.translation + V3::new(0.01, -0.005, 0.01));
    let cfg = RefineConfig::default();
    let a = refine_pose_traced(&pts, &latent, &basis, &start, 0.2, &cfg).unwrap();
    let g = Pose::new(UnitQuaternion::from_euler_angles(0.3, 0.2, -0.4), V3::new(0.1, 0.05, 0.2));
    let moved = PointCloud::new(pts.points().iter().map(|p| g.transform_point(p)).collect(), Frame::Camera);
    let b = refine_pose_traced(&moved, &latent, &basis, &g.compose(&start), 0.2, &cfg).unwrap();
    assert!((a.trace.last().unwrap() - b.trace.last().unwrap()).abs() < 1e-6);
    let expect = g.compose(&a.pose);
    assert!((b.pose.translation - expect.translation).norm() < 1e-5);
}

#[test]
fn size_optimization_respects_the_flag() {
    let basis = camera();
    let latent = basis.canonical_latent();
    let pose = gt_pose();
    let pts = observed(&basis, &latent, &pose);
    let on = RefineConfig {
        optimize_size: true,
        ..RefineConfig::default()
    };
    let (_, s) = refine_pose(&pts, &latent, &basis, &pose, 0.22, &on).unwrap();
    assert!((s - 0.2).abs() < (0.22f64 - 0.2).abs());
    let (_, s) = refine_pose(&pts, &latent, &basis, &pose, 0.22, &RefineConfig::default()).unwrap();
    assert_eq!(s, 0.22);
}

#[test]
fn alternation_rounds() {
    let basis = camera();
    let truth = ShapeLatent::new(vec![3.0, 1.0, 0.0, 0.0]);
    let pose = gt_pose();
    let pts = observed(&basis, &truth, &pose);
    let start = Pose::new(
        UnitQuaternion::from_axis_angle(&V3::y_axis(), 10f64.to_radians()) * pose.rotation,
        pose.translation + V3::new(0.02, 0.0, 0.0),
    );
    let init = ShapeLatent::new(vec![2.0, 0.0, 1.0, 0.0]);
    let one = RefineConfig {
        rounds: 1,
        ..RefineConfig::default()
    };
    let r1 = alternate(&pts, &start, 0.2, &init, &basis, &one).unwrap();

    let normalized = normalize_points(&pts, &start, 0.2).unwrap();
    let z = fit_latent(&normalized, &init, &basis, &one).unwrap();
    let (p, s) = refine_pose(&pts, &z, &basis, &start, 0.2, &one).unwrap();
    assert_eq!((r1.pose.clone(), r1.size, r1.latent.clone()), (p, s, z));

    let two = alternate(&pts, &start, 0.2, &init, &basis, &RefineConfig { rounds: 2, ..one.clone() }).unwrap();
    assert!(two.residual() <= r1.residual());
    let three = alternate(&pts, &start, 0.2, &init, &basis, &RefineConfig { rounds: 3, ..one }).unwrap();
    assert!(three.residual() <= r1.residual());
    assert!(three.warning.is_none() || three.residuals.len() < 4);
}

#[test]
fn depth_noise_costs_little_accuracy() {
    let basis = camera();
    let latent = basis.canonical_latent();
    let pose = gt_pose();
    let clean = observed(&basis, &latent, &pose);
    let start = Pose::new(pose.rotation, pose.translation + V3::new(0.01, 0.0, 0.0));
    let cfg = RefineConfig::default();
    let (p, _) = refine_pose(&clean, &latent, &basis, &start, 0.2, &cfg).unwrap();
    let clean_err = (p.translation - pose.translation).norm();
    let mut errs: Vec<f64> = (0..10)
        .map(|seed| {
            let noisy = with_noise(&clean, 0.002, seed);
            let (p, _) = refine_pose(&noisy, &latent, &basis, &start, 0.2, &cfg).unwrap();
            (p.translation - pose.translation).norm()
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let median = (errs[4] + errs[5]) / 2.0;
    assert!(median - clean_err < 0.005, "{median} vs {clean_err}");
}

#[test]
fn config_validation() {
    RefineConfig::default().validate().unwrap();
    assert!(RefineConfig { steps: 0, ..Default::default() }.validate().is_err());
    assert!(RefineConfig { latent_reg: -1.0, ..Default::default() }.validate().is_err());
    assert!(RefineConfig { step_rotation: 0.0, ..Default::default() }.validate().is_err());
    let parsed: RefineConfig = serde_json::from_str(r#"{"rounds": 3, "loss": "l1"}"#).unwrap();
    assert_eq!((parsed.rounds, parsed.loss, parsed.steps), (3, Loss::L1, 50));
}
