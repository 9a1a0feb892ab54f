use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use super::*;
use crate::geometry::{backproject, normalize_points, CameraIntrinsics, Frame, PointCloud, Pose};
use crate::shape::{ShapeBasis, ShapeLatent};

type V3 = Vector3<f64>;

fn cloud(points: Vec<V3>) -> PointCloud {
    PointCloud::new(points, Frame::Camera)
}

fn small_scene(frames: usize) -> SceneConfig {
    SceneConfig {
        category: "mug".into(),
        latent: ShapeLatent::new(vec![0.4, -0.1, 0.2, 0.0]),
        size: 0.15,
        trajectory: Trajectory {
            waypoints: vec![
                Waypoint {
                    translation: [-0.03, 0.0, 0.7],
                    rotation_deg: [-100.0, 10.0, 0.0],
                },
                Waypoint {
                    translation: [0.03, 0.01, 0.75],
                    rotation_deg: [-110.0, -10.0, 5.0],
                },
            ],
            velocity_noise: 0.0005,
            angular_noise_deg: 0.2,
        },
        frames,
        intrinsics: CameraIntrinsics::new(250.0, 250.0, 159.5, 119.5, 320, 240).unwrap(),
        depth_noise: 0.0,
        occluder: None,
        seed: 3,
    }
}

#[test]
fn five_deg_five_cm_truth_table() {
    let gt = Pose::identity();
    let at = |deg: f64, cm: f64| {
        Pose::new(
            UnitQuaternion::from_axis_angle(&V3::y_axis(), deg.to_radians()),
            V3::new(cm / 100.0, 0.0, 0.0),
        )
    };
    assert!(metric_5deg5cm(&at(4.0, 4.0), &gt, None).unwrap());
    assert!(!metric_5deg5cm(&at(6.0, 1.0), &gt, None).unwrap());
    assert!(!metric_5deg5cm(&at(4.0, 6.0), &gt, None).unwrap());
    assert!(!metric_5deg5cm(&at(6.0, 6.0), &gt, None).unwrap());
    // Spin about the symmetry axis is free.
    let spun = Pose::new(UnitQuaternion::from_axis_angle(&V3::z_axis(), 1.0), V3::zeros());
    assert!(metric_5deg5cm(&spun, &gt, Some(&V3::z())).unwrap());
    assert!(!metric_5deg5cm(&spun, &gt, None).unwrap());
    assert!(success_5deg5cm(4.999, 0.0499));
    assert!(!success_5deg5cm(5.0, 0.0));
    assert!(!success_5deg5cm(0.0, 0.05));
}

#[test]
fn iou_axis_aligned_cases() {
    let unit = |x: f64| OrientedBox::axis_aligned([x, 0.0, 0.0], [0.5; 3]).unwrap();
    assert!((iou3d(&unit(0.0), &unit(0.0)).unwrap() - 1.0).abs() < 0.01);
    assert_eq!(iou3d(&unit(0.0), &unit(2.0)).unwrap(), 0.0);
    assert!((iou3d(&unit(0.0), &unit(0.5)).unwrap() - 1.0 / 3.0).abs() < 0.01);
    // Nested: small box of volume 1/8 inside the unit cube.
    let small = OrientedBox::axis_aligned([0.1, 0.1, 0.1], [0.25; 3]).unwrap();
    assert!((iou3d(&unit(0.0), &small).unwrap() - 0.125).abs() < 0.01);
    // A cube turned 90° about z is the same set.
    let turned = OrientedBox::new(
        Pose::new(UnitQuaternion::from_axis_angle(&V3::z_axis(), std::f64::consts::FRAC_PI_2), V3::zeros()),
        [0.5; 3],
    )
    .unwrap();
    assert!((iou3d(&unit(0.0), &turned).unwrap() - 1.0).abs() < 0.01);
}

#[test]
fn iou_rejects_degenerate_boxes() {
    assert!(OrientedBox::axis_aligned([0.0; 3], [0.5, 0.0, 0.5]).is_err());
    let bad = OrientedBox {
        pose: Pose::identity(),
        half_extents: [0.5, -1.0, 0.5],
    };
    let good = OrientedBox::axis_aligned([0.0; 3], [0.5; 3]).unwrap();
    assert!(iou3d(&good, &bad).is_err());
}

#[test]
fn chamfer_examples() {
    let a = cloud(vec![V3::new(0.0, 0.0, 0.0), V3::new(1.0, 2.0, 3.0)]);
    assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    let p = cloud(vec![V3::zeros()]);
    let q = cloud(vec![V3::new(0.1, 0.0, 0.0)]);
    assert!((chamfer(&p, &q).unwrap() - 0.02).abs() < 1e-15);
    assert!(chamfer(&p, &cloud(vec![])).is_err());
}

/// Brute-force oracle: explicit double loop, directions summed separately.
fn chamfer_oracle(a: &[V3], b: &[V3]) -> f64 {
    let mut ab = 0.0;
    for p in a {
        let mut best = f64::MAX;
        for q in b {
            let d = (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2);
            if d < best {
                best = d;
            }
        }
        ab += best;
    }
    let mut ba = 0.0;
    for q in b {
        let mut best = f64::MAX;
        for p in a {
            let d = (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2);
            if d < best {
                best = d;
            }
        }
        ba += best;
    }
    ab / a.len() as f64 + ba / b.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chamfer_matches_oracle(
        a in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 100),
        b in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 100),
    ) {
        let a: Vec<V3> = a.into_iter().map(V3::from).collect();
        let b: Vec<V3> = b.into_iter().map(V3::from).collect();
        let got = chamfer(&cloud(a.clone()), &cloud(b.clone())).unwrap();
        prop_assert!((got - chamfer_oracle(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(
        c in prop::array::uniform3(-0.5..0.5f64),
        h in prop::array::uniform3(0.1..1.0f64),
        angle in -3.0..3.0f64,
    ) {
        let a = OrientedBox::axis_aligned([0.0; 3], [0.5; 3]).unwrap();
        let b = OrientedBox::new(
            Pose::new(UnitQuaternion::from_axis_angle(&V3::x_axis(), angle), V3::from(c)),
            h,
        ).unwrap();
        let ab = iou3d(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - iou3d(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn shape_box_encloses_surface() {
    let basis = ShapeBasis::category("camera").unwrap();
    let latent = basis.canonical_latent();
    let surface = crate::shape::decode_surface(&basis, &latent, 500, 1).unwrap();
    let pose = Pose::new(UnitQuaternion::from_euler_angles(0.3, -0.2, 0.5), V3::new(0.1, 0.0, 0.8));
    let b = shape_box(&surface, &pose, 0.2).unwrap();
    for p in surface.denormalize(&pose, 0.2).points() {
        let q = b.pose.inverse_transform_point(p);
        assert!((0..3).all(|i| q[i].abs() <= b.half_extents[i] + 1e-12));
    }
    // Unit-diagonal elements give a box diagonal close to the size.
    let diag = 2.0 * V3::from(b.half_extents).norm();
    assert!((diag - 0.2).abs() < 0.02, "{diag}");
}

#[test]
fn sequence_has_continuous_ground_truth() {
    let cfg = small_scene(40);
    let poses = cfg.poses();
    assert_eq!(poses.len(), 40);
    for w in poses.windows(2) {
        let angle = w[0].rotation.angle_to(&w[1].rotation).to_degrees();
        assert!(angle < 2.0, "{angle}");
        assert!((w[0].translation - w[1].translation).norm() < 0.01);
    }
    // Without jitter the trajectory passes through the waypoints.
    let mut still = cfg.clone();
    still.trajectory.velocity_noise = 0.0;
    still.trajectory.angular_noise_deg = 0.0;
    let poses = still.poses();
    let last = still.trajectory.waypoints[1].pose();
    assert!((poses[39].translation - last.translation).norm() < 1e-12);
    assert!(poses[39].rotation.angle_to(&last.rotation) < 1e-9);
}

#[test]
fn zero_noise_frames_lie_on_the_surface() {
    let cfg = small_scene(3);
    let seq = generate_sequence(&cfg).unwrap();
    let basis = seq.basis().unwrap();
    for f in &seq.frames {
        let det = f.detection().unwrap();
        assert_eq!(det.mask, f.depth.valid_mask());
        let pts = backproject(&f.depth, &f.mask, &cfg.intrinsics).unwrap();
        let norm = normalize_points(&pts, &f.pose, f.size).unwrap();
        let bad = norm.points().iter().filter(|q| basis.sdf(&cfg.latent, q).abs() >= 1e-3).count();
        assert!(bad * 1000 <= norm.len(), "{bad} of {}", norm.len());
    }
}

#[test]
fn generation_is_deterministic_and_noisy() {
    let mut cfg = small_scene(2);
    cfg.depth_noise = 0.002;
    let a = generate_sequence(&cfg).unwrap();
    let b = generate_sequence(&cfg).unwrap();
    assert_eq!(a, b);
    let mut clean = cfg.clone();
    clean.depth_noise = 0.0;
    let c = generate_sequence(&clean).unwrap();
    let diffs: Vec<f64> = a.frames[0]
        .depth
        .data()
        .iter()
        .zip(c.frames[0].depth.data())
        .filter(|(_, &y)| y > 0.0)
        .map(|(&x, &y)| (x - y) as f64)
        .collect();
    let std = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    assert!((std - 0.002).abs() < 2e-4, "{std}");
}

#[test]
fn occluder_hides_part_of_the_object() {
    let mut cfg = small_scene(1);
    let full = generate_sequence(&cfg).unwrap();
    cfg.occluder = Some(Occluder { fraction: 0.4 });
    let occ = generate_sequence(&cfg).unwrap();
    let (n0, n1) = (full.frames[0].mask.count(), occ.frames[0].mask.count());
    assert!(n1 < n0 && n1 > 0, "{n1} of {n0}");
    let [_, _, u1, _] = occ.frames[0].mask.bbox().unwrap();
    let [u0f, _, u1f, _] = full.frames[0].mask.bbox().unwrap();
    assert!(u1 < u1f && u1 > u0f);
    assert_eq!(occ.frames[0].depth.valid_mask(), occ.frames[0].mask);
}

#[test]
fn leaving_the_frustum_names_the_frame() {
    let mut cfg = small_scene(10);
    cfg.trajectory.velocity_noise = 0.0;
    cfg.trajectory.angular_noise_deg = 0.0;
    cfg.trajectory.waypoints[1].translation = [3.0, 0.0, 0.7];
    match generate_sequence(&cfg) {
        Err(crate::Error::LeavesFrustum { frame }) => assert!(frame > 0 && frame < 10, "{frame}"),
        other => panic!("expected a frustum error, got {other:?}"),
    }
}

#[test]
fn invalid_scenes_are_rejected() {
    let mut cfg = small_scene(0);
    assert!(generate_sequence(&cfg).is_err());
    cfg.frames = 1;
    cfg.depth_noise = -1.0;
    assert!(cfg.validate().is_err());
    cfg.depth_noise = 0.0;
    cfg.latent = ShapeLatent::new(vec![0.0; 3]);
    assert!(generate_sequence(&cfg).is_err());
}

#[test]
fn sequence_round_trips_through_disk() {
    let mut cfg = small_scene(2);
    cfg.depth_noise = 0.001;
    let seq = generate_sequence(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    seq.save(dir.path()).unwrap();
    assert!(dir.path().join("depth/000001.f32").exists());
    assert!(dir.path().join("mask/000000.png").exists());
    assert_eq!(Sequence::load(dir.path()).unwrap(), seq);
}

#[test]
fn reference_scene_parses() {
    let cfg = SceneConfig::reference();
    cfg.validate().unwrap();
    assert_eq!(cfg.frames, 100);
    assert_eq!(cfg.category, "camera");
    assert_eq!(cfg.depth_noise, 0.002);
}

fn record(frame: usize, terr_cm: f64, rerr_deg: f64, iou: f64) -> FrameRecord {
    FrameRecord {
        frame,
        pose: Pose::identity(),
        size: 0.2,
        latent: vec![0.0; 4],
        filter_pose: Pose::identity(),
        filter_size: 0.2,
        terr_cm,
        rerr_deg,
        iou,
        cd: 0.1 * frame as f64 + 1.0 / 3.0,
        ms: 0.0,
        success: success_5deg5cm(rerr_deg, terr_cm / 100.0),
        lost: false,
        residual: Some(1e-5),
    }
}

fn report(frames: Vec<FrameRecord>) -> TrackReport {
    TrackReport {
        category: "camera".into(),
        seed: 1,
        summary: Summary::from_frames(&frames, RotationErrorMode::Symmetric),
        frames,
    }
}

#[test]
fn summary_matches_per_frame_values() {
    let r = report(vec![
        record(0, 1.0, 2.0, 0.9),
        record(1, 6.0, 1.0, 0.2),
        record(2, 1.0, 7.0, 0.5),
        record(3, 0.1 + 0.2, 4.9, 0.3),
    ]);
    let s = &r.summary;
    let successes = r.frames.iter().filter(|f| f.success).count();
    assert_eq!(s.success_5deg5cm, 100.0 * successes as f64 / 4.0);
    assert_eq!(s.success_5deg5cm, 50.0);
    assert_eq!(s.iou25, 75.0);
    assert_eq!(s.median_rerr_deg, (2.0 + 4.9) / 2.0);
    assert_eq!(s.mean_fps, None);
    assert!((0.0..=100.0).contains(&s.success_5deg5cm));
}

#[test]
fn csv_round_trips_per_frame_values() {
    let r = report(vec![record(0, 1.0 / 3.0, 2.0, 0.9), record(1, 6.0, 1e-9, 0.123456789)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    emit_report(&r, &path, ReportFormat::Csv, None).unwrap();
    let rows = read_report_csv(&path).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, f) in rows.iter().zip(&r.frames) {
        assert_eq!(row.frame, Some(f.frame));
        assert_eq!((row.terr_cm, row.rerr_deg, row.iou, row.cd, row.ms), (f.terr_cm, f.rerr_deg, f.iou, f.cd, f.ms));
    }
    assert_eq!(rows[2].frame, None);
    assert_eq!(rows[2].terr_cm, r.summary.mean_terr_cm);
}

#[test]
fn empty_report_is_header_only() {
    let r = report(vec![]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    emit_report(&r, &path, ReportFormat::Csv, None).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "frame,terr_cm,rerr_deg,iou,cd,ms\n");
    assert!(read_report_csv(&path).unwrap().is_empty());
}

#[test]
fn json_round_trip_and_plot() {
    let r = report(vec![record(0, 1.0 / 3.0, 2.0, 0.9), record(1, 6.0, 0.1, 0.1)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let svg = dir.path().join("r.svg");
    emit_report(&r, &path, ReportFormat::Json, Some(&svg)).unwrap();
    let back = read_report_json(&path).unwrap();
    assert_eq!(back, r);
    let recount = back.frames.iter().filter(|f| f.success).count() as f64 / back.frames.len() as f64 * 100.0;
    assert_eq!(back.summary.success_5deg5cm, recount);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("polyline"));
}

#[test]
fn report_io_errors_name_the_path() {
    let r = report(vec![]);
    let path = std::path::Path::new("/nonexistent/dir/r.json");
    let err = emit_report(&r, path, ReportFormat::Json, None).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/r.json"), "{err}");
    let err = emit_report(&r, &path.with_extension("csv"), ReportFormat::Csv, None).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/r.csv"), "{err}");
}
