use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_error_deg, PointCloud, Pose};

type V3 = Vector3<f64>;

const IOU_CELLS: usize = 128;

/// Distance between two translations, meters.
pub fn translation_error(est: &Pose, gt: &Pose) -> f64 {
    (est.translation - gt.translation).norm()
}

/// The 5°5cm success test on precomputed errors.
pub fn success_5deg5cm(rot_deg: f64, trans_m: f64) -> bool {
    rot_deg < 5.0 && trans_m < 0.05
}

/// True when the rotation error is below 5° and the translation error is
/// below 5 cm. `symmetry_axis` (object frame) factors out spin about it.
pub fn metric_5deg5cm(est: &Pose, gt: &Pose, symmetry_axis: Option<&V3>) -> Result<bool> {
    let rot = rotation_error_deg(est.rotation.quaternion(), gt.rotation.quaternion(), symmetry_axis)?;
    Ok(success_5deg5cm(rot, translation_error(est, gt)))
}

/// A box with center and axes given by `pose` (box frame → camera).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub pose: Pose,
    pub half_extents: [f64; 3],
}

impl OrientedBox {
    pub fn new(pose: Pose, half_extents: [f64; 3]) -> Result<Self> {
        let b = Self { pose, half_extents };
        b.validate()?;
        Ok(b)
    }

    pub fn axis_aligned(center: [f64; 3], half_extents: [f64; 3]) -> Result<Self> {
        Self::new(Pose::from_translation(V3::from(center)), half_extents)
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_extents.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::invalid(format!("degenerate box extents {:?}", self.half_extents)));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.iter().product::<f64>()
    }

    pub fn contains(&self, p: &V3) -> bool {
        let q = self.pose.inverse_transform_point(p);
        (0..3).all(|i| q[i].abs() <= self.half_extents[i])
    }

    pub fn corners(&self) -> [V3; 8] {
        let h = self.half_extents;
        std::array::from_fn(|i| {
            let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
            self.pose.transform_point(&V3::new(s(0) * h[0], s(1) * h[1], s(2) * h[2]))
        })
    }
}

/// Bounding box of a shape: the axis-aligned extent of its object-frame
/// surface points, scaled by `size` and placed by `pose`.
pub fn shape_box(surface: &PointCloud, pose: &Pose, size: f64) -> Result<OrientedBox> {
    if surface.is_empty() {
        return Err(Error::invalid("cannot box an empty surface"));
    }
    let (lo, hi) = surface.points().iter().fold(
        (V3::repeat(f64::INFINITY), V3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let center = (lo + hi) / 2.0 * size;
    let half = (hi - lo) / 2.0 * size;
    let pose = Pose::new(pose.rotation, pose.transform_point(&center));
    OrientedBox::new(pose, [half.x, half.y, half.z])
}

/// Intersection over union of two oriented boxes.
///
/// The intersection volume is integrated over a 128² grid of lines parallel
/// to `a`'s first axis; each line is clipped against `b` exactly, so the only
/// discretization is across the other two axes. The estimate is averaged
/// with the one integrated along `b`'s first axis, which makes it symmetric.
pub fn iou3d(a: &OrientedBox, b: &OrientedBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let inter = (intersection_volume(a, b) + intersection_volume(b, a)) / 2.0;
    let union = a.volume() + b.volume() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

fn intersection_volume(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let h = a.half_extents;
    let axes = a.pose.rotation.to_rotation_matrix();
    let (ex, ey, ez) = (axes * V3::x(), axes * V3::y(), axes * V3::z());
    let dir = b.pose.rotation.inverse_transform_vector(&ex);
    let (dy, dz) = (2.0 * h[1] / IOU_CELLS as f64, 2.0 * h[2] / IOU_CELLS as f64);
    let length: f64 = (0..IOU_CELLS)
        .into_par_iter()
        .map(|j| {
            let y = -h[1] + (j as f64 + 0.5) * dy;
            (0..IOU_CELLS)
                .map(|k| {
                    let z = -h[2] + (k as f64 + 0.5) * dz;
                    let origin = b.pose.inverse_transform_point(&(a.pose.translation + ey * y + ez * z));
                    let (mut t0, mut t1) = (-h[0], h[0]);
                    for i in 0..3 {
                        let (o, d, e) = (origin[i], dir[i], b.half_extents[i]);
                        if d.abs() < 1e-15 {
                            if o.abs() > e {
                                return 0.0;
                            }
                        } else {
                            let (u, v) = ((-e - o) / d, (e - o) / d);
                            t0 = t0.max(u.min(v));
                            t1 = t1.min(u.max(v));
                        }
                    }
                    (t1 - t0).max(0.0)
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    length * dy * dz
}

/// Bidirectional mean of squared nearest-neighbor distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance needs two nonempty clouds"));
    }
    let one_way = |from: &[V3], to: &[V3]| -> f64 {
        let total: f64 = from
            .par_iter()
            .map(|p| to.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total / from.len() as f64
    };
    Ok(one_way(a.points(), b.points()) + one_way(b.points(), a.points()))
}

