use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::pose::Pose;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Meters, camera coordinates.
    Camera,
    /// Unitless object coordinates, scaled by the object size.
    ObjectNormalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: Frame) -> Self {
        debug_assert!(points.iter().all(|p| p.iter().all(|c| c.is_finite())));
        Self { points, frame }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vector3<f64>> {
        self.points
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keep at most `max` points, taking an evenly strided subset.
    pub fn subsample(&self, max: usize) -> PointCloud {
        if self.points.len() <= max || max == 0 {
            return self.clone();
        }
        let stride = self.points.len() as f64 / max as f64;
        let points = (0..max)
            .map(|i| self.points[(i as f64 * stride) as usize])
            .collect();
        PointCloud::new(points, self.frame)
    }

    /// Map object-normalized points into the camera frame: `R (s p) + T`.
    pub fn denormalize(&self, pose: &Pose, size: f64) -> PointCloud {
        let points = self
            .points
            .iter()
            .map(|p| pose.transform_point(&(p * size)))
            .collect();
        PointCloud::new(points, Frame::Camera)
    }
}

/// Express camera-frame points in the object frame scaled by `size`:
/// `R⁻¹ (p − T) / s`.
pub fn normalize_points(cloud: &PointCloud, pose: &Pose, size: f64) -> Result<PointCloud> {
    if !(size > 0.0) || !size.is_finite() {
        return Err(Error::invalid(format!("size must be positive, got {size}")));
    }
    let inv = 1.0 / size;
    let points = cloud
        .points
        .iter()
        .map(|p| pose.inverse_transform_point(p) * inv)
        .collect();
    Ok(PointCloud::new(points, Frame::ObjectNormalized))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Quaternion, UnitQuaternion};
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let pose = Pose::new(
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            Vector3::new(0.1, -0.2, 1.0),
        );
        let c = PointCloud::new(vec![pose.translation], Frame::Camera);
        let n = normalize_points(&c, &pose, 0.3).unwrap();
        assert_eq!(n.frame(), Frame::ObjectNormalized);
        assert_abs_diff_eq!(n.points()[0], Vector3::zeros(), epsilon = 1e-15);

        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let c = PointCloud::new(vec![Vector3::new(2.0, 0.0, 1.0)], Frame::Camera);
        let n = normalize_points(&c, &pose, 2.0).unwrap();
        assert_abs_diff_eq!(n.points()[0], Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);

        assert!(normalize_points(&c, &pose, 0.0).is_err());
        assert!(normalize_points(&c, &pose, -1.0).is_err());
    }

    #[test]
    fn subsample_is_strided() {
        let pts = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let c = PointCloud::new(pts, Frame::Camera);
        let s = c.subsample(5);
        let xs: Vec<f64> = s.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(c.subsample(20).len(), 10);
    }

    proptest! {
        #[test]
        fn normalize_inverts_forward_transform(
            w in -1.0..1.0f64, i in -1.0..1.0f64, j in -1.0..1.0f64, k in -1.0..1.0f64,
            t in prop::array::uniform3(-2.0..2.0f64),
            p in prop::array::uniform3(-1.0..1.0f64),
            s in 0.01..3.0f64,
        ) {
            prop_assume!(w * w + i * i + j * j + k * k > 1e-3);
            let pose = Pose::new(
                UnitQuaternion::new_normalize(Quaternion::new(w, i, j, k)),
                Vector3::from(t),
            );
            let obj = PointCloud::new(vec![Vector3::from(p)], Frame::ObjectNormalized);
            let cam = obj.denormalize(&pose, s);
            let back = normalize_points(&cam, &pose, s).unwrap();
            prop_assert!((back.points()[0] - Vector3::from(p)).norm() < 1e-9);
        }
    }
}
