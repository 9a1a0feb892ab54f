use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rigid transform from the object frame into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    /// Meters.
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.translation))
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

fn checked_unit(q: &Quaternion<f64>) -> Result<UnitQuaternion<f64>> {
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() >= 1e-6 {
        return Err(Error::NonUnitQuaternion(n));
    }
    Ok(UnitQuaternion::new_normalize(*q))
}

/// Angular distance between two orientations, in degrees.
///
/// Without `symmetry_axis` this is the geodesic angle of `a⁻¹ b`. With an
/// axis (object frame) the spin about that axis is factored out: the error is
/// the angle between the axis as placed by `a` and as placed by `b`, which is
/// the minimum geodesic angle over all rotations about the axis.
pub fn rotation_error_deg(
    a: &Quaternion<f64>,
    b: &Quaternion<f64>,
    symmetry_axis: Option<&Vector3<f64>>,
) -> Result<f64> {
    let a = checked_unit(a)?;
    let b = checked_unit(b)?;
    let rel = a.inverse() * b;
    let rad = match symmetry_axis {
        None => {
            // 2·acos|w| is numerically poor near 0; use atan2 of the vector part.
            let q = rel.quaternion();
            2.0 * q.imag().norm().atan2(q.w.abs())
        }
        Some(axis) => {
            let n = axis.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::invalid("symmetry axis must be nonzero"));
            }
            let axis = axis / n;
            let moved = rel * axis;
            axis.cross(&moved).norm().atan2(axis.dot(&moved))
        }
    };
    Ok(rad.to_degrees())
}

/// Rotation carrying the optical axis onto the viewing ray through `t`.
///
/// The codebook is rendered with the object on the optical axis; an object
/// seen along another ray appears as if rotated by the inverse of this.
pub fn ray_rotation(t: &Vector3<f64>) -> UnitQuaternion<f64> {
    let z = Vector3::z();
    let n = t.norm();
    if n == 0.0 {
        return UnitQuaternion::identity();
    }
    let d = t / n;
    match UnitQuaternion::rotation_between(&z, &d) {
        Some(q) => q,
        // Antiparallel: any half-turn about an axis orthogonal to z.
        None => UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
    }
}

/// Small helper used across the crate: axis-angle vector to a quaternion.
pub(crate) fn exp_so3(omega: &Vector3<f64>) -> UnitQuaternion<f64> {
    let angle = omega.norm();
    if angle < 1e-300 {
        return UnitQuaternion::identity();
    }
    UnitQuaternion::from_axis_angle(&Unit::new_unchecked(omega / angle), angle)
}
