use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Euler-style coordinates of a grid bin, in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinAngles {
    pub azimuth: f64,
    pub elevation: f64,
    pub in_plane: f64,
}

/// Uniform discretization of SO(3) over azimuth, elevation and in-plane
/// rotation.
///
/// Bins are ordered azimuth-major, then elevation, then in-plane. Elevation
/// covers `[-90°, +90°]` including both poles, so the poles carry duplicate
/// (gimbal-locked) bins. Each bin stores its rotation with a nonnegative
/// scalar part.
#[derive(Clone, Debug)]
pub struct RotationGrid {
    step_deg: u32,
    n_az: usize,
    n_el: usize,
    n_ip: usize,
    bins: Vec<UnitQuaternion<f64>>,
}

impl RotationGrid {
    pub fn new(step_deg: u32) -> Result<Self> {
        if step_deg == 0 || step_deg > 180 || 180 % step_deg != 0 {
            return Err(Error::invalid(format!(
                "grid step {step_deg}° must be a positive divisor of 180"
            )));
        }
        let n_az = (360 / step_deg) as usize;
        let n_el = (180 / step_deg + 1) as usize;
        let n_ip = n_az;
        let mut bins = Vec::with_capacity(n_az * n_el * n_ip);
        for ia in 0..n_az {
            for ie in 0..n_el {
                for ii in 0..n_ip {
                    let a = angles(step_deg, ia, ie, ii);
                    bins.push(canonical(viewpoint_rotation(
                        a.azimuth.to_radians(),
                        a.elevation.to_radians(),
                        a.in_plane.to_radians(),
                    )));
                }
            }
        }
        Ok(Self {
            step_deg,
            n_az,
            n_el,
            n_ip,
            bins,
        })
    }

    pub fn step_deg(&self) -> u32 {
        self.step_deg
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bins(&self) -> &[UnitQuaternion<f64>] {
        &self.bins
    }

    pub fn rotation(&self, index: usize) -> &UnitQuaternion<f64> {
        &self.bins[index]
    }

    /// Axis sizes `(azimuth, elevation, in-plane)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_az, self.n_el, self.n_ip)
    }

    pub fn triple_of(&self, index: usize) -> (usize, usize, usize) {
        let ii = index % self.n_ip;
        let rest = index / self.n_ip;
        (rest / self.n_el, rest % self.n_el, ii)
    }

    pub fn index_of(&self, ia: usize, ie: usize, ii: usize) -> Option<usize> {
        (ia < self.n_az && ie < self.n_el && ii < self.n_ip)
            .then(|| (ia * self.n_el + ie) * self.n_ip + ii)
    }

    pub fn angles_of(&self, index: usize) -> BinAngles {
        let (ia, ie, ii) = self.triple_of(index);
        angles(self.step_deg, ia, ie, ii)
    }

    /// Bin whose rotation is closest (geodesically) to `q`.
    pub fn nearest(&self, q: &UnitQuaternion<f64>) -> usize {
        let mut best = 0;
        let mut best_dot = -1.0;
        for (i, b) in self.bins.iter().enumerate() {
            let d = b.coords.dot(&q.coords).abs();
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }
}

fn angles(step: u32, ia: usize, ie: usize, ii: usize) -> BinAngles {
    let step = step as f64;
    BinAngles {
        azimuth: ia as f64 * step,
        elevation: -90.0 + ie as f64 * step,
        in_plane: ii as f64 * step,
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Object-to-camera rotation for a camera placed at (`azimuth`, `elevation`)
/// on the viewing sphere around the object, looking at its center, then
/// rolled by `in_plane` about the optical axis. Angles in radians.
///
/// Azimuth turns about the object's `+z` (up) axis; elevation lifts the camera
/// toward `+z`. At zero roll the object's `+z` projects upward in the image
/// whenever it is not parallel to the optical axis.
pub fn viewpoint_rotation(azimuth: f64, elevation: f64, in_plane: f64) -> UnitQuaternion<f64> {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    // Optical axis (camera +z) expressed in the object frame: from the camera
    // toward the object center.
    let forward = -Vector3::new(ce * ca, ce * sa, se);
    let right = Vector3::new(-sa, ca, 0.0);
    let down = forward.cross(&right);
    // Rows are the camera axes in object coordinates.
    let view = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), in_plane);
    let r = roll * Rotation3::from_matrix_unchecked(view);
    UnitQuaternion::from_rotation_matrix(&r)
}
