//! Rigid-body math, the rotation grid, pinhole projection, point clouds and
//! pose-error metrics.
//!
//! Conventions used throughout the crate:
//!
//! * A [`Pose`] maps object coordinates into the camera frame:
//!   `x_cam = R * x_obj + T`.
//! * Quaternions are nalgebra's, stored scalar-last (`[i, j, k, w]`).
//! * Camera frame: `+x` right, `+y` down, `+z` along the optical axis.
//! * Pixel `(u, v)` addresses the center of column `u`, row `v`.

mod camera;
mod cloud;
mod grid;
mod pose;

pub use camera::{backproject, project, CameraIntrinsics};
pub use cloud::{normalize_points, Frame, PointCloud};
pub use grid::{viewpoint_rotation, BinAngles, RotationGrid};
pub use pose::{ray_rotation, rotation_error_deg, Pose};
pub(crate) use pose::exp_so3;
