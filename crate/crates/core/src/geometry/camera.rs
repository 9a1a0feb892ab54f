use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::cloud::{Frame, PointCloud};
use crate::error::{Error, Result};
use crate::raster::{DepthImage, Mask};

/// Pinhole intrinsics, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad camera intrinsics {self:?}")))
        }
    }

    /// Ray through pixel `(u, v)` with unit depth (`z = 1`).
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

pub fn project(point: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<Vector2<f64>> {
    if !(point.z > 0.0) {
        return Err(Error::BehindCamera {
            x: point.x,
            y: point.y,
            z: point.z,
        });
    }
    Ok(Vector2::new(
        intr.fx * point.x / point.z + intr.cx,
        intr.fy * point.y / point.z + intr.cy,
    ))
}

/// Camera-frame points for every masked pixel with valid (nonzero) depth.
pub fn backproject(depth: &DepthImage, mask: &Mask, intr: &CameraIntrinsics) -> Result<PointCloud> {
    if depth.width() != mask.width() || depth.height() != mask.height() {
        return Err(Error::invalid(format!(
            "depth is {}x{} but mask is {}x{}",
            depth.width(),
            depth.height(),
            mask.width(),
            mask.height()
        )));
    }
    let mut points = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let d = depth.get(u, v);
            if d > 0.0 && mask.get(u, v) {
                points.push(intr.ray(u as f64, v as f64) * d as f64);
            }
        }
    }
    Ok(PointCloud::new(points, Frame::Camera))
}
