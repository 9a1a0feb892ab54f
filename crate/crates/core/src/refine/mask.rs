use crate::error::{Error, Result};
use crate::geometry::{backproject, CameraIntrinsics, PointCloud, Pose};
use crate::raster::{DepthImage, Mask};

/// Binary erosion with a `(2r+1) × (2r+1)` square; pixels outside the image
/// count as background.
pub fn erode_mask(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let full = 2 * radius + 1;
    // Separable: a pixel survives when its whole row window, then its whole
    // column window of row survivors, is set.
    let pass = |len: usize, get: &dyn Fn(usize) -> bool| -> Vec<bool> {
        let mut prefix = vec![0usize; len + 1];
        for i in 0..len {
            prefix[i + 1] = prefix[i] + get(i) as usize;
        }
        (0..len)
            .map(|i| {
                if i < radius || i + radius >= len {
                    return false;
                }
                prefix[i + radius + 1] - prefix[i - radius] == full
            })
            .collect()
    };
    let mut rows = Mask::new(w, h);
    for v in 0..h {
        for (u, on) in pass(w, &|u| mask.get(u, v)).into_iter().enumerate() {
            rows.set(u, v, on);
        }
    }
    let mut out = Mask::new(w, h);
    for u in 0..w {
        for (v, on) in pass(h, &|v| rows.get(u, v)).into_iter().enumerate() {
            out.set(u, v, on);
        }
    }
    out
}

/// Pixels whose back-projected depth lies within `margin` bounding-sphere
/// radii (`size / 2`) of the estimated object center.
pub fn object_mask(depth: &DepthImage, pose: &Pose, size: f64, intr: &CameraIntrinsics, margin: f64) -> Mask {
    let (w, h) = (depth.width(), depth.height());
    let mut mask = Mask::new(w, h);
    let r2 = (margin * size / 2.0).powi(2);
    for v in 0..h {
        for u in 0..w {
            let d = depth.get(u, v) as f64;
            if d > 0.0 && (intr.ray(u as f64, v as f64) * d - pose.translation).norm_squared() <= r2 {
                mask.set(u, v, true);
            }
        }
    }
    mask
}

/// Erode `mask`, back-project the surviving pixels and keep at most
/// `max_points` of them.
pub fn observed_points(
    depth: &DepthImage,
    mask: &Mask,
    intr: &CameraIntrinsics,
    erode_radius: usize,
    max_points: usize,
) -> Result<PointCloud> {
    if mask.width() != depth.width() || mask.height() != depth.height() {
        return Err(Error::invalid("mask and depth image differ in size"));
    }
    let eroded = erode_mask(mask, erode_radius);
    Ok(backproject(depth, &eroded, intr)?.subsample(max_points))
}
