use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::depth::render_depth;
use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, Pose};
use crate::raster::DepthImage;
use crate::shape::{ShapeBasis, ShapeLatent};
use nalgebra::UnitQuaternion;

/// Square region of interest in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoI {
    pub center: Vector2<f64>,
    /// Side length, pixels.
    pub side: f64,
}

/// Geometry of the canonical crop shared by the codebook and the filter.
///
/// A unit-size object at `(0, 0, z0)` seen through a pinhole with focal
/// length `ref_focal` fills a crop of `crop_px` pixels, resampled to
/// `resolution²` values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Canonical depth `z0`, meters.
    pub z0: f64,
    /// Canonical crop side `w0` at the reference focal length, pixels.
    pub crop_px: f64,
    /// Reference focal length, pixels.
    pub ref_focal: f64,
    /// Side `S` of the normalized depth map.
    pub resolution: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            z0: 5.0,
            crop_px: 64.0,
            ref_focal: 256.0,
            resolution: 64,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z0 > 0.5 && self.crop_px >= 1.0 && self.ref_focal > 0.0 && self.resolution >= 16 {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad render config {self:?}")))
        }
    }

    /// Intrinsics of the canonical render: a `crop_px`-wide square image
    /// centered on the optical axis.
    pub fn reference_intrinsics(&self) -> CameraIntrinsics {
        let n = self.crop_px.round().max(1.0) as usize;
        let c = (n as f64 - 1.0) / 2.0;
        CameraIntrinsics {
            fx: self.ref_focal,
            fy: self.ref_focal,
            cx: c,
            cy: c,
            width: n,
            height: n,
        }
    }

    /// Canonical crop side for a camera with different focal length, so that
    /// the object occupies the same fraction of the crop as in the codebook.
    pub fn crop_for(&self, intr: &CameraIntrinsics) -> f64 {
        self.crop_px * 0.5 * (intr.fx + intr.fy) / self.ref_focal
    }
}

/// Values in `[0, 1]`; `0` also marks pixels without valid depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedDepthMap {
    resolution: usize,
    data: Vec<f64>,
}

impl NormalizedDepthMap {
    pub fn from_vec(resolution: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != resolution * resolution {
            return Err(Error::invalid("map data does not match its resolution"));
        }
        Ok(Self { resolution, data })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.resolution + col]
    }
}

/// RoI of an object hypothesis: centered on the projected translation, with
/// side `w0 · s · z0 / z` (the crop shrinks as the object recedes).
pub fn roi_from_state(
    t: &Vector3<f64>,
    size: f64,
    intr: &CameraIntrinsics,
    z0: f64,
    w0: f64,
) -> Result<RoI> {
    let center = project(t, intr)?;
    Ok(RoI {
        center,
        side: w0 * size * z0 / t.z,
    })
}

/// Crop `roi` out of `depth`, resample it to `resolution²` and normalize:
/// `clamp((D − z) / s + 0.5, 0, 1)`.
///
/// Resampling is bilinear over valid neighbors only; a sample whose valid
/// neighbors carry less than half of the bilinear weight is treated as
/// missing and maps to 0, as does anything outside the image.
pub fn normalize_depth_roi(
    depth: &DepthImage,
    roi: &RoI,
    z: f64,
    s: f64,
    resolution: usize,
) -> Result<NormalizedDepthMap> {
    if !(s > 0.0) {
        return Err(Error::invalid(format!("size must be positive, got {s}")));
    }
    if resolution == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    let mut data = vec![0.0; resolution * resolution];
    if !(roi.side > 0.0) || !roi.side.is_finite() {
        return Ok(NormalizedDepthMap { resolution, data });
    }
    let step = roi.side / resolution as f64;
    let u_start = roi.center.x - roi.side / 2.0 + step / 2.0;
    let v_start = roi.center.y - roi.side / 2.0 + step / 2.0;
    let (w, h) = (depth.width() as isize, depth.height() as isize);
    let inv_s = 1.0 / s;
    for row in 0..resolution {
        let v = v_start + row as f64 * step;
        let v0 = v.floor();
        let fv = v - v0;
        let v0 = v0 as isize;
        if v0 + 1 < 0 || v0 >= h {
            continue;
        }
        for col in 0..resolution {
            let u = u_start + col as f64 * step;
            let u0 = u.floor();
            let fu = u - u0;
            let u0 = u0 as isize;
            if u0 + 1 < 0 || u0 >= w {
                continue;
            }
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (du, dv, wt) in [
                (0, 0, (1.0 - fu) * (1.0 - fv)),
                (1, 0, fu * (1.0 - fv)),
                (0, 1, (1.0 - fu) * fv),
                (1, 1, fu * fv),
            ] {
                let (uu, vv) = (u0 + du, v0 + dv);
                if wt == 0.0 || uu < 0 || vv < 0 || uu >= w || vv >= h {
                    continue;
                }
                let d = depth.get(uu as usize, vv as usize);
                if d > 0.0 {
                    acc += wt * d as f64;
                    wsum += wt;
                }
            }
            if wsum >= 0.5 {
                let d = acc / wsum;
                data[row * resolution + col] = ((d - z) * inv_s + 0.5).clamp(0.0, 1.0);
            }
        }
    }
    Ok(NormalizedDepthMap { resolution, data })
}

/// Normalized depth map of a shape at the canonical translation `(0, 0, z0)`
/// with unit size: render, crop, normalize.
pub fn render_normalized(
    basis: &ShapeBasis,
    latent: &ShapeLatent,
    rotation: &UnitQuaternion<f64>,
    cfg: &RenderConfig,
) -> Result<NormalizedDepthMap> {
    let intr = cfg.reference_intrinsics();
    let t0 = Vector3::new(0.0, 0.0, cfg.z0);
    let depth = render_depth(basis, latent, &Pose::new(*rotation, t0), 1.0, &intr)?;
    let roi = roi_from_state(&t0, 1.0, &intr, cfg.z0, cfg.crop_px)?;
    normalize_depth_roi(&depth, &roi, cfg.z0, 1.0, cfg.resolution)
}
