use nalgebra::Vector3;

use super::objective::{pose_objective, pose_objective_grad};
use super::{check_points, RefineConfig};
use crate::error::{Error, Result};
use crate::geometry::{exp_so3, PointCloud, Pose};
use crate::shape::{ShapeBasis, ShapeLatent};

type V3 = Vector3<f64>;

const ARMIJO: f64 = 1e-4;
const MIN_SIZE: f64 = 1e-3;
/// Relative objective decrease below which the iteration stops.
const REL_TOL: f64 = 1e-6;

/// Result of [`refine_pose_traced`].
#[derive(Clone, Debug, PartialEq)]
pub struct PoseRefinement {
    pub pose: Pose,
    pub size: f64,
    /// Objective before the first step and after every accepted step.
    pub trace: Vec<f64>,
    /// Pose before the first step and after every accepted step.
    pub path: Vec<Pose>,
}

/// Refine `(T, R[, s])` against the SDF of `latent`; see
/// [`refine_pose_traced`].
pub fn refine_pose(
    points: &PointCloud,
    latent: &ShapeLatent,
    basis: &ShapeBasis,
    pose0: &Pose,
    size0: f64,
    cfg: &RefineConfig,
) -> Result<(Pose, f64)> {
    let r = refine_pose_traced(points, latent, basis, pose0, size0, cfg)?;
    Ok((r.pose, r.size))
}

/// Per-block curvature scales of the robust objective, averaged so each is
/// invariant to rotations of the camera frame.
fn block_scales(points: &[V3], basis: &ShapeBasis, latent: &ShapeLatent, pose: &Pose, size: f64, delta: f64) -> [f64; 3] {
    let inv = 1.0 / size;
    let mut acc = [0.0; 3];
    for p in points {
        let v = p - pose.translation;
        let q = pose.rotation.inverse_transform_vector(&v) * inv;
        let (sdf, g) = basis.sdf_grad(latent, &q);
        let r = size * sdf;
        // Reweighted curvature ψ(r)/r; L1 uses the same guard at δ.
        let weight = 1.0 / delta.max(r.abs());
        let gc = pose.rotation * g;
        acc[0] += weight * gc.norm_squared() / 3.0;
        acc[1] += weight * gc.cross(&v).norm_squared() / 3.0;
        acc[2] += weight * (sdf - g.dot(&q)).powi(2);
    }
    let n = points.len() as f64;
    acc.map(|a| a / n + 1e-12)
}

fn clip(v: V3, cap: f64) -> V3 {
    let n = v.norm();
    if n > cap {
        v * (cap / n)
    } else {
        v
    }
}

/// Minimize the mean robust SDF residual of camera-frame points over the
/// translation, a left-multiplied rotation increment and optionally the
/// size.
///
/// Each of the `cfg.steps` iterations takes a block-scaled gradient step
/// (per-block curvature estimates from the reweighted residuals, step length
/// capped per block) and backtracks until the Armijo condition holds, so the
/// objective never increases. Stops early when no decrease is possible or
/// an accepted step improves the objective by less than a relative `1e-6`.
pub fn refine_pose_traced(
    points: &PointCloud,
    latent: &ShapeLatent,
    basis: &ShapeBasis,
    pose0: &Pose,
    size0: f64,
    cfg: &RefineConfig,
) -> Result<PoseRefinement> {
    check_points(points.len())?;
    if !(size0 > 0.0) {
        return Err(Error::invalid(format!("size must be positive, got {size0}")));
    }
    let pts = points.points();
    let delta = cfg.huber_delta * size0;
    let loss = cfg.loss;
    let mut pose = pose0.clone();
    let mut size = size0;
    let mut f = pose_objective(pts, basis, latent, &pose, size, delta, loss);
    if !f.is_finite() {
        return Err(Error::RefinementDiverged);
    }
    let mut trace = vec![f];
    let mut path = vec![pose.clone()];
    let mut alpha = 1.0;
    for _ in 0..cfg.steps {
        let (_, grad) = pose_objective_grad(pts, basis, latent, &pose, size, delta, loss);
        let scale = block_scales(pts, basis, latent, &pose, size, delta);
        let dt = clip(-grad.translation / scale[0], cfg.step_translation);
        let dw = clip(-grad.rotation / scale[1], cfg.step_rotation);
        let ds = if cfg.optimize_size {
            (-grad.size / scale[2]).clamp(-cfg.step_size, cfg.step_size)
        } else {
            0.0
        };
        let slope = grad.translation.dot(&dt) + grad.rotation.dot(&dw) + grad.size * ds;
        if !(slope < 0.0) {
            break;
        }
        let mut a = alpha;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = Pose::new(exp_so3(&(dw * a)) * pose.rotation, pose.translation + dt * a);
            let cs = (size + ds * a).max(MIN_SIZE);
            let fc = pose_objective(pts, basis, latent, &cand, cs, delta, loss);
            if !fc.is_finite() {
                return Err(Error::RefinementDiverged);
            }
            if fc <= f + ARMIJO * a * slope {
                accepted = Some((cand, cs, fc));
                break;
            }
            a *= 0.5;
        }
        let Some((cand, cs, fc)) = accepted else { break };
        let stalled = f - fc <= REL_TOL * f;
        pose = cand;
        size = cs;
        f = fc;
        trace.push(f);
        path.push(pose.clone());
        alpha = (a * 2.0).min(1.0);
        if stalled {
            break;
        }
    }
    Ok(PoseRefinement { pose, size, trace, path })
}
