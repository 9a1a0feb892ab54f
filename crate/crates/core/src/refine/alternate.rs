use super::latent::fit_latent;
use super::objective::pose_objective;
use super::pose::refine_pose;
use super::{check_points, RefineConfig};
use crate::error::Result;
use crate::geometry::{normalize_points, PointCloud, Pose};
use crate::shape::{ShapeBasis, ShapeLatent};

/// Outcome of [`alternate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Alternation {
    pub pose: Pose,
    pub size: f64,
    pub latent: ShapeLatent,
    /// Pose objective at the initial state, then after each accepted round.
    pub residuals: Vec<f64>,
    /// Set when a round failed or raised the residual; the state is the
    /// last accepted one.
    pub warning: Option<String>,
}

impl Alternation {
    /// Residual of the returned state.
    pub fn residual(&self) -> f64 {
        *self.residuals.last().expect("initial residual")
    }
}

/// Alternate shape estimation and pose refinement `cfg.rounds` times:
/// normalize the points with the current pose and size, fit the latent,
/// refine the pose under the new latent.
///
/// A round is kept only if the pose objective (Huber scale fixed by
/// `size0`) does not increase, so more rounds never end with a larger
/// residual than fewer.
pub fn alternate(
    points: &PointCloud,
    pose0: &Pose,
    size0: f64,
    latent0: &ShapeLatent,
    basis: &ShapeBasis,
    cfg: &RefineConfig,
) -> Result<Alternation> {
    check_points(points.len())?;
    cfg.validate()?;
    let delta = cfg.huber_delta * size0;
    let residual = |pose: &Pose, size: f64, latent: &ShapeLatent| {
        pose_objective(points.points(), basis, latent, pose, size, delta, cfg.loss)
    };
    let mut out = Alternation {
        pose: pose0.clone(),
        size: size0,
        latent: latent0.clone(),
        residuals: vec![residual(pose0, size0, latent0)],
        warning: None,
    };
    for round in 0..cfg.rounds {
        let attempt = normalize_points(points, &out.pose, out.size)
            .and_then(|normalized| fit_latent(&normalized, &out.latent, basis, cfg))
            .and_then(|latent| {
                let (pose, size) = refine_pose(points, &latent, basis, &out.pose, out.size, cfg)?;
                Ok((pose, size, latent))
            });
        match attempt {
            Ok((pose, size, latent)) => {
                let r = residual(&pose, size, &latent);
                if r.is_finite() && r <= out.residual() {
                    out.pose = pose;
                    out.size = size;
                    out.latent = latent;
                    out.residuals.push(r);
                } else {
                    out.warning = Some(format!("round {round} raised the residual to {r:.3e}"));
                    break;
                }
            }
            Err(e) => {
                log::warn!("refinement round {round} failed: {e}");
                out.warning = Some(format!("round {round} failed: {e}"));
                break;
            }
        }
    }
    Ok(out)
}
