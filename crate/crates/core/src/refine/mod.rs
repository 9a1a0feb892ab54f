//! Continuous refinement on top of the filter: shape-latent fitting against
//! normalized observed points, SDF-based pose refinement, and their
//! alternation.

mod alternate;
mod latent;
mod mask;
mod objective;
mod pose;

use serde::{Deserialize, Serialize};

pub use alternate::{alternate, Alternation};
pub use latent::{fit_latent, latent_objective};
pub use mask::{erode_mask, object_mask, observed_points};
pub use objective::{pose_objective, pose_objective_grad, PoseGradient};
pub use pose::{refine_pose, refine_pose_traced, PoseRefinement};

use crate::error::{Error, Result};

/// Robust loss applied to the metric SDF residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Quadratic within `δ`, linear beyond.
    #[default]
    Huber,
    /// Absolute value.
    L1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Gradient steps `F` per pose refinement.
    pub steps: usize,
    /// Shape/pose alternation rounds `R` per frame.
    pub rounds: usize,
    /// Refine on every `K`-th frame.
    pub every: usize,
    /// Weight `λ` of `‖raw‖²` in the latent fit.
    pub latent_reg: f64,
    /// Iteration cap for the latent fit.
    pub latent_iters: usize,
    /// Largest translation change per step, meters.
    pub step_translation: f64,
    /// Largest rotation change per step, radians.
    pub step_rotation: f64,
    /// Largest size change per step, meters.
    pub step_size: f64,
    /// Length of the first trial step of the latent fit.
    pub step_latent: f64,
    /// Huber threshold in normalized units; the metric threshold is this
    /// times the initial size.
    pub huber_delta: f64,
    pub loss: Loss,
    pub optimize_size: bool,
    /// Erosion radius applied to the object mask, pixels.
    pub erode_radius: usize,
    /// Observed points kept per frame.
    pub max_points: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            rounds: 2,
            every: 1,
            latent_reg: 1e-3,
            latent_iters: 50,
            step_translation: 0.02,
            step_rotation: 0.1,
            step_size: 0.01,
            step_latent: 1.0,
            huber_delta: 0.02,
            loss: Loss::Huber,
            optimize_size: false,
            erode_radius: 2,
            max_points: 500,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let steps_ok = [
            self.step_translation,
            self.step_rotation,
            self.step_size,
            self.step_latent,
            self.huber_delta,
        ]
        .iter()
        .all(|&x| x > 0.0 && x.is_finite());
        if self.steps == 0 || self.rounds == 0 || self.every == 0 || self.max_points == 0 {
            return Err(Error::invalid("refine config: F, R, K and max_points must be at least 1"));
        }
        if !(self.latent_reg >= 0.0) || !steps_ok {
            return Err(Error::invalid("refine config: λ must be >= 0 and step sizes > 0"));
        }
        Ok(())
    }
}

pub(crate) const MIN_POINTS: usize = 10;

pub(crate) fn check_points(n: usize) -> Result<()> {
    if n < MIN_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_POINTS,
            got: n,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests;
