use serde::{Deserialize, Serialize};

use crate::codebook::{DEFAULT_FLOOR, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::render::RenderConfig;
use crate::shape::ShapeBasis;

/// Which similarity the likelihood Gaussian is centered on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodCenter {
    /// Largest similarity over all particles and bins this frame.
    #[default]
    Global,
    /// Each particle's own largest similarity.
    PerParticle,
}

/// Rotation prior used in the weight and the Bayes update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationPrior {
    /// The particle's propagated rotation distribution.
    #[default]
    Propagated,
    /// A uniform distribution, every frame.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Particle count `N` after the first resampling.
    pub particles: usize,
    /// Particle count drawn at initialization.
    pub init_particles: usize,
    /// Size prior center `s0`, meters.
    pub size_prior: f64,
    /// Width `Δs` of the uniform size prior, meters.
    pub size_range: f64,
    /// Velocity constant `α` of the motion model.
    pub velocity_alpha: f64,
    /// Per-axis translation noise std, meters.
    pub translation_noise: [f64; 3],
    /// Size noise std, meters.
    pub size_noise: f64,
    /// Mixing weight `ε` of the uniform distribution into every rotation
    /// distribution during propagation.
    pub rotation_mix: f64,
    /// Likelihood Gaussian width, cosine units.
    pub sigma_phi: f64,
    /// Likelihood truncation, relative to the peak.
    pub likelihood_floor: f64,
    pub likelihood_center: LikelihoodCenter,
    pub rotation_prior: RotationPrior,
    /// Masked-depth percentiles bracketing initial depth samples.
    pub depth_percentiles: [f64; 2],
    /// Update/resample cycles on the first frame.
    pub init_cycles: usize,
    /// Translation noise std for the diffusion between first-frame cycles.
    pub init_translation_noise: [f64; 3],
    /// Size noise std for the diffusion between first-frame cycles.
    pub init_size_noise: f64,
    /// Fraction of valid pixels below which a crop counts as empty.
    pub min_valid_fraction: f64,
    /// Best cosine similarity below which a frame counts towards losing
    /// track.
    pub lost_similarity: f64,
    /// Consecutive such frames before the track is flagged lost.
    pub lost_frames: usize,
    /// Express the bin rotation relative to the viewing ray through the
    /// estimated translation rather than the optical axis.
    pub ray_correction: bool,
    pub render: RenderConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            init_particles: 300,
            size_prior: 0.2,
            size_range: 0.1,
            velocity_alpha: 0.5,
            translation_noise: [0.005, 0.005, 0.008],
            size_noise: 0.002,
            rotation_mix: 0.02,
            sigma_phi: DEFAULT_SIGMA,
            likelihood_floor: DEFAULT_FLOOR,
            likelihood_center: LikelihoodCenter::Global,
            rotation_prior: RotationPrior::Propagated,
            depth_percentiles: [5.0, 95.0],
            init_cycles: 10,
            init_translation_noise: [0.01, 0.01, 0.02],
            init_size_noise: 0.01,
            min_valid_fraction: 0.02,
            lost_similarity: 0.5,
            lost_frames: 5,
            ray_correction: true,
            render: RenderConfig::default(),
        }
    }
}

impl FilterConfig {
    /// Defaults with the size prior taken from a category basis.
    pub fn for_category(basis: &ShapeBasis) -> Self {
        let spec = basis.spec();
        Self {
            size_prior: spec.size_prior,
            size_range: spec.size_range,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("filter config: {what}")));
        if self.particles == 0 || self.init_particles == 0 {
            return bad("particle counts must be at least 1");
        }
        if !(self.size_range > 0.0) || !(self.size_prior - self.size_range / 2.0 > 0.0) {
            return bad("size prior must be positive with positive range");
        }
        let stds = self.translation_noise.iter().chain(&self.init_translation_noise);
        if stds.clone().any(|&x| !(x >= 0.0)) || !(self.size_noise >= 0.0) || !(self.init_size_noise >= 0.0) {
            return bad("noise stds must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.rotation_mix) {
            return bad("rotation_mix must lie in [0, 1)");
        }
        if !(self.sigma_phi > 0.0) || !(0.0..1.0).contains(&self.likelihood_floor) {
            return bad("sigma_phi must be positive and likelihood_floor in [0, 1)");
        }
        let [lo, hi] = self.depth_percentiles;
        if !(0.0 <= lo && lo <= hi && hi <= 100.0) {
            return bad("depth percentiles must satisfy 0 <= lo <= hi <= 100");
        }
        if !self.velocity_alpha.is_finite() || self.lost_frames == 0 || !self.lost_similarity.is_finite() {
            return bad("velocity_alpha must be finite and lost_frames at least 1");
        }
        self.render.validate()
    }
}
