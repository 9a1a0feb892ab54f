use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ray_rotation, Pose};
use crate::raster::Mask;

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    /// Object center in the camera frame, meters.
    pub translation: Vector3<f64>,
    /// Bounding-box diagonal, meters.
    pub size: f64,
    /// Distribution over rotation-grid bins.
    pub rot_dist: Vec<f64>,
    pub log_weight: f64,
}

/// Particles sharing one rotation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    bins: usize,
}

impl ParticleSet {
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        let bins = particles
            .first()
            .map(|p| p.rot_dist.len())
            .ok_or_else(|| Error::invalid("particle set is empty"))?;
        if bins == 0 || particles.iter().any(|p| p.rot_dist.len() != bins) {
            return Err(Error::invalid("rotation distributions differ in length"));
        }
        Ok(Self { particles, bins })
    }

    pub(crate) fn from_parts(particles: Vec<Particle>, bins: usize) -> Self {
        Self { particles, bins }
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Weights normalized to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let max = self
            .particles
            .iter()
            .map(|p| p.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return vec![0.0; self.len()];
        }
        let w: Vec<f64> = self.particles.iter().map(|p| (p.log_weight - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// Effective sample size `1 / Σ w²` of the normalized weights.
    pub fn ess(&self) -> f64 {
        let sq: f64 = self.normalized_weights().iter().map(|w| w * w).sum();
        if sq > 0.0 {
            1.0 / sq
        } else {
            0.0
        }
    }
}

/// 2D detection: a bounding box and a segmentation mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    /// `(u_min, v_min, u_max, v_max)` in pixels, inclusive.
    pub bbox: [f64; 4],
    pub mask: Mask,
}

impl Detection {
    pub fn new(bbox: [f64; 4], mask: Mask) -> Result<Self> {
        let d = Self { bbox, mask };
        d.validate()?;
        Ok(d)
    }

    /// Detection whose box is the tight bounding box of `mask`.
    pub fn from_mask(mask: Mask) -> Result<Self> {
        let [u0, v0, u1, v1] = mask
            .bbox()
            .ok_or_else(|| Error::invalid("detection mask is empty"))?;
        Self::new([u0 as f64, v0 as f64, u1 as f64, v1 as f64], mask)
    }

    pub fn center(&self) -> (f64, f64) {
        let [u0, v0, u1, v1] = self.bbox;
        ((u0 + u1) / 2.0, (v0 + v1) / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let [u0, v0, u1, v1] = self.bbox;
        let (w, h) = (self.mask.width() as f64, self.mask.height() as f64);
        if !(u0 <= u1 && v0 <= v1 && u0 >= 0.0 && v0 >= 0.0 && u1 < w && v1 < h) {
            return Err(Error::invalid(format!("bbox {:?} is empty or outside the image", self.bbox)));
        }
        if let Some([mu0, mv0, mu1, mv1]) = self.mask.bbox() {
            let inside = mu0 as f64 >= u0.floor()
                && mv0 as f64 >= v0.floor()
                && mu1 as f64 <= u1.ceil()
                && mv1 as f64 <= v1.ceil();
            if !inside {
                return Err(Error::invalid("detection mask extends past its bbox"));
            }
        }
        Ok(())
    }
}

/// Point estimate of a particle set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub size: f64,
    /// Rotation-grid bin of the aggregate distribution's mode.
    pub bin: usize,
}

impl PoseEstimate {
    /// Reinterpret the bin rotation as relative to the viewing ray through
    /// the estimated translation. Codebook views are rendered on the optical
    /// axis, so an off-axis object seen under bin rotation `R` has camera
    /// rotation `R_ray · R`.
    pub fn ray_corrected(mut self) -> Self {
        let ray = ray_rotation(&self.pose.translation);
        self.pose = Pose::new(ray * self.pose.rotation, self.pose.translation);
        self
    }
}
