//! Rao-Blackwellized particle filter over translation and size, with an
//! exact discrete rotation distribution carried by every particle.
//!
//! One frame runs [`propagate`] → [`update`] → [`resample`] → [`estimate`];
//! [`filter_step`] does exactly that and tracks the lost-track counter.
//! Tracking starts from a 2D detection via [`initialize`].

mod config;
mod ops;
mod particle;
mod step;

pub use config::{FilterConfig, LikelihoodCenter, RotationPrior};
pub use ops::{
    apply_likelihoods, estimate, init_particles, propagate, resample, update, UpdateStats,
    LOG_FLOOR,
};
pub use particle::{Detection, Particle, ParticleSet, PoseEstimate};
pub use step::{filter_step, initialize, History};
