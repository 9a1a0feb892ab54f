use nalgebra::Vector3;

use super::config::FilterConfig;
use super::ops::{estimate, init_particles, propagate, resample, update, UpdateStats};
use super::particle::{Detection, ParticleSet, PoseEstimate};
use crate::codebook::Codebook;
use crate::error::Result;
use crate::geometry::CameraIntrinsics;
use crate::raster::DepthImage;
use crate::rng;

pub(crate) const STAGE_INIT: u64 = 1;
pub(crate) const STAGE_PROPAGATE: u64 = 2;
pub(crate) const STAGE_RESAMPLE: u64 = 3;
pub(crate) const STAGE_CYCLE: u64 = 1 << 16;

/// Cross-frame filter state: seeds, recent estimates and the lost-track
/// counter.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    seed: u64,
    frame: u64,
    recent: Vec<Vector3<f64>>,
    below: usize,
    lost: bool,
    last_stats: Option<UpdateStats>,
}

impl History {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            frame: 0,
            recent: Vec::new(),
            below: 0,
            lost: false,
            last_stats: None,
        }
    }

    /// Frames processed so far.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Latest estimated translations, oldest first (at most two).
    pub fn recent(&self) -> &[Vector3<f64>] {
        &self.recent
    }

    pub fn is_lost(&self) -> bool {
        self.lost
    }

    /// Consecutive frames whose best similarity fell below the threshold.
    pub fn frames_below(&self) -> usize {
        self.below
    }

    pub fn last_stats(&self) -> Option<&UpdateStats> {
        self.last_stats.as_ref()
    }

    pub(crate) fn stage_seed(&self, stage: u64) -> u64 {
        rng::derive(rng::derive(self.seed, self.frame), stage)
    }

    fn record(&mut self, est: &PoseEstimate, stats: UpdateStats, cfg: &FilterConfig) {
        if stats.best_similarity < cfg.lost_similarity {
            self.below += 1;
        } else {
            self.below = 0;
        }
        self.lost = self.below >= cfg.lost_frames;
        self.recent.push(est.pose.translation);
        if self.recent.len() > 2 {
            self.recent.remove(0);
        }
        self.last_stats = Some(stats);
        self.frame += 1;
    }
}

fn finish(ps: &ParticleSet, cb: &Codebook, cfg: &FilterConfig) -> Result<PoseEstimate> {
    let est = estimate(ps, cb.grid())?;
    Ok(if cfg.ray_correction { est.ray_corrected() } else { est })
}

/// Start a track from a detection: draw the initial particles, then run
/// `cfg.init_cycles` update/resample cycles on the same frame, diffusing
/// particles between cycles with the zero-velocity motion model at the
/// first-frame noise levels.
pub fn initialize(
    det: &Detection,
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    cb: &Codebook,
    cfg: &FilterConfig,
    history: &mut History,
) -> Result<(ParticleSet, PoseEstimate)> {
    let mut ps = init_particles(det, depth, intr, cfg, cb.len(), history.stage_seed(STAGE_INIT))?;
    let diffuse = FilterConfig {
        translation_noise: cfg.init_translation_noise,
        size_noise: cfg.init_size_noise,
        ..cfg.clone()
    };
    let mut stats = None;
    for c in 0..cfg.init_cycles.max(1) as u64 {
        if c > 0 {
            ps = propagate(&ps, &[], &diffuse, history.stage_seed(STAGE_CYCLE + 2 * c));
        }
        let (updated, s) = update(&ps, depth, intr, cb, cfg)?;
        ps = resample(&updated, cfg.particles, history.stage_seed(STAGE_CYCLE + 2 * c + 1))?;
        stats = Some(s);
    }
    let est = finish(&ps, cb, cfg)?;
    history.below = 0;
    history.recent.clear();
    history.record(&est, stats.expect("at least one cycle"), cfg);
    Ok((ps, est))
}

/// One tracking step: propagate, update, resample, estimate.
///
/// A detection is used only when the track is flagged lost, in which case
/// the filter is re-initialized from it.
#[allow(clippy::too_many_arguments)]
pub fn filter_step(
    ps: &ParticleSet,
    frame: &DepthImage,
    det: Option<&Detection>,
    intr: &CameraIntrinsics,
    cb: &Codebook,
    cfg: &FilterConfig,
    history: &mut History,
) -> Result<(ParticleSet, PoseEstimate)> {
    if let (true, Some(det)) = (history.lost, det) {
        return initialize(det, frame, intr, cb, cfg, history);
    }
    let moved = propagate(ps, history.recent(), cfg, history.stage_seed(STAGE_PROPAGATE));
    let (updated, stats) = update(&moved, frame, intr, cb, cfg)?;
    let next = resample(&updated, cfg.particles, history.stage_seed(STAGE_RESAMPLE))?;
    let est = finish(&next, cb, cfg)?;
    history.record(&est, stats, cfg);
    Ok((next, est))
}
