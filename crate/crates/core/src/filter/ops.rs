use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{FilterConfig, LikelihoodCenter, RotationPrior};
use super::particle::{Detection, Particle, ParticleSet, PoseEstimate};
use crate::codebook::{encode, likelihoods, Code, Codebook};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, RotationGrid};
use crate::raster::DepthImage;
use crate::render::{normalize_depth_roi, roi_from_state};
use crate::rng;

/// Smallest per-frame log-likelihood increment a particle can receive.
pub const LOG_FLOOR: f64 = -30.0;

const MIN_INIT_PIXELS: usize = 10;
const MIN_SIZE: f64 = 1e-3;

/// Per-frame bookkeeping from [`update`].
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateStats {
    /// Log-weight increment of every particle.
    pub increments: Vec<f64>,
    /// Largest similarity over all particles and bins; 0 when every crop
    /// was empty.
    pub best_similarity: f64,
    /// Particles whose crop held no usable depth.
    pub empty: usize,
}

impl UpdateStats {
    pub fn mean_increment(&self) -> f64 {
        if self.increments.is_empty() {
            return LOG_FLOOR;
        }
        self.increments.iter().sum::<f64>() / self.increments.len() as f64
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Draw `cfg.init_particles` particles around a detection.
///
/// Pixels are Gaussian around the box center (std = box side / 8), depth is
/// uniform between the configured percentiles of the masked valid depths
/// widened by `s0/2` on both sides, size is uniform on `s0 ± Δs/2`, and every
/// rotation distribution is uniform over `bins`.
pub fn init_particles(
    det: &Detection,
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    cfg: &FilterConfig,
    bins: usize,
    seed: u64,
) -> Result<ParticleSet> {
    cfg.validate()?;
    det.validate()?;
    if bins == 0 {
        return Err(Error::invalid("rotation grid is empty"));
    }
    if det.mask.width() != depth.width() || det.mask.height() != depth.height() {
        return Err(Error::invalid("detection mask and depth image differ in size"));
    }
    let mut zs: Vec<f64> = (0..depth.height())
        .flat_map(|v| (0..depth.width()).map(move |u| (u, v)))
        .filter(|&(u, v)| det.mask.get(u, v))
        .map(|(u, v)| depth.get(u, v) as f64)
        .filter(|&d| d > 0.0)
        .collect();
    if zs.len() < MIN_INIT_PIXELS {
        return Err(Error::Initialization(format!(
            "mask covers {} valid depth pixels, need {MIN_INIT_PIXELS}",
            zs.len()
        )));
    }
    zs.sort_by(f64::total_cmp);
    let half = cfg.size_prior / 2.0;
    let z_lo = (percentile(&zs, cfg.depth_percentiles[0]) - half).max(1e-2);
    let z_hi = (percentile(&zs, cfg.depth_percentiles[1]) + half).max(z_lo);
    let (cu, cv) = det.center();
    let [u0, v0, u1, v1] = det.bbox;
    let (su, sv) = ((u1 - u0 + 1.0) / 8.0, (v1 - v0 + 1.0) / 8.0);
    let (s_lo, s_hi) = (cfg.size_prior - cfg.size_range / 2.0, cfg.size_prior + cfg.size_range / 2.0);
    let uniform = 1.0 / bins as f64;
    let particles = (0..cfg.init_particles)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let u = cu + su * r.sample::<f64, _>(StandardNormal);
            let v = cv + sv * r.sample::<f64, _>(StandardNormal);
            let z = z_lo + (z_hi - z_lo) * r.random::<f64>();
            let size = s_lo + (s_hi - s_lo) * r.random::<f64>();
            Particle {
                translation: intr.ray(u, v) * z,
                size,
                rot_dist: vec![uniform; bins],
                log_weight: 0.0,
            }
        })
        .collect();
    Ok(ParticleSet::from_parts(particles, bins))
}

/// Motion model: `T ← N(T + α(T₁ − T₂), Σ_T)`, `s ← N(s, σ_s)` kept above
/// 1 mm, and rotation distributions mixed with the uniform one.
///
/// `recent` holds the latest estimated translations, oldest first; with fewer
/// than two the velocity term is zero.
pub fn propagate(ps: &ParticleSet, recent: &[Vector3<f64>], cfg: &FilterConfig, seed: u64) -> ParticleSet {
    let velocity = match recent {
        [.., a, b] => (b - a) * cfg.velocity_alpha,
        _ => Vector3::zeros(),
    };
    let eps = cfg.rotation_mix;
    let mix = eps / ps.bins() as f64;
    let sigma = Vector3::from(cfg.translation_noise);
    let particles = ps
        .particles()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = rng::stream(seed, i as u64);
            let noise = Vector3::from_fn(|k, _| sigma[k] * r.sample::<f64, _>(StandardNormal));
            let mut size = p.size;
            if cfg.size_noise > 0.0 {
                size = (0..64)
                    .map(|_| p.size + cfg.size_noise * r.sample::<f64, _>(StandardNormal))
                    .find(|&s| s > MIN_SIZE)
                    .unwrap_or(p.size.max(MIN_SIZE));
            }
            let rot_dist = if eps > 0.0 {
                p.rot_dist.iter().map(|&x| (1.0 - eps) * x + mix).collect()
            } else {
                p.rot_dist.clone()
            };
            Particle {
                translation: p.translation + velocity + noise,
                size,
                rot_dist,
                log_weight: p.log_weight,
            }
        })
        .collect();
    ParticleSet::from_parts(particles, ps.bins())
}

/// Descriptor of the crop a particle predicts, or `None` when the crop is
/// off-image, behind the camera, or nearly empty.
fn observe(
    p: &Particle,
    frame: &DepthImage,
    intr: &CameraIntrinsics,
    cfg: &FilterConfig,
) -> Result<Option<Code>> {
    if p.translation.z <= 1e-2 {
        return Ok(None);
    }
    let roi = roi_from_state(&p.translation, p.size, intr, cfg.render.z0, cfg.render.crop_for(intr))?;
    let half = roi.side / 2.0;
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    if roi.center.x + half < -0.5
        || roi.center.x - half > w - 0.5
        || roi.center.y + half < -0.5
        || roi.center.y - half > h - 0.5
    {
        return Ok(None);
    }
    let map = normalize_depth_roi(frame, &roi, p.translation.z, p.size, cfg.render.resolution)?;
    let filled = map.data().iter().filter(|&&x| x > 0.0).count();
    if (filled as f64) < cfg.min_valid_fraction * map.data().len() as f64 {
        return Ok(None);
    }
    let code = encode(&map)?;
    Ok((!code.is_zero()).then_some(code))
}

/// Bayes update of one particle; returns the log-weight increment.
fn bayes(p: &mut Particle, lik: Option<&[f64]>, prior: RotationPrior) -> f64 {
    let Some(l) = lik else {
        p.log_weight += LOG_FLOOR;
        return LOG_FLOOR;
    };
    let mass = match prior {
        RotationPrior::Propagated => l.iter().zip(&p.rot_dist).map(|(a, b)| a * b).sum::<f64>(),
        RotationPrior::Uniform => l.iter().sum::<f64>() / l.len() as f64,
    };
    let inc = if mass > 0.0 { mass.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
    let posterior: Option<Vec<f64>> = if mass > 0.0 {
        Some(match prior {
            RotationPrior::Propagated => l.iter().zip(&p.rot_dist).map(|(a, b)| a * b).collect(),
            RotationPrior::Uniform => l.to_vec(),
        })
    } else if l.iter().any(|&x| x > 0.0) {
        Some(l.to_vec())
    } else {
        None
    };
    if let Some(mut post) = posterior {
        let total: f64 = post.iter().sum();
        post.iter_mut().for_each(|x| *x /= total);
        p.rot_dist = post;
    }
    p.log_weight += inc;
    inc
}

/// Apply precomputed rotation likelihoods, one entry per particle (`None`
/// for a particle without evidence).
///
/// With prior `π` and likelihood `ℓ` the weight gains `ln Σ ℓ·π` (at least
/// [`LOG_FLOOR`]) and the distribution becomes `π ⊙ ℓ` renormalized. When
/// that product vanishes the distribution falls back to `ℓ`; when `ℓ`
/// vanishes it is left unchanged.
pub fn apply_likelihoods(
    ps: &ParticleSet,
    lik: &[Option<Vec<f64>>],
    prior: RotationPrior,
) -> Result<(ParticleSet, Vec<f64>)> {
    if lik.len() != ps.len() {
        return Err(Error::invalid("one likelihood entry per particle required"));
    }
    if lik.iter().flatten().any(|l| l.len() != ps.bins()) {
        return Err(Error::invalid("likelihood length differs from the grid"));
    }
    let mut out = ps.clone();
    let inc = out
        .particles_mut()
        .iter_mut()
        .zip(lik)
        .map(|(p, l)| bayes(p, l.as_deref(), prior))
        .collect();
    Ok((out, inc))
}

/// Score every particle against a depth frame and update weights and
/// rotation distributions.
pub fn update(
    ps: &ParticleSet,
    frame: &DepthImage,
    intr: &CameraIntrinsics,
    cb: &Codebook,
    cfg: &FilterConfig,
) -> Result<(ParticleSet, UpdateStats)> {
    if cb.len() != ps.bins() {
        return Err(Error::invalid(format!(
            "codebook has {} bins, particles carry {}",
            cb.len(),
            ps.bins()
        )));
    }
    let codes: Vec<Option<Code>> = ps
        .particles()
        .par_iter()
        .map(|p| observe(p, frame, intr, cfg))
        .collect::<Result<_>>()?;
    let live: Vec<usize> = (0..codes.len()).filter(|&i| codes[i].is_some()).collect();
    let queries: Vec<Code> = live.iter().map(|&i| codes[i].clone().unwrap()).collect();
    let sims = cb.query_batch(&queries)?;
    let global = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut row_of = vec![None; ps.len()];
    for (r, &i) in live.iter().enumerate() {
        row_of[i] = Some(r);
    }
    let mut out = ps.clone();
    let increments = out
        .particles_mut()
        .par_iter_mut()
        .zip(row_of.par_iter())
        .map(|(p, row)| -> Result<f64> {
            let lik = match row {
                Some(r) => {
                    let s = sims.row(*r);
                    let s = s.as_slice().expect("row-major similarities");
                    let center = match cfg.likelihood_center {
                        LikelihoodCenter::Global => global,
                        LikelihoodCenter::PerParticle => s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    };
                    Some(likelihoods(s, center, cfg.sigma_phi, cfg.likelihood_floor)?)
                }
                None => None,
            };
            Ok(bayes(p, lik.as_deref(), cfg.rotation_prior))
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = UpdateStats {
        increments,
        best_similarity: if live.is_empty() { 0.0 } else { global },
        empty: ps.len() - live.len(),
    };
    Ok((out, stats))
}

/// Systematic resampling to `n` particles with equal weights.
///
/// When the set already has `n` particles and its effective sample size
/// exceeds `n/2` it is returned unchanged.
pub fn resample(ps: &ParticleSet, n: usize, seed: u64) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::invalid("cannot resample to zero particles"));
    }
    if ps.particles().iter().all(|p| !(p.log_weight > f64::NEG_INFINITY)) {
        return Err(Error::DegenerateFilter);
    }
    let w: Vec<f64> = ps
        .normalized_weights()
        .into_iter()
        .map(|x| if x.is_nan() { 0.0 } else { x })
        .collect();
    if ps.len() == n {
        let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        if ess > n as f64 / 2.0 {
            return Ok(ps.clone());
        }
    }
    let u0 = rng::stream(seed, 0).random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let (mut i, mut cum) = (0, w[0]);
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i + 1 < w.len() {
            i += 1;
            cum += w[i];
        }
        let mut p = ps.particles()[i].clone();
        p.log_weight = 0.0;
        out.push(p);
    }
    Ok(ParticleSet::from_parts(out, ps.bins()))
}

/// Weighted mean translation and size; rotation is the grid bin at the mode
/// of the weighted aggregate rotation distribution (lowest index on ties).
pub fn estimate(ps: &ParticleSet, grid: &RotationGrid) -> Result<PoseEstimate> {
    if grid.len() != ps.bins() {
        return Err(Error::invalid("grid does not match the particle set"));
    }
    let w = ps.normalized_weights();
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::DegenerateFilter);
    }
    // Offsets from the first particle keep identical sets exact.
    let first = &ps.particles()[0];
    let mut dt = Vector3::zeros();
    let mut ds = 0.0;
    let mut agg = vec![0.0; ps.bins()];
    for (p, &wi) in ps.particles().iter().zip(&w) {
        if wi == 0.0 {
            continue;
        }
        dt += (p.translation - first.translation) * wi;
        ds += (p.size - first.size) * wi;
        agg.iter_mut().zip(&p.rot_dist).for_each(|(a, r)| *a += wi * r);
    }
    let mut bin = 0;
    for (j, &a) in agg.iter().enumerate() {
        if a > agg[bin] {
            bin = j;
        }
    }
    Ok(PoseEstimate {
        pose: Pose::new(*grid.rotation(bin), first.translation + dt),
        size: first.size + ds,
        bin,
    })
}

