use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use super::metrics::{chamfer, iou3d, shape_box, success_5deg5cm, translation_error, OrientedBox};
use super::report::{FrameRecord, Summary, TrackReport};
use super::scene::{Sequence, SequenceFrame};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::filter::{filter_step, initialize, Detection, FilterConfig, History, ParticleSet, PoseEstimate};
use crate::geometry::{rotation_error_deg, CameraIntrinsics, PointCloud, Pose};
use crate::refine::{alternate, object_mask, observed_points, pose_objective, Alternation, RefineConfig};
use crate::rng;
use crate::shape::{decode_surface, ShapeBasis, ShapeLatent};

/// Radius of the observation ball around the estimate, in bounding-sphere
/// radii.
const MASK_MARGIN: f64 = 1.5;
/// Seed of the surface samples used by the shape metrics.
const METRIC_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationErrorMode {
    /// Spin about the category's symmetry axis is ignored.
    #[default]
    Symmetric,
    /// Plain geodesic angle for every category.
    Plain,
}

/// Everything a tracking run needs besides the sequence and the codebook.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub filter: FilterConfig,
    pub refine: RefineConfig,
    pub refine_enabled: bool,
    /// Re-initialize from the detection on every frame.
    pub single_frame: bool,
    /// Replace the filter's size prior by the category's.
    pub category_size_prior: bool,
    /// Shift the particles by the refinement's translation and size
    /// correction after every refined frame.
    pub feedback: bool,
    /// Store wall-clock time per frame; off keeps reports byte-identical
    /// across runs.
    pub record_timing: bool,
    pub rotation_error: RotationErrorMode,
    /// Surface samples per shape for the box and Chamfer metrics.
    pub metric_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            filter: FilterConfig::default(),
            refine: RefineConfig::default(),
            refine_enabled: true,
            single_frame: false,
            category_size_prior: true,
            feedback: true,
            record_timing: false,
            rotation_error: RotationErrorMode::Symmetric,
            metric_points: 1000,
        }
    }
}

impl RunConfig {
    /// Filter configuration after applying the category size prior.
    pub fn filter_for(&self, basis: &ShapeBasis) -> FilterConfig {
        let mut f = self.filter.clone();
        if self.category_size_prior {
            f.size_prior = basis.spec().size_prior;
            f.size_range = basis.spec().size_range;
        }
        f
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.refine.validate()?;
        if self.metric_points == 0 {
            return Err(Error::invalid("metric_points must be at least 1"));
        }
        Ok(())
    }
}

/// The estimate for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEstimate {
    pub pose: Pose,
    pub size: f64,
    pub latent: ShapeLatent,
    /// The filter's estimate before refinement.
    pub filter: PoseEstimate,
    /// Final pose-objective residual when the frame was refined.
    pub residual: Option<f64>,
    pub lost: bool,
}

/// Alternate shape and pose on the points near the filter estimate,
/// starting from whichever of the estimate and the `alternatives` fits the
/// points best under the current latent.
#[allow(clippy::too_many_arguments)]
fn refine_frame(
    frame: &SequenceFrame,
    intr: &CameraIntrinsics,
    est: &PoseEstimate,
    alternatives: &[Pose],
    latent: &ShapeLatent,
    basis: &ShapeBasis,
    cfg: &RefineConfig,
    detection: Option<&Detection>,
) -> Result<Alternation> {
    let mut mask = object_mask(&frame.depth, &est.pose, est.size, intr, MASK_MARGIN);
    if let Some(det) = detection {
        for v in 0..mask.height() {
            for u in 0..mask.width() {
                if !det.mask.get(u, v) {
                    mask.set(u, v, false);
                }
            }
        }
    }
    let points = observed_points(&frame.depth, &mask, intr, cfg.erode_radius, cfg.max_points)?;
    let delta = cfg.huber_delta * est.size;
    let cost = |pose: &Pose| pose_objective(points.points(), basis, latent, pose, est.size, delta, cfg.loss);
    let mut start = est.pose.clone();
    let mut best = cost(&start);
    for pose in alternatives {
        let c = cost(pose);
        if c < best {
            best = c;
            start = pose.clone();
        }
    }
    alternate(&points, &start, est.size, latent, basis, cfg)
}

fn apply_refinement(
    est: PoseEstimate,
    latent: &ShapeLatent,
    refined: Result<Alternation>,
    frame: usize,
) -> FrameEstimate {
    match refined {
        Ok(alt) => {
            if let Some(w) = &alt.warning {
                warn!("frame {frame}: {w}");
            }
            FrameEstimate {
                pose: alt.pose.clone(),
                size: alt.size,
                residual: Some(alt.residual()),
                latent: alt.latent,
                filter: est,
                lost: false,
            }
        }
        Err(e) => {
            warn!("frame {frame}: refinement skipped: {e}");
            FrameEstimate {
                pose: est.pose.clone(),
                size: est.size,
                latent: latent.clone(),
                filter: est,
                residual: None,
                lost: false,
            }
        }
    }
}

/// Estimate one frame in isolation: initialize from its detection, then
/// refine from the uniform latent when refinement is enabled.
pub fn track_single_frame(
    frame: &SequenceFrame,
    intr: &CameraIntrinsics,
    cb: &Codebook,
    basis: &ShapeBasis,
    cfg: &RunConfig,
    seed: u64,
) -> Result<FrameEstimate> {
    let fcfg = cfg.filter_for(basis);
    let det = frame.detection()?;
    let mut history = History::new(seed);
    let (_, est) = initialize(&det, &frame.depth, intr, cb, &fcfg, &mut history)?;
    let latent = basis.uniform_latent();
    let mut out = if cfg.refine_enabled {
        let refined = refine_frame(frame, intr, &est, &[], &latent, basis, &cfg.refine, Some(&det));
        apply_refinement(est, &latent, refined, 0)
    } else {
        no_refinement(est, &latent)
    };
    out.lost = history.is_lost();
    Ok(out)
}

fn no_refinement(est: PoseEstimate, latent: &ShapeLatent) -> FrameEstimate {
    FrameEstimate {
        pose: est.pose.clone(),
        size: est.size,
        latent: latent.clone(),
        filter: est,
        residual: None,
        lost: false,
    }
}

/// Ground truth and caches for the per-frame metrics.
pub(crate) struct Scorer<'a> {
    basis: &'a ShapeBasis,
    mode: RotationErrorMode,
    points: usize,
    gt_surface: PointCloud,
    gt_scaled: PointCloud,
    cached: Option<(Vec<f64>, PointCloud)>,
}

impl<'a> Scorer<'a> {
    pub(crate) fn new(seq: &Sequence, basis: &'a ShapeBasis, mode: RotationErrorMode, points: usize) -> Result<Self> {
        let gt_surface = decode_surface(basis, &seq.config.latent, points, METRIC_SEED)?;
        let gt_scaled = scaled(&gt_surface, seq.config.size);
        Ok(Self {
            basis,
            mode,
            points,
            gt_surface,
            gt_scaled,
            cached: None,
        })
    }

    fn surface(&mut self, latent: &ShapeLatent) -> Result<&PointCloud> {
        let hit = matches!(&self.cached, Some((raw, _)) if raw.as_slice() == latent.raw());
        if !hit {
            let s = decode_surface(self.basis, latent, self.points, METRIC_SEED)?;
            self.cached = Some((latent.raw().to_vec(), s));
        }
        Ok(&self.cached.as_ref().expect("just filled").1)
    }

    /// Pose errors, box IoU and Chamfer distance (×10⁻³, m²) of one
    /// estimate against its frame's ground truth.
    pub(crate) fn score(
        &mut self,
        pose: &Pose,
        size: f64,
        latent: &ShapeLatent,
        gt: &SequenceFrame,
    ) -> Result<(f64, f64, f64, f64)> {
        let axis = match self.mode {
            RotationErrorMode::Symmetric => self.basis.symmetry_axis(),
            RotationErrorMode::Plain => None,
        };
        let rerr = rotation_error_deg(pose.rotation.quaternion(), gt.pose.rotation.quaternion(), axis.as_ref())?;
        let terr_cm = translation_error(pose, &gt.pose) * 100.0;
        let gt_box: OrientedBox = shape_box(&self.gt_surface, &gt.pose, gt.size)?;
        let surface = self.surface(latent)?.clone();
        let est_box = shape_box(&surface, pose, size)?;
        let iou = iou3d(&est_box, &gt_box)?;
        let cd = chamfer(&scaled(&surface, size), &self.gt_scaled)? * 1e3;
        Ok((terr_cm, rerr, iou, cd))
    }
}

fn scaled(cloud: &PointCloud, size: f64) -> PointCloud {
    PointCloud::new(cloud.points().iter().map(|p| p * size).collect(), cloud.frame())
}

pub(crate) fn record(
    scorer: &mut Scorer,
    k: usize,
    est: &FrameEstimate,
    gt: &SequenceFrame,
    ms: f64,
) -> Result<FrameRecord> {
    let (terr_cm, rerr_deg, iou, cd) = scorer.score(&est.pose, est.size, &est.latent, gt)?;
    Ok(FrameRecord {
        frame: k,
        pose: est.pose.clone(),
        size: est.size,
        latent: est.latent.raw().to_vec(),
        filter_pose: est.filter.pose.clone(),
        filter_size: est.filter.size,
        terr_cm,
        rerr_deg,
        iou,
        cd,
        ms,
        success: success_5deg5cm(rerr_deg, terr_cm / 100.0),
        lost: est.lost,
        residual: est.residual,
    })
}

fn shift_particles(ps: &mut ParticleSet, est: &FrameEstimate) {
    let dt = est.pose.translation - est.filter.pose.translation;
    let ds = est.size - est.filter.size;
    for p in ps.particles_mut() {
        p.translation += dt;
        if p.size + ds > 0.0 {
            p.size += ds;
        }
    }
}

/// Track a whole sequence and score every frame against its ground truth.
///
/// Frame 0 initializes the filter from the ground-truth detection; later
/// frames run one filter step each, with the frame's detection used only to
/// re-initialize a lost track. Frames with index divisible by
/// `refine.every` are refined, carrying the shape latent across frames and
/// starting from the previous refined rotation when that fits better than
/// the filter's.
pub fn run_tracking(seq: &Sequence, cb: &Codebook, cfg: &RunConfig) -> Result<TrackReport> {
    cfg.validate()?;
    let category = &seq.config.category;
    if &cb.meta().category != category {
        return Err(Error::invalid(format!(
            "codebook is for {:?} but the sequence shows {category:?}",
            cb.meta().category
        )));
    }
    let basis = seq.basis()?;
    let intr = seq.config.intrinsics;
    let fcfg = cfg.filter_for(&basis);
    let mut scorer = Scorer::new(seq, &basis, cfg.rotation_error, cfg.metric_points)?;
    let mut history = History::new(cfg.seed);
    let mut particles: Option<ParticleSet> = None;
    let mut latent = basis.uniform_latent();
    let mut previous: Option<Pose> = None;
    let mut records = Vec::with_capacity(seq.frames.len());

    for (k, frame) in seq.frames.iter().enumerate() {
        let start = Instant::now();
        let est = if cfg.single_frame {
            track_single_frame(frame, &intr, cb, &basis, cfg, rng::derive(cfg.seed, k as u64))?
        } else {
            let det = frame.detection()?;
            let (ps, filtered) = match &particles {
                None => initialize(&det, &frame.depth, &intr, cb, &fcfg, &mut history)?,
                Some(ps) => filter_step(ps, &frame.depth, Some(&det), &intr, cb, &fcfg, &mut history)?,
            };
            let mut ps = ps;
            let mut est = if cfg.refine_enabled && k % cfg.refine.every == 0 {
                let first = (k == 0).then_some(&det);
                let alternatives: Vec<Pose> = previous
                    .iter()
                    .map(|p| Pose::new(p.rotation, filtered.pose.translation))
                    .collect();
                let refined =
                    refine_frame(frame, &intr, &filtered, &alternatives, &latent, &basis, &cfg.refine, first);
                apply_refinement(filtered, &latent, refined, k)
            } else {
                no_refinement(filtered, &latent)
            };
            if cfg.feedback && est.residual.is_some() {
                shift_particles(&mut ps, &est);
            }
            est.lost = history.is_lost();
            if est.residual.is_some() {
                previous = Some(est.pose.clone());
            }
            latent = est.latent.clone();
            particles = Some(ps);
            est
        };
        let ms = if cfg.record_timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        records.push(record(&mut scorer, k, &est, frame, ms)?);
    }
    let summary = Summary::from_frames(&records, cfg.rotation_error);
    Ok(TrackReport {
        category: category.clone(),
        seed: cfg.seed,
        frames: records,
        summary,
    })
}
