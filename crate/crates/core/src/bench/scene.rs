use std::fs;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::Detection;
use crate::geometry::{CameraIntrinsics, Pose};
use crate::raster::{DepthImage, Mask};
use crate::render::render_depth;
use crate::rng;
use crate::shape::{ShapeBasis, ShapeLatent};

type V3 = Vector3<f64>;

const MIN_VISIBLE_PIXELS: usize = 10;
const REFERENCE_SCENE: &str = include_str!("../../assets/reference_scene.json");

/// A keyframe of the ground-truth trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Object center in the camera frame, meters.
    pub translation: [f64; 3],
    /// Roll, pitch, yaw of the object→camera rotation, degrees.
    pub rotation_deg: [f64; 3],
}

impl Waypoint {
    pub fn pose(&self) -> Pose {
        let [r, p, y] = self.rotation_deg.map(f64::to_radians);
        Pose::new(UnitQuaternion::from_euler_angles(r, p, y), V3::from(self.translation))
    }
}

/// Waypoints spread evenly over the sequence, interpolated linearly in
/// translation and by slerp in rotation, plus smooth random jitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// Per-frame std of the translation jitter increment, meters.
    #[serde(default)]
    pub velocity_noise: f64,
    /// Per-frame std of the rotation jitter increment, degrees.
    #[serde(default)]
    pub angular_noise_deg: f64,
}

/// Rectangle that hides part of the object: the right-hand `fraction` of
/// the object's bounding box loses its depth and its mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub category: String,
    /// Ground-truth shape.
    pub latent: ShapeLatent,
    /// Ground-truth bounding-box diagonal, meters.
    pub size: f64,
    pub trajectory: Trajectory,
    pub frames: usize,
    pub intrinsics: CameraIntrinsics,
    /// Std of additive Gaussian noise on valid depth, meters.
    #[serde(default)]
    pub depth_noise: f64,
    #[serde(default)]
    pub occluder: Option<Occluder>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    /// The 100-frame reference scene used by the benchmark.
    pub fn reference() -> Self {
        serde_json::from_str(REFERENCE_SCENE).expect("shipped reference scene parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.frames == 0 {
            return Err(Error::invalid("scene needs at least one frame"));
        }
        if self.trajectory.waypoints.is_empty() {
            return Err(Error::invalid("trajectory needs at least one waypoint"));
        }
        let noise = [self.depth_noise, self.trajectory.velocity_noise, self.trajectory.angular_noise_deg];
        if noise.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid("noise stds must be nonnegative"));
        }
        if !(self.size > 0.0) {
            return Err(Error::invalid("object size must be positive"));
        }
        if let Some(o) = &self.occluder {
            if !(0.0..=1.0).contains(&o.fraction) {
                return Err(Error::invalid("occluder fraction must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Ground-truth pose of every frame.
    pub fn poses(&self) -> Vec<Pose> {
        let wps: Vec<Pose> = self.trajectory.waypoints.iter().map(Waypoint::pose).collect();
        let mut r = rng::stream(rng::derive(self.seed, 0x7a), 0);
        let mut jitter_t = V3::zeros();
        let mut jitter_r = V3::zeros();
        let decay = 0.9;
        (0..self.frames)
            .map(|k| {
                let base = if wps.len() == 1 || self.frames == 1 {
                    wps[0].clone()
                } else {
                    let tau = k as f64 / (self.frames - 1) as f64 * (wps.len() - 1) as f64;
                    let i = (tau.floor() as usize).min(wps.len() - 2);
                    let f = tau - i as f64;
                    let (a, b) = (&wps[i], &wps[i + 1]);
                    Pose::new(
                        a.rotation.slerp(&b.rotation, f),
                        a.translation.lerp(&b.translation, f),
                    )
                };
                let step_t = V3::from_fn(|_, _| r.sample::<f64, _>(StandardNormal));
                let step_r = V3::from_fn(|_, _| r.sample::<f64, _>(StandardNormal));
                if k > 0 {
                    jitter_t = jitter_t * decay + step_t * self.trajectory.velocity_noise;
                    jitter_r = jitter_r * decay + step_r * self.trajectory.angular_noise_deg.to_radians();
                }
                Pose::new(
                    UnitQuaternion::from_scaled_axis(jitter_r) * base.rotation,
                    base.translation + jitter_t,
                )
            })
            .collect()
    }
}

/// One generated frame with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFrame {
    pub depth: DepthImage,
    /// Ground-truth visible mask.
    pub mask: Mask,
    pub pose: Pose,
    pub size: f64,
}

impl SequenceFrame {
    /// Detection from the ground-truth mask (tight bounding box).
    pub fn detection(&self) -> Result<Detection> {
        Detection::from_mask(self.mask.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub config: SceneConfig,
    pub frames: Vec<SequenceFrame>,
}

/// Render a scene: ground-truth depth per frame, Gaussian depth noise on
/// valid pixels, optional occluder. Deterministic given the config.
pub fn generate_sequence(cfg: &SceneConfig) -> Result<Sequence> {
    cfg.validate()?;
    let basis = ShapeBasis::category(&cfg.category)?;
    if cfg.latent.len() != basis.len() {
        return Err(Error::invalid("ground-truth latent does not match the category basis"));
    }
    let poses = cfg.poses();
    let frames = poses
        .into_par_iter()
        .enumerate()
        .map(|(k, pose)| render_frame(cfg, &basis, k, pose))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence {
        config: cfg.clone(),
        frames,
    })
}

fn render_frame(cfg: &SceneConfig, basis: &ShapeBasis, k: usize, pose: Pose) -> Result<SequenceFrame> {
    let intr = &cfg.intrinsics;
    let mut depth = match render_depth(basis, &cfg.latent, &pose, cfg.size, intr) {
        Ok(d) => d,
        Err(Error::ObjectBehindCamera) => return Err(Error::LeavesFrustum { frame: k }),
        Err(e) => return Err(e),
    };
    let mut mask = depth.valid_mask();
    if let (Some(occ), Some([u0, _, u1, _])) = (&cfg.occluder, mask.bbox()) {
        let cut = u1 as f64 + 1.0 - occ.fraction * (u1 - u0 + 1) as f64;
        for v in 0..depth.height() {
            for u in (cut.ceil().max(0.0) as usize)..depth.width() {
                depth.set(u, v, 0.0);
                mask.set(u, v, false);
            }
        }
    }
    if mask.count() < MIN_VISIBLE_PIXELS {
        return Err(Error::LeavesFrustum { frame: k });
    }
    if cfg.depth_noise > 0.0 {
        let mut r = rng::stream(rng::derive(cfg.seed, 0xde), k as u64);
        for d in depth.data_mut() {
            if *d > 0.0 {
                let noisy = *d as f64 + cfg.depth_noise * r.sample::<f64, _>(StandardNormal);
                *d = noisy.max(1e-3) as f32;
            }
        }
    }
    Ok(SequenceFrame {
        depth,
        mask,
        pose,
        size: cfg.size,
    })
}

#[derive(Serialize, Deserialize)]
struct FrameMeta {
    pose: Pose,
    size: f64,
    depth: String,
    mask: String,
}

#[derive(Serialize, Deserialize)]
struct SequenceMeta {
    config: SceneConfig,
    frames: Vec<FrameMeta>,
}

impl Sequence {
    /// Write `sequence.json`, raw `f32` depth under `depth/` and mask PNGs
    /// under `mask/`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for sub in ["depth", "mask"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let mut frames = Vec::with_capacity(self.frames.len());
        for (k, f) in self.frames.iter().enumerate() {
            let depth = format!("depth/{k:06}.f32");
            let mask = format!("mask/{k:06}.png");
            f.depth.write_raw_f32(&dir.join(&depth))?;
            f.mask.write_png(&dir.join(&mask))?;
            frames.push(FrameMeta {
                pose: f.pose.clone(),
                size: f.size,
                depth,
                mask,
            });
        }
        let meta = SequenceMeta {
            config: self.config.clone(),
            frames,
        };
        let path = dir.join("sequence.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("sequence.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: SequenceMeta = serde_json::from_str(&text)?;
        let (w, h) = (meta.config.intrinsics.width, meta.config.intrinsics.height);
        let frames = meta
            .frames
            .into_iter()
            .map(|f| {
                let depth_path = dir.join(&f.depth);
                let depth = if f.depth.ends_with(".png") {
                    DepthImage::read_png_mm(&depth_path)?
                } else {
                    DepthImage::read_raw_f32(&depth_path, w, h)?
                };
                Ok(SequenceFrame {
                    depth,
                    mask: Mask::read_png(&dir.join(&f.mask))?,
                    pose: f.pose,
                    size: f.size,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Sequence {
            config: meta.config,
            frames,
        })
    }

    pub fn basis(&self) -> Result<ShapeBasis> {
        ShapeBasis::category(&self.config.category)
    }
}
