//! Sphere-traced depth rendering and normalized depth crops.

mod depth;
mod roi;

pub use crate::raster::DepthImage;
pub use depth::{render_depth, MAX_STEPS};
pub use roi::{normalize_depth_roi, render_normalized, roi_from_state, NormalizedDepthMap, RenderConfig, RoI};
