//! Implicit shapes: a category basis of analytic signed distance fields
//! blended by a low-dimensional latent.
//!
//! Coordinates here are object-normalized: the object frame scaled by the
//! object size (bounding-box diagonal), so every basis element fits in a box
//! of diagonal 1 centered on the origin.

mod basis;
mod primitive;
mod surface;

pub use basis::{CategorySpec, ElementSpec, ShapeBasis, ShapeElement, ShapeLatent};
pub use primitive::{Part, Primitive};
pub use surface::decode_surface;
