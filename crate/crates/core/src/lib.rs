//! Category-level 6D pose and shape tracking from depth images.
//!
//! The pipeline has two halves. A Rao-Blackwellized particle filter samples
//! object translation and size while every particle carries an exact discrete
//! distribution over a rotation grid; rotations are scored by comparing a
//! descriptor of the normalized depth crop against a codebook rendered from a
//! canonical shape. The filter's estimate is then refined continuously by
//! aligning back-projected depth points with an implicit signed distance
//! field, alternating with a fit of the shape latent that defines the field.
//!
//! | module | contents |
//! |---|---|
//! | [`geometry`] | poses, rotation grid, pinhole camera, point clouds, rotation error |
//! | [`shape`] | primitive SDFs, category bases, latents, surface sampling |
//! | [`render`] | sphere-traced depth, regions of interest, normalized depth maps |
//! | [`codebook`] | descriptors, codebook build/query, observation likelihoods |
//! | [`filter`] | the particle filter |
//! | [`refine`] | latent fitting, SDF pose refinement, mask erosion |
//! | [`bench`] | synthetic sequences, metrics, tracking harness, reports |
//!
//! A guide with worked examples lives in the `book/` directory of the
//! repository.

pub mod bench;
pub mod codebook;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod raster;
pub mod refine;
pub mod render;
pub mod rng;
pub mod shape;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/shapes.md")]
    mod shapes {}
    #[doc = include_str!("../../../book/src/rendering.md")]
    mod rendering {}
    #[doc = include_str!("../../../book/src/codebook.md")]
    mod codebook {}
    #[doc = include_str!("../../../book/src/filter.md")]
    mod filter {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
}
