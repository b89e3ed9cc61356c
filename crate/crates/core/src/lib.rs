//! Lifts flat-colored illustrations into textured triangle meshes.
//!
//! The pipeline derives structure conditions (Canny edges, depth) from the
//! input, asks an image-generation backend for shaded reference candidates,
//! picks the most three-dimensional one by visual question answering, builds
//! a shape from it and bakes the original colours back onto that shape.
//! Every model role has a deterministic builtin so the whole flow runs
//! offline.

pub mod backends;
pub mod bench;
pub mod condition;
pub mod error;
pub mod exec;
pub mod filters;
pub mod fixtures;
pub mod mesh;
pub mod model;
pub mod pipeline;
pub mod select;

pub use error::{Error, Result};
