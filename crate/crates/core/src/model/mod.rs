//! Domain types shared by every stage.

mod hash;
mod png_io;
mod raster;
mod trimesh;
mod types;

pub use hash::{content_hash, ContentHash};
pub use png_io::{decode_image, encode_image};
pub use raster::{Channels, RasterImage};
pub use trimesh::TriMesh;
pub use types::{
    Caption, CaptionSource, CandidateImage, ConditionKind, ConditionMap, ProxyImage,
    SelectionMethod,
};

/// Long-side cap for the working resolution of every stage.
pub const MAX_WORKING_SIDE: u32 = 1024;
