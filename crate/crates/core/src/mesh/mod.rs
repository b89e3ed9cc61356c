//! Mesh I/O, normalization, inflation, baking and thinness diagnostics.

mod bake;
mod inflate;
mod io;
mod normalize;
mod raster;
mod thinness;

pub use bake::{bake_frontal, masked_bilinear, visibility, BakeParams, HiddenFill, Visibility};
pub use inflate::{inflate_raw, inflate_silhouette, InflateParams, Inflation};
pub use io::{load_mesh, ply_bytes, save_mesh, EncodedMesh, MeshFormat};
pub use normalize::normalize_mesh;
pub use raster::{rasterize, DepthBuffer, OrthoFrame};
pub use thinness::{thinness_report, thinness_report_with, ThinnessReport, DEFAULT_THIN_THRESHOLD};
