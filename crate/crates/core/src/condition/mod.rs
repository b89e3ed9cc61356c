//! Structure conditions (edges, depth) and flat-colour analysis.

mod canny;
mod depth;
mod flatness;
mod mask;

pub use canny::{canny_edges, canny_trace, CannyOutput, CannyParams, CannyTrace, Orientation, LOW_HIGH_RATIO};
pub use depth::{distance_depth, normalize_depth};
pub use flatness::{color_clusters, flatness_report, foreground_gradients, FlatnessParams, FlatnessReport};
pub use mask::{foreground_mask, foreground_mask_with, ForegroundMask, MaskParams, DEFAULT_BACKGROUND_TOLERANCE};
