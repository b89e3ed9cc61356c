use crate::error::{Error, Result};
use crate::filters;
use crate::model::{Channels, ConditionKind, ConditionMap, ContentHash, RasterImage};

use super::mask::ForegroundMask;

/// Rescales foreground depth values affinely onto 0..=255 and zeroes the
/// background. A single-valued foreground maps to 128. With `invert` the
/// rescaled foreground is flipped (`v -> 255 - v`).
pub fn normalize_depth(
    raw: &RasterImage,
    mask: &ForegroundMask,
    invert: bool,
    source: ContentHash,
) -> Result<ConditionMap> {
    if raw.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims(),
            actual: raw.dims(),
        });
    }
    if raw.channels() != Channels::Gray8 {
        return Err(Error::UnsupportedFormat(format!(
            "raw depth must be Gray8, got {:?}",
            raw.channels()
        )));
    }
    let n = raw.pixel_count();
    let fg_values = (0..n).filter(|&i| mask.is_foreground(i)).map(|i| raw.gray_at(i));
    let (lo, hi) = fg_values.fold((u8::MAX, u8::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));

    let data: Vec<u8> = (0..n)
        .map(|i| {
            if !mask.is_foreground(i) {
                return 0;
            }
            if lo == hi {
                return 128;
            }
            let v = raw.gray_at(i);
            let scaled = ((v - lo) as f64 * 255.0 / (hi - lo) as f64).round() as u8;
            if invert {
                255 - scaled
            } else {
                scaled
            }
        })
        .collect();
    let map = RasterImage::new(raw.width(), raw.height(), Channels::Gray8, data)?;
    ConditionMap::new(ConditionKind::Depth, map, source)
}

/// Offline depth source: Euclidean distance to the silhouette boundary,
/// scaled so the deepest interior pixel is 255 (near-bright).
pub fn distance_depth(mask: &ForegroundMask) -> RasterImage {
    let (w, h) = mask.dims();
    let fg = mask.to_bools();
    let dist = filters::foreground_distance(&fg, w as usize, h as usize);
    let max = dist.iter().cloned().fold(0.0, f64::max);
    let data: Vec<u8> = dist
        .iter()
        .map(|&d| if max > 0.0 { (255.0 * d / max).round() as u8 } else { 0 })
        .collect();
    RasterImage::new(w, h, Channels::Gray8, data).expect("mask dims")
}
