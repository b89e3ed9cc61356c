use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters;
use crate::model::RasterImage;

use super::mask::ForegroundMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlatnessParams {
    /// Luma units per pixel below which a pixel counts as flat.
    pub gradient_threshold: f64,
    pub max_colors: usize,
    pub min_flat_fraction: f64,
}

impl Default for FlatnessParams {
    fn default() -> Self {
        Self {
            gradient_threshold: 8.0,
            max_colors: 32,
            min_flat_fraction: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub distinct_color_count: usize,
    pub flat_pixel_fraction: f64,
    pub shading_score: f64,
    pub is_flat: bool,
}

/// Per-pixel luma-gradient magnitude over the foreground only; neighbours in
/// the background read as the centre pixel, so the silhouette itself
/// contributes nothing.
pub fn foreground_gradients(img: &RasterImage, mask: &ForegroundMask) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = img.luma_milli();
    let inside = mask.to_bools();
    let (gx, gy) = filters::masked_sobel_i64(&luma, &inside, w, h);
    gx.iter()
        .zip(&gy)
        .map(|(&x, &y)| filters::gradient_magnitude(x, y, 1000.0))
        .collect()
}

/// Groups foreground pixels by colour quantized to 4 bits per channel and
/// returns `(cluster count, pixel-weighted mean of per-cluster luma stddev)`.
pub fn color_clusters(img: &RasterImage, mask: &ForegroundMask) -> (usize, f64) {
    let luma = img.luma_milli();
    let mut clusters: HashMap<[u8; 3], (u64, f64, f64)> = HashMap::new();
    let mut keys: Vec<[u8; 3]> = Vec::new();
    for i in 0..img.pixel_count() {
        if !mask.is_foreground(i) {
            continue;
        }
        let [r, g, b] = img.rgb_at(i);
        let key = [r >> 4, g >> 4, b >> 4];
        let l = luma[i] as f64 / 1000.0;
        let e = clusters.entry(key).or_insert_with(|| {
            keys.push(key);
            (0, 0.0, 0.0)
        });
        e.0 += 1;
        e.1 += l;
        e.2 += l * l;
    }
    // fixed key order keeps the float sum reproducible
    keys.sort_unstable();
    let mut total = 0u64;
    let mut weighted = 0f64;
    for key in &keys {
        let (n, s, ss) = clusters[key];
        let mean = s / n as f64;
        let var = (ss / n as f64 - mean * mean).max(0.0);
        weighted += n as f64 * var.sqrt();
        total += n;
    }
    let spread = if total == 0 { 0.0 } else { weighted / total as f64 };
    (keys.len(), spread)
}

pub fn flatness_report(img: &RasterImage, mask: &ForegroundMask, params: &FlatnessParams) -> Result<FlatnessReport> {
    if img.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims(),
            actual: img.dims(),
        });
    }
    if mask.coverage() <= 0.0 {
        return Err(Error::EmptyForeground);
    }
    let grads = foreground_gradients(img, mask);
    let (mut fg, mut flat) = (0usize, 0usize);
    for (i, g) in grads.iter().enumerate() {
        if mask.is_foreground(i) {
            fg += 1;
            flat += usize::from(*g < params.gradient_threshold);
        }
    }
    let flat_pixel_fraction = flat as f64 / fg as f64;
    let (distinct_color_count, shading_score) = color_clusters(img, mask);
    Ok(FlatnessReport {
        distinct_color_count,
        flat_pixel_fraction,
        shading_score,
        is_flat: distinct_color_count <= params.max_colors
            && flat_pixel_fraction >= params.min_flat_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::condition::foreground_mask;

    #[test]
    fn constant_foreground_is_flat() {
        let img = RasterImage::from_fn_rgb(32, 32, |x, y| {
            if (8..24).contains(&x) && (8..24).contains(&y) { [40, 90, 200] } else { [255, 255, 255] }
        });
        let mask = foreground_mask(&img);
        let r = flatness_report(&img, &mask, &FlatnessParams::default()).unwrap();
        assert_eq!(r.distinct_color_count, 1);
        assert_eq!(r.flat_pixel_fraction, 1.0);
        assert_eq!(r.shading_score, 0.0);
        assert!(r.is_flat);
    }

    #[test]
    fn three_color_cartoon_is_flat() {
        let img = fixtures::cartoon(160);
        let mask = foreground_mask(&img);
        let r = flatness_report(&img, &mask, &FlatnessParams::default()).unwrap();
        assert_eq!(r.distinct_color_count, 3);
        assert!(r.flat_pixel_fraction >= 0.85, "{r:?}");
        assert!(r.is_flat);
    }

    #[test]
    fn shaded_sphere_is_not_flat() {
        let img = fixtures::shaded_sphere(48, 16.0);
        let mask = foreground_mask(&img);
        let r = flatness_report(&img, &mask, &FlatnessParams::default()).unwrap();
        assert!(!r.is_flat, "{r:?}");
        assert!(r.shading_score > 1.0, "{r:?}");
    }

    #[test]
    fn empty_foreground_errors() {
        let img = RasterImage::filled(8, 8, &[255, 255, 255]);
        let mask = foreground_mask(&img);
        assert!(matches!(
            flatness_report(&img, &mask, &FlatnessParams::default()),
            Err(Error::EmptyForeground)
        ));
    }
}
