//! Deterministic native stand-ins for every model role.

use crate::condition::{foreground_mask_with, MaskParams};
use crate::error::{Error, Result};
use crate::filters;
use crate::mesh::{bake_frontal, inflate_silhouette, BakeParams, InflateParams};
use crate::model::{Channels, ConditionKind, RasterImage, TriMesh};
use crate::select::{argmax_first, realism_score_with, RealismWeights};

pub const BUILTIN_CAPTION: &str = "a flat-colored illustration";
pub const BUILTIN_ID: &str = "builtin";

/// Standard deviation, in pixels, of the blur applied to the edge-proximity field.
pub const EDGE_FIELD_SIGMA: f64 = 2.0;

/// Parameters of the native fallbacks; they come from the pipeline config.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuiltinModels {
    pub mask: MaskParams,
    pub inflate: InflateParams,
    pub bake: BakeParams,
    pub realism: RealismWeights,
}

impl BuiltinModels {
    pub fn caption(&self, _img: &RasterImage) -> String {
        BUILTIN_CAPTION.to_string()
    }

    /// Input composited over white, with RGB multiplied by a shading factor
    /// inside the subject. Canny: `0.5 + 0.5·s`, `s` the blurred and
    /// max-normalized `max(0, 255 − distance to nearest edge)`. Depth:
    /// `0.5 + 0.5·depth/255`. The seed is ignored.
    pub fn generate(&self, img: &RasterImage, cond: &RasterImage, kind: ConditionKind, _seed: u64) -> Result<RasterImage> {
        if img.dims() != cond.dims() {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                actual: cond.dims(),
            });
        }
        let (w, h) = (img.width() as usize, img.height() as usize);
        let base = img.to_rgb_over_white();
        let mask = foreground_mask_with(img, &self.mask);
        let factor: Vec<f64> = match kind {
            ConditionKind::CannyEdge => {
                let edges: Vec<bool> = (0..w * h).map(|i| cond.gray_at(i) > 0).collect();
                let d2 = filters::squared_distance_to_seeds(&edges, w, h, false);
                let raw: Vec<f64> = d2.iter().map(|&d| (255.0 - d.sqrt()).max(0.0)).collect();
                let blurred = blur_f64(&raw, w, h, EDGE_FIELD_SIGMA);
                let max = blurred.iter().cloned().fold(0.0, f64::max);
                blurred
                    .iter()
                    .map(|&b| 0.5 + 0.5 * if max > 0.0 { b / max } else { 0.0 })
                    .collect()
            }
            ConditionKind::Depth => (0..w * h).map(|i| 0.5 + 0.5 * cond.gray_at(i) as f64 / 255.0).collect(),
        };
        let mut data = base.data().to_vec();
        for (i, px) in data.chunks_exact_mut(3).enumerate() {
            if mask.is_foreground(i) {
                for c in px {
                    *c = (*c as f64 * factor[i]).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        RasterImage::new(img.width(), img.height(), Channels::Rgb8, data)
    }

    /// 1-based index of the most realistic image, as text.
    pub fn vqa(&self, _question: &str, images: &[RasterImage]) -> Result<String> {
        if images.is_empty() {
            return Err(Error::MalformedResponse("vqa needs at least one image".into()));
        }
        let scores: Vec<f64> = images
            .iter()
            .map(|img| {
                let mask = foreground_mask_with(img, &self.mask);
                realism_score_with(img, &mask, &self.realism).map_or(0.0, |s| s.total)
            })
            .collect();
        Ok(argmax_first(&scores).expect("non-empty").to_string())
    }

    pub fn shape(&self, img: &RasterImage, _seed: u64) -> Result<TriMesh> {
        inflate_silhouette(&foreground_mask_with(img, &self.mask), &self.inflate)
    }

    pub fn texture(&self, mesh: &TriMesh, img: &RasterImage) -> Result<TriMesh> {
        let mask = foreground_mask_with(img, &self.mask);
        bake_frontal(mesh, img, &mask, &self.bake)
    }
}

/// Separable Gaussian blur with clamped borders, radius `ceil(3σ)`.
fn blur_f64(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .map(|k| taps[(k + r) as usize] * values[y * w + clamp(x as isize + k, w)])
                .sum();
        }
    }
    let mut out = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r)
                .map(|k| taps[(k + r) as usize] * tmp[clamp(y as isize + k, h) * w + x])
                .sum();
        }
    }
    out
}
