use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters;
use crate::model::{ConditionKind, ConditionMap, ContentHash, RasterImage};

/// Low threshold as a fraction of the high threshold when not given.
pub const LOW_HIGH_RATIO: f64 = 0.4;

/// Thresholds are in luma units per pixel (Sobel response / 8 on 0–255 luma).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    pub gaussian_sigma: f64,
    pub low_threshold: Option<f64>,
    pub high_threshold: Option<f64>,
    pub auto_threshold: bool,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            gaussian_sigma: 1.4,
            low_threshold: None,
            high_threshold: None,
            auto_threshold: true,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma > 0.0) {
            return Err(Error::Config(format!(
                "canny sigma must be > 0, got {}",
                self.gaussian_sigma
            )));
        }
        for t in [self.low_threshold, self.high_threshold].into_iter().flatten() {
            if !(0.0..=255.0).contains(&t) {
                return Err(Error::Config(format!("canny threshold {t} outside 0..=255")));
            }
        }
        if let (Some(lo), Some(hi)) = (self.low_threshold, self.high_threshold) {
            if lo >= hi {
                return Err(Error::Config(format!(
                    "canny low threshold {lo} must be below high threshold {hi}"
                )));
            }
        }
        if !self.auto_threshold && self.high_threshold.is_none() {
            return Err(Error::Config(
                "canny high threshold required when auto_threshold is off".into(),
            ));
        }
        Ok(())
    }
}

/// Gradient direction quantized to the four Canny orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Orientation {
    fn from_gradient(gx: i64, gy: i64) -> Self {
        let mut angle = (gy as f64).atan2(gx as f64).to_degrees();
        if angle < 0.0 {
            angle += 180.0;
        }
        if !(22.5..157.5).contains(&angle) {
            Orientation::Deg0
        } else if angle < 67.5 {
            Orientation::Deg45
        } else if angle < 112.5 {
            Orientation::Deg90
        } else {
            Orientation::Deg135
        }
    }

    /// Pixel step along the gradient (image y grows downward).
    pub fn step(self) -> (isize, isize) {
        match self {
            Orientation::Deg0 => (1, 0),
            Orientation::Deg45 => (1, 1),
            Orientation::Deg90 => (0, 1),
            Orientation::Deg135 => (-1, 1),
        }
    }
}

/// Every intermediate of one Canny run.
#[derive(Debug, Clone)]
pub struct CannyTrace {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<Orientation>,
    /// Magnitude where the pixel survives non-maximum suppression, else 0.
    pub suppressed: Vec<f64>,
    pub edges: Vec<bool>,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone)]
pub struct CannyOutput {
    pub map: ConditionMap,
    /// Set when the input had no gradients at all.
    pub note: Option<String>,
}

pub fn canny_edges(img: &RasterImage, params: &CannyParams, source: ContentHash) -> Result<CannyOutput> {
    params.validate()?;
    let trace = canny_trace(img, params);
    let data: Vec<u8> = trace.edges.iter().map(|&e| if e { 255 } else { 0 }).collect();
    let luma = img.luma_milli();
    let note = luma
        .iter()
        .all(|&v| v == luma[0])
        .then(|| "degenerate image: all pixels equal, edge map is empty".to_string());
    let map = RasterImage::new(img.width(), img.height(), crate::model::Channels::Gray8, data)?;
    Ok(CannyOutput {
        map: ConditionMap::new(ConditionKind::CannyEdge, map, source)?,
        note,
    })
}

pub fn canny_trace(img: &RasterImage, params: &CannyParams) -> CannyTrace {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = img.luma_milli();
    let (taps, sum) = filters::gaussian_kernel(params.gaussian_sigma);
    let blurred = filters::blur_i64(&luma, w, h, &taps);
    let (gx, gy) = filters::sobel_i64(&blurred, w, h);
    let scale = 1000.0 * (sum * sum) as f64;
    let magnitude: Vec<f64> = gx
        .iter()
        .zip(&gy)
        .map(|(&x, &y)| filters::gradient_magnitude(x, y, scale))
        .collect();
    let orientation: Vec<Orientation> = gx
        .iter()
        .zip(&gy)
        .map(|(&x, &y)| Orientation::from_gradient(x, y))
        .collect();

    let suppressed = non_maximum_suppression(&magnitude, &orientation, w, h);

    let positive: Vec<f64> = suppressed.iter().cloned().filter(|&m| m > 0.0).collect();
    let high = match params.high_threshold {
        Some(t) => t,
        None => filters::otsu_threshold(&positive).unwrap_or(f64::INFINITY),
    };
    let low = params.low_threshold.unwrap_or(LOW_HIGH_RATIO * high);
    let edges = hysteresis(&suppressed, w, h, low, high);

    CannyTrace {
        width: w,
        height: h,
        magnitude,
        orientation,
        suppressed,
        edges,
        low,
        high,
    }
}

/// Keeps a pixel when it beats its backward neighbour along the gradient
/// strictly and its forward neighbour non-strictly, so a two-pixel plateau
/// keeps exactly one pixel. The outermost pixel ring is always dropped.
fn non_maximum_suppression(mag: &[f64], orient: &[Orientation], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0f64; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = orient[i].step();
            let fwd = mag[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
            let back = mag[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
            if m > back && m >= fwd {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(suppressed: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edges = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in suppressed.iter().enumerate() {
        if m > 0.0 && m >= high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && suppressed[j] > 0.0 && suppressed[j] >= low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}
