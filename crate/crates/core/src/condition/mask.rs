use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::{Channels, RasterImage};

/// Default Euclidean RGB distance for border flood fill.
pub const DEFAULT_BACKGROUND_TOLERANCE: f64 = 20.0;

/// Binary subject/background separation (255 = subject).
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundMask {
    mask: RasterImage,
    coverage: f64,
}

impl ForegroundMask {
    pub fn from_bools(width: u32, height: u32, fg: &[bool]) -> Self {
        let data: Vec<u8> = fg.iter().map(|&f| if f { 255 } else { 0 }).collect();
        let count = fg.iter().filter(|&&f| f).count();
        let mask = RasterImage::new(width, height, Channels::Gray8, data).expect("mask size");
        Self {
            coverage: count as f64 / mask.pixel_count() as f64,
            mask,
        }
    }

    /// Interprets a Gray8 image; values ≥ 128 are foreground.
    pub fn from_image(img: &RasterImage) -> Self {
        let fg: Vec<bool> = (0..img.pixel_count())
            .map(|i| img.rgb_at(i)[0] >= 128)
            .collect();
        Self::from_bools(img.width(), img.height(), &fg)
    }

    pub fn image(&self) -> &RasterImage {
        &self.mask
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn dims(&self) -> (u32, u32) {
        self.mask.dims()
    }

    pub fn is_foreground(&self, index: usize) -> bool {
        self.mask.data()[index] == 255
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.mask.data().iter().map(|&v| v == 255).collect()
    }

    /// Half-open pixel bounds `(x0, y0, x1, y1)` of the foreground.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let (w, h) = self.dims();
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for y in 0..h {
            for x in 0..w {
                if self.is_foreground((y * w + x) as usize) {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        b
    }

    /// Intersection over union with another mask of the same size.
    pub fn iou(&self, other: &ForegroundMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.mask.data().iter().zip(other.mask.data()) {
            let (a, b) = (*a == 255, *b == 255);
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub background_tolerance: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            background_tolerance: DEFAULT_BACKGROUND_TOLERANCE,
        }
    }
}

pub fn foreground_mask(img: &RasterImage) -> ForegroundMask {
    foreground_mask_with(img, &MaskParams::default())
}

/// Alpha ≥ 128 when the image has alpha. Otherwise the canvas colour is the
/// majority of the four corners (ties go to the smallest RGB triple) and the
/// background is everything 4-connected to the border within
/// `background_tolerance` of it.
pub fn foreground_mask_with(img: &RasterImage, params: &MaskParams) -> ForegroundMask {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.has_alpha() {
        let fg: Vec<bool> = (0..w * h).map(|i| img.alpha_at(i) >= 128).collect();
        return ForegroundMask::from_bools(img.width(), img.height(), &fg);
    }

    let corners = [0, w - 1, (h - 1) * w, h * w - 1].map(|i| img.rgb_at(i));
    let canvas = corners
        .iter()
        .map(|c| (corners.iter().filter(|o| *o == c).count(), *c))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, c)| c)
        .expect("four corners");

    let tol2 = params.background_tolerance * params.background_tolerance;
    let near = |i: usize| {
        let p = img.rgb_at(i);
        let d2: f64 = (0..3)
            .map(|k| {
                let d = p[k] as f64 - canvas[k] as f64;
                d * d
            })
            .sum();
        d2 <= tol2
    };

    let mut background = vec![false; w * h];
    let mut queue = VecDeque::new();
    let push = |i: usize, bg: &mut Vec<bool>, q: &mut VecDeque<usize>| {
        if !bg[i] && near(i) {
            bg[i] = true;
            q.push_back(i);
        }
    };
    for x in 0..w {
        push(x, &mut background, &mut queue);
        push((h - 1) * w + x, &mut background, &mut queue);
    }
    for y in 0..h {
        push(y * w, &mut background, &mut queue);
        push(y * w + w - 1, &mut background, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            push(i - 1, &mut background, &mut queue);
        }
        if x + 1 < w {
            push(i + 1, &mut background, &mut queue);
        }
        if y > 0 {
            push(i - w, &mut background, &mut queue);
        }
        if y + 1 < h {
            push(i + w, &mut background, &mut queue);
        }
    }
    let fg: Vec<bool> = background.iter().map(|b| !b).collect();
    ForegroundMask::from_bools(img.width(), img.height(), &fg)
}
