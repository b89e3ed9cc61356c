use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channels {
    Gray8,
    Rgb8,
    Rgba8,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray8 => 1,
            Channels::Rgb8 => 3,
            Channels::Rgba8 => 4,
        }
    }
}

/// Row-major 8-bit raster.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: Channels,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: Channels, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::MalformedImage(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * channels.count();
        if data.len() != expected {
            return Err(Error::MalformedImage(format!(
                "buffer holds {} bytes, {width}x{height} {channels:?} needs {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image filled with one pixel value. `pixel.len()` selects the layout.
    pub fn filled(width: u32, height: u32, pixel: &[u8]) -> Self {
        let channels = match pixel.len() {
            1 => Channels::Gray8,
            3 => Channels::Rgb8,
            4 => Channels::Rgba8,
            n => panic!("pixel with {n} channels"),
        };
        let data = pixel.repeat(width as usize * height as usize);
        Self::new(width, height, channels, data).expect("valid fill")
    }

    pub fn from_fn_gray(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, Channels::Gray8, data).expect("valid size")
    }

    pub fn from_fn_rgb(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, Channels::Rgb8, data).expect("valid size")
    }

    pub fn from_fn_rgba(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 4]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 4);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, Channels::Rgba8, data).expect("valid size")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Raw channel values at `(x, y)`, or `None` when out of bounds.
    pub fn pixel(&self, x: u32, y: u32) -> Option<&[u8]> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let n = self.channels.count();
        let i = (y as usize * self.width as usize + x as usize) * n;
        Some(&self.data[i..i + n])
    }

    /// Gray8 value at a linear index. Panics on other layouts.
    pub fn gray_at(&self, index: usize) -> u8 {
        assert_eq!(self.channels, Channels::Gray8);
        self.data[index]
    }

    pub fn has_alpha(&self) -> bool {
        self.channels == Channels::Rgba8
    }

    /// RGB triple at a linear pixel index; gray is replicated, alpha ignored.
    pub fn rgb_at(&self, index: usize) -> [u8; 3] {
        match self.channels {
            Channels::Gray8 => {
                let g = self.data[index];
                [g, g, g]
            }
            Channels::Rgb8 => {
                let i = index * 3;
                [self.data[i], self.data[i + 1], self.data[i + 2]]
            }
            Channels::Rgba8 => {
                let i = index * 4;
                [self.data[i], self.data[i + 1], self.data[i + 2]]
            }
        }
    }

    pub fn alpha_at(&self, index: usize) -> u8 {
        match self.channels {
            Channels::Rgba8 => self.data[index * 4 + 3],
            _ => 255,
        }
    }

    /// Rec.601 luma scaled by 1000 (`299 R + 587 G + 114 B`), exact in integers.
    pub fn luma_milli(&self) -> Vec<i64> {
        (0..self.pixel_count())
            .map(|i| {
                let [r, g, b] = self.rgb_at(i);
                299 * r as i64 + 587 * g as i64 + 114 * b as i64
            })
            .collect()
    }

    /// Rgb8 copy with alpha composited over white.
    pub fn to_rgb_over_white(&self) -> RasterImage {
        if self.channels == Channels::Rgb8 {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.pixel_count() * 3);
        for i in 0..self.pixel_count() {
            let rgb = self.rgb_at(i);
            let a = self.alpha_at(i) as u32;
            for c in rgb {
                // (c·a + 255·(255 − a)) / 255, rounded
                let v = (c as u32 * a + 255 * (255 - a) + 127) / 255;
                out.push(v as u8);
            }
        }
        RasterImage::new(self.width, self.height, Channels::Rgb8, out).expect("same dims")
    }

    /// Clockwise quarter turn.
    pub fn rotate90(&self) -> RasterImage {
        let (w, h) = (self.width as usize, self.height as usize);
        let n = self.channels.count();
        let mut out = vec![0u8; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                // (x, y) -> (h - 1 - y, x) in a w' = h, h' = w image
                let nx = h - 1 - y;
                let ny = x;
                let src = (y * w + x) * n;
                let dst = (ny * h + nx) * n;
                out[dst..dst + n].copy_from_slice(&self.data[src..src + n]);
            }
        }
        RasterImage::new(self.height, self.width, self.channels, out).expect("same size")
    }

    pub fn mirror_horizontal(&self) -> RasterImage {
        let (w, h) = (self.width as usize, self.height as usize);
        let n = self.channels.count();
        let mut out = vec![0u8; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let src = (y * w + x) * n;
                let dst = (y * w + (w - 1 - x)) * n;
                out[dst..dst + n].copy_from_slice(&self.data[src..src + n]);
            }
        }
        RasterImage::new(self.width, self.height, self.channels, out).expect("same size")
    }

    /// Downscales with area averaging so the long side is at most `max_side`.
    /// Images already within bounds are returned unchanged.
    pub fn clamp_long_side(&self, max_side: u32) -> RasterImage {
        let long = self.width.max(self.height);
        if long <= max_side {
            return self.clone();
        }
        let scale = max_side as f64 / long as f64;
        let nw = ((self.width as f64 * scale).round() as u32).max(1);
        let nh = ((self.height as f64 * scale).round() as u32).max(1);
        self.area_resize(nw, nh)
    }

    fn area_resize(&self, nw: u32, nh: u32) -> RasterImage {
        let n = self.channels.count();
        let sx = self.width as f64 / nw as f64;
        let sy = self.height as f64 / nh as f64;
        let mut out = vec![0u8; nw as usize * nh as usize * n];
        for oy in 0..nh as usize {
            let y0 = oy as f64 * sy;
            let y1 = y0 + sy;
            for ox in 0..nw as usize {
                let x0 = ox as f64 * sx;
                let x1 = x0 + sx;
                let mut acc = [0f64; 4];
                let mut total = 0f64;
                let mut y = y0.floor() as usize;
                while (y as f64) < y1 && y < self.height as usize {
                    let wy = (y1.min(y as f64 + 1.0) - y0.max(y as f64)).max(0.0);
                    let mut x = x0.floor() as usize;
                    while (x as f64) < x1 && x < self.width as usize {
                        let wx = (x1.min(x as f64 + 1.0) - x0.max(x as f64)).max(0.0);
                        let wgt = wx * wy;
                        let base = (y * self.width as usize + x) * n;
                        for c in 0..n {
                            acc[c] += self.data[base + c] as f64 * wgt;
                        }
                        total += wgt;
                        x += 1;
                    }
                    y += 1;
                }
                let dst = (oy * nw as usize + ox) * n;
                for c in 0..n {
                    out[dst + c] = (acc[c] / total).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        RasterImage::new(nw, nh, self.channels, out).expect("computed size")
    }
}
