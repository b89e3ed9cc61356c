//! Low-level raster filters shared across stages.
//!
//! Gaussian blur and Sobel work on integer luma (`299 R + 587 G + 114 B`)
//! with integer kernel weights. Sums are exact, so shifting every input by a
//! constant shifts the blurred field by an exact constant and leaves the
//! gradients bit-identical.

use crate::exec;

/// Integer Gaussian taps for radius `ceil(3 sigma)`, plus their sum.
pub fn gaussian_kernel(sigma: f64) -> (Vec<i64>, i64) {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let taps: Vec<i64> = raw
        .iter()
        .map(|w| ((w / total) * 4096.0).round().max(1.0) as i64)
        .collect();
    let sum = taps.iter().sum();
    (taps, sum)
}

/// Separable convolution with clamp-to-edge borders. The result is the
/// unnormalized sum; divide by `sum²` for the weighted mean.
pub fn blur_i64(values: &[i64], width: usize, height: usize, taps: &[i64]) -> Vec<i64> {
    let r = (taps.len() / 2) as isize;
    let rows: Vec<Vec<i64>> = exec::map_range(height, |y| {
        let row = &values[y * width..(y + 1) * width];
        (0..width)
            .map(|x| {
                taps.iter()
                    .enumerate()
                    .map(|(k, &w)| {
                        let sx = (x as isize + k as isize - r).clamp(0, width as isize - 1);
                        w * row[sx as usize]
                    })
                    .sum()
            })
            .collect()
    });
    let horiz: Vec<i64> = rows.concat();
    let cols: Vec<Vec<i64>> = exec::map_range(width, |x| {
        (0..height)
            .map(|y| {
                taps.iter()
                    .enumerate()
                    .map(|(k, &w)| {
                        let sy = (y as isize + k as isize - r).clamp(0, height as isize - 1);
                        w * horiz[sy as usize * width + x]
                    })
                    .sum()
            })
            .collect()
    });
    let mut out = vec![0i64; width * height];
    for (x, col) in cols.into_iter().enumerate() {
        for (y, v) in col.into_iter().enumerate() {
            out[y * width + x] = v;
        }
    }
    out
}

/// 3×3 Sobel responses `(gx, gy)` with clamp-to-edge borders.
/// `gx` grows to the right, `gy` grows downward.
pub fn sobel_i64(values: &[i64], width: usize, height: usize) -> (Vec<i64>, Vec<i64>) {
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, width as isize - 1) as usize;
        let cy = y.clamp(0, height as isize - 1) as usize;
        values[cy * width + cx]
    };
    sobel_with(width, height, at)
}

/// Sobel restricted to a region: neighbours outside `inside` (or outside the
/// image) take the centre pixel's value, so region borders produce no
/// response.
pub fn masked_sobel_i64(
    values: &[i64],
    inside: &[bool],
    width: usize,
    height: usize,
) -> (Vec<i64>, Vec<i64>) {
    let mut gx = vec![0i64; width * height];
    let mut gy = vec![0i64; width * height];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !inside[i] {
                continue;
            }
            let centre = values[i];
            let at = |dx: isize, dy: isize| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    return centre;
                }
                let j = ny as usize * width + nx as usize;
                if inside[j] {
                    values[j]
                } else {
                    centre
                }
            };
            let (sx, sy) = sobel_at(at);
            gx[i] = sx;
            gy[i] = sy;
        }
    }
    (gx, gy)
}

fn sobel_with(
    width: usize,
    height: usize,
    at: impl Fn(isize, isize) -> i64,
) -> (Vec<i64>, Vec<i64>) {
    let mut gx = vec![0i64; width * height];
    let mut gy = vec![0i64; width * height];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let (sx, sy) = sobel_at(|dx, dy| at(x + dx, y + dy));
            let i = y as usize * width + x as usize;
            gx[i] = sx;
            gy[i] = sy;
        }
    }
    (gx, gy)
}

fn sobel_at(at: impl Fn(isize, isize) -> i64) -> (i64, i64) {
    let gx = (at(1, -1) + 2 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2 * at(-1, 0) + at(-1, 1));
    let gy = (at(-1, 1) + 2 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2 * at(0, -1) + at(1, -1));
    (gx, gy)
}

/// Luma-gradient magnitude in luma units per pixel, from Sobel responses on
/// milli-luma values (`/8` turns the Sobel stencil into a derivative).
pub fn gradient_magnitude(gx: i64, gy: i64, scale: f64) -> f64 {
    ((gx as f64).hypot(gy as f64)) / (8.0 * scale)
}

const FAR: f64 = 1e20;

/// Squared Euclidean distance from every pixel to the nearest seed pixel
/// (exact, separable lower-envelope algorithm). With `border_is_seed` the
/// ring of pixels just outside the image counts as seeds. Pixels with no
/// reachable seed get `f64::INFINITY`.
pub fn squared_distance_to_seeds(
    seeds: &[bool],
    width: usize,
    height: usize,
    border_is_seed: bool,
) -> Vec<f64> {
    let pad = usize::from(border_is_seed);
    let pw = width + 2 * pad;
    let ph = height + 2 * pad;
    let mut grid = vec![FAR; pw * ph];
    for y in 0..ph {
        for x in 0..pw {
            let inner = x >= pad && y >= pad && x < pad + width && y < pad + height;
            let seed = if inner {
                seeds[(y - pad) * width + (x - pad)]
            } else {
                true
            };
            if seed {
                grid[y * pw + x] = 0.0;
            }
        }
    }

    let cols: Vec<Vec<f64>> = exec::map_range(pw, |x| {
        let f: Vec<f64> = (0..ph).map(|y| grid[y * pw + x]).collect();
        lower_envelope(&f)
    });
    for (x, col) in cols.into_iter().enumerate() {
        for (y, v) in col.into_iter().enumerate() {
            grid[y * pw + x] = v;
        }
    }
    let rows: Vec<Vec<f64>> = exec::map_range(ph, |y| lower_envelope(&grid[y * pw..(y + 1) * pw]));

    let mut out = Vec::with_capacity(width * height);
    for y in pad..pad + height {
        for x in pad..pad + width {
            let v = rows[y][x];
            out.push(if v >= FAR / 2.0 { f64::INFINITY } else { v });
        }
    }
    out
}

/// One-dimensional squared distance transform of sampled function `f`.
fn lower_envelope(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0f64; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
    };
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
    d
}

/// Euclidean distance from each foreground pixel to the nearest background
/// pixel, treating everything outside the image as background. Background
/// pixels are 0.
pub fn foreground_distance(foreground: &[bool], width: usize, height: usize) -> Vec<f64> {
    let background: Vec<bool> = foreground.iter().map(|f| !f).collect();
    squared_distance_to_seeds(&background, width, height, true)
        .into_iter()
        .map(f64::sqrt)
        .collect()
}

/// Otsu threshold over positive samples. Returns the smallest value that
/// belongs to the upper class; when the samples cannot be split, the
/// smallest sample (everything is upper class). `None` when empty.
pub fn otsu_threshold(samples: &[f64]) -> Option<f64> {
    const BINS: usize = 256;
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() || max <= 0.0 {
        return None;
    }
    let bin_of = |v: f64| (((v / max) * BINS as f64) as usize).min(BINS - 1);
    let mut hist = [0u64; BINS];
    for &v in samples {
        hist[bin_of(v)] += 1;
    }
    let total = samples.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut best: Option<(f64, usize)> = None;
    let mut w0 = 0f64;
    let mut sum0 = 0f64;
    for (k, &count) in hist.iter().enumerate().take(BINS - 1) {
        w0 += count as f64;
        sum0 += k as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, k));
        }
    }
    let min_sample = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    match best {
        Some((_, k)) => {
            let upper_min = samples
                .iter()
                .cloned()
                .filter(|&v| bin_of(v) > k)
                .fold(f64::INFINITY, f64::min);
            Some(upper_min)
        }
        None => Some(min_sample),
    }
}
