//! Procedural flat-colored sprites standing in for a real illustration set.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetEntry, DatasetManifest, DATASET_SCHEMA};
use crate::error::Result;
use crate::model::{encode_image, RasterImage};
use crate::pipeline::write_atomic;

pub const STYLES: [&str; 4] = ["icon", "outlined cartoon", "flat fill", "hand drawing"];

const PALETTE: [[u8; 3]; 10] = [
    [230, 57, 70],
    [241, 196, 15],
    [46, 204, 113],
    [52, 152, 219],
    [155, 89, 182],
    [230, 126, 34],
    [26, 188, 156],
    [236, 112, 160],
    [120, 90, 60],
    [90, 110, 130],
];

#[derive(Debug, Clone, Copy)]
enum Outline {
    Circle { r: f64 },
    Ellipse { rx: f64, ry: f64, angle: f64 },
    Rounded { hw: f64, hh: f64, radius: f64 },
    Star { r_out: f64, r_in: f64, points: u32, phase: f64 },
    Blob { r: f64, amps: [f64; 3], phases: [f64; 3] },
}

impl Outline {
    /// Signed distance-like value: negative inside, roughly in pixels.
    fn eval(&self, dx: f64, dy: f64) -> f64 {
        match *self {
            Outline::Circle { r } => dx.hypot(dy) - r,
            Outline::Ellipse { rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                ((u / rx).powi(2) + (v / ry).powi(2)).sqrt().mul_add(rx.min(ry), -rx.min(ry))
            }
            Outline::Rounded { hw, hh, radius } => {
                let qx = dx.abs() - (hw - radius);
                let qy = dy.abs() - (hh - radius);
                qx.max(0.0).hypot(qy.max(0.0)) + qx.max(qy).min(0.0) - radius
            }
            Outline::Star { r_out, r_in, points, phase } => {
                let a = dy.atan2(dx) + phase;
                let sector = std::f64::consts::TAU / points as f64;
                let t = ((a.rem_euclid(sector)) / sector - 0.5).abs() * 2.0;
                let r = r_in + (r_out - r_in) * t;
                dx.hypot(dy) - r
            }
            Outline::Blob { r, amps, phases } => {
                let a = dy.atan2(dx);
                let wobble: f64 = (0..3).map(|k| amps[k] * ((k as f64 + 2.0) * a + phases[k]).sin()).sum();
                dx.hypot(dy) - r * (1.0 + wobble)
            }
        }
    }
}

/// Renders sprite `index` of the procedural set; the same `(seed, index)`
/// always yields the same pixels.
pub fn sprite(seed: u64, index: usize, size: u32) -> (RasterImage, &'static str) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let style = STYLES[index % STYLES.len()];
    let s = size as f64;
    let base = s * rng.gen_range(0.26..0.38);
    let outline = match rng.gen_range(0..5) {
        0 => Outline::Circle { r: base },
        1 => Outline::Ellipse {
            rx: base,
            ry: base * rng.gen_range(0.55..0.9),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
        },
        2 => Outline::Rounded {
            hw: base,
            hh: base * rng.gen_range(0.6..1.0),
            radius: base * rng.gen_range(0.1..0.4),
        },
        3 => Outline::Star {
            r_out: base,
            r_in: base * rng.gen_range(0.5..0.7),
            points: rng.gen_range(5..8),
            phase: rng.gen_range(0.0..1.0),
        },
        _ => Outline::Blob {
            r: base * 0.9,
            amps: [rng.gen_range(0.0..0.12), rng.gen_range(0.0..0.08), rng.gen_range(0.0..0.05)],
            phases: [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)],
        },
    };
    let fill = PALETTE[rng.gen_range(0..PALETTE.len())];
    let accent = PALETTE[rng.gen_range(0..PALETTE.len())];
    let ink = [30, 30, 40];
    let transparent = rng.gen_bool(0.5);
    let line = match style {
        "outlined cartoon" => 3.0,
        "hand drawing" => 2.0,
        _ => 0.0,
    };
    let jitter = if style == "hand drawing" { 1.2 } else { 0.0 };
    let spot = (rng.gen_range(-0.3..0.3) * base, rng.gen_range(-0.3..0.3) * base, base * rng.gen_range(0.15..0.3));
    let (cx, cy) = (s / 2.0, s / 2.0);

    let px = |x: u32, y: u32| -> [u8; 4] {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        let wobble = jitter * ((dx * 0.35).sin() + (dy * 0.29).cos());
        let d = outline.eval(dx, dy) + wobble;
        if d > 0.0 {
            return if transparent { [0, 0, 0, 0] } else { [255, 255, 255, 255] };
        }
        let c = if d > -line {
            ink
        } else if style != "flat fill" && (dx - spot.0).hypot(dy - spot.1) < spot.2 {
            accent
        } else {
            fill
        };
        [c[0], c[1], c[2], 255]
    };
    // opaque canvases are saved without alpha so the mask falls back to the border colour
    let img = if transparent {
        RasterImage::from_fn_rgba(size, size, px)
    } else {
        RasterImage::from_fn_rgb(size, size, |x, y| {
            let [r, g, b, _] = px(x, y);
            [r, g, b]
        })
    };
    (img, style)
}

/// Writes `n` sprites plus a `manifest.json` into `dir`.
pub fn generate_dataset(dir: &Path, n: usize, seed: u64, size: u32) -> Result<DatasetManifest> {
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let (img, style) = sprite(seed, i, size);
        let path = format!("sprites/sprite_{i:03}.png");
        write_atomic(&dir.join(&path), &encode_image(&img))?;
        entries.push(DatasetEntry {
            id: format!("sprite-{i:03}"),
            path,
            style: style.to_string(),
            license: "CC0-1.0".to_string(),
        });
    }
    let manifest = DatasetManifest {
        schema: DATASET_SCHEMA,
        name: format!("procedural-{n}"),
        entries,
        root: dir.to_path_buf(),
    };
    write_atomic(&dir.join("manifest.json"), &manifest.to_json())?;
    Ok(manifest)
}
