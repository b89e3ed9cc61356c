//! Frontal texture baking into per-vertex colors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::condition::ForegroundMask;
use crate::error::{Error, Result};
use crate::model::{RasterImage, TriMesh};

use super::normalize::normalize_mesh;
use super::raster::{rasterize, OrthoFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenFill {
    /// Breadth-first spread of colors from visible vertices over mesh edges.
    NearestVisible,
    /// Sample the image for hidden vertices too, as if seen from the front.
    MirrorFront,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BakeParams {
    pub raster_size: u32,
    pub depth_epsilon: f64,
    pub hidden_fill: HiddenFill,
}

impl Default for BakeParams {
    fn default() -> Self {
        Self {
            raster_size: 512,
            depth_epsilon: 1e-3,
            hidden_fill: HiddenFill::NearestVisible,
        }
    }
}

impl BakeParams {
    pub fn validate(&self) -> Result<()> {
        if self.raster_size < 16 {
            return Err(Error::Config(format!(
                "bake raster_size must be ≥ 16, got {}",
                self.raster_size
            )));
        }
        if !(self.depth_epsilon >= 0.0) {
            return Err(Error::Config("bake depth_epsilon must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Per-vertex result of the visibility pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Visibility {
    pub visible: Vec<bool>,
    /// Image position (continuous pixel coordinates) each vertex maps to.
    pub image_pos: Vec<[f64; 2]>,
}

/// Normalizes `mesh` and colors every vertex from `img`, viewed front-on.
pub fn bake_frontal(mesh: &TriMesh, img: &RasterImage, mask: &ForegroundMask, p: &BakeParams) -> Result<TriMesh> {
    p.validate()?;
    mesh.validate()?;
    if mask.dims() != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: mask.dims(),
        });
    }
    let bbox = mask.bbox().ok_or(Error::EmptyForeground)?;
    let mut mesh = normalize_mesh(mesh)?;
    let vis = visibility(&mesh, bbox, p)?;

    let sample = |i: usize| masked_bilinear(img, mask, vis.image_pos[i]);
    let n = mesh.vertices.len();
    let mut colors: Vec<Option<[u8; 3]>> = (0..n)
        .map(|i| if vis.visible[i] { sample(i) } else { None })
        .collect();

    match p.hidden_fill {
        HiddenFill::MirrorFront => {
            for (i, c) in colors.iter_mut().enumerate() {
                if c.is_none() {
                    *c = sample(i);
                }
            }
        }
        HiddenFill::NearestVisible => spread(&mut colors, &mesh.triangles),
    }
    // whatever is still unreached (disconnected parts) gets the mean subject color
    let fallback = mean_foreground_color(img, mask);
    mesh.vertex_colors = Some(colors.into_iter().map(|c| c.unwrap_or(fallback)).collect());
    Ok(mesh)
}

/// Visibility of each vertex of an already-normalized mesh, plus where it
/// lands on the image when the mesh's xy box is stretched over `bbox`.
pub fn visibility(mesh: &TriMesh, bbox: (u32, u32, u32, u32), p: &BakeParams) -> Result<Visibility> {
    let frame = OrthoFrame::fit(&mesh.vertices, p.raster_size as usize)?;
    let buf = rasterize(&frame, &mesh.vertices, &mesh.triangles);
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| Error::DegenerateMesh("mesh has no vertices".into()))?;
    let (x0, y0, x1, y1) = (bbox.0 as f64, bbox.1 as f64, bbox.2 as f64, bbox.3 as f64);
    let lerp = |t: f64, ext: f64, a: f64, b: f64| if ext > 0.0 { a + t / ext * (b - a) } else { (a + b) / 2.0 };

    let mut visible = Vec::with_capacity(mesh.vertices.len());
    let mut image_pos = Vec::with_capacity(mesh.vertices.len());
    for v in &mesh.vertices {
        let uv = frame.project(*v);
        let (px, py) = frame.pixel_of(uv);
        let d = buf.at(px, py);
        visible.push(!d.is_finite() || uv[2] <= d + p.depth_epsilon);
        image_pos.push([
            lerp(v[0] - lo[0], hi[0] - lo[0], x0, x1),
            lerp(hi[1] - v[1], hi[1] - lo[1], y0, y1),
        ]);
    }
    Ok(Visibility { visible, image_pos })
}

/// Bilinear sample at a continuous position, using only foreground taps.
/// `None` when no tap with positive weight is foreground.
pub fn masked_bilinear(img: &RasterImage, mask: &ForegroundMask, pos: [f64; 2]) -> Option<[u8; 3]> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (sx, sy) = (pos[0] - 0.5, pos[1] - 0.5);
    let (fx, fy) = (sx.floor(), sy.floor());
    let (tx, ty) = (sx - fx, sy - fy);
    let mut acc = [0f64; 3];
    let mut weight = 0f64;
    for (dx, dy, wgt) in [
        (0, 0, (1.0 - tx) * (1.0 - ty)),
        (1, 0, tx * (1.0 - ty)),
        (0, 1, (1.0 - tx) * ty),
        (1, 1, tx * ty),
    ] {
        let (x, y) = (fx as i64 + dx, fy as i64 + dy);
        if wgt <= 0.0 || x < 0 || y < 0 || x >= w || y >= h {
            continue;
        }
        let i = (y * w + x) as usize;
        if !mask.is_foreground(i) {
            continue;
        }
        let c = img.rgb_at(i);
        for k in 0..3 {
            acc[k] += wgt * c[k] as f64;
        }
        weight += wgt;
    }
    (weight > 0.0).then(|| acc.map(|a| (a / weight).round().clamp(0.0, 255.0) as u8))
}

fn mean_foreground_color(img: &RasterImage, mask: &ForegroundMask) -> [u8; 3] {
    let mut acc = [0u64; 3];
    let mut n = 0u64;
    for i in 0..img.pixel_count() {
        if mask.is_foreground(i) {
            let c = img.rgb_at(i);
            for k in 0..3 {
                acc[k] += c[k] as u64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return [255, 255, 255];
    }
    acc.map(|a| ((a as f64 / n as f64).round()) as u8)
}

/// Multi-source BFS over vertex adjacency. Neighbour lists are sorted so the
/// result does not depend on triangle order.
fn spread(colors: &mut [Option<[u8; 3]>], triangles: &[[u32; 3]]) {
    let n = colors.len();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| colors[i].is_some()).collect();
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            let j = j as usize;
            if colors[j].is_none() {
                colors[j] = colors[i];
                queue.push_back(j);
            }
        }
    }
}
