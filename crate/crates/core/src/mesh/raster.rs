//! Orthographic depth-buffer rasterizer looking down −z.

use crate::error::{Error, Result};
use crate::exec;

/// Screen mapping for a square view over the mesh's xy bounding box.
/// Screen `u` grows with x, screen `v` grows with −y, depth is −z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoFrame {
    pub size: usize,
    center: [f64; 2],
    side: f64,
}

impl OrthoFrame {
    pub fn fit(vertices: &[[f64; 3]], size: usize) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::DegenerateMesh("mesh has no vertices".into()))?;
        let (mut lo, mut hi) = ([first[0], first[1]], [first[0], first[1]]);
        for v in vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        if !(side > 0.0) {
            return Err(Error::DegenerateMesh("mesh has no extent in x or y".into()));
        }
        Ok(Self {
            size,
            center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            side,
        })
    }

    /// `(u, v, depth)` in pixel units; pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
    pub fn project(&self, p: [f64; 3]) -> [f64; 3] {
        let s = self.size as f64 / self.side;
        [
            (p[0] - self.center[0]) * s + self.size as f64 / 2.0,
            (self.center[1] - p[1]) * s + self.size as f64 / 2.0,
            -p[2],
        ]
    }

    /// Pixel containing a projected point, clamped to the buffer.
    pub fn pixel_of(&self, uv: [f64; 3]) -> (usize, usize) {
        let clamp = |c: f64| (c.floor().max(0.0) as usize).min(self.size - 1);
        (clamp(uv[0]), clamp(uv[1]))
    }
}

/// Nearest depth per pixel; `f64::INFINITY` where nothing was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub size: usize,
    pub depth: Vec<f64>,
}

impl DepthBuffer {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.size + x]
    }
}

struct ScreenTri {
    p: [[f64; 3]; 3],
    v_min: f64,
    v_max: f64,
}

const BAND_ROWS: usize = 8;

/// Rasterizes with pixel-centre sampling and a top-left fill rule, so a
/// pixel centre on an edge shared by two triangles belongs to exactly one.
/// Row bands run in parallel; each pixel keeps the minimum depth, which
/// makes the buffer independent of triangle order and thread count.
pub fn rasterize(frame: &OrthoFrame, vertices: &[[f64; 3]], triangles: &[[u32; 3]]) -> DepthBuffer {
    let size = frame.size;
    let projected: Vec<[f64; 3]> = vertices.iter().map(|&v| frame.project(v)).collect();
    let tris: Vec<ScreenTri> = triangles
        .iter()
        .filter_map(|t| {
            let mut p = t.map(|i| projected[i as usize]);
            let area = edge(p[0], p[1], p[2]);
            if area == 0.0 {
                return None;
            }
            if area < 0.0 {
                p.swap(1, 2);
            }
            Some(ScreenTri {
                v_min: p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min),
                v_max: p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max),
                p,
            })
        })
        .collect();

    // bin triangles by the bands they may touch, keeping input order per bin
    let n_bands = size.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); n_bands];
    let band_of = |v: f64| ((v.max(0.0) / BAND_ROWS as f64) as usize).min(n_bands - 1);
    for (i, tri) in tris.iter().enumerate() {
        for bin in &mut bins[band_of(tri.v_min - 1.0)..=band_of(tri.v_max + 1.0)] {
            bin.push(i as u32);
        }
    }

    let mut depth = vec![f64::INFINITY; size * size];
    exec::for_each_chunk_mut(&mut depth, BAND_ROWS * size, |band, rows| {
        let y0 = band * BAND_ROWS;
        let y1 = y0 + rows.len() / size;
        for &i in &bins[band] {
            let tri = &tris[i as usize];
            if tri.v_max < y0 as f64 + 0.5 - 1.0 || tri.v_min > y1 as f64 + 0.5 {
                continue;
            }
            draw(tri, size, y0, y1, rows);
        }
    });
    DepthBuffer { size, depth }
}

/// Signed edge function. Evaluated from the lexicographically smaller
/// endpoint so that `edge(a, b, p) == -edge(b, a, p)` exactly; otherwise
/// rounding can leave a centre on a shared edge claimed by neither side.
fn edge(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> f64 {
    let raw = |a: [f64; 3], b: [f64; 3]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if (a[0], a[1]) <= (b[0], b[1]) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

fn owns_edge(a: [f64; 3], b: [f64; 3]) -> bool {
    let (du, dv) = (b[0] - a[0], b[1] - a[1]);
    dv < 0.0 || (dv == 0.0 && du > 0.0)
}

fn draw(tri: &ScreenTri, size: usize, y0: usize, y1: usize, rows: &mut [f64]) {
    let [a, b, c] = tri.p;
    let area = edge(a, b, c);
    let u_min = a[0].min(b[0]).min(c[0]);
    let u_max = a[0].max(b[0]).max(c[0]);
    // first and one-past-last pixel whose centre lies in [lo, hi]
    let span = |lo: f64, hi: f64, min: usize, max: usize| {
        let s = (lo - 0.5).ceil().clamp(min as f64, max as f64) as usize;
        let e = ((hi - 0.5).floor() + 1.0).clamp(min as f64, max as f64) as usize;
        (s, e)
    };
    let (xs, xe) = span(u_min, u_max, 0, size);
    let (ys, ye) = span(tri.v_min, tri.v_max, y0, y1);
    let own = [owns_edge(b, c), owns_edge(c, a), owns_edge(a, b)];
    for y in ys..ye {
        for x in xs..xe {
            let p = [x as f64 + 0.5, y as f64 + 0.5, 0.0];
            let w = [edge(b, c, p), edge(c, a, p), edge(a, b, p)];
            if (0..3).any(|k| w[k] < 0.0 || (w[k] == 0.0 && !own[k])) {
                continue;
            }
            let d = (w[0] * a[2] + w[1] * b[2] + w[2] * c[2]) / area;
            let slot = &mut rows[(y - y0) * size + x];
            if d < *slot {
                *slot = d;
            }
        }
    }
}
