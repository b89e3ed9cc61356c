//! Silhouette inflation: a balloon-like closed mesh from a binary mask.
//!
//! The mask is sampled on a square grid of cells. Each foreground cell is
//! fanned from a centre vertex. Front and back sheets share the rim
//! vertices, so with `mirror_back` every edge borders exactly two
//! triangles. Heights follow `height_scale · sqrt(D / D_max)` where `D` is
//! the distance to the background, in units of `D_max`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::condition::ForegroundMask;
use crate::error::{Error, Result};
use crate::filters;
use crate::model::TriMesh;

use super::normalize::normalize_mesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InflateParams {
    pub grid_step: u32,
    pub height_scale: f64,
    pub mirror_back: bool,
}

impl Default for InflateParams {
    fn default() -> Self {
        Self {
            grid_step: 2,
            height_scale: 0.9,
            mirror_back: true,
        }
    }
}

impl InflateParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_step < 1 {
            return Err(Error::Config("inflate grid_step must be ≥ 1".into()));
        }
        if !(self.height_scale > 0.0) {
            return Err(Error::Config("inflate height_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Inflated mesh before normalization, in pixel units with y pointing up.
#[derive(Debug, Clone)]
pub struct Inflation {
    pub mesh: TriMesh,
    /// Largest interior distance to the background, in pixels.
    pub max_distance: f64,
}

pub fn inflate_silhouette(mask: &ForegroundMask, params: &InflateParams) -> Result<TriMesh> {
    normalize_mesh(&inflate_raw(mask, params)?.mesh)
}

struct Field<'a> {
    dist: &'a [f64],
    w: usize,
    h: usize,
}

impl Field<'_> {
    /// Distance at a lattice point given in doubled pixel-edge coordinates:
    /// odd values hit a pixel centre, even values average the two pixels
    /// the edge separates. Outside the image reads as 0.
    fn at_doubled(&self, x2: i64, y2: i64) -> f64 {
        let span = |c2: i64| -> Vec<i64> {
            if c2 % 2 != 0 {
                vec![(c2 - 1) / 2]
            } else {
                vec![c2 / 2 - 1, c2 / 2]
            }
        };
        let xs = span(x2);
        let ys = span(y2);
        let mut acc = 0.0;
        for &y in &ys {
            for &x in &xs {
                if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
                    acc += self.dist[y as usize * self.w + x as usize];
                }
            }
        }
        acc / (xs.len() * ys.len()) as f64
    }
}

pub fn inflate_raw(mask: &ForegroundMask, params: &InflateParams) -> Result<Inflation> {
    params.validate()?;
    if mask.coverage() <= 0.0 {
        return Err(Error::EmptyForeground);
    }
    let (w, h) = (mask.dims().0 as usize, mask.dims().1 as usize);
    let fg = mask.to_bools();
    let dist = filters::foreground_distance(&fg, w, h);
    let d_max = dist.iter().cloned().fold(0.0, f64::max);
    let field = Field { dist: &dist, w, h };

    let s = params.grid_step as usize;
    let nx = w.div_ceil(s);
    let ny = h.div_ceil(s);
    let cell_in = |i: isize, j: isize| -> bool {
        if i < 0 || j < 0 || i as usize >= nx || j as usize >= ny {
            return false;
        }
        let px = (i as usize * s + s / 2).min(w - 1);
        let py = (j as usize * s + s / 2).min(h - 1);
        fg[py * w + px]
    };
    let cells: Vec<bool> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| cell_in(i as isize, j as isize))
        .collect();
    if !cells.iter().any(|&c| c) {
        return Err(Error::EmptyForeground);
    }
    let cell = |i: isize, j: isize| -> bool {
        i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && cells[j as usize * nx + i as usize]
    };
    // node (i, j) sits at pixel-edge coordinates (i s, j s)
    let around = |i: isize, j: isize| [cell(i - 1, j - 1), cell(i, j - 1), cell(i - 1, j), cell(i, j)];
    let node_used = |i: isize, j: isize| around(i, j).iter().any(|&c| c);
    let node_rim = |i: isize, j: isize| {
        let a = around(i, j);
        a.iter().any(|&c| c) && !a.iter().all(|&c| c)
    };

    let height = |x2: i64, y2: i64| -> f64 {
        if d_max <= 0.0 {
            return 0.0;
        }
        let d = field.at_doubled(x2, y2);
        params.height_scale * (d / d_max).sqrt() * d_max
    };

    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut push = |x2: i64, y2: i64, z: f64| -> u32 {
        vertices.push([x2 as f64 / 2.0, -(y2 as f64) / 2.0, z]);
        (vertices.len() - 1) as u32
    };

    // (front, back) vertex ids; equal for rim vertices
    let mut nodes: HashMap<(usize, usize), (u32, u32)> = HashMap::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let (ii, jj) = (i as isize, j as isize);
            if !node_used(ii, jj) {
                continue;
            }
            let (x2, y2) = (2 * (i * s) as i64, 2 * (j * s) as i64);
            let ids = if node_rim(ii, jj) {
                let v = push(x2, y2, 0.0);
                (v, v)
            } else {
                let z = height(x2, y2);
                let f = push(x2, y2, z);
                let b = if params.mirror_back { push(x2, y2, -z) } else { f };
                (f, b)
            };
            nodes.insert((i, j), ids);
        }
    }

    // Interior cell sides whose two ends are both on the rim get a midpoint,
    // otherwise front and back sheets would share that edge.
    let mut mids: HashMap<((usize, usize), (usize, usize)), (u32, u32)> = HashMap::new();
    let side_key = |a: (usize, usize), b: (usize, usize)| if a <= b { (a, b) } else { (b, a) };
    for j in 0..=ny {
        for i in 0..=nx {
            let (ii, jj) = (i as isize, j as isize);
            // horizontal side (i,j)-(i+1,j) borders cells (i,j-1) and (i,j)
            if i < nx && cell(ii, jj - 1) && cell(ii, jj) && node_rim(ii, jj) && node_rim(ii + 1, jj) {
                let (x2, y2) = (((2 * i + 1) * s) as i64, (2 * j * s) as i64);
                let z = height(x2, y2);
                let f = push(x2, y2, z);
                let b = if params.mirror_back { push(x2, y2, -z) } else { f };
                mids.insert(side_key((i, j), (i + 1, j)), (f, b));
            }
            // vertical side (i,j)-(i,j+1) borders cells (i-1,j) and (i,j)
            if j < ny && cell(ii - 1, jj) && cell(ii, jj) && node_rim(ii, jj) && node_rim(ii, jj + 1) {
                let (x2, y2) = ((2 * i * s) as i64, ((2 * j + 1) * s) as i64);
                let z = height(x2, y2);
                let f = push(x2, y2, z);
                let b = if params.mirror_back { push(x2, y2, -z) } else { f };
                mids.insert(side_key((i, j), (i, j + 1)), (f, b));
            }
        }
    }

    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !cells[j * nx + i] {
                continue;
            }
            let (x2, y2) = (((2 * i + 1) * s) as i64, ((2 * j + 1) * s) as i64);
            let z = height(x2, y2);
            let cf = push(x2, y2, z);
            let cb = if params.mirror_back { push(x2, y2, -z) } else { cf };

            // counter-clockwise seen from +z (mesh y points up)
            let corners = [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)];
            let mut ring: Vec<(u32, u32)> = Vec::with_capacity(8);
            for k in 0..4 {
                let a = corners[k];
                let b = corners[(k + 1) % 4];
                ring.push(nodes[&a]);
                if let Some(m) = mids.get(&side_key(a, b)) {
                    ring.push(*m);
                }
            }
            for k in 0..ring.len() {
                let (af, ab) = ring[k];
                let (bf, bb) = ring[(k + 1) % ring.len()];
                triangles.push([cf, af, bf]);
                if params.mirror_back {
                    triangles.push([cb, bb, ab]);
                }
            }
        }
    }

    Ok(Inflation {
        mesh: TriMesh::new(vertices, triangles, None)?,
        max_distance: d_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::thinness_report;
    use std::collections::HashMap;

    fn disk_mask(size: u32, r: f64) -> ForegroundMask {
        let c = size as f64 / 2.0;
        let fg: Vec<bool> = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f64 + 0.5 - c, (i / size) as f64 + 0.5 - c);
                x * x + y * y <= r * r
            })
            .collect();
        ForegroundMask::from_bools(size, size, &fg)
    }

    pub(crate) fn edge_use(mesh: &TriMesh) -> HashMap<(u32, u32), usize> {
        let mut uses = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        uses
    }

    #[test]
    fn disk_becomes_a_thick_cushion() {
        let m = inflate_silhouette(&disk_mask(64, 24.0), &InflateParams::default()).unwrap();
        let r = thinness_report(&m).unwrap();
        assert!(r.thinness_ratio >= 0.3, "{r:?}");
    }

    #[test]
    fn mirrored_back_is_watertight_and_symmetric() {
        for step in [1, 2, 3] {
            let p = InflateParams { grid_step: step, ..Default::default() };
            let m = inflate_silhouette(&disk_mask(48, 17.0), &p).unwrap();
            assert!(edge_use(&m).values().all(|&n| n == 2), "step {step}");
            let mut zs: Vec<i64> = m.vertices.iter().map(|v| (v[2] * 1e6).round() as i64).collect();
            let mut neg: Vec<i64> = zs.iter().map(|z| -z).collect();
            zs.sort();
            neg.sort();
            assert_eq!(zs, neg);
        }
    }

    #[test]
    fn thin_strips_and_diagonal_touches_stay_watertight() {
        // one-cell-wide strip plus two blocks touching at a corner
        let fg: Vec<bool> = (0..20 * 12)
            .map(|i| {
                let (x, y) = (i % 20, i / 20);
                (y == 2 && (2..18).contains(&x)) || ((4..8).contains(&x) && (5..8).contains(&y)) || ((8..12).contains(&x) && (8..11).contains(&y))
            })
            .collect();
        let mask = ForegroundMask::from_bools(20, 12, &fg);
        let m = inflate_silhouette(&mask, &InflateParams { grid_step: 1, ..Default::default() }).unwrap();
        assert!(edge_use(&m).values().all(|&n| n == 2));
    }

    #[test]
    fn square_peak_matches_distance_oracle() {
        let size = 40usize;
        let fg: Vec<bool> = (0..size * size).map(|i| { let (x, y) = (i % size, i / size); (8..32).contains(&x) && (8..32).contains(&y) }).collect();
        let mask = ForegroundMask::from_bools(size as u32, size as u32, &fg);
        let p = InflateParams::default();
        let inf = inflate_raw(&mask, &p).unwrap();
        // brute-force nearest background, outside the image counts as background
        let mut d_max = 0f64;
        for y in 0..size as i64 {
            for x in 0..size as i64 {
                if !fg[y as usize * size + x as usize] { continue; }
                let mut best = f64::INFINITY;
                for by in -1..=size as i64 {
                    for bx in -1..=size as i64 {
                        let inside = bx >= 0 && by >= 0 && bx < size as i64 && by < size as i64;
                        if inside && fg[by as usize * size + bx as usize] { continue; }
                        best = best.min((((bx - x).pow(2) + (by - y).pow(2)) as f64).sqrt());
                    }
                }
                d_max = d_max.max(best);
            }
        }
        assert_eq!(inf.max_distance, d_max);
        let (peak, at) = inf.mesh.vertices.iter().map(|v| (v[2], v)).fold((f64::MIN, &[0.0; 3]), |a, b| if b.0 > a.0 { b } else { a });
        let rel = peak / d_max;
        // one grid step of slack in distance units
        let tol = p.height_scale * (1.0 - ((d_max - p.grid_step as f64) / d_max).sqrt());
        assert!((rel - p.height_scale).abs() <= tol + 1e-12, "rel {rel}");
        assert!((at[0] - 20.0).abs() <= 2.0 && (at[1] + 20.0).abs() <= 2.0, "{at:?}");
    }

    #[test]
    fn open_front_sheet_without_mirror() {
        let p = InflateParams { mirror_back: false, ..Default::default() };
        let m = inflate_silhouette(&disk_mask(32, 10.0), &p).unwrap();
        assert!(m.vertices.iter().all(|v| v[2] >= -1e-12 - 0.5));
        assert!(edge_use(&m).values().any(|&n| n == 1));
    }

    #[test]
    fn empty_mask_errors() {
        let mask = ForegroundMask::from_bools(4, 4, &[false; 16]);
        assert!(matches!(inflate_silhouette(&mask, &InflateParams::default()), Err(Error::EmptyForeground)));
    }
}
