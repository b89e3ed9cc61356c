//! Procedural test images and meshes with analytically known structure.

use crate::model::{RasterImage, TriMesh};

pub const WHITE: [u8; 3] = [255, 255, 255];

fn inside_disk(x: u32, y: u32, cx: f64, cy: f64, r: f64) -> bool {
    let dx = x as f64 + 0.5 - cx;
    let dy = y as f64 + 0.5 - cy;
    dx * dx + dy * dy <= r * r
}

/// Filled disk centred in a `size²` canvas.
pub fn disk(size: u32, radius: f64, color: [u8; 3], background: [u8; 3]) -> RasterImage {
    let c = size as f64 / 2.0;
    RasterImage::from_fn_rgb(size, size, |x, y| {
        if inside_disk(x, y, c, c, radius) { color } else { background }
    })
}

/// Disk sprite on a transparent canvas.
pub fn disk_sprite(size: u32, radius: f64, color: [u8; 3]) -> RasterImage {
    let c = size as f64 / 2.0;
    RasterImage::from_fn_rgba(size, size, |x, y| {
        if inside_disk(x, y, c, c, radius) {
            [color[0], color[1], color[2], 255]
        } else {
            [0, 0, 0, 0]
        }
    })
}

pub const SPHERE_ALBEDO: [f64; 3] = [220.0, 140.0, 70.0];

/// Lambertian sphere lit from the upper left, on white. Its silhouette is
/// exactly [`flat_disk`] with the same arguments.
pub fn shaded_sphere(size: u32, radius: f64) -> RasterImage {
    let c = size as f64 / 2.0;
    let light = {
        let l = [-0.45f64, -0.55, 0.70];
        let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        [l[0] / n, l[1] / n, l[2] / n]
    };
    RasterImage::from_fn_rgb(size, size, |x, y| {
        if !inside_disk(x, y, c, c, radius) {
            return WHITE;
        }
        let nx = (x as f64 + 0.5 - c) / radius;
        let ny = (y as f64 + 0.5 - c) / radius;
        let nz = (1.0 - nx * nx - ny * ny).max(0.0).sqrt();
        let lambert = (nx * light[0] + ny * light[1] + nz * light[2]).max(0.0);
        let shade = 0.15 + 0.85 * lambert;
        SPHERE_ALBEDO.map(|a| (a * shade).round().clamp(0.0, 254.0) as u8)
    })
}

/// Flat-filled counterpart of [`shaded_sphere`].
pub fn flat_disk(size: u32, radius: f64) -> RasterImage {
    disk(size, radius, SPHERE_ALBEDO.map(|a| a as u8), WHITE)
}

/// Three flat colours: a red disk with a black outline holding a yellow
/// rectangle, on white.
pub fn cartoon(size: u32) -> RasterImage {
    let c = size as f64 / 2.0;
    let r = size as f64 * 0.4;
    RasterImage::from_fn_rgb(size, size, |x, y| {
        if !inside_disk(x, y, c, c, r) {
            return WHITE;
        }
        if !inside_disk(x, y, c, c, r - 2.0) {
            return [0, 0, 0];
        }
        let (fx, fy) = (x as f64 / size as f64, y as f64 / size as f64);
        if (0.4..0.6).contains(&fx) && (0.3..0.7).contains(&fy) {
            [250, 220, 30]
        } else {
            [210, 30, 30]
        }
    })
}

/// Left half `left`, right half `right`.
pub fn half_plane(width: u32, height: u32, left: [u8; 3], right: [u8; 3]) -> RasterImage {
    RasterImage::from_fn_rgb(width, height, |x, _| if x < width / 2 { left } else { right })
}

/// Closed axis-aligned box `[0,sx]×[0,sy]×[0,sz]`, outward-facing triangles.
pub fn cuboid(sx: f64, sy: f64, sz: f64) -> TriMesh {
    let vertices = (0..8)
        .map(|i| [sx * (i & 1) as f64, sy * (i >> 1 & 1) as f64, sz * (i >> 2 & 1) as f64])
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriMesh { vertices, triangles, vertex_colors: None }
}
