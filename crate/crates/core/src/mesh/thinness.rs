use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TriMesh;

/// Default ratio below which a shape counts as abnormally thin.
pub const DEFAULT_THIN_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinnessReport {
    /// Approximate axis extents along the principal directions, descending.
    pub principal_extents: [f64; 3],
    /// Smallest over middle extent, 0 when the middle extent vanishes.
    pub thinness_ratio: f64,
    pub flagged_thin: bool,
}

pub fn thinness_report(mesh: &TriMesh) -> Result<ThinnessReport> {
    thinness_report_with(mesh, DEFAULT_THIN_THRESHOLD)
}

/// PCA over vertex positions with uniform weights. The standard deviation
/// along each principal axis is scaled by 2√3, the extent of a uniform
/// distribution with that spread.
pub fn thinness_report_with(mesh: &TriMesh, threshold: f64) -> Result<ThinnessReport> {
    let n = mesh.vertices.len();
    if n < 3 {
        return Err(Error::DegenerateMesh(format!(
            "thinness needs at least 3 vertices, got {n}"
        )));
    }
    let mut mean = [0f64; 3];
    for v in &mesh.vertices {
        for k in 0..3 {
            mean[k] += v[k];
        }
    }
    let mean = mean.map(|m| m / n as f64);
    let mut cov = Matrix3::<f64>::zeros();
    for v in &mesh.vertices {
        let d = [v[0] - mean[0], v[1] - mean[1], v[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let k = 2.0 * 3f64.sqrt();
    let e = [vals[0], vals[1], vals[2]].map(|l| k * l.sqrt());
    // relative cut-off absorbs eigen-solver round-off on degenerate clouds
    let ratio = if e[1] > 1e-9 * e[0] { (e[2] / e[1]).clamp(0.0, 1.0) } else { 0.0 };
    Ok(ThinnessReport {
        principal_extents: e,
        thinness_ratio: ratio,
        flagged_thin: ratio < threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_corners(sx: f64, sy: f64, sz: f64) -> TriMesh {
        let vertices = (0..8)
            .map(|i| [sx * (i & 1) as f64, sy * (i >> 1 & 1) as f64, sz * (i >> 2 & 1) as f64])
            .collect();
        TriMesh { vertices, triangles: vec![], vertex_colors: None }
    }

    #[test]
    fn unit_cube_closed_form() {
        // covariance of the 8 corners is diag(1/4): extents 2√3·½ = √3
        let r = thinness_report(&box_corners(1.0, 1.0, 1.0)).unwrap();
        for e in r.principal_extents {
            assert!((e - 3f64.sqrt()).abs() < 1e-12);
        }
        assert!((r.thinness_ratio - 1.0).abs() < 1e-6);
        assert!(!r.flagged_thin);
    }

    #[test]
    fn slab_is_flagged() {
        let r = thinness_report(&box_corners(1.0, 1.0, 0.01)).unwrap();
        assert!((r.thinness_ratio - 0.01).abs() < 1e-9);
        assert!(r.flagged_thin);
    }

    #[test]
    fn coplanar_points_have_zero_minor_extent() {
        let m = TriMesh { vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [1.0, 2.0, 0.0]], triangles: vec![], vertex_colors: None };
        let r = thinness_report(&m).unwrap();
        assert!(r.principal_extents[2].abs() < 1e-7);
        assert!(r.flagged_thin);
    }

    #[test]
    fn collinear_points_have_zero_ratio() {
        let m = TriMesh { vertices: vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], triangles: vec![], vertex_colors: None };
        assert_eq!(thinness_report(&m).unwrap().thinness_ratio, 0.0);
    }

    #[test]
    fn too_few_vertices() {
        let m = TriMesh { vertices: vec![[0.0; 3], [1.0; 3]], triangles: vec![], vertex_colors: None };
        assert!(matches!(thinness_report(&m), Err(Error::DegenerateMesh(_))));
    }
}
