use crate::error::{Error, Result};
use crate::model::TriMesh;

/// Centres the bounding box on the origin and scales its longest side to 1.
pub fn normalize_mesh(mesh: &TriMesh) -> Result<TriMesh> {
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| Error::DegenerateMesh("mesh has no vertices".into()))?;
    let longest = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    if !(longest > 0.0) || !longest.is_finite() {
        return Err(Error::DegenerateMesh("bounding box has zero extent".into()));
    }
    let centre = [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]));
    let scale = 1.0 / longest;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| [0, 1, 2].map(|k| (v[k] - centre[k]) * scale))
        .collect();
    Ok(TriMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        vertex_colors: mesh.vertex_colors.clone(),
    })
}
