use crate::error::{Error, Result};

/// Indexed triangle mesh with optional per-vertex colors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_colors: Option<Vec<[u8; 3]>>,
}

impl TriMesh {
    /// Builds a mesh and checks its invariants.
    pub fn new(
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[u32; 3]>,
        vertex_colors: Option<Vec<[u8; 3]>>,
    ) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            vertex_colors,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::MalformedMesh(format!(
                    "vertex {i} has non-finite coordinate {v:?}"
                )));
            }
        }
        let n = self.vertices.len();
        for (i, t) in self.triangles.iter().enumerate() {
            if let Some(bad) = t.iter().find(|&&ix| ix as usize >= n) {
                return Err(Error::MalformedMesh(format!(
                    "triangle {i} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::MalformedMesh(format!(
                    "triangle {i} repeats a vertex: {t:?}"
                )));
            }
        }
        if let Some(colors) = &self.vertex_colors {
            if colors.len() != n {
                return Err(Error::MalformedMesh(format!(
                    "{} vertex colors for {n} vertices",
                    colors.len()
                )));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Axis-aligned bounds as `(min, max)`; `None` for an empty mesh.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }

    pub fn without_colors(mut self) -> Self {
        self.vertex_colors = None;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
        (
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
    }

    #[test]
    fn accepts_valid_triangle() {
        let (v, t) = tri();
        assert!(TriMesh::new(v, t, Some(vec![[1, 2, 3]; 3])).is_ok());
    }

    #[test]
    fn rejects_out_of_range_index() {
        let (v, _) = tri();
        let err = TriMesh::new(v, vec![[0, 1, 3]], None).unwrap_err();
        assert!(matches!(err, Error::MalformedMesh(_)));
    }

    #[test]
    fn rejects_repeated_index_and_bad_coordinates() {
        let (mut v, t) = tri();
        assert!(TriMesh::new(v.clone(), vec![[0, 0, 1]], None).is_err());
        v[1][2] = f64::NAN;
        assert!(TriMesh::new(v.clone(), t.clone(), None).is_err());
        v[1][2] = f64::INFINITY;
        assert!(TriMesh::new(v, t, None).is_err());
    }

    #[test]
    fn rejects_color_count_mismatch() {
        let (v, t) = tri();
        assert!(TriMesh::new(v, t, Some(vec![[0, 0, 0]; 2])).is_err());
    }
}
