use crate::geometry::{Aabb, Vec3};
use serde::{Deserialize, Serialize};

/// Triangle mesh with one unit normal per face (from the winding order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index} but only {count} vertices exist")]
    IndexOutOfRange { triangle: usize, index: u32, count: usize },
    #[error("non-finite vertex {0}")]
    NonFiniteVertex(usize),
}

impl Mesh {
    /// Build a mesh, dropping zero-area triangles and computing face normals.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        let count = vertices.len();
        let mut kept = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= count {
                    return Err(MeshError::IndexOutOfRange { triangle: t, index, count });
                }
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            if let Some(n) = (b - a).cross(c - a).try_normalize() {
                // Slivers with area below ~1e-24 m² are treated as degenerate.
                if (b - a).cross(c - a).norm() > 1e-24 {
                    kept.push(*tri);
                    normals.push(n);
                }
            }
        }
        Ok(Mesh { vertices, triangles: kept, normals })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for tri in &self.triangles {
            for &v in tri {
                b.grow(self.vertices[v as usize]);
            }
        }
        b
    }

    /// Concatenate two meshes.
    pub fn merged(&self, other: &Mesh) -> Mesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
        let mut normals = self.normals.clone();
        normals.extend_from_slice(&other.normals);
        Mesh { vertices, triangles, normals }
    }

    pub fn translated(&self, by: Vec3) -> Mesh {
        Mesh { vertices: self.vertices.iter().map(|&v| v + by).collect(), ..self.clone() }
    }

    /// Number of edges not shared by exactly two triangles. Zero for a
    /// closed manifold surface.
    pub fn boundary_edge_count(&self) -> usize {
        use std::collections::HashMap;
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().filter(|&&c| c != 2).count()
    }
}
