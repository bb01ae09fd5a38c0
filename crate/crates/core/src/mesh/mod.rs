//! Indexed triangle meshes, OBJ I/O and edge/one-ring topology.

mod obj;
mod topology;

pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use topology::{build_topology, EdgeStencil, OneRing, RingMode, Topology};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Indexed triangle mesh. Faces are counter-clockwise vertex triples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Checks index ranges and rejects faces that repeat a vertex.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {f} references a vertex outside [0, {n})"
                )));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::InvalidMesh(format!("face {f} is degenerate")));
            }
        }
        Ok(())
    }

    /// Additionally requires every face to have positive area.
    pub fn validate_template(&self) -> Result<()> {
        self.validate()?;
        for f in 0..self.faces.len() {
            if self.face_area(f) <= 0.0 {
                return Err(Error::InvalidMesh(format!("face {f} has zero area")));
            }
        }
        Ok(())
    }

    pub fn face_area(&self, f: usize) -> f64 {
        face_area(&self.vertices, self.faces[f])
    }

    /// Unit normal of face `f` (zero for a zero-area face).
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::zeros();
        }
        self.vertices.iter().fold(Vec3::zeros(), |acc, v| acc + v) / self.vertices.len() as f64
    }

    /// Same topology, new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Self {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Self {
            vertices,
            faces: self.faces.clone(),
        }
    }

    /// Undirected edges as sorted pairs in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

pub fn face_area(positions: &[Vec3], [a, b, c]: [usize; 3]) -> f64 {
    0.5 * (positions[b] - positions[a])
        .cross(&(positions[c] - positions[a]))
        .norm()
}
