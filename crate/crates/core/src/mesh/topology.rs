use std::collections::BTreeMap;

use super::TriMesh;
use crate::error::{Error, Result};

/// An undirected edge with the vertices opposite to it in its incident faces.
///
/// For an interior edge `opposite[0]` lies in the face that traverses the edge
/// as `v0 -> v1`, and `opposite[1]` in the face that traverses it `v1 -> v0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeStencil {
    pub v0: usize,
    pub v1: usize,
    pub opposite: Vec<usize>,
}

impl EdgeStencil {
    pub fn is_interior(&self) -> bool {
        self.opposite.len() == 2
    }
}

/// Whether a vertex's own position belongs to its one-ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RingMode {
    #[default]
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneRing {
    pub center: usize,
    /// Sorted ascending. Contains `center` for closed rings.
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub edges: Vec<EdgeStencil>,
    pub rings: Vec<OneRing>,
}

impl Topology {
    pub fn interior_edges(&self) -> impl Iterator<Item = &EdgeStencil> {
        self.edges.iter().filter(|e| e.is_interior())
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.opposite.len() == 1).count()
    }
}

/// Builds edge stencils (sorted by `(v0, v1)`, `v0 < v1`) and one-rings.
pub fn build_topology(mesh: &TriMesh, mode: RingMode) -> Result<Topology> {
    // (lo, hi) -> [opposite of face walking lo->hi, opposite of face walking hi->lo]
    let mut incident: BTreeMap<(usize, usize), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &[a, b, c] in &mesh.faces {
        for (i, j, k) in [(a, b, c), (b, c, a), (c, a, b)] {
            let entry = incident.entry((i.min(j), i.max(j))).or_default();
            if i < j {
                entry.0.push(k);
            } else {
                entry.1.push(k);
            }
        }
    }

    let mut edges = Vec::with_capacity(incident.len());
    let mut adjacency = vec![Vec::new(); mesh.vertex_count()];
    for ((lo, hi), (fwd, bwd)) in incident {
        if fwd.len() + bwd.len() > 2 {
            return Err(Error::NonManifoldEdge(lo, hi));
        }
        let opposite = match (fwd.as_slice(), bwd.as_slice()) {
            ([f], [b]) => vec![*f, *b],
            // inconsistent winding across the edge; keep both faces anyway
            ([f, g], []) | ([], [f, g]) => vec![*f, *g],
            _ => fwd.iter().chain(&bwd).copied().collect(),
        };
        adjacency[lo].push(hi);
        adjacency[hi].push(lo);
        edges.push(EdgeStencil {
            v0: lo,
            v1: hi,
            opposite,
        });
    }

    let rings = adjacency
        .into_iter()
        .enumerate()
        .map(|(center, mut neighbors)| {
            if mode == RingMode::Closed {
                neighbors.push(center);
            }
            neighbors.sort_unstable();
            OneRing { center, neighbors }
        })
        .collect();

    Ok(Topology { edges, rings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn single_triangle_has_only_boundary_edges() {
        let m = fixtures::single_triangle();
        let t = build_topology(&m, RingMode::Closed).unwrap();
        assert_eq!(t.edges.len(), 3);
        assert_eq!(t.interior_edges().count(), 0);
        assert!(t.edges.iter().all(|e| e.opposite.len() == 1));
    }

    #[test]
    fn unit_square_interior_edge() {
        let m = fixtures::unit_square();
        let t = build_topology(&m, RingMode::Closed).unwrap();
        assert_eq!(t.edges.len(), 5);
        let interior: Vec<_> = t.interior_edges().collect();
        assert_eq!(interior.len(), 1);
        let e = interior[0];
        assert_eq!((e.v0, e.v1), (0, 2));
        // face [0,2,3] walks 0->2, face [0,1,2] walks 2->0
        assert_eq!(e.opposite, vec![3, 1]);
    }

    #[test]
    fn icosahedron_rings_and_euler() {
        let m = fixtures::icosahedron(1.0);
        let t = build_topology(&m, RingMode::Closed).unwrap();
        assert_eq!(t.edges.len(), 30);
        assert!(t.edges.iter().all(|e| e.is_interior()));
        let euler = m.vertex_count() as i64 - t.edges.len() as i64 + m.face_count() as i64;
        assert_eq!(euler, 2);
        for r in &t.rings {
            assert_eq!(r.neighbors.len(), 6);
            assert!(r.neighbors.contains(&r.center));
        }
        let open = build_topology(&m, RingMode::Open).unwrap();
        assert!(open.rings.iter().all(|r| r.neighbors.len() == 5));
    }

    #[test]
    fn non_manifold_edge_is_rejected() {
        let m = TriMesh::new(
            vec![
                crate::mesh::Vec3::zeros(),
                crate::mesh::Vec3::x(),
                crate::mesh::Vec3::y(),
                crate::mesh::Vec3::z(),
                -crate::mesh::Vec3::y(),
            ],
            vec![[0, 1, 2], [0, 1, 3], [1, 0, 4]],
        )
        .unwrap();
        assert!(matches!(
            build_topology(&m, RingMode::Closed),
            Err(Error::NonManifoldEdge(0, 1))
        ));
    }

    #[test]
    fn rings_are_symmetric_on_grid() {
        let m = fixtures::grid(6, 1.0);
        let t = build_topology(&m, RingMode::Open).unwrap();
        for r in &t.rings {
            for &j in &r.neighbors {
                assert!(t.rings[j].neighbors.contains(&r.center));
            }
        }
    }
}
