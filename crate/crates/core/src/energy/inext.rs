//! Covariance-based inextensibility and the naive edge-length baseline.
//!
//! Each vertex's one-ring covariance is compared with the spectrum of the
//! same one-ring on the template: a local isometry maps `C` to `R C R^T`, so
//! every template eigenvalue must remain a root of `det(C - s I)`. The energy
//! sums `|det(C - k_ext sigma_j I)|` over the three template eigenvalues; with
//! `k_ext > 1` the targets grow and the ring may stretch.

use nalgebra::Matrix3;
use rayon::prelude::*;

use super::rest::{ring_covariance, GarmentRestState};
use super::TermEval;
use crate::mesh::Vec3;

/// Determinants below this fraction of `(k_ext sigma_1)^3` are treated as
/// zero for the subgradient; at the template they are pure roundoff.
pub const DET_ZERO_RELATIVE: f64 = 1e-12;

/// Transposed adjugate (cofactor matrix) of `a`, the gradient of `det(a)`.
pub fn cofactor(a: &Matrix3<f64>) -> Matrix3<f64> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| a[(r0, c0)] * a[(r1, c1)] - a[(r0, c1)] * a[(r1, c0)];
    Matrix3::new(
        c(1, 2, 1, 2),
        -c(1, 2, 0, 2),
        c(1, 2, 0, 1),
        -c(0, 2, 1, 2),
        c(0, 2, 0, 2),
        -c(0, 2, 0, 1),
        c(0, 1, 1, 2),
        -c(0, 1, 0, 2),
        c(0, 1, 0, 1),
    )
}

/// Inextensibility energy `k_i sum_v sum_j |det(C_v - k_ext_v sigma_vj I)|`
/// and its gradient. `k_ext` holds one factor per vertex. The subgradient is
/// taken as zero where a determinant vanishes (see [`DET_ZERO_RELATIVE`]).
pub fn inext_energy(x: &[Vec3], rest: &GarmentRestState, k_ext: &[f64], stiffness: f64) -> TermEval {
    assert_eq!(x.len(), rest.vertex_count());
    assert_eq!(k_ext.len(), rest.vertex_count());
    let per_vertex: Vec<(f64, Matrix3<f64>, Vec3)> = rest
        .topology
        .rings
        .par_iter()
        .map(|ring| {
            let v = ring.center;
            let c = ring_covariance(x, &ring.neighbors);
            let mut value = 0.0;
            let mut dc = Matrix3::zeros();
            let zero = DET_ZERO_RELATIVE * (k_ext[v] * rest.sigma[v][0]).powi(3);
            for &s in &rest.sigma[v] {
                let a = c - Matrix3::identity() * (k_ext[v] * s);
                let det = a.determinant();
                value += det.abs();
                if det.abs() > zero {
                    dc += cofactor(&a) * det.signum();
                }
            }
            let n = ring.neighbors.len() as f64;
            let mean = ring.neighbors.iter().fold(Vec3::zeros(), |acc, &j| acc + x[j]) / n;
            (value, dc * (2.0 / n), mean)
        })
        .collect();

    let mut value = 0.0;
    let mut gradient = vec![Vec3::zeros(); x.len()];
    for (ring, (v, g, mean)) in rest.topology.rings.iter().zip(&per_vertex) {
        value += v;
        for &j in &ring.neighbors {
            gradient[j] += g * (x[j] - mean) * stiffness;
        }
    }
    TermEval {
        value: value * stiffness,
        gradient,
    }
}

/// Squared edge-length deviation summed over every vertex's neighbors, so
/// each edge is counted once from each endpoint. Diagnostic only.
pub fn naive_edge_energy(x: &[Vec3], rest: &GarmentRestState) -> TermEval {
    let mut value = 0.0;
    let mut gradient = vec![Vec3::zeros(); x.len()];
    for (e, &rest_len) in rest.topology.edges.iter().zip(&rest.edge_length) {
        let d = x[e.v0] - x[e.v1];
        let len = d.norm();
        let diff = rest_len - len;
        value += 2.0 * diff * diff;
        if len > 0.0 {
            let g = d * (-4.0 * diff / len);
            gradient[e.v0] += g;
            gradient[e.v1] -= g;
        }
    }
    TermEval { value, gradient }
}
