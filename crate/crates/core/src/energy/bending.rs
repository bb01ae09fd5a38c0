//! Dihedral-angle bending balancing template coherence against flatness.

use super::rest::GarmentRestState;
use super::TermEval;
use crate::mesh::Vec3;

/// Signed angle between the normals of faces `(x0, x1, a)` and `(x1, x0, b)`.
/// Zero when flat; the sign follows the edge direction `x0 -> x1`.
pub fn dihedral_angle(x0: &Vec3, x1: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let e = x1 - x0;
    let n1 = e.cross(&(a - x0));
    let n2 = (x0 - x1).cross(&(b - x1));
    let sin = n1.cross(&n2).dot(&e) / e.norm();
    let cos = n1.dot(&n2);
    sin.atan2(cos)
}

/// Dihedral angle and its gradient with respect to `[x0, x1, a, b]`.
pub fn dihedral_with_gradient(x0: &Vec3, x1: &Vec3, a: &Vec3, b: &Vec3) -> (f64, [Vec3; 4]) {
    let e = x1 - x0;
    let len2 = e.norm_squared();
    let len = len2.sqrt();
    let n1 = e.cross(&(a - x0));
    let n2 = (x0 - x1).cross(&(b - x1));
    let theta = (n1.cross(&n2).dot(&e) / len).atan2(n1.dot(&n2));

    let ga = n1 * (-len / n1.norm_squared());
    let gb = n2 * (-len / n2.norm_squared());
    // position of each wing's foot along the edge
    let ta = (a - x0).dot(&e) / len2;
    let tb = (b - x0).dot(&e) / len2;
    let g0 = -ga * (1.0 - ta) - gb * (1.0 - tb);
    let g1 = -ga * ta - gb * tb;
    (theta, [g0, g1, ga, gb])
}

/// `sum_e k_b l^2/(8a) (alpha (theta - theta_r)^2 + (1 - alpha) theta^2)`
/// over interior edges, with `l`, `a` from the rest state.
pub fn bending_energy(x: &[Vec3], rest: &GarmentRestState, stiffness: f64) -> TermEval {
    let mut value = 0.0;
    let mut gradient = vec![Vec3::zeros(); x.len()];
    for e in &rest.bending {
        let [wa, wb] = e.wings;
        let (theta, grad) = dihedral_with_gradient(&x[e.v0], &x[e.v1], &x[wa], &x[wb]);
        let coeff = stiffness * e.rest_length * e.rest_length / (8.0 * e.rest_area);
        let dev = theta - e.rest_angle;
        value += coeff * (e.alpha * dev * dev + (1.0 - e.alpha) * theta * theta);
        let d_theta = 2.0 * coeff * (e.alpha * dev + (1.0 - e.alpha) * theta);
        for (v, g) in [e.v0, e.v1, wa, wb].into_iter().zip(grad) {
            gradient[v] += g * d_theta;
        }
    }
    TermEval { value, gradient }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_relative_eq;

    use super::*;
    use crate::energy::rest::precompute_rest;
    use crate::fixtures;
    use crate::mesh::RingMode;

    #[test]
    fn flat_stencil_has_zero_angle() {
        let x = fixtures::unit_square().vertices;
        assert_eq!(dihedral_angle(&x[0], &x[2], &x[3], &x[1]), 0.0);
    }

    #[test]
    fn folded_unit_stencil() {
        let sq = fixtures::unit_square();
        let rest = precompute_rest(&sq, None, 1.0, RingMode::Closed).unwrap();
        let e = &rest.bending[0];
        // rotate wing 1 (opposite in the second face) by 90 degrees about the diagonal
        let axis = (sq.vertices[2] - sq.vertices[0]).normalize();
        let wing = sq.vertices[1];
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), FRAC_PI_2);
        let mut x = sq.vertices.clone();
        x[1] = rot * wing;
        let theta = dihedral_angle(&x[0], &x[2], &x[3], &x[1]);
        assert_relative_eq!(theta.abs(), FRAC_PI_2, epsilon = 1e-12);
        let coeff = e.rest_length * e.rest_length / (8.0 * e.rest_area);
        for alpha in [0.0, 0.3, 1.0] {
            let mut r = rest.clone();
            r.bending[0].alpha = alpha;
            let b = bending_energy(&x, &r, 2.0);
            assert_relative_eq!(b.value, 2.0 * coeff * FRAC_PI_2 * FRAC_PI_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn coherent_rest_fold_costs_nothing_at_alpha_one() {
        let sq = fixtures::unit_square();
        let mut folded = sq.clone();
        folded.vertices[1].z = 0.4;
        let rest = precompute_rest(&folded, None, 1.0, RingMode::Closed).unwrap();
        assert!(rest.bending[0].rest_angle != 0.0);
        assert_eq!(rest.bending[0].alpha, 1.0);
        assert_eq!(bending_energy(&folded.vertices, &rest, 1.0).value, 0.0);
    }
}
