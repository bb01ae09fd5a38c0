//! Gravity, inertia and body-collision terms. All are per-vertex sums.

use rayon::prelude::*;

use super::TermEval;
use crate::body::BodySdf;
use crate::mesh::Vec3;

/// `sum -m g^T x`.
pub fn gravity_energy(x: &[Vec3], mass: &[f64], gravity: &Vec3) -> TermEval {
    let mut value = 0.0;
    let gradient = x
        .iter()
        .zip(mass)
        .map(|(p, &m)| {
            value -= m * gravity.dot(p);
            -gravity * m
        })
        .collect();
    TermEval { value, gradient }
}

/// `sum m / (2 dt^2) |x - x_hat|^2` with `x_hat = x_prev + dt v_prev`.
pub fn inertia_energy(x: &[Vec3], predicted: &[Vec3], mass: &[f64], dt: f64) -> TermEval {
    let scale = 1.0 / (dt * dt);
    let mut value = 0.0;
    let gradient = x
        .iter()
        .zip(predicted)
        .zip(mass)
        .map(|((p, q), &m)| {
            let d = p - q;
            value += 0.5 * m * scale * d.norm_squared();
            d * (m * scale)
        })
        .collect();
    TermEval { value, gradient }
}

/// Inertial prediction `x_prev + dt v_prev`.
pub fn inertial_prediction(x_prev: &[Vec3], v_prev: &[Vec3], dt: f64) -> Vec<Vec3> {
    x_prev.iter().zip(v_prev).map(|(x, v)| x + v * dt).collect()
}

/// Collision term plus the per-vertex penetration depth `max(margin - d, 0)`.
#[derive(Debug, Clone)]
pub struct CollisionEval {
    pub term: TermEval,
    pub penetration: Vec<f64>,
}

/// `sum k_c max(margin - d(x), 0)^3`.
pub fn collision_energy(x: &[Vec3], body: &BodySdf, stiffness: f64, margin: f64) -> CollisionEval {
    let per_vertex: Vec<(f64, f64, Vec3)> = x
        .par_iter()
        .map(|p| {
            let q = body.query(p);
            let depth = (margin - q.distance).max(0.0);
            let value = stiffness * depth * depth * depth;
            (depth, value, q.normal * (-3.0 * stiffness * depth * depth))
        })
        .collect();
    let mut value = 0.0;
    let mut penetration = Vec::with_capacity(x.len());
    let mut gradient = Vec::with_capacity(x.len());
    for (d, v, g) in per_vertex {
        value += v;
        penetration.push(d);
        gradient.push(g);
    }
    CollisionEval {
        term: TermEval { value, gradient },
        penetration,
    }
}

/// Penetration depths only, for schedules and metrics.
pub fn penetration_depths(x: &[Vec3], body: &BodySdf, margin: f64) -> Vec<f64> {
    x.par_iter().map(|p| (margin - body.query(p).distance).max(0.0)).collect()
}
