//! Saint-Venant–Kirchhoff membrane strain on triangles.

use nalgebra::{Matrix2, Matrix3x2};

use super::rest::GarmentRestState;
use super::TermEval;
use crate::mesh::Vec3;

/// Plane-stress Lamé parameters from Young's modulus and Poisson's ratio.
pub fn lame_from_young_poisson(young: f64, poisson: f64) -> (f64, f64) {
    let mu = young / (2.0 * (1.0 + poisson));
    let lambda = young * poisson / (1.0 - poisson * poisson);
    (mu, lambda)
}

/// Deformation gradient of face `f`: deformed edges times the inverse rest edge matrix.
pub fn deformation_gradient(x: &[Vec3], rest: &GarmentRestState, f: usize) -> Matrix3x2<f64> {
    let [a, b, c] = rest.template.faces[f];
    Matrix3x2::from_columns(&[x[b] - x[a], x[c] - x[a]]) * rest.dm_inv[f]
}

/// `sum_f area_f (mu |E|_F^2 + lambda/2 tr(E)^2)` with `E = (F^T F - I) / 2`.
pub fn strain_energy(x: &[Vec3], rest: &GarmentRestState, mu: f64, lambda: f64) -> TermEval {
    let mut value = 0.0;
    let mut gradient = vec![Vec3::zeros(); x.len()];
    for (f, &[a, b, c]) in rest.template.faces.iter().enumerate() {
        let area = rest.face_area[f];
        let def = deformation_gradient(x, rest, f);
        let green = (def.transpose() * def - Matrix2::identity()) * 0.5;
        let trace = green.trace();
        value += area * (mu * green.norm_squared() + 0.5 * lambda * trace * trace);

        let stress = green * (2.0 * mu) + Matrix2::identity() * (lambda * trace);
        let h = def * stress * rest.dm_inv[f].transpose() * area;
        let (g1, g2) = (h.column(0).into_owned(), h.column(1).into_owned());
        gradient[b] += g1;
        gradient[c] += g2;
        gradient[a] -= g1 + g2;
    }
    TermEval { value, gradient }
}
