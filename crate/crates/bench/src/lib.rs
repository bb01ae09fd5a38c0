//! Shared scenes for the criterion benchmarks.

use drapekit::body::{BodySdf, SkinnedBody};
use drapekit::energy::{precompute_rest, EnergyParams, GarmentRestState};
use drapekit::mesh::RingMode;
use drapekit::{fixtures, Vec3};

/// A cloth of `n x n` vertices resting just above the unit sphere, with a
/// deformed state that puts some vertices inside the collision margin.
pub struct DropScene {
    pub body: SkinnedBody,
    pub sdf: BodySdf,
    pub rest: GarmentRestState,
    pub params: EnergyParams,
    pub deformed: Vec<Vec3>,
    pub predicted: Vec<Vec3>,
    pub k_ext: Vec<f64>,
}

impl DropScene {
    pub fn new(n: usize) -> Self {
        let body = fixtures::sphere_body(1.0);
        let sdf = BodySdf::new(body.mesh.clone()).expect("sphere is watertight");
        let cloth = fixtures::sphere_drop_cloth(n);
        let rest = precompute_rest(&cloth, Some(&sdf), 0.2, RingMode::Closed).expect("grid rest state");
        // wrap the cloth over the sphere top
        let deformed: Vec<Vec3> = cloth
            .vertices
            .iter()
            .map(|p| {
                let r2 = p.x * p.x + p.y * p.y;
                Vec3::new(p.x, p.y, p.z - 0.06 - 0.3 * r2)
            })
            .collect();
        let predicted = cloth.vertices.clone();
        let k_ext = vec![1.0; cloth.vertex_count()];
        Self {
            body,
            sdf,
            rest,
            params: fixtures::sphere_drop_params(),
            deformed,
            predicted,
            k_ext,
        }
    }

    /// Query points on a jittered lattice around the body.
    pub fn query_points(&self, count: usize) -> Vec<Vec3> {
        (0..count)
            .map(|i| {
                let t = i as f64 * 0.618_033_988_749_895;
                let u = t.fract() * std::f64::consts::TAU;
                let v = (i as f64 / count as f64) * std::f64::consts::PI;
                let r = 0.7 + 0.6 * (t * 7.0).fract();
                Vec3::new(r * v.sin() * u.cos(), r * v.sin() * u.sin(), r * v.cos())
            })
            .collect()
    }
}
