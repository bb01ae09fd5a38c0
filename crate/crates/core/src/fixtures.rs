//! Procedural test assets: cloth grids, sphere and capsule bodies with
//! skeletons, a loose skirt and pose sequences. Everything is deterministic.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::body::{Pose, Skeleton, SkinnedBody};
use crate::energy::EnergyParams;
use crate::mesh::{TriMesh, Vec3};

pub fn single_triangle() -> TriMesh {
    TriMesh {
        vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
        faces: vec![[0, 1, 2]],
    }
}

/// Unit square in the z = 0 plane split along the (0, 2) diagonal.
pub fn unit_square() -> TriMesh {
    TriMesh {
        vertices: vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
    }
}

pub fn icosahedron(radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]).normalize() * radius)
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriMesh { vertices, faces }
}

/// `n x n` vertex grid of side `size`, centered at the origin in the z = 0
/// plane. Cell diagonals alternate in a checkerboard, so for odd `n` the mesh
/// is mirror-symmetric about both coordinate axes.
pub fn grid(n: usize, size: f64) -> TriMesh {
    assert!(n >= 2, "grid needs at least 2 vertices per side");
    let step = size / (n - 1) as f64;
    let half = size / 2.0;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push(Vec3::new(i as f64 * step - half, j as f64 * step - half, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = j * n + i;
            let b = a + 1;
            let c = a + n + 1;
            let d = a + n;
            if (i + j) % 2 == 0 {
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            } else {
                faces.push([a, b, d]);
                faces.push([b, c, d]);
            }
        }
    }
    TriMesh { vertices, faces }
}

/// Closed surface of revolution about the z axis. `profile` lists
/// `(ring radius, z)` from top to bottom, excluding the two poles.
fn lathe(top: f64, profile: &[(f64, f64)], bottom: f64, slices: usize) -> TriMesh {
    let mut vertices = vec![Vec3::new(0.0, 0.0, top)];
    for &(r, z) in profile {
        for s in 0..slices {
            let phi = 2.0 * PI * s as f64 / slices as f64;
            vertices.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    let south = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, bottom));

    let ring = |k: usize, s: usize| 1 + k * slices + s % slices;
    let mut faces = Vec::new();
    for s in 0..slices {
        faces.push([0, ring(0, s), ring(0, s + 1)]);
    }
    for k in 0..profile.len() - 1 {
        for s in 0..slices {
            let (a, b) = (ring(k, s), ring(k, s + 1));
            let (c, d) = (ring(k + 1, s), ring(k + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    let last = profile.len() - 1;
    for s in 0..slices {
        faces.push([south, ring(last, s + 1), ring(last, s)]);
    }
    TriMesh { vertices, faces }
}

/// Watertight UV sphere centered at the origin.
pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriMesh {
    let profile: Vec<(f64, f64)> = (1..stacks)
        .map(|k| {
            let theta = PI * k as f64 / stacks as f64;
            (radius * theta.sin(), radius * theta.cos())
        })
        .collect();
    lathe(radius, &profile, -radius, slices)
}

/// Watertight capsule along z: cylinder of half-length `half_length` capped
/// by hemispheres of `radius`. `rings` latitude rings per hemisphere.
pub fn capsule(radius: f64, half_length: f64, rings: usize, cylinder_rings: usize, slices: usize) -> TriMesh {
    let mut profile = Vec::new();
    for k in 1..=rings {
        let theta = 0.5 * PI * k as f64 / rings as f64;
        profile.push((radius * theta.sin(), half_length + radius * theta.cos()));
    }
    for k in 1..cylinder_rings {
        let z = half_length - 2.0 * half_length * k as f64 / cylinder_rings as f64;
        profile.push((radius, z));
    }
    for k in 0..rings {
        let theta = 0.5 * PI + 0.5 * PI * k as f64 / rings as f64;
        profile.push((radius * theta.sin(), -half_length + radius * theta.cos()));
    }
    lathe(half_length + radius, &profile, -half_length - radius, slices)
}

/// Unit sphere body driven by a single root joint at its center.
pub fn sphere_body(radius: f64) -> SkinnedBody {
    let mesh = uv_sphere(radius, 24, 48);
    let weights = DMatrix::from_element(mesh.vertex_count(), 1, 1.0);
    let skeleton = Skeleton::new(vec![None], vec![Vec3::zeros()]).expect("valid skeleton");
    SkinnedBody::new(mesh, skeleton, weights).expect("valid body")
}

/// Vertical capsule limb with a root joint at the top of the cylinder and a
/// child joint at its middle. Weights blend smoothly across the child joint.
pub fn capsule_body() -> SkinnedBody {
    let mesh = capsule(0.25, 1.0, 6, 16, 24);
    let skeleton = Skeleton::new(
        vec![None, Some(0)],
        vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 0.0)],
    )
    .expect("valid skeleton");
    let mut weights = DMatrix::zeros(mesh.vertex_count(), 2);
    for (i, v) in mesh.vertices.iter().enumerate() {
        // smoothstep over z in [-0.2, 0.2]; below the knee follows joint 1
        let t = ((0.2 - v.z) / 0.4).clamp(0.0, 1.0);
        let w1 = t * t * (3.0 - 2.0 * t);
        weights[(i, 0)] = 1.0 - w1;
        weights[(i, 1)] = w1;
    }
    SkinnedBody::new(mesh, skeleton, weights).expect("valid body")
}

/// Flat annulus ("circle skirt") around the capsule body at height `z`.
pub fn skirt(inner: f64, outer: f64, z: f64, rings: usize, slices: usize) -> TriMesh {
    let mut vertices = Vec::with_capacity((rings + 1) * slices);
    for k in 0..=rings {
        let r = inner + (outer - inner) * k as f64 / rings as f64;
        for s in 0..slices {
            let phi = 2.0 * PI * s as f64 / slices as f64;
            vertices.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    let idx = |k: usize, s: usize| k * slices + s % slices;
    let mut faces = Vec::new();
    for k in 0..rings {
        for s in 0..slices {
            let (a, b) = (idx(k, s), idx(k, s + 1));
            let (c, d) = (idx(k + 1, s), idx(k + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    TriMesh { vertices, faces }
}

pub fn default_skirt() -> TriMesh {
    skirt(0.35, 1.2, 0.5, 8, 32)
}

/// Side length (m) of the cloth dropped on the unit sphere. Large enough for
/// the hem to hang below the equator so the drape cannot slide off.
pub const SPHERE_DROP_SIZE: f64 = 4.0;
/// Gap (m) between the sphere top and the initial cloth plane.
pub const SPHERE_DROP_GAP: f64 = 0.05;

/// `grid(n, SPHERE_DROP_SIZE)` held flat just above the unit sphere.
pub fn sphere_drop_cloth(n: usize) -> TriMesh {
    let mut cloth = grid(n, SPHERE_DROP_SIZE);
    for v in &mut cloth.vertices {
        v.z = 1.0 + SPHERE_DROP_GAP;
    }
    cloth
}

/// Energy parameters of the sphere drop. The inextensibility weight is
/// lowered from the default because the determinant energy grows with the
/// sixth power of ring size and these rings are far coarser than a garment's.
pub fn sphere_drop_params() -> EnergyParams {
    EnergyParams {
        inext_stiffness: 1.0e5,
        ..EnergyParams::default()
    }
}

pub fn identity_poses(joints: usize, frames: usize) -> Vec<Pose> {
    vec![Pose::identity(joints); frames]
}

/// Root translation descending linearly by `drop` over the sequence.
pub fn root_drop_poses(joints: usize, frames: usize, drop: f64) -> Vec<Pose> {
    (0..frames)
        .map(|f| {
            let mut p = Pose::identity(joints);
            let t = if frames > 1 { f as f64 / (frames - 1) as f64 } else { 0.0 };
            p.translation = Vec3::new(0.0, 0.0, -drop * t);
            p
        })
        .collect()
}

/// Joint 1 swinging about the x axis with the given amplitude (radians).
pub fn limb_swing_poses(frames: usize, amplitude: f64) -> Vec<Pose> {
    (0..frames)
        .map(|f| {
            let mut p = Pose::identity(2);
            let phase = 2.0 * PI * f as f64 / frames.max(1) as f64;
            p.rotations[1] = Vec3::new(amplitude * phase.sin(), 0.0, 0.0);
            p
        })
        .collect()
}
