//! Skeletal body model posed by linear blend skinning, plus signed-distance
//! queries against the posed surface.

mod io;
mod sdf;

pub use io::{load_body, load_poses, parse_poses, save_body, save_poses, write_poses};
pub use sdf::{solid_angle, BodySdf, SignedDistanceResult};

use nalgebra::{DMatrix, Matrix3, Rotation3};

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

/// Joint hierarchy. Joint 0 is the root; every other joint's parent has a
/// smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    parents: Vec<Option<usize>>,
    rest_joints: Vec<Vec3>,
}

impl Skeleton {
    pub fn new(parents: Vec<Option<usize>>, rest_joints: Vec<Vec3>) -> Result<Self> {
        if parents.is_empty() || parents.len() != rest_joints.len() {
            return Err(Error::InvalidParameter(format!(
                "skeleton needs matching, non-empty parent ({}) and joint ({}) tables",
                parents.len(),
                rest_joints.len()
            )));
        }
        if parents[0].is_some() {
            return Err(Error::InvalidParameter("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "joint {j} must have a parent with a smaller index"
                    )))
                }
            }
        }
        Ok(Self {
            parents,
            rest_joints,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn rest_joints(&self) -> &[Vec3] {
        &self.rest_joints
    }

    /// World-space rigid transform of each joint, composed down the hierarchy.
    /// Each maps rest-space points bound to that joint into posed space.
    pub fn joint_transforms(&self, pose: &Pose) -> Result<Vec<RigidTransform>> {
        if pose.rotations.len() != self.joint_count() {
            return Err(Error::DimensionMismatch(format!(
                "pose has {} joint rotations, skeleton has {} joints",
                pose.rotations.len(),
                self.joint_count()
            )));
        }
        let mut global_rot: Vec<Matrix3<f64>> = Vec::with_capacity(self.joint_count());
        let mut global_pos: Vec<Vec3> = Vec::with_capacity(self.joint_count());
        for j in 0..self.joint_count() {
            let local = Rotation3::from_scaled_axis(pose.rotations[j]).into_inner();
            let (rot, pos) = match self.parents[j] {
                None => (local, self.rest_joints[j]),
                Some(p) => (
                    global_rot[p] * local,
                    global_rot[p] * (self.rest_joints[j] - self.rest_joints[p]) + global_pos[p],
                ),
            };
            global_rot.push(rot);
            global_pos.push(pos);
        }
        Ok(global_rot
            .into_iter()
            .zip(global_pos)
            .zip(&self.rest_joints)
            .map(|((rot, pos), rest)| RigidTransform {
                rotation: rot,
                translation: pos - rot * rest + pose.translation,
            })
            .collect())
    }
}

/// Per-joint axis-angle rotations (radians) and a root translation (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Vec3>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity(joints: usize) -> Self {
        Self {
            rotations: vec![Vec3::zeros(); joints],
            translation: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|c| c.is_finite())
            && self.rotations.iter().all(|r| r.iter().all(|c| c.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

/// Per-vertex affine map `y = A x + b` produced by blending joint transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendTransform {
    pub linear: Matrix3<f64>,
    pub offset: Vec3,
}

impl BlendTransform {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.linear * x + self.offset
    }

    /// Pulls a gradient with respect to `y` back to `x`.
    pub fn pull_back(&self, grad: &Vec3) -> Vec3 {
        self.linear.transpose() * grad
    }
}

/// Blends joint transforms by the rows of `weights`.
///
/// Written as `I + sum w (R - I)` so that joints at rest contribute exactly
/// nothing; with rows summing to 1 this equals `sum w R`.
pub fn blend_transforms(weights: &DMatrix<f64>, joints: &[RigidTransform]) -> Result<Vec<BlendTransform>> {
    if weights.ncols() != joints.len() {
        return Err(Error::DimensionMismatch(format!(
            "weights have {} columns, skeleton has {} joints",
            weights.ncols(),
            joints.len()
        )));
    }
    let identity = Matrix3::identity();
    Ok((0..weights.nrows())
        .map(|i| {
            let mut linear = identity;
            let mut offset = Vec3::zeros();
            for (j, t) in joints.iter().enumerate() {
                let w = weights[(i, j)];
                if w != 0.0 {
                    linear += (t.rotation - identity) * w;
                    offset += t.translation * w;
                }
            }
            BlendTransform { linear, offset }
        })
        .collect())
}

pub fn apply_blend(transforms: &[BlendTransform], positions: &[Vec3]) -> Vec<Vec3> {
    transforms
        .iter()
        .zip(positions)
        .map(|(t, x)| t.apply(x))
        .collect()
}

/// Rest mesh, skeleton and per-vertex joint weights (`N_b x J`).
#[derive(Debug, Clone)]
pub struct SkinnedBody {
    pub mesh: TriMesh,
    pub skeleton: Skeleton,
    pub weights: DMatrix<f64>,
}

impl SkinnedBody {
    pub fn new(mesh: TriMesh, skeleton: Skeleton, weights: DMatrix<f64>) -> Result<Self> {
        mesh.validate()?;
        validate_weights(&weights, mesh.vertex_count(), skeleton.joint_count())?;
        Ok(Self {
            mesh,
            skeleton,
            weights,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.skeleton.joint_count()
    }
}

pub(crate) fn validate_weights(weights: &DMatrix<f64>, rows: usize, joints: usize) -> Result<()> {
    if weights.nrows() != rows || weights.ncols() != joints {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is {}x{}, expected {rows}x{joints}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    for (i, row) in weights.row_iter().enumerate() {
        if row.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight row {i} has a negative entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "weight row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Poses the body rest mesh by linear blend skinning.
pub fn pose_body(body: &SkinnedBody, pose: &Pose) -> Result<TriMesh> {
    let joints = body.skeleton.joint_transforms(pose)?;
    let transforms = blend_transforms(&body.weights, &joints)?;
    Ok(body.mesh.with_vertices(apply_blend(&transforms, &body.mesh.vertices)))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_relative_eq;

    use super::*;
    use crate::fixtures;

    fn chain() -> SkinnedBody {
        let mesh = TriMesh::new(
            vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(0.5, 0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let skeleton = Skeleton::new(vec![None, Some(0)], vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        let weights = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.5, 0.5, 1.0, 0.0]);
        SkinnedBody::new(mesh, skeleton, weights).unwrap()
    }

    #[test]
    fn identity_pose_is_exact() {
        let body = fixtures::capsule_body();
        let posed = pose_body(&body, &Pose::identity(2)).unwrap();
        assert_eq!(posed, body.mesh);
    }

    #[test]
    fn root_translation_shifts_every_vertex() {
        let body = fixtures::capsule_body();
        let mut pose = Pose::identity(2);
        pose.translation = Vec3::new(0.3, -1.2, 0.7);
        let posed = pose_body(&body, &pose).unwrap();
        for (p, r) in posed.vertices.iter().zip(&body.mesh.vertices) {
            assert_relative_eq!(*p, r + pose.translation, epsilon = 1e-12);
        }
    }

    #[test]
    fn child_joint_rotation_about_rest_position() {
        let body = chain();
        let mut pose = Pose::identity(2);
        pose.rotations[1] = Vec3::new(0.0, 0.0, FRAC_PI_2);
        let posed = pose_body(&body, &pose).unwrap();
        // vertex 0 at (2,0,0) fully on joint 1 at (1,0,0): rotated 90 deg about z
        assert_relative_eq!(posed.vertices[0], Vec3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
        // vertex 2 fully on the root is untouched
        assert_relative_eq!(posed.vertices[2], body.mesh.vertices[2], epsilon = 1e-15);
        // vertex 1 is the average of both joint images
        let on_joint1 = Vec3::new(1.0, 0.0, 0.0) + Vec3::new(-1.0, 0.0, 0.0);
        assert_relative_eq!(posed.vertices[1], (on_joint1 + Vec3::new(1.0, 1.0, 0.0)) * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_weights_and_skeletons() {
        let m = fixtures::single_triangle();
        let s = Skeleton::new(vec![None], vec![Vec3::zeros()]).unwrap();
        assert!(SkinnedBody::new(m.clone(), s.clone(), DMatrix::from_element(3, 1, 0.5)).is_err());
        assert!(SkinnedBody::new(m, s, DMatrix::from_element(2, 1, 1.0)).is_err());
        assert!(Skeleton::new(vec![Some(0)], vec![Vec3::zeros()]).is_err());
        assert!(Skeleton::new(vec![None, Some(1)], vec![Vec3::zeros(); 2]).is_err());
    }

    #[test]
    fn pose_joint_count_mismatch() {
        let body = chain();
        assert!(matches!(pose_body(&body, &Pose::identity(3)), Err(Error::DimensionMismatch(_))));
    }
}
