//! Plain-text body and pose-sequence files.
//!
//! Body file:
//!
//! ```text
//! # comment
//! mesh body_rest.obj
//! joints 2
//! 0 -1 0.0 0.0 1.0
//! 1 0 0.0 0.0 0.0
//! weights 802 2
//! 1.0 0.0
//! ...
//! ```
//!
//! The mesh path is resolved relative to the body file. A parent of `-1`
//! marks the root. Pose files hold one frame per line: root translation then
//! one axis-angle triple per joint.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{Pose, Skeleton, SkinnedBody};
use crate::error::{Error, Result};
use crate::mesh::{load_obj, save_obj, Vec3};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn numbers<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(line, format!("invalid number '{t}'"))))
        .collect()
}

pub fn load_body(path: impl AsRef<Path>) -> Result<SkinnedBody> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut next = |what: &str| lines.next().ok_or_else(|| parse_err(0, format!("unexpected end of file, expected {what}")));

    let (ln, l) = next("mesh record")?;
    let mesh_rel = l
        .strip_prefix("mesh")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| parse_err(ln, "expected 'mesh <path>'"))?;
    let mesh_path = path.parent().unwrap_or(Path::new(".")).join(mesh_rel);
    let mesh = load_obj(&mesh_path)?;

    let (ln, l) = next("joints record")?;
    let count: usize = l
        .strip_prefix("joints")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| parse_err(ln, "expected 'joints <count>'"))?;
    let mut parents = Vec::with_capacity(count);
    let mut rest = Vec::with_capacity(count);
    for j in 0..count {
        let (ln, l) = next("joint row")?;
        let fields: Vec<f64> = numbers(ln, l)?;
        if fields.len() != 5 || fields[0] as usize != j {
            return Err(parse_err(ln, format!("expected joint row 'index parent x y z' for joint {j}")));
        }
        parents.push(if fields[1] < 0.0 { None } else { Some(fields[1] as usize) });
        rest.push(Vec3::new(fields[2], fields[3], fields[4]));
    }
    let skeleton = Skeleton::new(parents, rest)?;

    let (ln, l) = next("weights record")?;
    let dims: Vec<usize> = l
        .strip_prefix("weights")
        .map(|s| numbers(ln, s))
        .transpose()?
        .filter(|d| d.len() == 2)
        .ok_or_else(|| parse_err(ln, "expected 'weights <rows> <cols>'"))?;
    let (rows, cols) = (dims[0], dims[1]);
    if rows != mesh.vertex_count() || cols != count {
        return Err(Error::DimensionMismatch(format!(
            "body weights are {rows}x{cols} but mesh has {} vertices and skeleton {count} joints",
            mesh.vertex_count()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, l) = next("weight row")?;
        let row: Vec<f64> = numbers(ln, l)?;
        if row.len() != cols {
            return Err(parse_err(ln, format!("weight row has {} entries, expected {cols}", row.len())));
        }
        data.extend(row);
    }
    SkinnedBody::new(mesh, skeleton, DMatrix::from_row_slice(rows, cols, &data))
}

/// Writes the body file at `path` and its rest mesh next to it as `mesh_name`.
pub fn save_body(body: &SkinnedBody, path: impl AsRef<Path>, mesh_name: &str) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new("."));
    save_obj(&body.mesh, dir.join(mesh_name))?;
    let mut out = String::new();
    out.push_str(&format!("mesh {mesh_name}\njoints {}\n", body.joint_count()));
    for (j, p) in body.skeleton.rest_joints().iter().enumerate() {
        let parent = body.skeleton.parent(j).map_or(-1, |p| p as i64);
        out.push_str(&format!("{j} {parent} {:.17e} {:.17e} {:.17e}\n", p.x, p.y, p.z));
    }
    out.push_str(&format!("weights {} {}\n", body.weights.nrows(), body.weights.ncols()));
    for row in body.weights.row_iter() {
        let cells: Vec<String> = row.iter().map(|w| format!("{w:.17e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_poses(path: impl AsRef<Path>, joints: usize) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_poses(file, joints)
}

pub fn parse_poses(reader: impl Read, joints: usize) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let ln = i + 1;
        let line = line.map_err(|e| parse_err(ln, e.to_string()))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = numbers(ln, line)?;
        if v.len() != 3 + 3 * joints {
            return Err(Error::DimensionMismatch(format!(
                "pose line {ln} has {} values, expected {} for {joints} joints",
                v.len(),
                3 + 3 * joints
            )));
        }
        let pose = Pose {
            translation: Vec3::new(v[0], v[1], v[2]),
            rotations: v[3..].chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
        };
        if !pose.is_finite() {
            return Err(parse_err(ln, "non-finite pose value"));
        }
        poses.push(pose);
    }
    Ok(poses)
}

pub fn save_poses(poses: &[Pose], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_poses(poses, &mut file).map_err(|e| Error::io(path, e))
}

pub fn write_poses(poses: &[Pose], w: &mut impl Write) -> std::io::Result<()> {
    for p in poses {
        let mut cells = vec![p.translation.x, p.translation.y, p.translation.z];
        for r in &p.rotations {
            cells.extend([r.x, r.y, r.z]);
        }
        let text: Vec<String> = cells.iter().map(|c| format!("{c:.17e}")).collect();
        writeln!(w, "{}", text.join(" "))?;
    }
    Ok(())
}
