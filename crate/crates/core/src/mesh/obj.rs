use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

/// Reads an ASCII OBJ file. Only `v` and `f` records are used.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_obj(BufReader::new(file))
}

pub fn parse_obj(reader: impl Read) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut raw_faces: Vec<([i64; 3], usize)> = Vec::new();

    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| Error::Parse {
                        line: lineno,
                        msg: "vertex record needs 3 coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("invalid coordinate '{tok}'"),
                    })?;
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangleFace { line: lineno });
                }
                let mut face = [0i64; 3];
                for (slot, r) in face.iter_mut().zip(&refs) {
                    // `f v/vt/vn`: only the position index matters.
                    let pos = r.split('/').next().unwrap_or("");
                    *slot = pos.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("invalid face index '{r}'"),
                    })?;
                }
                raw_faces.push((face, lineno));
            }
            _ => {}
        }
    }

    let count = vertices.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (face, line) in raw_faces {
        let mut out = [0usize; 3];
        for (o, &i) in out.iter_mut().zip(&face) {
            // negative indices are relative to the end of the vertex list
            let resolved = if i < 0 { count as i64 + i } else { i - 1 };
            if resolved < 0 || resolved >= count as i64 {
                return Err(Error::IndexOutOfRange {
                    line,
                    index: i,
                    count,
                });
            }
            *o = resolved as usize;
        }
        faces.push(out);
    }
    let mesh = TriMesh { vertices, faces };
    mesh.validate()?;
    Ok(mesh)
}

/// Writes `mesh` as ASCII OBJ with 1-based indices.
pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_obj(mesh, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_obj(mesh: &TriMesh, w: &mut impl Write) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}
