//! Quantities derived once from the garment template.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix2, Matrix3, SymmetricEigen};

use super::bending::dihedral_angle;
use crate::body::BodySdf;
use crate::error::{Error, Result};
use crate::mesh::{build_topology, RingMode, Topology, TriMesh, Vec3};

const CACHE_MAGIC: &[u8; 8] = b"DKREST\0\0";
const CACHE_VERSION: u32 = 1;

/// Interior edge with its bending stencil and rest measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct BendingEdge {
    pub v0: usize,
    pub v1: usize,
    /// Opposite vertex in the face walking `v0 -> v1`, then in the face walking `v1 -> v0`.
    pub wings: [usize; 2],
    pub rest_length: f64,
    /// Sum of the two incident rest face areas.
    pub rest_area: f64,
    pub rest_angle: f64,
    /// Weight of template coherence against flatness, in `[0, 1]`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarmentRestState {
    pub template: TriMesh,
    pub ring_mode: RingMode,
    pub topology: Topology,
    /// Eigenvalues of each template one-ring covariance, descending.
    pub sigma: Vec<[f64; 3]>,
    /// Inverse of the 2x2 rest edge matrix in each face's tangent frame.
    pub dm_inv: Vec<Matrix2<f64>>,
    pub face_area: Vec<f64>,
    /// Rest length of every edge in `topology.edges`.
    pub edge_length: Vec<f64>,
    pub bending: Vec<BendingEdge>,
    pub mass: Vec<f64>,
}

/// Mean-centered second moment of `points`.
pub fn covariance<'a>(points: impl ExactSizeIterator<Item = &'a Vec3> + Clone) -> Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points.clone().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut c = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        c += d * d.transpose();
    }
    c / n
}

pub(crate) fn ring_covariance(positions: &[Vec3], neighbors: &[usize]) -> Matrix3<f64> {
    covariance(neighbors.iter().map(|&j| &positions[j]))
}

/// Eigenvalues of a symmetric PSD matrix, descending and clamped at zero.
pub fn sorted_spectrum(c: &Matrix3<f64>) -> [f64; 3] {
    let eig = SymmetricEigen::new(*c);
    let mut s = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    s.map(|v| v.max(0.0))
}

impl GarmentRestState {
    pub fn vertex_count(&self) -> usize {
        self.template.vertex_count()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Replaces per-edge `alpha` from a text file of `v0 v1 alpha` lines.
    pub fn apply_alpha_overrides(&mut self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut applied = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (f.len() == 3)
                .then(|| Some((f[0].parse::<usize>().ok()?, f[1].parse::<usize>().ok()?, f[2].parse::<f64>().ok()?)))
                .flatten();
            let (a, b, alpha) = parsed.ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected 'v0 v1 alpha'".into(),
            })?;
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1] at line {}", i + 1)));
            }
            let (lo, hi) = (a.min(b), a.max(b));
            let edge = self
                .bending
                .iter_mut()
                .find(|e| e.v0 == lo && e.v1 == hi)
                .ok_or_else(|| Error::InvalidParameter(format!("({a}, {b}) is not an interior edge")))?;
            edge.alpha = alpha;
            applied += 1;
        }
        Ok(applied)
    }
}

/// Precomputes the template quantities used by every energy term.
///
/// `body` is the rest-pose body, used to set the per-edge bending balance:
/// `alpha` grows with the distance from the edge midpoint to the body,
/// normalized by the largest such distance. Without a body every edge keeps
/// full template coherence (`alpha = 1`).
pub fn precompute_rest(
    template: &TriMesh,
    body: Option<&BodySdf>,
    density: f64,
    ring_mode: RingMode,
) -> Result<GarmentRestState> {
    template.validate_template()?;
    if !(density > 0.0) {
        return Err(Error::InvalidParameter(format!("areal density must be positive, got {density}")));
    }
    let x = &template.vertices;
    let topology = build_topology(template, ring_mode)?;

    let min_ring = if ring_mode == RingMode::Closed { 3 } else { 2 };
    let mut sigma = Vec::with_capacity(x.len());
    for ring in &topology.rings {
        if ring.neighbors.len() < min_ring {
            return Err(Error::InvalidMesh(format!(
                "vertex {} has a one-ring of {} vertices",
                ring.center,
                ring.neighbors.len()
            )));
        }
        let s = sorted_spectrum(&ring_covariance(x, &ring.neighbors));
        if !(s[0] > 0.0) {
            return Err(Error::DegenerateOneRing(ring.center));
        }
        sigma.push(s);
    }

    let mut dm_inv = Vec::with_capacity(template.face_count());
    let mut face_area = Vec::with_capacity(template.face_count());
    let mut mass = vec![0.0; x.len()];
    for (f, &[a, b, c]) in template.faces.iter().enumerate() {
        let e1 = x[b] - x[a];
        let e2 = x[c] - x[a];
        let t1 = e1.normalize();
        let n = e1.cross(&e2).normalize();
        let t2 = n.cross(&t1);
        let dm = Matrix2::new(e1.dot(&t1), e2.dot(&t1), 0.0, e2.dot(&t2));
        let inv = dm
            .try_inverse()
            .ok_or_else(|| Error::InvalidMesh(format!("face {f} has a singular rest frame")))?;
        dm_inv.push(inv);
        let area = template.face_area(f);
        face_area.push(area);
        for v in [a, b, c] {
            mass[v] += density * area / 3.0;
        }
    }

    let edge_length = topology.edges.iter().map(|e| (x[e.v1] - x[e.v0]).norm()).collect();

    let mut face_of = std::collections::HashMap::new();
    for (f, &[a, b, c]) in template.faces.iter().enumerate() {
        for (i, j) in [(a, b), (b, c), (c, a)] {
            face_of.insert((i, j), f);
        }
    }
    let mut bending: Vec<BendingEdge> = topology
        .interior_edges()
        .map(|e| {
            let wings = [e.opposite[0], e.opposite[1]];
            let fa = face_of.get(&(e.v0, e.v1)).copied();
            let fb = face_of.get(&(e.v1, e.v0)).copied();
            let rest_area = match (fa, fb) {
                (Some(fa), Some(fb)) => face_area[fa] + face_area[fb],
                _ => {
                    crate::mesh::face_area(x, [e.v0, e.v1, wings[0]]) + crate::mesh::face_area(x, [e.v1, e.v0, wings[1]])
                }
            };
            BendingEdge {
                v0: e.v0,
                v1: e.v1,
                wings,
                rest_length: (x[e.v1] - x[e.v0]).norm(),
                rest_area,
                rest_angle: dihedral_angle(&x[e.v0], &x[e.v1], &x[wings[0]], &x[wings[1]]),
                alpha: 1.0,
            }
        })
        .collect();

    if let Some(body) = body {
        let dist: Vec<f64> = bending
            .iter()
            .map(|e| body.query(&((x[e.v0] + x[e.v1]) * 0.5)).distance.max(0.0))
            .collect();
        let max = dist.iter().copied().fold(0.0, f64::max);
        for (e, d) in bending.iter_mut().zip(dist) {
            e.alpha = if max > 0.0 { (d / max).clamp(0.0, 1.0) } else { 0.0 };
        }
    }

    Ok(GarmentRestState {
        template: template.clone(),
        ring_mode,
        topology,
        sigma,
        dm_inv,
        face_area,
        edge_length,
        bending,
        mass,
    })
}

fn cache_err(msg: impl Into<String>) -> Error {
    Error::Cache(msg.into())
}

fn truncated(e: std::io::Error) -> Error {
    cache_err(format!("truncated cache: {e}"))
}

struct CacheReader<'a>(Cursor<&'a [u8]>);

impl CacheReader<'_> {
    fn real(&mut self) -> Result<f64> {
        self.0.read_f64::<LittleEndian>().map_err(truncated)
    }

    fn index(&mut self) -> Result<usize> {
        self.0.read_u64::<LittleEndian>().map(|v| v as usize).map_err(truncated)
    }
}

impl GarmentRestState {
    /// Serializes to the versioned little-endian cache format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        self.write_to(&mut w).expect("writing to a Vec cannot fail");
        w
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        w.write_u8(match self.ring_mode {
            RingMode::Closed => 0,
            RingMode::Open => 1,
        })?;
        let n = self.template.vertex_count();
        let f = self.template.face_count();
        w.write_u64::<LittleEndian>(n as u64)?;
        w.write_u64::<LittleEndian>(f as u64)?;
        w.write_u64::<LittleEndian>(self.bending.len() as u64)?;
        let put = |w: &mut dyn Write, v: f64| w.write_f64::<LittleEndian>(v);
        for v in &self.template.vertices {
            for c in v.iter() {
                put(w, *c)?;
            }
        }
        for face in &self.template.faces {
            for &i in face {
                w.write_u64::<LittleEndian>(i as u64)?;
            }
        }
        for s in &self.sigma {
            for &c in s {
                put(w, c)?;
            }
        }
        for m in &self.dm_inv {
            for c in [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]] {
                put(w, c)?;
            }
        }
        for &a in &self.face_area {
            put(w, a)?;
        }
        for &m in &self.mass {
            put(w, m)?;
        }
        for e in &self.bending {
            for i in [e.v0, e.v1, e.wings[0], e.wings[1]] {
                w.write_u64::<LittleEndian>(i as u64)?;
            }
            for c in [e.rest_length, e.rest_area, e.rest_angle, e.alpha] {
                put(w, c)?;
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = CacheReader(Cursor::new(bytes));
        let mut magic = [0u8; 8];
        r.0.read_exact(&mut magic).map_err(|_| cache_err("truncated header"))?;
        if &magic != CACHE_MAGIC {
            return Err(cache_err("not a rest-state cache"));
        }
        let version = r.0.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != CACHE_VERSION {
            return Err(cache_err(format!("unsupported cache version {version}")));
        }
        let ring_mode = match r.0.read_u8().map_err(truncated)? {
            0 => RingMode::Closed,
            1 => RingMode::Open,
            m => return Err(cache_err(format!("unknown ring mode {m}"))),
        };
        let n = r.index()?;
        let f = r.index()?;
        let nb = r.index()?;
        if n.saturating_add(f).saturating_add(nb) > bytes.len() {
            return Err(cache_err("counts exceed file size"));
        }
        let vertices = (0..n)
            .map(|_| Ok(Vec3::new(r.real()?, r.real()?, r.real()?)))
            .collect::<Result<Vec<_>>>()?;
        let faces = (0..f)
            .map(|_| Ok([r.index()?, r.index()?, r.index()?]))
            .collect::<Result<Vec<_>>>()?;
        let sigma = (0..n)
            .map(|_| Ok([r.real()?, r.real()?, r.real()?]))
            .collect::<Result<Vec<_>>>()?;
        let dm_inv = (0..f)
            .map(|_| Ok(Matrix2::new(r.real()?, r.real()?, r.real()?, r.real()?)))
            .collect::<Result<Vec<_>>>()?;
        let face_area = (0..f).map(|_| r.real()).collect::<Result<Vec<_>>>()?;
        let mass = (0..n).map(|_| r.real()).collect::<Result<Vec<_>>>()?;
        let bending = (0..nb)
            .map(|_| {
                Ok(BendingEdge {
                    v0: r.index()?,
                    v1: r.index()?,
                    wings: [r.index()?, r.index()?],
                    rest_length: r.real()?,
                    rest_area: r.real()?,
                    rest_angle: r.real()?,
                    alpha: r.real()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if r.0.position() as usize != bytes.len() {
            return Err(cache_err("trailing bytes after rest state"));
        }
        if bending.iter().any(|e| [e.v0, e.v1, e.wings[0], e.wings[1]].iter().any(|&i| i >= n)) {
            return Err(cache_err("bending stencil index out of range"));
        }
        let template = TriMesh::new(vertices, faces).map_err(|e| cache_err(e.to_string()))?;
        let topology = build_topology(&template, ring_mode)?;
        let x = &template.vertices;
        let edge_length = topology.edges.iter().map(|e| (x[e.v1] - x[e.v0]).norm()).collect();
        Ok(Self {
            template,
            ring_mode,
            topology,
            sigma,
            dm_inv,
            face_area,
            edge_length,
            bending,
            mass,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use approx::assert_relative_eq;

    use super::*;
    use crate::fixtures;

    #[test]
    fn flat_square_rest_state() {
        let g = fixtures::grid(5, 1.0);
        let rest = precompute_rest(&g, None, 0.2, RingMode::Closed).unwrap();
        assert!(rest.bending.iter().all(|e| e.rest_angle == 0.0));
        for s in &rest.sigma {
            assert!(s[0] >= s[1] && s[1] >= s[2]);
            assert!(s[2] < 1e-15);
        }
        assert_relative_eq!(rest.total_mass(), 0.2, epsilon = 1e-14);
        assert!(rest.mass.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn hexagon_spectrum_matches_closed_form() {
        // hexagon of circumradius r around a center vertex: the 7-point closed
        // ring has in-plane second moment (6 * r^2 / 2) / 7 along each axis
        let r = 0.7;
        let mut v = vec![Vec3::zeros()];
        for k in 0..6 {
            let a = PI / 3.0 * k as f64;
            v.push(Vec3::new(r * a.cos(), r * a.sin(), 0.0));
        }
        let faces = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        let m = TriMesh::new(v, faces).unwrap();
        let rest = precompute_rest(&m, None, 1.0, RingMode::Closed).unwrap();
        let expected = 3.0 * r * r / 7.0;
        assert_relative_eq!(rest.sigma[0][0], expected, epsilon = 1e-14);
        assert_relative_eq!(rest.sigma[0][1], expected, epsilon = 1e-14);
        assert!(rest.sigma[0][2].abs() < 1e-15);

        let open = precompute_rest(&m, None, 1.0, RingMode::Open).unwrap();
        assert_relative_eq!(open.sigma[0][0], r * r / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn coincident_ring_is_rejected() {
        let m = TriMesh {
            vertices: vec![Vec3::zeros(); 3],
            faces: vec![[0, 1, 2]],
        };
        assert!(precompute_rest(&m, None, 1.0, RingMode::Closed).is_err());
    }

    #[test]
    fn alpha_follows_body_distance() {
        let body = BodySdf::new(fixtures::uv_sphere(1.0, 12, 24)).unwrap();
        let mut g = fixtures::grid(7, 2.0);
        for v in &mut g.vertices {
            v.z = 1.1;
        }
        let rest = precompute_rest(&g, Some(&body), 0.2, RingMode::Closed).unwrap();
        let alphas: Vec<f64> = rest.bending.iter().map(|e| e.alpha).collect();
        assert!(alphas.iter().all(|a| (0.0..=1.0).contains(a)));
        assert_relative_eq!(alphas.iter().copied().fold(0.0, f64::max), 1.0);
        // edges near the center of the cloth sit closest to the sphere top
        let center = rest
            .bending
            .iter()
            .min_by(|a, b| {
                let ma = (g.vertices[a.v0] + g.vertices[a.v1]).norm();
                let mb = (g.vertices[b.v0] + g.vertices[b.v1]).norm();
                ma.total_cmp(&mb)
            })
            .unwrap();
        assert!(center.alpha < 0.2);
    }

    #[test]
    fn cache_round_trip_and_rejects_garbage() {
        let g = fixtures::grid(6, 1.0);
        let rest = precompute_rest(&g, None, 0.3, RingMode::Closed).unwrap();
        let bytes = rest.to_bytes();
        assert_eq!(GarmentRestState::from_bytes(&bytes).unwrap(), rest);
        assert_eq!(rest.to_bytes(), bytes);
        assert!(GarmentRestState::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(GarmentRestState::from_bytes(b"nonsense").is_err());
    }

    #[test]
    fn alpha_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let g = fixtures::unit_square();
        let mut rest = precompute_rest(&g, None, 1.0, RingMode::Closed).unwrap();
        let path = dir.path().join("alpha.txt");
        fs::write(&path, "2 0 0.25\n").unwrap();
        assert_eq!(rest.apply_alpha_overrides(&path).unwrap(), 1);
        assert_eq!(rest.bending[0].alpha, 0.25);
        fs::write(&path, "0 1 0.5\n").unwrap();
        assert!(rest.apply_alpha_overrides(&path).is_err());
    }
}
