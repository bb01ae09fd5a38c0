//! Garment blend weights from body participation, with the nearest-vertex and
//! k-nearest baselines, and skinning of the garment by those weights.
//!
//! Participation of body vertex `j` in garment vertex `i` is the Gaussian
//! `exp(-(d_ij - m_i)^2 / (k m_i^2))`, where `m_i` is the distance from `i`
//! to its nearest body vertex. The kernel width grows with `m_i`, so loose
//! regions draw on a wide patch of the body while tight regions effectively
//! copy the nearest body vertex.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::body::{apply_blend, blend_transforms, Pose, Skeleton};
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

/// Default kernel width factor.
pub const DEFAULT_RBF_K: f64 = 0.5;
/// Lower bound on `m_i` (meters) so the kernel stays finite on contact.
pub const MIN_NEAREST_DISTANCE: f64 = 1e-4;
/// Participation entries below this are not stored.
pub const SPARSITY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Rbf,
    Nearest,
    Knn,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Rbf => "rbf",
            WeightScheme::Nearest => "nearest",
            WeightScheme::Knn => "knn",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(WeightScheme::Rbf),
            "nearest" => Ok(WeightScheme::Nearest),
            "knn" => Ok(WeightScheme::Knn),
            other => Err(Error::InvalidParameter(format!(
                "unknown skinning scheme '{other}' (expected rbf, nearest or knn)"
            ))),
        }
    }
}

/// Garment-vertex-to-joint weights, `N_g x J`.
#[derive(Debug, Clone, PartialEq)]
pub struct GarmentWeights {
    pub weights: DMatrix<f64>,
    pub scheme: WeightScheme,
    /// Kernel factor for `rbf`, neighbor count for `knn`, unused otherwise.
    pub parameter: f64,
}

impl GarmentWeights {
    pub fn vertex_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn joint_count(&self) -> usize {
        self.weights.ncols()
    }

    /// Largest `|row sum - 1|`.
    pub fn max_row_sum_deviation(&self) -> f64 {
        self.weights
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Header `drapekit-weights <N_g> <J> <scheme> <param>`, then one row per
    /// garment vertex at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "drapekit-weights {} {} {} {:.16e}\n",
            self.vertex_count(),
            self.joint_count(),
            self.scheme,
            self.parameter
        );
        for row in self.weights.row_iter() {
            let cells: Vec<String> = row.iter().map(|w| format!("{w:.16e}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        if header.len() != 5 || header[0] != "drapekit-weights" {
            return Err(bad(1, "expected 'drapekit-weights <rows> <cols> <scheme> <param>'"));
        }
        let rows: usize = header[1].parse().map_err(|_| bad(1, "invalid row count"))?;
        let cols: usize = header[2].parse().map_err(|_| bad(1, "invalid column count"))?;
        let scheme: WeightScheme = header[3].parse()?;
        let parameter: f64 = header[4].parse().map_err(|_| bad(1, "invalid parameter"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = lines.next().ok_or_else(|| bad(r + 2, "missing weight row"))?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| bad(r + 2, "invalid weight"))?);
            }
            if data.len() - before != cols {
                return Err(bad(r + 2, "wrong number of weights in row"));
            }
        }
        Ok(Self {
            weights: DMatrix::from_row_slice(rows, cols, &data),
            scheme,
            parameter,
        })
    }
}

/// `exp(-r^2 / (k m^2))` with `m` clamped below at [`MIN_NEAREST_DISTANCE`].
pub fn rbf_kernel(r: f64, nearest: f64, k: f64) -> f64 {
    let m = nearest.max(MIN_NEAREST_DISTANCE);
    (-(r * r) / (k * m * m)).exp()
}

/// Sparse participation matrix, one row per garment vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationMatrix {
    /// `(body vertex, p_ij)` pairs with `p_ij >= SPARSITY_THRESHOLD`, ascending by body vertex.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Distance to the nearest body vertex, before flooring.
    pub nearest: Vec<f64>,
    pub body_vertex_count: usize,
}

impl ParticipationMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.body_vertex_count);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[(i, j)] = p;
            }
        }
        m
    }
}

fn participation_row(g: &Vec3, body: &[Vec3], k: f64) -> (Vec<f64>, f64) {
    let dist: Vec<f64> = body.iter().map(|b| (g - b).norm()).collect();
    let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
    // the argument uses the true minimum so the nearest entry is exactly 1;
    // only the width sees the floored distance
    let row = dist.iter().map(|&d| rbf_kernel(d - nearest, nearest, k)).collect();
    (row, nearest)
}

/// Dense participation matrix, every entry kept.
pub fn participation_dense(garment: &TriMesh, body: &TriMesh, k: f64) -> Result<DMatrix<f64>> {
    check_participation_inputs(body, k)?;
    let rows: Vec<Vec<f64>> = garment
        .vertices
        .par_iter()
        .map(|g| participation_row(g, &body.vertices, k).0)
        .collect();
    let nb = body.vertex_count();
    Ok(DMatrix::from_fn(rows.len(), nb, |i, j| rows[i][j]))
}

fn check_participation_inputs(body: &TriMesh, k: f64) -> Result<()> {
    if body.vertices.is_empty() {
        return Err(Error::InvalidMesh("body mesh has no vertices".into()));
    }
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("rbf k must be positive, got {k}")));
    }
    Ok(())
}

pub fn participation_matrix(garment: &TriMesh, body: &TriMesh, k: f64) -> Result<ParticipationMatrix> {
    check_participation_inputs(body, k)?;
    let rows: Vec<(Vec<(usize, f64)>, f64)> = garment
        .vertices
        .par_iter()
        .map(|g| {
            let (row, nearest) = participation_row(g, &body.vertices, k);
            let sparse = row
                .into_iter()
                .enumerate()
                .filter(|&(_, p)| p >= SPARSITY_THRESHOLD)
                .collect();
            (sparse, nearest)
        })
        .collect();
    let (rows, nearest) = rows.into_iter().unzip();
    Ok(ParticipationMatrix {
        rows,
        nearest,
        body_vertex_count: body.vertex_count(),
    })
}

/// Row-normalized product of participation and body weights.
pub fn garment_weights_rbf(p: &ParticipationMatrix, body_weights: &DMatrix<f64>, k: f64) -> Result<GarmentWeights> {
    if body_weights.nrows() != p.body_vertex_count {
        return Err(Error::DimensionMismatch(format!(
            "participation has {} body columns, body weights have {} rows",
            p.body_vertex_count,
            body_weights.nrows()
        )));
    }
    let joints = body_weights.ncols();
    let mut out = DMatrix::zeros(p.rows.len(), joints);
    for (i, row) in p.rows.iter().enumerate() {
        for &(b, pij) in row {
            for j in 0..joints {
                out[(i, j)] += pij * body_weights[(b, j)];
            }
        }
        let sum: f64 = out.row(i).sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidParameter(format!("garment vertex {i} has no participation")));
        }
        out.row_mut(i).unscale_mut(sum);
    }
    Ok(GarmentWeights {
        weights: out,
        scheme: WeightScheme::Rbf,
        parameter: k,
    })
}

/// Body vertices ordered by distance to `g`, ties by index; first `count`.
fn nearest_body_vertices(g: &Vec3, body: &[Vec3], count: usize) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = body.iter().enumerate().map(|(j, b)| ((g - b).norm(), j)).collect();
    if count < d.len() {
        d.select_nth_unstable_by(count, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(count);
    }
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d
}

fn check_body_weights(body: &TriMesh, body_weights: &DMatrix<f64>) -> Result<()> {
    if body.vertices.is_empty() {
        return Err(Error::InvalidMesh("body mesh has no vertices".into()));
    }
    if body_weights.nrows() != body.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "body mesh has {} vertices, body weights have {} rows",
            body.vertex_count(),
            body_weights.nrows()
        )));
    }
    Ok(())
}

/// Copies the weight row of the nearest body vertex (lowest index on ties).
pub fn garment_weights_nearest(garment: &TriMesh, body: &TriMesh, body_weights: &DMatrix<f64>) -> Result<GarmentWeights> {
    check_body_weights(body, body_weights)?;
    let picks: Vec<usize> = garment
        .vertices
        .par_iter()
        .map(|g| nearest_body_vertices(g, &body.vertices, 1)[0].1)
        .collect();
    let weights = DMatrix::from_fn(garment.vertex_count(), body_weights.ncols(), |i, j| body_weights[(picks[i], j)]);
    Ok(GarmentWeights {
        weights,
        scheme: WeightScheme::Nearest,
        parameter: 0.0,
    })
}

/// Inverse-distance weighted average of the `count` nearest body rows. A
/// coincident body vertex takes all the weight (shared equally on ties).
pub fn garment_weights_knn(
    garment: &TriMesh,
    body: &TriMesh,
    body_weights: &DMatrix<f64>,
    count: usize,
) -> Result<GarmentWeights> {
    check_body_weights(body, body_weights)?;
    if count == 0 || count > body.vertex_count() {
        return Err(Error::InvalidParameter(format!(
            "knn needs 1 <= K <= {} body vertices, got {count}",
            body.vertex_count()
        )));
    }
    let joints = body_weights.ncols();
    let rows: Vec<Vec<f64>> = garment
        .vertices
        .par_iter()
        .map(|g| {
            let near = nearest_body_vertices(g, &body.vertices, count);
            let coincident = near.iter().filter(|(d, _)| *d == 0.0).count();
            let raw: Vec<f64> = near
                .iter()
                .map(|&(d, _)| match coincident {
                    0 => 1.0 / d,
                    _ if d == 0.0 => 1.0,
                    _ => 0.0,
                })
                .collect();
            let total: f64 = raw.iter().sum();
            let mut row = vec![0.0; joints];
            for (&(_, b), w) in near.iter().zip(&raw) {
                let w = w / total;
                for (j, r) in row.iter_mut().enumerate() {
                    *r += w * body_weights[(b, j)];
                }
            }
            row
        })
        .collect();
    let weights = DMatrix::from_fn(rows.len(), joints, |i, j| rows[i][j]);
    Ok(GarmentWeights {
        weights,
        scheme: WeightScheme::Knn,
        parameter: count as f64,
    })
}

/// Linear blend skinning of the unposed garment by its own weights.
pub fn skin_garment(unposed: &TriMesh, weights: &GarmentWeights, skeleton: &Skeleton, pose: &Pose) -> Result<TriMesh> {
    if weights.vertex_count() != unposed.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "garment has {} vertices, weights have {} rows",
            unposed.vertex_count(),
            weights.vertex_count()
        )));
    }
    let joints = skeleton.joint_transforms(pose)?;
    let transforms = blend_transforms(&weights.weights, &joints)?;
    Ok(unposed.with_vertices(apply_blend(&transforms, &unposed.vertices)))
}
