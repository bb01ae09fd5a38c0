//! Garment quality metrics: edge and area deviation from the template and
//! the fraction of vertices inside the body.

use std::fmt::Write as _;
use std::path::Path;

use crate::body::BodySdf;
use crate::energy::GarmentRestState;
use crate::error::{Error, Result};
use crate::mesh::{face_area, TriMesh};

/// How per-element relative deviations are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Deviation {
    /// Mean of `|actual - rest| / rest`.
    #[default]
    Absolute,
    /// Mean of `(actual - rest) / rest`; stretching and compression cancel.
    Signed,
}

/// Metrics of one frame, all in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub frame: usize,
    pub edge_error: f64,
    pub area_error: f64,
    /// Share of vertices strictly inside the body.
    pub collision_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMetrics {
    pub frames: Vec<FrameMetrics>,
    pub edge_error: Stat,
    pub area_error: Stat,
    pub collision_error: Stat,
}

fn mean_deviation(pairs: impl Iterator<Item = (f64, f64)>, mode: Deviation) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (actual, rest) in pairs {
        let d = (actual - rest) / rest;
        sum += match mode {
            Deviation::Absolute => d.abs(),
            Deviation::Signed => d,
        };
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        100.0 * sum / count as f64
    }
}

/// Metrics of `draped` against the rest state. `body` is the posed body of the
/// same frame; without one the collision metric is zero.
pub fn frame_metrics(
    frame: usize,
    draped: &TriMesh,
    rest: &GarmentRestState,
    body: Option<&BodySdf>,
    mode: Deviation,
) -> Result<FrameMetrics> {
    if draped.vertices.len() != rest.vertex_count() || draped.faces != rest.template.faces {
        return Err(Error::DimensionMismatch(
            "draped mesh topology differs from the garment template".into(),
        ));
    }
    let x = &draped.vertices;
    let edge_error = mean_deviation(
        rest.topology
            .edges
            .iter()
            .zip(&rest.edge_length)
            .map(|(e, &l)| ((x[e.v1] - x[e.v0]).norm(), l)),
        mode,
    );
    let area_error = mean_deviation(
        draped.faces.iter().zip(&rest.face_area).map(|(f, &a)| (face_area(x, *f), a)),
        mode,
    );
    let collision_error = match body {
        Some(sdf) => {
            let inside = x.iter().filter(|p| sdf.query(p).distance < 0.0).count();
            100.0 * inside as f64 / x.len() as f64
        }
        None => 0.0,
    };
    Ok(FrameMetrics {
        frame,
        edge_error,
        area_error,
        collision_error,
    })
}

fn stat(values: impl Iterator<Item = f64> + Clone) -> Stat {
    let n = values.clone().count();
    if n == 0 {
        return Stat { mean: 0.0, std: 0.0 };
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Stat { mean, std: var.sqrt() }
}

pub fn sequence_metrics(frames: Vec<FrameMetrics>) -> SequenceMetrics {
    let edge_error = stat(frames.iter().map(|f| f.edge_error));
    let area_error = stat(frames.iter().map(|f| f.area_error));
    let collision_error = stat(frames.iter().map(|f| f.collision_error));
    SequenceMetrics {
        frames,
        edge_error,
        area_error,
        collision_error,
    }
}

impl SequenceMetrics {
    /// CSV with one row per frame followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,eps_e,eps_a,eps_c\n");
        for f in &self.frames {
            writeln!(out, "{},{:.9},{:.9},{:.9}", f.frame, f.edge_error, f.area_error, f.collision_error).unwrap();
        }
        for (label, pick) in [("mean", (|s: &Stat| s.mean) as fn(&Stat) -> f64), ("std", |s: &Stat| s.std)] {
            writeln!(
                out,
                "{label},{:.9},{:.9},{:.9}",
                pick(&self.edge_error),
                pick(&self.area_error),
                pick(&self.collision_error)
            )
            .unwrap();
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::precompute_rest;
    use crate::fixtures;
    use crate::mesh::{RingMode, Vec3};

    fn grid_rest() -> GarmentRestState {
        precompute_rest(&fixtures::grid(6, 1.0), None, 0.2, RingMode::Closed).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let rest = grid_rest();
        let m = frame_metrics(0, &rest.template, &rest, None, Deviation::Absolute).unwrap();
        assert_eq!((m.edge_error, m.area_error, m.collision_error), (0.0, 0.0, 0.0));
    }

    #[test]
    fn uniform_scale() {
        let rest = grid_rest();
        let scaled = rest.template.with_vertices(rest.template.vertices.iter().map(|v| v * 1.05).collect());
        let m = frame_metrics(0, &scaled, &rest, None, Deviation::Absolute).unwrap();
        assert!((m.edge_error - 5.0).abs() < 1e-9);
        assert!((m.area_error - 10.25).abs() < 1e-9);
        let shrunk = rest.template.with_vertices(rest.template.vertices.iter().map(|v| v * 0.95).collect());
        let s = frame_metrics(0, &shrunk, &rest, None, Deviation::Signed).unwrap();
        assert!((s.edge_error + 5.0).abs() < 1e-9);
    }

    #[test]
    fn rigid_motion_invariant() {
        let rest = grid_rest();
        let r = nalgebra::Rotation3::from_scaled_axis(Vec3::new(0.3, -0.7, 1.1));
        let moved = rest
            .template
            .with_vertices(rest.template.vertices.iter().map(|v| r * v + Vec3::new(1.0, 2.0, 3.0)).collect());
        let m = frame_metrics(0, &moved, &rest, None, Deviation::Absolute).unwrap();
        assert!(m.edge_error < 1e-12 && m.area_error < 1e-12);
    }

    #[test]
    fn half_inside_sphere() {
        let body = BodySdf::new(fixtures::uv_sphere(1.0, 24, 48)).unwrap();
        let rest = grid_rest();
        let n = rest.vertex_count();
        let placed = (0..n)
            .map(|i| if i < n / 2 { Vec3::new(0.0, 0.0, 0.01 * i as f64) } else { Vec3::new(3.0, 0.0, i as f64) })
            .collect();
        let mesh = rest.template.with_vertices(placed);
        let m = frame_metrics(0, &mesh, &rest, Some(&body), Deviation::Absolute).unwrap();
        assert_eq!(m.collision_error, 50.0);
    }

    #[test]
    fn topology_mismatch() {
        let rest = grid_rest();
        let other = fixtures::grid(5, 1.0);
        assert!(frame_metrics(0, &other, &rest, None, Deviation::Absolute).is_err());
    }

    #[test]
    fn sequence_statistics() {
        let f = |frame, c| FrameMetrics {
            frame,
            edge_error: 3.0,
            area_error: 1.0,
            collision_error: c,
        };
        let s = sequence_metrics(vec![f(0, 0.0), f(1, 2.0)]);
        assert_eq!(s.collision_error, Stat { mean: 1.0, std: 1.0 });
        assert_eq!(s.edge_error, Stat { mean: 3.0, std: 0.0 });
        let csv = s.to_csv();
        assert!(csv.starts_with("frame,eps_e,eps_a,eps_c\n0,"));
        assert!(csv.contains("\nmean,3.000000000,1.000000000,1.000000000\n"));
        assert!(csv.ends_with("std,0.000000000,0.000000000,1.000000000\n"));
    }
}
