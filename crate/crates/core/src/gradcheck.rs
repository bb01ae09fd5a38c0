//! Central finite-difference checks of analytic energy gradients.
//!
//! A probe perturbs one coordinate of one vertex by `+-h`. Probes whose
//! stencil touches a non-smooth locus of the term (collision margin crossing,
//! a vanishing inextensibility determinant, a dihedral near `+-pi`) are
//! skipped and counted separately.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::rest::ring_covariance;
use crate::body::BodySdf;
use crate::energy::{bending::dihedral_angle, term_energy, EnergyContext, EnergyParams, GarmentRestState, Term};
use crate::mesh::Vec3;

/// Probes closer than this to a kink (in the kink's own units) are skipped.
pub const KINK_DISTANCE: f64 = 1e-5;
/// Inextensibility probes with a determinant below this are skipped.
pub const DET_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub vertex: usize,
    pub axis: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes_used: usize,
    pub probes_skipped: usize,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.max_relative_error = self.max_relative_error.max(other.max_relative_error);
        self.probes_used += other.probes_used;
        self.probes_skipped += other.probes_skipped;
    }
}

/// Relative error with a floor tied to the largest analytic gradient entry,
/// so entries that are zero up to roundoff do not dominate.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8 * scale).max(f64::MIN_POSITIVE);
    (analytic - numeric).abs() / denom
}

/// Smoothness indicators of `term` around `vertex`; a kink lies where one
/// crosses zero (or, for bending, where `pi - |theta|` does).
fn kink_indicators(term: Term, x: &[Vec3], ctx: &EnergyContext<'_>, vertex: usize) -> Vec<f64> {
    match term {
        Term::Collision => match ctx.body {
            Some(body) => vec![ctx.params.collision_margin - body.query(&x[vertex]).distance],
            None => vec![],
        },
        Term::Inext => ctx
            .rest
            .topology
            .rings
            .iter()
            .filter(|r| r.neighbors.contains(&vertex))
            .flat_map(|r| {
                let c = ring_covariance(x, &r.neighbors);
                let k = ctx.k_ext[r.center];
                ctx.rest.sigma[r.center]
                    .map(|s| (c - Matrix3::identity() * (k * s)).determinant())
            })
            .collect(),
        Term::Bending => ctx
            .rest
            .bending
            .iter()
            .filter(|e| [e.v0, e.v1, e.wings[0], e.wings[1]].contains(&vertex))
            .map(|e| std::f64::consts::PI - dihedral_angle(&x[e.v0], &x[e.v1], &x[e.wings[0]], &x[e.wings[1]]).abs())
            .collect(),
        _ => vec![],
    }
}

fn near_kink(term: Term, plus: &[f64], minus: &[f64]) -> bool {
    let floor = if term == Term::Inext { DET_FLOOR } else { KINK_DISTANCE };
    plus.iter()
        .zip(minus)
        .any(|(&a, &b)| a.signum() != b.signum() || a.abs() < floor || b.abs() < floor)
}

/// Compares the analytic gradient of `term` at `x` with central differences.
pub fn check_term(term: Term, x: &[Vec3], ctx: &EnergyContext<'_>, probes: &[Probe], step: f64) -> GradCheckReport {
    let analytic = term_energy(term, x, ctx).gradient;
    let scale = analytic.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let mut report = GradCheckReport::default();
    let mut work = x.to_vec();
    for p in probes {
        let orig = work[p.vertex][p.axis];
        work[p.vertex][p.axis] = orig + step;
        let plus = term_energy(term, &work, ctx).value;
        let plus_kinks = kink_indicators(term, &work, ctx, p.vertex);
        work[p.vertex][p.axis] = orig - step;
        let minus = term_energy(term, &work, ctx).value;
        let minus_kinks = kink_indicators(term, &work, ctx, p.vertex);
        work[p.vertex][p.axis] = orig;

        if near_kink(term, &plus_kinks, &minus_kinks) {
            report.probes_skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[p.vertex][p.axis], numeric, scale);
        report.max_relative_error = report.max_relative_error.max(err);
        report.probes_used += 1;
    }
    report
}

/// Random-state gradient check settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub trials: usize,
    pub probes_per_trial: usize,
    /// Central-difference step (m).
    pub step: f64,
    /// Standard scale of the per-coordinate jitter (m).
    pub noise: f64,
    /// Amplitude of the smooth out-of-plane bump (m).
    pub bump: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            probes_per_trial: 30,
            step: 1e-6,
            noise: 0.01,
            bump: 0.05,
            seed: 0,
        }
    }
}

/// Checks `term` at `trials` random states near the template: smooth bump
/// plus jitter, random extension factors in `[1, 2)` and a jittered inertial
/// prediction.
pub fn gradient_suite(
    term: Term,
    rest: &GarmentRestState,
    body: Option<&BodySdf>,
    params: &EnergyParams,
    cfg: &SuiteConfig,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = rest.vertex_count();
    let template = &rest.template.vertices;
    let centroid = template.iter().sum::<Vec3>() / n as f64;
    let extent = template.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max).max(1e-12);
    let mut report = GradCheckReport::default();
    for _ in 0..cfg.trials {
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let jitter = |rng: &mut ChaCha8Rng| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let x: Vec<Vec3> = template
            .iter()
            .map(|p| {
                let r = (p - centroid) / extent;
                let lift = cfg.bump * (3.0 * r.x + phase).sin() * (2.0 * r.y).cos();
                p + Vec3::z() * lift + jitter(&mut rng) * cfg.noise
            })
            .collect();
        let predicted: Vec<Vec3> = x.iter().map(|p| p + jitter(&mut rng) * cfg.noise).collect();
        let k_ext: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..2.0)).collect();
        let ctx = EnergyContext {
            rest,
            params,
            body,
            predicted: Some(&predicted),
            k_ext: &k_ext,
        };
        let probes: Vec<Probe> = (0..cfg.probes_per_trial)
            .map(|_| Probe {
                vertex: rng.gen_range(0..n),
                axis: rng.gen_range(0..3),
            })
            .collect();
        report.merge(&check_term(term, &x, &ctx, &probes, cfg.step));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 1.1, 1.0) - 0.1 / 1.1).abs() < 1e-15);
        // both tiny relative to the gradient scale: measured against the floor
        assert!(relative_error(1e-20, 0.0, 1.0) < 1e-11);
    }
}
