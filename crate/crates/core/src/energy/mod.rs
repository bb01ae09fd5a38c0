//! Energy terms with analytic gradients with respect to garment positions.
//!
//! Every term returns a [`TermEval`]; [`total_energy`] sums them in a fixed
//! order. Terms are switched off by zeroing their stiffness.

pub mod bending;
pub mod inext;
pub mod potential;
pub mod rest;
pub mod strain;

use std::fmt;
use std::str::FromStr;

pub use bending::{bending_energy, dihedral_angle};
pub use inext::{inext_energy, naive_edge_energy};
pub use potential::{collision_energy, gravity_energy, inertia_energy, inertial_prediction, penetration_depths};
pub use rest::{precompute_rest, BendingEdge, GarmentRestState};
pub use strain::{lame_from_young_poisson, strain_energy};

use crate::body::BodySdf;
use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Value and per-vertex gradient of one energy term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermEval {
    pub value: f64,
    pub gradient: Vec<Vec3>,
}

impl TermEval {
    pub fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            gradient: vec![Vec3::zeros(); n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyParams {
    /// Lamé parameters (N/m, plane stress).
    pub mu: f64,
    pub lambda: f64,
    pub bending_stiffness: f64,
    pub collision_stiffness: f64,
    /// Collision margin (m).
    pub collision_margin: f64,
    pub inext_stiffness: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: Vec3,
    /// Timestep (s).
    pub dt: f64,
    /// Areal density (kg/m^2).
    pub density: f64,
    /// Include the inertia term (dynamic stepping).
    pub inertia: bool,
    /// `k_ext = 1 + min(ext_rate d_c, ext_cap) min(e, ramp_cap)`.
    pub ext_rate: f64,
    pub ext_cap: f64,
    pub ramp_cap: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        let (mu, lambda) = lame_from_young_poisson(6.0e4, 0.3);
        Self {
            mu,
            lambda,
            bending_stiffness: 1.0e-4,
            collision_stiffness: 5.0e4,
            collision_margin: 5.0e-3,
            inext_stiffness: 2.0e8,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            dt: 1.0 / 30.0,
            density: 0.2,
            inertia: true,
            ext_rate: 10.0,
            ext_cap: 0.03,
            ramp_cap: 100.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let stiff = [
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("bending_stiffness", self.bending_stiffness),
            ("collision_stiffness", self.collision_stiffness),
            ("inext_stiffness", self.inext_stiffness),
            ("collision_margin", self.collision_margin),
            ("ext_rate", self.ext_rate),
            ("ext_cap", self.ext_cap),
            ("ramp_cap", self.ramp_cap),
        ];
        for (name, v) in stiff {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.density > 0.0) {
            return Err(Error::InvalidParameter(format!("density must be positive, got {}", self.density)));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidParameter("gravity must be finite".into()));
        }
        Ok(())
    }
}

/// Per-vertex extension factor from penetration depth `d_c` and ramp count `e`.
pub fn k_ext_schedule(penetration: &[f64], ramp: usize, params: &EnergyParams) -> Vec<f64> {
    let ramp = (ramp as f64).min(params.ramp_cap);
    penetration
        .iter()
        .map(|&d| 1.0 + (params.ext_rate * d).min(params.ext_cap) * ramp)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Strain,
    Gravity,
    Collision,
    Bending,
    Inertia,
    Inext,
}

impl Term {
    pub const ALL: [Term; 6] = [
        Term::Strain,
        Term::Gravity,
        Term::Collision,
        Term::Bending,
        Term::Inertia,
        Term::Inext,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Strain => "strain",
            Term::Gravity => "gravity",
            Term::Collision => "collision",
            Term::Bending => "bending",
            Term::Inertia => "inertia",
            Term::Inext => "inext",
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Term::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown energy term '{s}'")))
    }
}

/// Everything the energy needs besides positions for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EnergyContext<'a> {
    pub rest: &'a GarmentRestState,
    pub params: &'a EnergyParams,
    pub body: Option<&'a BodySdf>,
    /// Inertial prediction `x_prev + dt v_prev`; required when inertia is on.
    pub predicted: Option<&'a [Vec3]>,
    pub k_ext: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub strain: f64,
    pub gravity: f64,
    pub collision: f64,
    pub bending: f64,
    pub inertia: f64,
    pub inext: f64,
    pub total: f64,
    pub gradient: Vec<Vec3>,
    /// `max(margin - d(x), 0)` per vertex; zero without a body.
    pub penetration: Vec<f64>,
}

impl EnergyBreakdown {
    pub fn term(&self, term: Term) -> f64 {
        match term {
            Term::Strain => self.strain,
            Term::Gravity => self.gravity,
            Term::Collision => self.collision,
            Term::Bending => self.bending,
            Term::Inertia => self.inertia,
            Term::Inext => self.inext,
        }
    }
}

/// Evaluates a single term; inactive terms return zeros.
pub fn term_energy(term: Term, x: &[Vec3], ctx: &EnergyContext<'_>) -> TermEval {
    let n = x.len();
    let p = ctx.params;
    match term {
        Term::Strain if p.mu != 0.0 || p.lambda != 0.0 => strain_energy(x, ctx.rest, p.mu, p.lambda),
        Term::Gravity if p.gravity != Vec3::zeros() => gravity_energy(x, &ctx.rest.mass, &p.gravity),
        Term::Collision if p.collision_stiffness != 0.0 => match ctx.body {
            Some(body) => collision_energy(x, body, p.collision_stiffness, p.collision_margin).term,
            None => TermEval::zero(n),
        },
        Term::Bending if p.bending_stiffness != 0.0 => bending_energy(x, ctx.rest, p.bending_stiffness),
        Term::Inertia if p.inertia => match ctx.predicted {
            Some(pred) => inertia_energy(x, pred, &ctx.rest.mass, p.dt),
            None => TermEval::zero(n),
        },
        Term::Inext if p.inext_stiffness != 0.0 => inext_energy(x, ctx.rest, ctx.k_ext, p.inext_stiffness),
        _ => TermEval::zero(n),
    }
}

/// Sum of all six terms, reduced in a fixed order.
pub fn total_energy(x: &[Vec3], ctx: &EnergyContext<'_>) -> EnergyBreakdown {
    let n = x.len();
    let p = ctx.params;
    let mut gradient = vec![Vec3::zeros(); n];
    let mut add = |t: &TermEval| {
        for (g, d) in gradient.iter_mut().zip(&t.gradient) {
            *g += d;
        }
        t.value
    };

    let strain = add(&term_energy(Term::Strain, x, ctx));
    let gravity = add(&term_energy(Term::Gravity, x, ctx));
    let (collision, penetration) = match ctx.body {
        Some(body) if p.collision_stiffness != 0.0 => {
            let c = collision_energy(x, body, p.collision_stiffness, p.collision_margin);
            (add(&c.term), c.penetration)
        }
        Some(body) => (0.0, penetration_depths(x, body, p.collision_margin)),
        None => (0.0, vec![0.0; n]),
    };
    let bending = add(&term_energy(Term::Bending, x, ctx));
    let inertia = add(&term_energy(Term::Inertia, x, ctx));
    let inext = add(&term_energy(Term::Inext, x, ctx));
    EnergyBreakdown {
        strain,
        gravity,
        collision,
        bending,
        inertia,
        inext,
        total: strain + gravity + collision + bending + inertia + inext,
        gradient,
        penetration,
    }
}
