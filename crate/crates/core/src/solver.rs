//! Per-frame variational integration by energy minimization.
//!
//! The optimization variable is the unposed garment. Each iterate is skinned
//! to world space, where every energy is evaluated, and the gradient is
//! pulled back through the per-vertex blend transforms. Descent uses
//! L-BFGS directions preconditioned by a constant sparse inertia-plus-membrane
//! matrix and an
//! Armijo backtracking line search, so it only ever needs gradients.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::body::{apply_blend, blend_transforms, pose_body, BlendTransform, BodySdf, Pose, SkinnedBody};
use crate::energy::{
    inertial_prediction, k_ext_schedule, total_energy, EnergyBreakdown, EnergyContext, EnergyParams, GarmentRestState,
};
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::skinning::GarmentWeights;

/// Share of the lumped inertia kept in the preconditioner of static solves.
const STATIC_INERTIA_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMode {
    #[default]
    Dynamic,
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when the largest per-vertex gradient norm (N) falls below this.
    pub gradient_tolerance: f64,
    /// Step shrink factor in `(0, 1)`.
    pub backtrack_factor: f64,
    /// Sufficient-decrease constant of the Armijo condition.
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    /// Number of L-BFGS correction pairs kept.
    pub history: usize,
    pub mode: SolverMode,
    /// Outer iterations of a static drape; the ramp counter advances once per outer iteration.
    pub static_outer_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-6,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 40,
            history: 8,
            mode: SolverMode::Dynamic,
            static_outer_iterations: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidParameter("gradient_tolerance must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidParameter("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 0.5) {
            return Err(Error::InvalidParameter("sufficient_decrease must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Garment state between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// World-space positions (m).
    pub positions: Vec<Vec3>,
    /// World-space velocities (m/s).
    pub velocities: Vec<Vec3>,
    /// Unposed positions of the last solve, used as the next initial guess.
    pub unposed: Vec<Vec3>,
    pub frame: usize,
    /// Ramp counter of the extension schedule.
    pub ramp: usize,
    /// Penetration depth `max(margin - d, 0)` per vertex from the last solve.
    pub penetration: Vec<f64>,
}

impl SimState {
    /// At rest in the given unposed shape, with world positions equal to it.
    pub fn at_rest(unposed: &[Vec3]) -> Self {
        let n = unposed.len();
        Self {
            positions: unposed.to_vec(),
            velocities: vec![Vec3::zeros(); n],
            unposed: unposed.to_vec(),
            frame: 0,
            ramp: 0,
            penetration: vec![0.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.velocities.len() != n || self.unposed.len() != n || self.penetration.len() != n {
            return Err(Error::DimensionMismatch("simulation state arrays differ in length".into()));
        }
        let finite = |v: &[Vec3]| v.iter().all(|p| p.iter().all(|c| c.is_finite()));
        if !finite(&self.positions) || !finite(&self.velocities) || !finite(&self.unposed) {
            return Err(Error::InvalidParameter("simulation state is not finite".into()));
        }
        Ok(())
    }
}

/// Unposed coordinates held fixed at targets during every solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pins {
    pub vertices: Vec<usize>,
    pub targets: Vec<Vec3>,
}

impl Pins {
    pub fn new(vertices: Vec<usize>, targets: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != targets.len() {
            return Err(Error::DimensionMismatch("pin vertices and targets differ in length".into()));
        }
        Ok(Self { vertices, targets })
    }

    /// Pins `vertices` where they currently are in `positions`.
    pub fn at(vertices: Vec<usize>, positions: &[Vec3]) -> Self {
        let targets = vertices.iter().map(|&v| positions[v]).collect();
        Self { vertices, targets }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn project(&self, x: &mut [Vec3]) {
        for (&v, t) in self.vertices.iter().zip(&self.targets) {
            x[v] = *t;
        }
    }

    fn mask(&self, g: &mut [Vec3]) {
        for &v in &self.vertices {
            g[v] = Vec3::zeros();
        }
    }
}

/// Projects pinned coordinates of `state` onto their targets.
pub fn pin_constraints(state: &SimState, pins: &Pins) -> SimState {
    let mut out = state.clone();
    pins.project(&mut out.unposed);
    pins.project(&mut out.positions);
    for &v in &pins.vertices {
        out.velocities[v] = Vec3::zeros();
    }
    out
}

/// Inputs shared by every frame of a run.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub rest: &'a GarmentRestState,
    pub body: Option<&'a SkinnedBody>,
    /// Garment blend weights; without them the garment is not skinned.
    pub weights: Option<&'a GarmentWeights>,
    pub params: &'a EnergyParams,
    pub config: &'a SolverConfig,
    pub pins: Option<&'a Pins>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub iterations: usize,
    pub converged: bool,
    /// A line search found no decrease; the best iterate so far was kept.
    pub line_search_failed: bool,
    /// Energy and gradient evaluations, including rejected trial steps.
    pub evaluations: usize,
    /// Total energy after each accepted step, starting with the initial value.
    pub energy_history: Vec<f64>,
    pub energy: EnergyBreakdown,
}

/// World-space body and garment skinning for one pose.
pub struct PosedFrame {
    pub body: Option<BodySdf>,
    pub transforms: Option<Vec<BlendTransform>>,
}

impl PosedFrame {
    pub fn new(scene: &Scene<'_>, pose: &Pose) -> Result<Self> {
        let body = scene.body.map(|b| pose_body(b, pose).and_then(BodySdf::new)).transpose()?;
        let transforms = match (scene.body, scene.weights) {
            (Some(b), Some(w)) => {
                if w.vertex_count() != scene.rest.vertex_count() {
                    return Err(Error::DimensionMismatch(format!(
                        "garment weights have {} rows, garment has {} vertices",
                        w.vertex_count(),
                        scene.rest.vertex_count()
                    )));
                }
                let joints = b.skeleton.joint_transforms(pose)?;
                Some(blend_transforms(&w.weights, &joints)?)
            }
            _ => None,
        };
        Ok(Self { body, transforms })
    }

    pub fn skin(&self, unposed: &[Vec3]) -> Vec<Vec3> {
        match &self.transforms {
            Some(t) => apply_blend(t, unposed),
            None => unposed.to_vec(),
        }
    }

    fn pull_back(&self, grad: &mut [Vec3]) {
        if let Some(t) = &self.transforms {
            for (g, t) in grad.iter_mut().zip(t) {
                *g = t.pull_back(g);
            }
        }
    }
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn max_norm(g: &[Vec3]) -> f64 {
    g.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Constant SPD approximation of the Hessian: lumped inertia plus a
/// per-coordinate membrane Laplacian weighted by `2 mu + lambda`. Pinned
/// vertices are decoupled so that directions vanish there.
struct Preconditioner {
    factor: CscCholesky<f64>,
}

impl Preconditioner {
    /// `inertia_scale` multiplies the lumped inertia; static solves keep a
    /// small fraction of it to fix the translational null space.
    fn new(rest: &GarmentRestState, params: &EnergyParams, pins: Option<&Pins>, inertia_scale: f64) -> Result<Self> {
        let n = rest.vertex_count();
        let mut pinned = vec![false; n];
        if let Some(p) = pins {
            for &v in &p.vertices {
                pinned[v] = true;
            }
        }
        let inv_dt2 = inertia_scale / (params.dt * params.dt);
        let mut coo = CooMatrix::new(n, n);
        for (v, &m) in rest.mass.iter().enumerate() {
            coo.push(v, v, if pinned[v] { 1.0 } else { m * inv_dt2 });
        }
        let k = 2.0 * params.mu + params.lambda;
        if k > 0.0 {
            for (f, face) in rest.template.faces.iter().enumerate() {
                let inv = &rest.dm_inv[f];
                let gb = inv.row(0).transpose();
                let gc = inv.row(1).transpose();
                let grads = [-(gb + gc), gb, gc];
                let s = rest.face_area[f] * k;
                for (i, &vi) in face.iter().enumerate() {
                    for (j, &vj) in face.iter().enumerate() {
                        if !pinned[vi] && !pinned[vj] {
                            coo.push(vi, vj, s * grads[i].dot(&grads[j]));
                        }
                    }
                }
            }
        }
        let factor = CscCholesky::factor(&CscMatrix::from(&coo))
            .map_err(|e| Error::InvalidParameter(format!("solver preconditioner is not positive definite: {e}")))?;
        Ok(Self { factor })
    }

    fn apply(&self, v: &[Vec3]) -> Vec<Vec3> {
        let b = DMatrix::from_fn(v.len(), 3, |i, j| v[i][j]);
        let x = self.factor.solve(&b);
        (0..v.len()).map(|i| Vec3::new(x[(i, 0)], x[(i, 1)], x[(i, 2)])).collect()
    }
}

struct Objective<'a> {
    frame: &'a PosedFrame,
    rest: &'a GarmentRestState,
    params: &'a EnergyParams,
    predicted: Option<&'a [Vec3]>,
    k_ext: &'a [f64],
    pins: Option<&'a Pins>,
}

impl Objective<'_> {
    fn eval(&self, unposed: &[Vec3]) -> (EnergyBreakdown, Vec<Vec3>) {
        let world = self.frame.skin(unposed);
        let ctx = EnergyContext {
            rest: self.rest,
            params: self.params,
            body: self.frame.body.as_ref(),
            predicted: self.predicted,
            k_ext: self.k_ext,
        };
        let e = total_energy(&world, &ctx);
        let mut g = e.gradient.clone();
        self.frame.pull_back(&mut g);
        if let Some(p) = self.pins {
            p.mask(&mut g);
        }
        (e, g)
    }
}

/// Minimizes the objective from `x0`; returns the minimizer and a report.
fn minimize(obj: &Objective<'_>, x0: Vec<Vec3>, pre: &Preconditioner, cfg: &SolverConfig) -> Result<(Vec<Vec3>, FrameReport)> {
    let mut x = x0;
    if let Some(p) = obj.pins {
        p.project(&mut x);
    }
    let (mut energy, mut g) = obj.eval(&x);
    let mut evaluations = 1;
    let mut history = vec![energy.total];
    let mut memory: VecDeque<(Vec<Vec3>, Vec<Vec3>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut line_search_failed = false;

    while iterations < cfg.max_iterations {
        if g.iter().any(|v| !v.iter().all(|c| c.is_finite())) || !energy.total.is_finite() {
            return Err(Error::NonFiniteGradient { iteration: iterations });
        }
        if max_norm(&g) < cfg.gradient_tolerance {
            converged = true;
            break;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let direction = if attempt == 0 && !memory.is_empty() {
                lbfgs_direction(&g, &memory, pre)
            } else {
                pre.apply(&g).into_iter().map(|v| -v).collect()
            };
            let slope = dot(&g, &direction);
            if !(slope < 0.0) {
                continue;
            }
            let mut step = 1.0;
            for _ in 0..cfg.max_backtracks {
                let mut trial: Vec<Vec3> = x.iter().zip(&direction).map(|(p, d)| p + d * step).collect();
                if let Some(p) = obj.pins {
                    p.project(&mut trial);
                }
                let (e, tg) = obj.eval(&trial);
                evaluations += 1;
                if e.total.is_finite() && e.total <= energy.total + cfg.sufficient_decrease * step * slope {
                    accepted = Some((trial, e, tg));
                    break;
                }
                step *= cfg.backtrack_factor;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }

        let Some((nx, ne, ng)) = accepted else {
            line_search_failed = true;
            break;
        };
        let s: Vec<Vec3> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<Vec3> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > cfg.history {
                memory.pop_front();
            }
        }
        x = nx;
        energy = ne;
        g = ng;
        history.push(energy.total);
        iterations += 1;
    }
    if !converged && iterations == cfg.max_iterations {
        converged = max_norm(&g) < cfg.gradient_tolerance;
    }

    Ok((
        x,
        FrameReport {
            iterations,
            converged,
            line_search_failed,
            evaluations,
            energy_history: history,
            energy,
        },
    ))
}

/// Two-loop recursion with the preconditioner as initial inverse Hessian.
fn lbfgs_direction(g: &[Vec3], memory: &VecDeque<(Vec<Vec3>, Vec<Vec3>, f64)>, pre: &Preconditioner) -> Vec<Vec3> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= yi * a;
        }
        alphas.push(a);
    }
    let mut r = pre.apply(&q);
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += si * (a - b);
        }
    }
    r.into_iter().map(|v| -v).collect()
}

fn check_state(state: &SimState, scene: &Scene<'_>) -> Result<()> {
    state.validate()?;
    scene.params.validate()?;
    scene.config.validate()?;
    if state.positions.len() != scene.rest.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} vertices, garment has {}",
            state.positions.len(),
            scene.rest.vertex_count()
        )));
    }
    Ok(())
}

/// Advances one frame: poses the body, minimizes the total energy over the
/// unposed garment with the extension factor from the previous penetration,
/// skins the minimizer and updates velocities.
pub fn step_frame(state: &SimState, pose: &Pose, scene: &Scene<'_>) -> Result<(SimState, FrameReport)> {
    check_state(state, scene)?;
    step_posed(state, &PosedFrame::new(scene, pose)?, scene)
}

fn step_posed(state: &SimState, frame: &PosedFrame, scene: &Scene<'_>) -> Result<(SimState, FrameReport)> {
    let params = scene.params;
    let dynamic = scene.config.mode == SolverMode::Dynamic && params.inertia;
    let mut step_params = params.clone();
    step_params.inertia = dynamic;

    let k_ext = k_ext_schedule(&state.penetration, state.ramp, params);
    let predicted = dynamic.then(|| inertial_prediction(&state.positions, &state.velocities, params.dt));
    let inertia_scale = if dynamic { 1.0 } else { STATIC_INERTIA_SCALE };
    let pre = Preconditioner::new(scene.rest, params, scene.pins, inertia_scale)?;
    let obj = Objective {
        frame,
        rest: scene.rest,
        params: &step_params,
        predicted: predicted.as_deref(),
        k_ext: &k_ext,
        pins: scene.pins,
    };
    let (unposed, report) = minimize(&obj, state.unposed.clone(), &pre, scene.config)?;
    let positions = frame.skin(&unposed);
    let velocities = if dynamic {
        positions
            .iter()
            .zip(&state.positions)
            .map(|(n, o)| (n - o) / params.dt)
            .collect()
    } else {
        vec![Vec3::zeros(); positions.len()]
    };
    let next = SimState {
        positions,
        velocities,
        unposed,
        frame: state.frame + 1,
        ramp: state.ramp + 1,
        penetration: report.energy.penetration.clone(),
    };
    Ok((next, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrapeReport {
    pub outer_iterations: usize,
    pub frames: Vec<FrameReport>,
}

/// Equilibrium drape without inertia. Each outer iteration refreshes the
/// extension factor from the latest penetration and advances the ramp.
pub fn static_drape(initial: &[Vec3], pose: &Pose, scene: &Scene<'_>) -> Result<(SimState, DrapeReport)> {
    let mut config = scene.config.clone();
    config.mode = SolverMode::Static;
    let scene = Scene {
        config: &config,
        ..*scene
    };
    let mut state = SimState::at_rest(initial);
    let mut frames = Vec::new();
    for _ in 0..config.static_outer_iterations.max(1) {
        let (next, report) = step_frame(&state, pose, &scene)?;
        let done = report.iterations == 0 && report.converged;
        let frame = state.frame;
        state = next;
        state.frame = frame;
        frames.push(report);
        if done {
            break;
        }
    }
    Ok((
        state,
        DrapeReport {
            outer_iterations: frames.len(),
            frames,
        },
    ))
}

/// Steps through `poses` from `initial`, calling `on_frame` after every
/// frame with the new state, its report and the posed body of that frame.
pub fn simulate<F>(initial: SimState, poses: &[Pose], scene: &Scene<'_>, mut on_frame: F) -> Result<SimState>
where
    F: FnMut(&SimState, &FrameReport, Option<&BodySdf>) -> Result<()>,
{
    check_state(&initial, scene)?;
    let mut state = initial;
    for pose in poses {
        let frame = PosedFrame::new(scene, pose)?;
        let (next, report) = step_posed(&state, &frame, scene)?;
        on_frame(&next, &report, frame.body.as_ref())?;
        state = next;
    }
    Ok(state)
}

/// Skinned world mesh of a state.
pub fn world_mesh(rest: &GarmentRestState, state: &SimState) -> TriMesh {
    rest.template.with_vertices(state.positions.clone())
}
