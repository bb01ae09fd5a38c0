use drapekit::body::Pose;
use drapekit::energy::{precompute_rest, EnergyParams, GarmentRestState};
use drapekit::mesh::{RingMode, TriMesh};
use drapekit::solver::{static_drape, step_frame, Pins, Scene, SimState, SolverConfig};
use drapekit::{fixtures, Vec3};

fn rest_of(mesh: &TriMesh) -> GarmentRestState {
    precompute_rest(mesh, None, 0.2, RingMode::Closed).unwrap()
}

fn gravity_only() -> EnergyParams {
    EnergyParams {
        mu: 0.0,
        lambda: 0.0,
        bending_stiffness: 0.0,
        collision_stiffness: 0.0,
        inext_stiffness: 0.0,
        ..EnergyParams::default()
    }
}

fn centroid(x: &[Vec3]) -> Vec3 {
    x.iter().sum::<Vec3>() / x.len() as f64
}

/// One particle under implicit Euler: minimizes `|x - x0 - h v|^2 / (2 h^2) - g.x`.
fn particle_oracle(x0: Vec3, v0: Vec3, g: Vec3, h: f64, frames: usize) -> Vec<Vec3> {
    let (mut x, mut v) = (x0, v0);
    (0..frames)
        .map(|_| {
            let next = x + v * h + g * (h * h);
            v = (next - x) / h;
            x = next;
            x
        })
        .collect()
}

#[test]
fn free_fall_follows_implicit_euler() {
    let cloth = fixtures::grid(8, 1.0);
    let rest = rest_of(&cloth);
    let params = gravity_only();
    let config = SolverConfig::default();
    let scene = Scene { rest: &rest, body: None, weights: None, params: &params, config: &config, pins: None };
    let frames = 60;
    let oracle = particle_oracle(centroid(&cloth.vertices), Vec3::zeros(), params.gravity, params.dt, frames);
    let mut state = SimState::at_rest(&cloth.vertices);
    for expected in &oracle {
        state = step_frame(&state, &Pose::identity(1), &scene).unwrap().0;
        assert!((centroid(&state.positions) - expected).norm() < 1e-6);
    }
    // implicit Euler lags the ballistic drop by a factor (n + 1) / n
    let t = frames as f64 * params.dt;
    let ballistic = 0.5 * params.gravity.z * t * t;
    let drop = centroid(&state.positions).z - centroid(&cloth.vertices).z;
    assert!(((drop - ballistic) / ballistic).abs() < 0.02);
}

fn mirror_map(mesh: &TriMesh) -> Vec<usize> {
    mesh.vertices
        .iter()
        .map(|p| {
            let q = Vec3::new(-p.x, p.y, p.z);
            (0..mesh.vertices.len())
                .min_by(|&a, &b| (mesh.vertices[a] - q).norm().total_cmp(&(mesh.vertices[b] - q).norm()))
                .unwrap()
        })
        .collect()
}

#[test]
fn cloth_hanging_from_two_corners_is_symmetric() {
    let flat = fixtures::grid(11, 1.0);
    // hung in the xz-plane
    let cloth = flat.with_vertices(flat.vertices.iter().map(|p| Vec3::new(p.x, 0.0, p.y)).collect());
    let mirror = mirror_map(&cloth);
    for (i, &m) in mirror.iter().enumerate() {
        assert!((cloth.vertices[m] - Vec3::new(-cloth.vertices[i].x, 0.0, cloth.vertices[i].z)).norm() < 1e-12);
    }
    let sorted = |f: [usize; 3]| {
        let mut f = f;
        f.sort();
        f
    };
    let faces: std::collections::HashSet<[usize; 3]> = cloth.faces.iter().map(|&f| sorted(f)).collect();
    for f in &cloth.faces {
        assert!(faces.contains(&sorted(f.map(|v| mirror[v]))), "triangulation is not mirror symmetric");
    }
    let corners: Vec<usize> = (0..cloth.vertices.len())
        .filter(|&i| cloth.vertices[i].z > 0.49 && cloth.vertices[i].x.abs() > 0.49)
        .collect();
    assert_eq!(corners.len(), 2);
    let rest = rest_of(&cloth);
    let params = fixtures::sphere_drop_params();
    let config = SolverConfig { max_iterations: 100, static_outer_iterations: 10, ..SolverConfig::default() };
    let pins = Pins::at(corners.clone(), &cloth.vertices);
    let scene = Scene { rest: &rest, body: None, weights: None, params: &params, config: &config, pins: Some(&pins) };
    let (state, report) = static_drape(&cloth.vertices, &Pose::identity(1), &scene).unwrap();
    assert!(report.frames.iter().all(|f| f.energy_history.windows(2).all(|w| w[1] <= w[0])));
    let x = &state.positions;
    for &c in &corners {
        assert_eq!(x[c], cloth.vertices[c]);
    }
    let top_middle = (0..x.len()).find(|&i| cloth.vertices[i].z > 0.49 && cloth.vertices[i].x.abs() < 1e-12).unwrap();
    assert!(x[top_middle].z < 0.5 - 1e-5, "top edge did not sag: {}", x[top_middle].z);
    for (i, &m) in mirror.iter().enumerate() {
        let reflected = Vec3::new(-x[m].x, x[m].y, x[m].z);
        assert!((x[i] - reflected).norm() < 1e-6, "vertex {i}: {}", (x[i] - reflected).norm());
    }
}

#[test]
fn accepted_steps_never_increase_energy() {
    let body = fixtures::sphere_body(1.0);
    let cloth = fixtures::sphere_drop_cloth(12);
    let sdf = drapekit::body::BodySdf::new(body.mesh.clone()).unwrap();
    let rest = precompute_rest(&cloth, Some(&sdf), 0.2, RingMode::Closed).unwrap();
    let params = fixtures::sphere_drop_params();
    let config = SolverConfig::default();
    let scene = Scene { rest: &rest, body: Some(&body), weights: None, params: &params, config: &config, pins: None };
    let mut state = SimState::at_rest(&cloth.vertices);
    for _ in 0..15 {
        let (next, report) = step_frame(&state, &Pose::identity(1), &scene).unwrap();
        assert!(report.energy_history.windows(2).all(|w| w[1] <= w[0]));
        state = next;
    }
}

#[test]
fn pinned_corner_stays_at_target() {
    let strip = fixtures::grid(5, 1.0);
    let rest = rest_of(&strip);
    let params = fixtures::sphere_drop_params();
    let config = SolverConfig::default();
    let target = strip.vertices[0] + Vec3::new(0.0, 0.0, 0.01);
    let pins = Pins::new(vec![0], vec![target]).unwrap();
    let scene = Scene { rest: &rest, body: None, weights: None, params: &params, config: &config, pins: Some(&pins) };
    let mut state = SimState::at_rest(&strip.vertices);
    for _ in 0..5 {
        state = step_frame(&state, &Pose::identity(1), &scene).unwrap().0;
        assert_eq!(state.positions[0], target);
    }
}

#[test]
fn trajectories_are_bitwise_reproducible() {
    let body = fixtures::sphere_body(1.0);
    let cloth = fixtures::sphere_drop_cloth(10);
    let sdf = drapekit::body::BodySdf::new(body.mesh.clone()).unwrap();
    let rest = precompute_rest(&cloth, Some(&sdf), 0.2, RingMode::Closed).unwrap();
    let params = fixtures::sphere_drop_params();
    let config = SolverConfig::default();
    let scene = Scene { rest: &rest, body: Some(&body), weights: None, params: &params, config: &config, pins: None };
    let run = || {
        let mut state = SimState::at_rest(&cloth.vertices);
        for _ in 0..10 {
            state = step_frame(&state, &Pose::identity(1), &scene).unwrap().0;
        }
        state
    };
    assert_eq!(run(), run());
}
