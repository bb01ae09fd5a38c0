//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use drapekit::body::{BodySdf, Pose};
use drapekit::energy::{
    gravity_energy, inext_energy, naive_edge_energy, precompute_rest, strain_energy, EnergyParams, GarmentRestState,
    Term,
};
use drapekit::gradcheck::{gradient_suite, SuiteConfig};
use drapekit::mesh::{RingMode, TriMesh};
use drapekit::metrics::{frame_metrics, Deviation};
use drapekit::skinning::{
    garment_weights_knn, garment_weights_nearest, garment_weights_rbf, participation_matrix, DEFAULT_RBF_K,
};
use drapekit::solver::{step_frame, Scene, SimState, SolverConfig};
use drapekit::{fixtures, Vec3};
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn grid_rest(n: usize) -> GarmentRestState {
    precompute_rest(&fixtures::grid(n, 1.0), None, 0.2, RingMode::Closed).unwrap()
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let cloth = fixtures::grid(20, 1.0);
    let sphere = fixtures::uv_sphere(0.3, 24, 48);
    // body just under the cloth so collision probes see both sides of the margin
    let body = BodySdf::new(
        TriMesh::new(sphere.vertices.iter().map(|p| p - Vec3::new(0.0, 0.0, 0.3)).collect(), sphere.faces).unwrap(),
    )
    .unwrap();
    let rest = precompute_rest(&cloth, Some(&body), 0.2, RingMode::Closed).unwrap();
    let params = EnergyParams::default();
    let cfg = SuiteConfig::default();
    let mut worst: (f64, Term) = (0.0, Term::Strain);
    let mut enough = true;
    for term in Term::ALL {
        let r = gradient_suite(term, &rest, Some(&body), &params, &cfg);
        enough &= r.probes_used > 0;
        if !(r.max_relative_error <= worst.0) {
            worst = (r.max_relative_error, term);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst.0 < 1e-4 && enough && secs < 60.0,
        format!("worst {:.2e} ({}), {} states per term, {secs:.1} s", worst.0, worst.1, cfg.trials),
    )
}

fn random_rigid(rng: &mut ChaCha8Rng) -> (Rotation3<f64>, Vec3) {
    let axis = Unit::new_normalize(Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let r = Rotation3::from_axis_angle(&axis, rng.gen_range(-3.1..3.1));
    let t = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    (r, t)
}

fn rigid_invariance() -> Outcome {
    let rest = grid_rest(12);
    let params = EnergyParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // a bent, stretched state so every energy is well away from zero
    let base: Vec<Vec3> = rest
        .template
        .vertices
        .iter()
        .map(|p| Vec3::new(1.1 * p.x, p.y, 0.2 * (3.0 * p.x).sin() + 0.1 * p.y * p.y))
        .collect();
    let ones = vec![1.0; base.len()];
    let energies = |x: &[Vec3]| {
        [
            inext_energy(x, &rest, &ones, params.inext_stiffness).value,
            naive_edge_energy(x, &rest).value,
            strain_energy(x, &rest, params.mu, params.lambda).value,
        ]
    };
    let e0 = energies(&base);
    let g0 = gravity_energy(&base, &rest.mass, &params.gravity).value;
    let mut worst = 0.0f64;
    let mut worst_gravity = 0.0f64;
    for _ in 0..100 {
        let (r, t) = random_rigid(&mut rng);
        let moved: Vec<Vec3> = base.iter().map(|p| r * p + t).collect();
        for (a, b) in e0.iter().zip(energies(&moved)) {
            worst = worst.max(rel(*a, b));
        }
        let shifted: Vec<Vec3> = base.iter().map(|p| p + t).collect();
        let g = gravity_energy(&shifted, &rest.mass, &params.gravity).value;
        let expected = g0 - rest.mass.iter().sum::<f64>() * params.gravity.dot(&t);
        worst_gravity = worst_gravity.max((g - expected).abs() / g0.abs().max(1.0));
    }
    check(
        worst < 1e-8 && worst_gravity < 1e-12,
        format!("energies {worst:.2e} rel, gravity linearity {worst_gravity:.2e}"),
    )
}

/// Each closed one-ring built from the faces: the center and every vertex sharing a face with it.
fn rings_from_faces(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut rings = vec![BTreeSet::new(); mesh.vertex_count()];
    for f in &mesh.faces {
        for &a in f {
            rings[a].extend(f.iter().copied());
        }
    }
    rings.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// In-plane second moments of a ring of a flat (z = 0) mesh, as the two
/// eigenvalues from the 2x2 closed form.
fn planar_spectrum(points: &[Vec3]) -> [f64; 2] {
    let n = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.x).sum::<f64>() / n, points.iter().map(|p| p.y).sum::<f64>() / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let mid = 0.5 * (sxx + syy);
    let rad = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    [mid + rad, mid - rad]
}

fn inext_identity() -> Outcome {
    let rest = grid_rest(12);
    let k_i = EnergyParams::default().inext_stiffness;
    let ones = vec![1.0; rest.vertex_count()];
    let template = &rest.template.vertices;
    let at_rest = inext_energy(template, &rest, &ones, k_i).value;

    let s = 1.05f64;
    let scaled: Vec<Vec3> = template.iter().map(|p| p * s).collect();
    let value = inext_energy(&scaled, &rest, &ones, k_i).value;
    // scaling multiplies the ring covariance by s^2, so
    // det(s^2 C - sigma_j I) = prod_i (s^2 sigma_i - sigma_j) with sigma_3 = 0
    let oracle: f64 = rings_from_faces(&rest.template)
        .iter()
        .map(|ring| {
            let pts: Vec<Vec3> = ring.iter().map(|&j| template[j]).collect();
            let [a, b] = planar_spectrum(&pts);
            let sigma = [a, b, 0.0];
            sigma
                .iter()
                .map(|&sj| sigma.iter().map(|&si| s * s * si - sj).product::<f64>().abs())
                .sum::<f64>()
        })
        .sum::<f64>()
        * k_i;
    check(
        at_rest < 1e-10 * k_i && value > 0.0 && rel(value, oracle) < 1e-8,
        format!("template {at_rest:.2e}, scaled {value:.6e} vs oracle {oracle:.6e} ({:.1e} rel)", rel(value, oracle)),
    )
}

fn skinning_algebra() -> Outcome {
    let body = fixtures::capsule_body();
    let skirt = fixtures::default_skirt();
    let p = participation_matrix(&skirt, &body.mesh, DEFAULT_RBF_K).unwrap();
    let rbf = garment_weights_rbf(&p, &body.weights, DEFAULT_RBF_K).unwrap();
    let nearest = garment_weights_nearest(&skirt, &body.mesh, &body.weights).unwrap();
    let knn4 = garment_weights_knn(&skirt, &body.mesh, &body.weights, 4).unwrap();
    let knn1 = garment_weights_knn(&skirt, &body.mesh, &body.weights, 1).unwrap();
    let row_sums = [&rbf, &nearest, &knn4].iter().map(|w| w.max_row_sum_deviation()).fold(0.0, f64::max);

    // tight limit: each garment vertex sits 1 cm off one body vertex, far
    // closer than to any other, so the kernel collapses onto that vertex
    let tight_points: Vec<Vec3> = body
        .mesh
        .vertices
        .iter()
        .map(|v| {
            let axis = Vec3::new(0.0, 0.0, v.z.clamp(-1.0, 1.0));
            v + (v - axis).normalize() * 0.01
        })
        .collect();
    let tight = body.mesh.with_vertices(tight_points);
    let tp = participation_matrix(&tight, &body.mesh, DEFAULT_RBF_K).unwrap();
    let tight_rbf = garment_weights_rbf(&tp, &body.weights, DEFAULT_RBF_K).unwrap();
    let tight_nearest = garment_weights_nearest(&tight, &body.mesh, &body.weights).unwrap();
    let tight_gap = (&tight_rbf.weights - &tight_nearest.weights).amax();
    let knn_exact = knn1.weights == nearest.weights;
    check(
        row_sums < 1e-6 && tight_gap < 1e-6 && knn_exact,
        format!("row sums {row_sums:.1e}, tight rbf vs nearest {tight_gap:.1e}, knn(1) == nearest: {knn_exact}"),
    )
}

struct DropRun {
    eps_e: f64,
    eps_c: f64,
    secs: f64,
}

/// The sphere drop through the binary, single-threaded; reads the final CSV frame.
fn sphere_drop(fixtures_dir: &Path, name: &str, overrides: &[&str]) -> Result<DropRun, String> {
    let start = Instant::now();
    let out_dir = format!("paths.output={name}");
    let mut args = vec!["simulate", "--config", "sphere_drop.cfg", "--set", &out_dir];
    for o in overrides {
        args.extend(["--set", o]);
    }
    let out = Command::new(env!("CARGO_BIN_EXE_drapekit"))
        .current_dir(fixtures_dir)
        .env("DRAPEKIT_THREADS", "1")
        .args(&args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{name}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    let secs = start.elapsed().as_secs_f64();
    let csv = fs::read_to_string(fixtures_dir.join(name).join("metrics.csv")).map_err(|e| e.to_string())?;
    let last = csv
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .last()
        .ok_or("empty metrics.csv")?;
    let cols: Vec<f64> = last.split(',').map(|c| c.parse().unwrap()).collect();
    Ok(DropRun {
        eps_e: cols[1],
        eps_c: cols[3],
        secs,
    })
}

fn sphere_drape(full: &Result<DropRun, String>) -> Outcome {
    let r = full.as_ref().map_err(|e| e.clone())?;
    check(
        r.eps_c < 0.5 && r.eps_e < 4.0 && r.secs < 300.0,
        format!("final eps_c {:.4} %, eps_e {:.4} %, {:.0} s", r.eps_c, r.eps_e, r.secs),
    )
}

fn ablation(dir: &Path, full: &Result<DropRun, String>) -> Outcome {
    let full = full.as_ref().map_err(|e| e.clone())?;
    let fixed = sphere_drop(dir, "fixed_ext", &["energy.ext_rate=0"])?;
    let no_inext = sphere_drop(dir, "no_inext", &["energy.inext_stiffness=0"])?;
    check(
        fixed.eps_c > full.eps_c && no_inext.eps_e >= full.eps_e,
        format!(
            "eps_c fixed {:.4} vs scheduled {:.4}; eps_e without inext {:.4} vs full {:.4}",
            fixed.eps_c, full.eps_c, no_inext.eps_e, full.eps_e
        ),
    )
}

fn metrics_arithmetic() -> Outcome {
    let rest = grid_rest(10);
    let template = &rest.template;
    let scaled = template.with_vertices(template.vertices.iter().map(|p| p * 1.05).collect());
    let m = frame_metrics(0, &scaled, &rest, None, Deviation::Absolute).map_err(|e| e.to_string())?;
    let id = frame_metrics(0, template, &rest, None, Deviation::Absolute).map_err(|e| e.to_string())?;
    check(
        (m.edge_error - 5.0).abs() < 1e-9
            && (m.area_error - 10.25).abs() < 1e-9
            && id.edge_error == 0.0
            && id.area_error == 0.0
            && id.collision_error == 0.0,
        format!("scaled eps_e {:.12} eps_a {:.12}; identity all zero: {}", m.edge_error, m.area_error, id.edge_error + id.area_error + id.collision_error == 0.0),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let run = |name: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out_dir = format!("paths.output={name}");
        let out = Command::new(env!("CARGO_BIN_EXE_drapekit"))
            .current_dir(dir)
            .args(["simulate", "--config", "sphere_drop.cfg", "--set", "run.frames=6", "--set", &out_dir])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.join(name))
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".obj") || n.ends_with(".csv"))
            .map(|n| {
                let bytes = fs::read(dir.join(name).join(&n)).unwrap();
                (n, bytes)
            })
            .collect();
        files.sort();
        Ok(files)
    };
    let a = run("det_a")?;
    let b = run("det_b")?;
    check(a.len() == 7 && a == b, format!("{} files compared, identical: {}", a.len(), a == b))
}

fn free_fall() -> Outcome {
    let cloth = fixtures::grid(8, 1.0);
    let rest = grid_rest(8);
    let params = EnergyParams {
        mu: 0.0,
        lambda: 0.0,
        bending_stiffness: 0.0,
        collision_stiffness: 0.0,
        inext_stiffness: 0.0,
        ..EnergyParams::default()
    };
    let config = SolverConfig::default();
    let scene = Scene { rest: &rest, body: None, weights: None, params: &params, config: &config, pins: None };
    let centroid = |x: &[Vec3]| x.iter().sum::<Vec3>() / x.len() as f64;
    let mut state = SimState::at_rest(&cloth.vertices);
    // single particle, implicit Euler: x' = x + h v + h^2 g, v' = (x' - x) / h
    let (mut x, mut v) = (centroid(&cloth.vertices), Vec3::zeros());
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let next = x + v * params.dt + params.gravity * (params.dt * params.dt);
        v = (next - x) / params.dt;
        x = next;
        state = step_frame(&state, &Pose::identity(1), &scene).map_err(|e| e.to_string())?.0;
        worst = worst.max((centroid(&state.positions) - x).norm());
    }
    check(worst < 1e-6, format!("60 frames, worst centroid gap {worst:.2e} m"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    drapekit_cli::cmd_make_fixtures(dir, 20).expect("fixtures");

    let full = sphere_drop(dir, "scheduled", &[]);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient suite", Box::new(gradients)),
        ("rigid invariance", Box::new(rigid_invariance)),
        ("inextensibility identity", Box::new(inext_identity)),
        ("skinning algebra", Box::new(skinning_algebra)),
        ("sphere drape", Box::new(|| sphere_drape(&full))),
        ("ablation direction", Box::new(|| ablation(dir, &full))),
        ("metrics arithmetic", Box::new(metrics_arithmetic)),
        ("determinism", Box::new(|| determinism(dir))),
        ("free fall", Box::new(free_fall)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
