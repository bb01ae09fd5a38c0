//! Command implementations behind the `drapekit` binary.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use drapekit::body::{load_body, load_poses, save_body, save_poses, BodySdf, Pose, SkinnedBody};
use drapekit::energy::{precompute_rest, GarmentRestState, Term};
use drapekit::gradcheck::{gradient_suite, SuiteConfig};
use drapekit::mesh::{load_obj, save_obj, TriMesh};
use drapekit::metrics::{frame_metrics, sequence_metrics, Deviation, FrameMetrics};
use drapekit::skinning::{
    garment_weights_knn, garment_weights_nearest, garment_weights_rbf, participation_matrix, GarmentWeights,
    WeightScheme,
};
use drapekit::solver::{simulate, static_drape, FrameReport, Pins, PosedFrame, Scene, SimState};
use drapekit::{fixtures, Error};

pub use config::RunConfig;

/// Bad arguments, configuration or input files. Exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A check that ran to completion and failed. Exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Maps an error to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::NonFiniteGradient { .. } | Error::DegenerateOneRing(_) => EXIT_NUMERICAL,
            Error::Io { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
    }
    EXIT_NUMERICAL
}

/// Input errors become usage errors; the offending key names the file.
fn input<T>(key: &str, r: drapekit::Result<T>) -> Result<T> {
    r.map_err(|e| UsageError(format!("{key}: {e}")).into())
}

/// Everything a solve needs, loaded and validated before any output is written.
pub struct Inputs {
    pub garment: TriMesh,
    pub body: Option<SkinnedBody>,
    pub poses: Vec<Pose>,
    pub rest: GarmentRestState,
    pub weights: Option<GarmentWeights>,
    pub pins: Option<Pins>,
}

fn load_garment(cfg: &RunConfig) -> Result<TriMesh> {
    let path = cfg.existing("paths.garment")?;
    let mesh = input("paths.garment", load_obj(path))?;
    input("paths.garment", mesh.validate_template())?;
    Ok(mesh)
}

fn load_body_opt(cfg: &RunConfig) -> Result<Option<SkinnedBody>> {
    cfg.optional_existing("paths.body")?
        .map(|p| input("paths.body", load_body(p)))
        .transpose()
}

fn rest_sdf(body: Option<&SkinnedBody>) -> Result<Option<BodySdf>> {
    body.map(|b| input("paths.body", BodySdf::new(b.mesh.clone()))).transpose()
}

fn load_poses_for(cfg: &RunConfig, body: Option<&SkinnedBody>) -> Result<Vec<Pose>> {
    let joints = body.map_or(1, |b| b.joint_count());
    let mut poses = match cfg.optional_existing("paths.poses")? {
        Some(p) => input("paths.poses", load_poses(p, joints))?,
        None if cfg.frames > 0 => vec![Pose::identity(joints); cfg.frames],
        None => return Err(UsageError("paths.poses is required unless run.frames is set".into()).into()),
    };
    if cfg.frames > 0 {
        if cfg.frames > poses.len() {
            return Err(UsageError(format!("run.frames = {} exceeds the {} poses", cfg.frames, poses.len())).into());
        }
        poses.truncate(cfg.frames);
    }
    if poses.is_empty() {
        return Err(UsageError("paths.poses holds no frames".into()).into());
    }
    Ok(poses)
}

fn compute_rest(cfg: &RunConfig, garment: &TriMesh, body: Option<&SkinnedBody>) -> Result<GarmentRestState> {
    let sdf = rest_sdf(body)?;
    let mut rest = precompute_rest(garment, sdf.as_ref(), cfg.energy.density, cfg.ring_mode)?;
    if let Some(p) = cfg.optional_existing("paths.alpha_overrides")? {
        input("paths.alpha_overrides", rest.apply_alpha_overrides(p))?;
    }
    Ok(rest)
}

fn rest_state(cfg: &RunConfig, garment: &TriMesh, body: Option<&SkinnedBody>) -> Result<GarmentRestState> {
    match cfg.optional_existing("paths.rest_cache")? {
        Some(p) => {
            let rest = input("paths.rest_cache", GarmentRestState::load(p))?;
            if rest.template != *garment {
                return Err(UsageError("paths.rest_cache was computed for a different garment".into()).into());
            }
            Ok(rest)
        }
        None => compute_rest(cfg, garment, body),
    }
}

fn compute_weights(cfg: &RunConfig, garment: &TriMesh, body: &SkinnedBody) -> Result<GarmentWeights> {
    let w = match cfg.scheme {
        WeightScheme::Rbf => {
            let p = participation_matrix(garment, &body.mesh, cfg.rbf_k)?;
            garment_weights_rbf(&p, &body.weights, cfg.rbf_k)?
        }
        WeightScheme::Nearest => garment_weights_nearest(garment, &body.mesh, &body.weights)?,
        WeightScheme::Knn => garment_weights_knn(garment, &body.mesh, &body.weights, cfg.neighbors)?,
    };
    Ok(w)
}

fn garment_weights(cfg: &RunConfig, garment: &TriMesh, body: Option<&SkinnedBody>) -> Result<Option<GarmentWeights>> {
    let Some(body) = body else { return Ok(None) };
    let w = match cfg.optional_existing("paths.weights")? {
        Some(p) => input("paths.weights", GarmentWeights::load(p))?,
        None => compute_weights(cfg, garment, body)?,
    };
    if w.vertex_count() != garment.vertex_count() || w.joint_count() != body.joint_count() {
        return Err(UsageError(format!(
            "paths.weights: {}x{} weights for {} garment vertices and {} joints",
            w.vertex_count(),
            w.joint_count(),
            garment.vertex_count(),
            body.joint_count()
        ))
        .into());
    }
    Ok(Some(w))
}

fn pins(cfg: &RunConfig, garment: &TriMesh) -> Result<Option<Pins>> {
    if cfg.pins.is_empty() {
        return Ok(None);
    }
    if let Some(&v) = cfg.pins.iter().find(|&&v| v >= garment.vertex_count()) {
        return Err(UsageError(format!("garment.pins: vertex {v} out of range")).into());
    }
    Ok(Some(Pins::at(cfg.pins.clone(), &garment.vertices)))
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let garment = load_garment(cfg)?;
        let body = load_body_opt(cfg)?;
        let poses = load_poses_for(cfg, body.as_ref())?;
        let rest = rest_state(cfg, &garment, body.as_ref())?;
        let weights = garment_weights(cfg, &garment, body.as_ref())?;
        let pins = pins(cfg, &garment)?;
        Ok(Self {
            garment,
            body,
            poses,
            rest,
            weights,
            pins,
        })
    }

    pub fn scene<'a>(&'a self, cfg: &'a RunConfig) -> Scene<'a> {
        Scene {
            rest: &self.rest,
            body: self.body.as_ref(),
            weights: self.weights.as_ref(),
            params: &cfg.energy,
            config: &cfg.solver,
            pins: self.pins.as_ref(),
        }
    }
}

fn deviation(cfg: &RunConfig) -> Deviation {
    if cfg.signed_metrics {
        Deviation::Signed
    } else {
        Deviation::Absolute
    }
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.required("paths.output")?.to_path_buf();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("resolved_config"), cfg.to_text()).context("writing resolved_config")?;
    Ok(out)
}

/// Writes via a temporary file and rename so a frame on disk is always complete.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> drapekit::Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))?;
    Ok(())
}

pub fn frame_file(frame: usize) -> String {
    format!("frame_{frame:04}.obj")
}

fn log_line(frame: usize, report: &FrameReport, eps_c: f64) -> String {
    let e = &report.energy;
    let mut line = format!(
        "frame={frame} iterations={} converged={} line_search_failed={} total={:.9e}",
        report.iterations, report.converged, report.line_search_failed, e.total
    );
    for t in Term::ALL {
        line.push_str(&format!(" {t}={:.9e}", e.term(t)));
    }
    line.push_str(&format!(" eps_c={eps_c:.6}\n"));
    line
}

/// Rest-state cache. Returns the written path.
pub fn cmd_precompute(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let garment = load_garment(cfg)?;
    let body = load_body_opt(cfg)?;
    let target = match cfg.path("paths.rest_cache") {
        Some(p) => p.to_path_buf(),
        None => cfg.required("paths.output")?.join("rest.bin"),
    };
    let rest = compute_rest(cfg, &garment, body.as_ref())?;
    if cfg.path("paths.output").is_some() {
        prepare_output(cfg)?;
    }
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    rest.save(&target)?;
    println!("wrote {} ({} vertices, {} bending edges)", target.display(), rest.vertex_count(), rest.bending.len());
    Ok(target)
}

/// Garment weight cache. Returns the written path and the largest row-sum deviation.
pub fn cmd_weights(cfg: &RunConfig) -> Result<(PathBuf, f64)> {
    cfg.validate()?;
    let garment = load_garment(cfg)?;
    let body = load_body_opt(cfg)?.ok_or_else(|| UsageError("paths.body is required".into()))?;
    let target = match cfg.path("paths.weights") {
        Some(p) => p.to_path_buf(),
        None => cfg.required("paths.output")?.join("weights.txt"),
    };
    let w = compute_weights(cfg, &garment, &body)?;
    if cfg.path("paths.output").is_some() {
        prepare_output(cfg)?;
    }
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    w.save(&target)?;
    let dev = w.max_row_sum_deviation();
    println!("wrote {} ({} scheme); max row-sum deviation {dev:.3e}", target.display(), w.scheme);
    Ok((target, dev))
}

/// Dynamic run over the pose sequence: frame OBJs, run log and metrics CSV.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<FrameMetrics>> {
    let inputs = Inputs::load(cfg)?;
    let out = prepare_output(cfg)?;
    let scene = inputs.scene(cfg);
    let mode = deviation(cfg);

    let mut initial = SimState::at_rest(&inputs.garment.vertices);
    initial.positions = PosedFrame::new(&scene, &inputs.poses[0])?.skin(&inputs.garment.vertices);

    let mut log = fs::File::create(out.join("run.log")).context("creating run.log")?;
    let mut frames = Vec::new();
    let result = simulate(initial, &inputs.poses, &scene, |state, report, body| {
        let frame = frames.len();
        let mesh = inputs.garment.with_vertices(state.positions.clone());
        write_atomic(&out.join(frame_file(frame)), |p| save_obj(&mesh, p)).map_err(to_core)?;
        let m = frame_metrics(frame, &mesh, &inputs.rest, body, mode)?;
        log.write_all(log_line(frame, report, m.collision_error).as_bytes())
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(out.join("run.log"), e))?;
        frames.push(m);
        Ok(())
    });
    let seq = sequence_metrics(frames);
    seq.save_csv(out.join("metrics.csv"))?;
    result?;
    println!(
        "{} frames; eps_e {:.4} eps_a {:.4} eps_c {:.4} (means, %)",
        seq.frames.len(),
        seq.edge_error.mean,
        seq.area_error.mean,
        seq.collision_error.mean
    );
    Ok(seq.frames)
}

fn to_core(e: anyhow::Error) -> Error {
    match e.downcast::<Error>() {
        Ok(e) => e,
        Err(e) => Error::InvalidParameter(e.to_string()),
    }
}

/// Static equilibrium at the first pose.
pub fn cmd_drape(cfg: &RunConfig) -> Result<FrameMetrics> {
    let inputs = Inputs::load(cfg)?;
    let out = prepare_output(cfg)?;
    let scene = inputs.scene(cfg);
    let pose = &inputs.poses[0];
    let (state, report) = static_drape(&inputs.garment.vertices, pose, &scene)?;
    let mesh = inputs.garment.with_vertices(state.positions.clone());
    write_atomic(&out.join("drape.obj"), |p| save_obj(&mesh, p))?;
    let frame = PosedFrame::new(&scene, pose)?;
    let m = frame_metrics(0, &mesh, &inputs.rest, frame.body.as_ref(), deviation(cfg))?;
    let mut log = String::new();
    for (i, r) in report.frames.iter().enumerate() {
        log.push_str(&log_line(i, r, m.collision_error));
    }
    fs::write(out.join("run.log"), log)?;
    sequence_metrics(vec![m]).save_csv(out.join("metrics.csv"))?;
    println!(
        "{} outer iterations; eps_e {:.4} eps_a {:.4} eps_c {:.4} (%)",
        report.outer_iterations, m.edge_error, m.area_error, m.collision_error
    );
    Ok(m)
}

fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".obj"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Scores previously written frame OBJs against the garment template.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<Vec<FrameMetrics>> {
    cfg.validate()?;
    let garment = load_garment(cfg)?;
    let body = load_body_opt(cfg)?;
    let dir = match cfg.path("paths.frames") {
        Some(_) => cfg.existing("paths.frames")?,
        None => cfg.existing("paths.output")?,
    }
    .to_path_buf();
    let files = frame_paths(&dir)?;
    if files.is_empty() {
        return Err(UsageError(format!("no frame_*.obj files in {}", dir.display())).into());
    }
    let poses = match &body {
        Some(b) => {
            let poses = load_poses_for(cfg, Some(b))?;
            if poses.len() < files.len() {
                return Err(UsageError(format!("{} frames but only {} poses", files.len(), poses.len())).into());
            }
            poses
        }
        None => Vec::new(),
    };
    let rest = precompute_rest(&garment, None, cfg.energy.density, cfg.ring_mode)?;
    let mut frames = Vec::with_capacity(files.len());
    for (i, f) in files.iter().enumerate() {
        let mesh = input("paths.frames", load_obj(f))?;
        let sdf = match &body {
            Some(b) => Some(BodySdf::new(drapekit::body::pose_body(b, &poses[i])?)?),
            None => None,
        };
        frames.push(
            frame_metrics(i, &mesh, &rest, sdf.as_ref(), deviation(cfg))
                .map_err(|e| UsageError(format!("{}: {e}", f.display())))?,
        );
    }
    let seq = sequence_metrics(frames);
    let csv = seq.to_csv();
    match cfg.path("paths.output") {
        Some(out) if out.is_dir() => {
            fs::write(out.join("resolved_config"), cfg.to_text())?;
            seq.save_csv(out.join("metrics.csv"))?;
        }
        _ => {}
    }
    print!("{csv}");
    Ok(seq.frames)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckLine {
    pub term: Term,
    pub max_relative_error: f64,
    pub probes_used: usize,
    pub probes_skipped: usize,
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Finite-difference check of the selected terms on the configured garment
/// (a 20 x 20 unit grid when none is set). Fails if any error reaches the tolerance.
pub fn cmd_gradcheck(cfg: &RunConfig, terms: &[Term], trials: usize, seed: u64) -> Result<Vec<GradCheckLine>> {
    cfg.validate()?;
    let garment = match cfg.path("paths.garment") {
        Some(_) => load_garment(cfg)?,
        None => fixtures::grid(20, 1.0),
    };
    let body = load_body_opt(cfg)?;
    let sdf = rest_sdf(body.as_ref())?;
    let rest = precompute_rest(&garment, sdf.as_ref(), cfg.energy.density, cfg.ring_mode)?;
    let suite = SuiteConfig {
        trials,
        seed,
        ..SuiteConfig::default()
    };
    let mut lines = Vec::new();
    for &term in terms {
        let r = gradient_suite(term, &rest, sdf.as_ref(), &cfg.energy, &suite);
        println!(
            "{term:<10} max relative error {:.3e} ({} probes, {} skipped near kinks)",
            r.max_relative_error, r.probes_used, r.probes_skipped
        );
        lines.push(GradCheckLine {
            term,
            max_relative_error: r.max_relative_error,
            probes_used: r.probes_used,
            probes_skipped: r.probes_skipped,
        });
    }
    if let Some(bad) = lines.iter().find(|l| !(l.max_relative_error < GRADCHECK_TOLERANCE)) {
        return Err(CheckFailed(format!("{} gradient error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}", bad.term, bad.max_relative_error)).into());
    }
    Ok(lines)
}

/// Frames in the generated sphere-drop sequence.
pub const SPHERE_DROP_FRAMES: usize = 60;

/// Writes the procedural test assets and ready-to-run configs into `dir`.
pub fn cmd_make_fixtures(dir: &Path, grid_n: usize) -> Result<Vec<PathBuf>> {
    if grid_n < 2 {
        return Err(UsageError("--grid must be at least 2".into()).into());
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut obj = |name: &str, mesh: &TriMesh| -> Result<()> {
        save_obj(mesh, dir.join(name))?;
        written.push(dir.join(name));
        Ok(())
    };
    obj("grid.obj", &fixtures::grid(grid_n, 1.0))?;
    obj("skirt.obj", &fixtures::default_skirt())?;
    obj("sphere_drop.obj", &fixtures::sphere_drop_cloth(30))?;

    let sphere = fixtures::sphere_body(1.0);
    save_body(&sphere, dir.join("sphere_body.txt"), "sphere.obj")?;
    let capsule = fixtures::capsule_body();
    save_body(&capsule, dir.join("capsule_body.txt"), "capsule.obj")?;
    save_poses(&fixtures::identity_poses(1, SPHERE_DROP_FRAMES), dir.join("poses_identity.txt"))?;
    save_poses(&fixtures::root_drop_poses(2, 30, 0.2), dir.join("poses_root_drop.txt"))?;
    save_poses(&fixtures::limb_swing_poses(30, 0.6), dir.join("poses_limb_swing.txt"))?;
    for name in [
        "sphere_body.txt",
        "sphere.obj",
        "capsule_body.txt",
        "capsule.obj",
        "poses_identity.txt",
        "poses_root_drop.txt",
        "poses_limb_swing.txt",
    ] {
        written.push(dir.join(name));
    }

    let drop = fixtures::sphere_drop_params();
    let configs = [
        (
            "sphere_drop.cfg",
            format!(
                "# grid(30) cloth dropped on the unit sphere\n[paths]\ngarment = sphere_drop.obj\nbody = sphere_body.txt\nposes = poses_identity.txt\noutput = sphere_drop_out\n\n[energy]\ninext_stiffness = {:e}\n",
                drop.inext_stiffness
            ),
        ),
        (
            "skirt.cfg",
            "# loose skirt on the swinging capsule limb\n[paths]\ngarment = skirt.obj\nbody = capsule_body.txt\nposes = poses_limb_swing.txt\noutput = skirt_out\n\n[energy]\ninext_stiffness = 1e5\n".to_string(),
        ),
    ];
    for (name, text) in configs {
        fs::write(dir.join(name), text)?;
        written.push(dir.join(name));
    }
    Ok(written)
}
