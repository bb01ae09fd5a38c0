//! Run configuration: a `key = value` file with `[section]` headers plus
//! `--set section.key=value` overrides.
//!
//! Relative paths in a file resolve against the file's directory; paths
//! given with `--set` resolve against the working directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use drapekit::energy::EnergyParams;
use drapekit::mesh::RingMode;
use drapekit::skinning::{WeightScheme, DEFAULT_RBF_K};
use drapekit::solver::SolverConfig;
use drapekit::Vec3;

use crate::UsageError;

pub struct KeySpec {
    pub key: &'static str,
    pub unit: &'static str,
    pub help: &'static str,
}

const fn spec(key: &'static str, unit: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, unit, help }
}

pub const KEYS: &[KeySpec] = &[
    spec("paths.garment", "path", "garment template OBJ"),
    spec("paths.body", "path", "body file (rest mesh, skeleton, weights)"),
    spec("paths.poses", "path", "pose sequence, one frame per line"),
    spec("paths.output", "path", "output directory"),
    spec("paths.rest_cache", "path", "rest-state cache; written by precompute, read by other commands"),
    spec("paths.weights", "path", "garment weight cache; written by weights, read by other commands"),
    spec("paths.alpha_overrides", "path", "per-edge bending alpha overrides (v0 v1 alpha)"),
    spec("paths.frames", "path", "directory of frame OBJs to score (default: paths.output)"),
    spec("garment.ring_mode", "closed|open", "whether one-rings include their center"),
    spec("garment.pins", "vertex indices", "vertices held at their template positions"),
    spec("energy.mu", "N/m", "first Lame parameter of the membrane"),
    spec("energy.lambda", "N/m", "second Lame parameter of the membrane"),
    spec("energy.bending_stiffness", "J", "dihedral bending stiffness"),
    spec("energy.collision_stiffness", "J/m^3", "cubic collision penalty stiffness"),
    spec("energy.collision_margin", "m", "collision margin"),
    spec("energy.inext_stiffness", "J/m^6", "inextensibility weight"),
    spec("energy.gravity", "m/s^2", "gravity vector, three components"),
    spec("energy.dt", "s", "timestep"),
    spec("energy.density", "kg/m^2", "areal density"),
    spec("energy.inertia", "bool", "include inertia in dynamic runs"),
    spec("energy.ext_rate", "1/m", "extension gain on penetration depth"),
    spec("energy.ext_cap", "-", "cap of the scaled penetration depth"),
    spec("energy.ramp_cap", "frames", "cap of the extension ramp counter"),
    spec("solver.max_iterations", "count", "descent iterations per frame"),
    spec("solver.gradient_tolerance", "N", "stop when the largest vertex gradient falls below this"),
    spec("solver.backtrack_factor", "-", "line-search step shrink factor in (0, 1)"),
    spec("solver.sufficient_decrease", "-", "Armijo constant in (0, 0.5)"),
    spec("solver.max_backtracks", "count", "line-search trials per iteration"),
    spec("solver.history", "count", "L-BFGS correction pairs"),
    spec("solver.static_outer_iterations", "count", "outer iterations of drape"),
    spec("skinning.scheme", "rbf|nearest|knn", "garment weight scheme"),
    spec("skinning.k", "-", "RBF width factor"),
    spec("skinning.neighbors", "count", "body vertices averaged by knn"),
    spec("run.frames", "count", "frames to simulate; 0 means every pose"),
    spec("metrics.signed", "bool", "average signed instead of absolute deviations"),
];

/// Every key with its unit, for `--help`.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.key.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (file sections or --set section.key=value):\n");
    for k in KEYS {
        writeln!(out, "  {:width$}  [{}] {}", k.key, k.unit, k.help).unwrap();
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub garment: Option<PathBuf>,
    pub body: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub rest_cache: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub alpha_overrides: Option<PathBuf>,
    pub frames: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub ring_mode: RingMode,
    pub pins: Vec<usize>,
    pub energy: EnergyParams,
    pub solver: SolverConfig,
    pub scheme: WeightScheme,
    pub rbf_k: f64,
    pub neighbors: usize,
    pub frames: usize,
    pub signed_metrics: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            ring_mode: RingMode::Closed,
            pins: Vec::new(),
            energy: EnergyParams::default(),
            solver: SolverConfig::default(),
            scheme: WeightScheme::Rbf,
            rbf_k: DEFAULT_RBF_K,
            neighbors: 4,
            frames: 0,
            signed_metrics: false,
        }
    }
}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| usage(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, UsageError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(usage(format!("{key}: expected true or false, got '{value}'"))),
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then each `key=value` override.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, UsageError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.apply_text(&text, base)
                .map_err(|e| usage(format!("{}: {}", path.display(), e.0)))?;
        }
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects key=value, got '{item}'")))?;
            cfg.set(key.trim(), value.trim(), Path::new(""))?;
        }
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<(), UsageError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            self.set(&full, value.trim(), base)
                .map_err(|e| usage(format!("line {}: {}", i + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), UsageError> {
        let path = || Some(base.join(value));
        let e = &mut self.energy;
        let s = &mut self.solver;
        match key {
            "paths.garment" => self.paths.garment = path(),
            "paths.body" => self.paths.body = path(),
            "paths.poses" => self.paths.poses = path(),
            "paths.output" => self.paths.output = path(),
            "paths.rest_cache" => self.paths.rest_cache = path(),
            "paths.weights" => self.paths.weights = path(),
            "paths.alpha_overrides" => self.paths.alpha_overrides = path(),
            "paths.frames" => self.paths.frames = path(),
            "garment.ring_mode" => {
                self.ring_mode = match value {
                    "closed" => RingMode::Closed,
                    "open" => RingMode::Open,
                    _ => return Err(usage(format!("{key}: expected closed or open, got '{value}'"))),
                }
            }
            "garment.pins" => {
                self.pins = value
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| parse(key, t))
                    .collect::<Result<_, _>>()?
            }
            "energy.mu" => e.mu = parse(key, value)?,
            "energy.lambda" => e.lambda = parse(key, value)?,
            "energy.bending_stiffness" => e.bending_stiffness = parse(key, value)?,
            "energy.collision_stiffness" => e.collision_stiffness = parse(key, value)?,
            "energy.collision_margin" => e.collision_margin = parse(key, value)?,
            "energy.inext_stiffness" => e.inext_stiffness = parse(key, value)?,
            "energy.gravity" => {
                let c: Vec<f64> = value.split_whitespace().map(|t| parse(key, t)).collect::<Result<_, _>>()?;
                if c.len() != 3 {
                    return Err(usage(format!("{key}: expected three components")));
                }
                e.gravity = Vec3::new(c[0], c[1], c[2]);
            }
            "energy.dt" => e.dt = parse(key, value)?,
            "energy.density" => e.density = parse(key, value)?,
            "energy.inertia" => e.inertia = parse_bool(key, value)?,
            "energy.ext_rate" => e.ext_rate = parse(key, value)?,
            "energy.ext_cap" => e.ext_cap = parse(key, value)?,
            "energy.ramp_cap" => e.ramp_cap = parse(key, value)?,
            "solver.max_iterations" => s.max_iterations = parse(key, value)?,
            "solver.gradient_tolerance" => s.gradient_tolerance = parse(key, value)?,
            "solver.backtrack_factor" => s.backtrack_factor = parse(key, value)?,
            "solver.sufficient_decrease" => s.sufficient_decrease = parse(key, value)?,
            "solver.max_backtracks" => s.max_backtracks = parse(key, value)?,
            "solver.history" => s.history = parse(key, value)?,
            "solver.static_outer_iterations" => s.static_outer_iterations = parse(key, value)?,
            "skinning.scheme" => self.scheme = parse(key, value)?,
            "skinning.k" => self.rbf_k = parse(key, value)?,
            "skinning.neighbors" => self.neighbors = parse(key, value)?,
            "run.frames" => self.frames = parse(key, value)?,
            "metrics.signed" => self.signed_metrics = parse_bool(key, value)?,
            _ => return Err(usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parameter ranges; paths are checked by the commands that need them.
    pub fn validate(&self) -> Result<(), UsageError> {
        self.energy.validate().map_err(|e| usage(format!("energy: {e}")))?;
        self.solver.validate().map_err(|e| usage(format!("solver: {e}")))?;
        if !(self.rbf_k > 0.0) {
            return Err(usage("skinning.k must be positive"));
        }
        if self.neighbors == 0 {
            return Err(usage("skinning.neighbors must be at least 1"));
        }
        Ok(())
    }

    /// The path under `key`, required to be set and to exist.
    pub fn existing(&self, key: &str) -> Result<&Path, UsageError> {
        let p = self.path(key).ok_or_else(|| usage(format!("{key} is required")))?;
        if !p.exists() {
            return Err(usage(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// The path under `key` if set, required to exist.
    pub fn optional_existing(&self, key: &str) -> Result<Option<&Path>, UsageError> {
        match self.path(key) {
            Some(_) => self.existing(key).map(Some),
            None => Ok(None),
        }
    }

    pub fn required(&self, key: &str) -> Result<&Path, UsageError> {
        self.path(key).ok_or_else(|| usage(format!("{key} is required")))
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        let p = &self.paths;
        match key {
            "paths.garment" => p.garment.as_deref(),
            "paths.body" => p.body.as_deref(),
            "paths.poses" => p.poses.as_deref(),
            "paths.output" => p.output.as_deref(),
            "paths.rest_cache" => p.rest_cache.as_deref(),
            "paths.weights" => p.weights.as_deref(),
            "paths.alpha_overrides" => p.alpha_overrides.as_deref(),
            "paths.frames" => p.frames.as_deref(),
            _ => None,
        }
    }

    /// Every key with its effective value, readable back by `apply_text`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for k in KEYS {
            let (sec, name) = k.key.split_once('.').expect("sectioned key");
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                writeln!(out, "[{sec}]").unwrap();
                section = sec;
            }
            match self.value(k.key) {
                Some(v) => writeln!(out, "{name} = {v}").unwrap(),
                None => writeln!(out, "# {name} =").unwrap(),
            }
        }
        out
    }

    fn value(&self, key: &str) -> Option<String> {
        if key.starts_with("paths.") {
            return self.path(key).map(|p| {
                std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
            });
        }
        let e = &self.energy;
        let s = &self.solver;
        Some(match key {
            "garment.ring_mode" => match self.ring_mode {
                RingMode::Closed => "closed".into(),
                RingMode::Open => "open".into(),
            },
            "garment.pins" => self.pins.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            "energy.mu" => format!("{:e}", e.mu),
            "energy.lambda" => format!("{:e}", e.lambda),
            "energy.bending_stiffness" => format!("{:e}", e.bending_stiffness),
            "energy.collision_stiffness" => format!("{:e}", e.collision_stiffness),
            "energy.collision_margin" => format!("{:e}", e.collision_margin),
            "energy.inext_stiffness" => format!("{:e}", e.inext_stiffness),
            "energy.gravity" => format!("{:e} {:e} {:e}", e.gravity.x, e.gravity.y, e.gravity.z),
            "energy.dt" => format!("{:e}", e.dt),
            "energy.density" => format!("{:e}", e.density),
            "energy.inertia" => e.inertia.to_string(),
            "energy.ext_rate" => format!("{:e}", e.ext_rate),
            "energy.ext_cap" => format!("{:e}", e.ext_cap),
            "energy.ramp_cap" => format!("{:e}", e.ramp_cap),
            "solver.max_iterations" => s.max_iterations.to_string(),
            "solver.gradient_tolerance" => format!("{:e}", s.gradient_tolerance),
            "solver.backtrack_factor" => format!("{:e}", s.backtrack_factor),
            "solver.sufficient_decrease" => format!("{:e}", s.sufficient_decrease),
            "solver.max_backtracks" => s.max_backtracks.to_string(),
            "solver.history" => s.history.to_string(),
            "solver.static_outer_iterations" => s.static_outer_iterations.to_string(),
            "skinning.scheme" => self.scheme.to_string(),
            "skinning.k" => format!("{:e}", self.rbf_k),
            "skinning.neighbors" => self.neighbors.to_string(),
            "run.frames" => self.frames.to_string(),
            "metrics.signed" => self.signed_metrics.to_string(),
            _ => return None,
        })
    }
}
