use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use drapekit::energy::Term;
use drapekit_cli::config::keys_help;
use drapekit_cli::{exit_code, RunConfig, UsageError};

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "DRAPEKIT_THREADS";

#[derive(Parser)]
#[command(name = "drapekit", version, about = "Cloth draping on skinned bodies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set energy.dt=0.01 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the garment rest state and write the cache
    #[command(after_help = keys_help())]
    Precompute(Common),
    /// Compute garment skinning weights and write the cache
    #[command(after_help = keys_help())]
    Weights(Common),
    /// Static drape at the first pose
    #[command(after_help = keys_help())]
    Drape(Common),
    /// Dynamic simulation over the pose sequence
    #[command(after_help = keys_help())]
    Simulate(Common),
    /// Edge, area and collision errors of written frames
    #[command(after_help = keys_help())]
    Metrics(Common),
    /// Finite-difference check of the energy gradients
    #[command(after_help = keys_help())]
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Term to check, or "all"
        #[arg(long, default_value = "all")]
        term: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write procedural meshes, bodies, poses and configs
    MakeFixtures {
        dir: PathBuf,
        /// Vertices per side of grid.obj
        #[arg(long, default_value_t = 20)]
        grid: usize,
    },
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("{THREADS_VAR} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn config(common: &Common) -> Result<RunConfig> {
    Ok(RunConfig::resolve(common.config.as_deref(), &common.set)?)
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Precompute(c) => drapekit_cli::cmd_precompute(&config(&c)?).map(drop),
        Command::Weights(c) => drapekit_cli::cmd_weights(&config(&c)?).map(drop),
        Command::Drape(c) => drapekit_cli::cmd_drape(&config(&c)?).map(drop),
        Command::Simulate(c) => drapekit_cli::cmd_simulate(&config(&c)?).map(drop),
        Command::Metrics(c) => drapekit_cli::cmd_metrics(&config(&c)?).map(drop),
        Command::Gradcheck { common, term, trials, seed } => {
            let terms = if term == "all" {
                Term::ALL.to_vec()
            } else {
                vec![term.parse::<Term>().map_err(|e| UsageError(format!("--term: {e}")))?]
            };
            drapekit_cli::cmd_gradcheck(&config(&common)?, &terms, trials, seed).map(drop)
        }
        Command::MakeFixtures { dir, grid } => {
            for p in drapekit_cli::cmd_make_fixtures(&dir, grid)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
