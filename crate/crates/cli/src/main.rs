//! `edgefs`: dataset generation, offline estimation, benchmarking and
//! closed-loop simulation for the edge-flow velocity estimator.
//!
//! Exit codes: 0 ok, 2 usage, 3 i/o, 4 bad data.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod settings;

#[derive(Debug, Parser)]
#[command(name = "edgefs", version, about = "Edge-based stereo flow and velocity estimation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// RNG seed for textures, noise and start poses [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// World preset: room4x4, flat-wall, pole-field, blank-wall
    /// [default: flat-wall, room4x4 for navsim]
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with the same keys as the flags; flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Camera intrinsics preset [default: delfly-stereoboard, 128x96 px, 6 cm baseline]
    #[arg(long, global = true)]
    intrinsics: Option<String>,
    /// SAD block size in px, odd [default: 11, flight-tested]
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Search range in px for flow and disparity [default: 15, flight-tested]
    #[arg(long, global = true)]
    range: Option<usize>,
    /// Reject gross flow mismatches before the line fit [default: true]
    #[arg(long, global = true)]
    robust_fit: Option<bool>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a stereo dataset (PGM pairs plus manifest.json)
    Gen {
        /// static, lateral:V[:RAMP_S], forward:V or yaw:RATE [default: lateral:0.3]
        #[arg(long)]
        motion: Option<String>,
        /// Sequence length at 30 Hz [default: 3]
        #[arg(long)]
        seconds: Option<f64>,
    },
    /// Run the estimator over a dataset and write per-frame estimates.
    /// Velocities are median filtered over 5 frames.
    Estimate {
        /// Path to manifest.json
        manifest: PathBuf,
    },
    /// Time the estimator against the dense 2-D block-matching baseline
    Bench {
        /// Frames to time [default: 300]
        #[arg(long)]
        frames: Option<usize>,
        /// Time frames from this dataset instead of rendering them
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Fly seeded obstacle-avoidance episodes.
    /// Defaults: obstacle threshold 1 m, hover 1 s, turn 60 deg.
    Navsim {
        /// Number of episodes; episode i uses seed + i [default: 10]
        #[arg(long)]
        episodes: Option<usize>,
        /// Simulated time cap per episode [default: 90]
        #[arg(long)]
        max_seconds: Option<f64>,
        /// Cruise speed in m/s [default: 0.3, flight-tested]
        #[arg(long)]
        cruise: Option<f64>,
    },
    /// MSE, VAR and NMXM of an estimates CSV (columns vx_est, vy_est, vx_gt, vy_gt)
    Metrics {
        /// CSV as written by `estimate`
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edgefs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
