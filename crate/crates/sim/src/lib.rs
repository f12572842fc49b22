//! Synthetic worlds for exercising the edge-flow estimator: a ray-cast stereo
//! renderer with exact ground truth, scripted trajectories, and a closed-loop
//! obstacle-avoidance harness.

use std::path::PathBuf;

use edgefs_core::FrameIoError;
use thiserror::Error;

pub mod nav;
pub mod render;
pub mod scene;
pub mod trajectory;

pub use nav::{run_episode, EpisodeLog, NavConfig, NavMode};
pub use render::{render_stereo, CameraPose, RenderedFrame, Renderer};
pub use scene::{World2D, WorldPreset};
pub use trajectory::{generate_sequence, render_sequence, scripted_trajectory, Motion};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown world preset {0:?} (expected room4x4, flat-wall, pole-field or blank-wall)")]
    UnknownPreset(String),
    #[error("unknown motion {0:?} (expected static, lateral:V[:RAMP], forward:V or yaw:RATE)")]
    UnknownMotion(String),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Frame(#[from] FrameIoError),
}
