//! Config-file values merged under command-line flags.

use std::path::{Path, PathBuf};

use edgefs_core::block_matcher::MatchConfig;
use edgefs_core::{CameraIntrinsics, PipelineConfig};
use edgefs_sim::NavConfig;
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_INTRINSICS: &str = "delfly-stereoboard";
pub const DEFAULT_WINDOW_PX: usize = 11;
pub const DEFAULT_RANGE_PX: usize = 15;
pub const DEFAULT_MOTION: &str = "lateral:0.3";
pub const DEFAULT_SECONDS: f64 = 3.0;
pub const DEFAULT_BENCH_FRAMES: usize = 300;
pub const DEFAULT_EPISODES: usize = 10;
pub const DEFAULT_MAX_SECONDS: f64 = 90.0;

/// Config file layout. Every key mirrors a flag of the same name.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub intrinsics: Option<String>,
    pub window: Option<usize>,
    pub range: Option<usize>,
    pub robust_fit: Option<bool>,
    pub motion: Option<String>,
    pub seconds: Option<f64>,
    pub frames: Option<usize>,
    pub episodes: Option<usize>,
    pub max_seconds: Option<f64>,
    pub cruise: Option<f64>,
    pub nav: Option<NavConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

pub fn intrinsics(name: &str) -> Result<CameraIntrinsics<f64>, CliError> {
    CameraIntrinsics::preset(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown intrinsics preset {name:?} (expected {DEFAULT_INTRINSICS})"
        ))
    })
}

pub fn pipeline(
    window: usize,
    range: usize,
    robust_fit: bool,
    intr: &CameraIntrinsics<f64>,
) -> Result<PipelineConfig, CliError> {
    let matcher = MatchConfig::new(window, range);
    matcher
        .validate(intr.width_px())
        .map_err(|e| CliError::Usage(format!("--window {window} --range {range}: {e}")))?;
    Ok(PipelineConfig {
        matcher,
        robust_fit,
        ..PipelineConfig::default()
    })
}
