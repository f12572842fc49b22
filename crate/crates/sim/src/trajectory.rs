//! Scripted camera motions and dataset generation.

use std::fs;
use std::path::Path;

use edgefs_core::frame_io::{save_pgm, CameraIntrinsics, GroundTruth, ManifestFrame, SequenceManifest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::render::{CameraPose, RenderedFrame, Renderer};
use crate::scene::{World2D, WorldPreset};
use crate::SimError;

pub const DEFAULT_RATE_HZ: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    /// Sideways, positive to the right. Speed ramps up linearly over `ramp_s`
    /// (0 for an instant start).
    Lateral {
        speed_m_s: f64,
        ramp_s: f64,
    },
    Forward {
        speed_m_s: f64,
    },
    Yaw {
        rate_rad_s: f64,
    },
}

impl Motion {
    /// Parses `static`, `lateral:V[:RAMP]`, `forward:V`, `yaw:RATE`.
    pub fn parse(spec: &str) -> Result<Self, SimError> {
        let bad = || SimError::UnknownMotion(spec.to_string());
        let mut parts = spec.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let nums: Vec<f64> = parts
            .map(|p| p.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(bad());
        }
        match (kind, nums.as_slice()) {
            ("static", []) => Ok(Motion::Static),
            ("lateral", [v]) => Ok(Motion::Lateral {
                speed_m_s: *v,
                ramp_s: 0.0,
            }),
            ("lateral", [v, r]) if *r >= 0.0 => Ok(Motion::Lateral {
                speed_m_s: *v,
                ramp_s: *r,
            }),
            ("forward", [v]) => Ok(Motion::Forward { speed_m_s: *v }),
            ("yaw", [w]) => Ok(Motion::Yaw { rate_rad_s: *w }),
            _ => Err(bad()),
        }
    }

    /// Body velocity, yaw rate, and displacement `(forward, right, yaw)`
    /// accumulated since `t = 0`.
    fn state_at(&self, t: f64) -> ((f64, f64), f64, (f64, f64, f64)) {
        match *self {
            Motion::Static => ((0.0, 0.0), 0.0, (0.0, 0.0, 0.0)),
            Motion::Lateral { speed_m_s, ramp_s } => {
                if ramp_s > 0.0 && t < ramp_s {
                    let v = speed_m_s * t / ramp_s;
                    ((0.0, v), 0.0, (0.0, 0.5 * v * t, 0.0))
                } else {
                    let s = speed_m_s * (t - 0.5 * ramp_s);
                    ((0.0, speed_m_s), 0.0, (0.0, s, 0.0))
                }
            }
            Motion::Forward { speed_m_s } => ((speed_m_s, 0.0), 0.0, (speed_m_s * t, 0.0, 0.0)),
            Motion::Yaw { rate_rad_s } => ((0.0, 0.0), rate_rad_s, (0.0, 0.0, rate_rad_s * t)),
        }
    }
}

/// Starting pose used by the dataset generator for a world/motion pair.
pub fn default_start(preset: WorldPreset, motion: &Motion, seed: u64) -> CameraPose {
    match preset {
        WorldPreset::Room4x4 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57A2_7000);
            CameraPose::at(2.0, 2.0, rng.random_range(0.0..std::f64::consts::TAU))
        }
        WorldPreset::PoleField => CameraPose::at(0.0, 0.0, 0.0),
        WorldPreset::FlatWall | WorldPreset::BlankWall => match motion {
            Motion::Forward { .. } => CameraPose::at(0.0, 0.0, 0.0),
            _ => CameraPose::at(2.0, 0.0, 0.0),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: CameraPose,
}

/// Samples `motion` from `start` at `rate_hz` for `n_frames` frames.
/// Positions are integrated in closed form, so finite differences of the
/// poses agree with the scripted velocity.
pub fn scripted_trajectory(start: CameraPose, motion: &Motion, n_frames: usize, rate_hz: f64) -> Vec<TimedPose> {
    (0..n_frames)
        .map(|k| {
            let t = k as f64 / rate_hz;
            let (vel, yaw_rate, (df, dr, dyaw)) = motion.state_at(t);
            let (fw, rt) = (start.forward(), start.right());
            let pose = CameraPose {
                pos_x_m: start.pos_x_m + df * fw.0 + dr * rt.0,
                pos_y_m: start.pos_y_m + df * fw.1 + dr * rt.1,
                yaw_rad: start.yaw_rad + dyaw,
                vel_body: vel,
                yaw_rate_rad_s: yaw_rate,
            };
            TimedPose { t, pose }
        })
        .collect()
}

pub fn ground_truth(pose: &CameraPose) -> GroundTruth {
    GroundTruth {
        vx_m_s: pose.vel_body.0,
        vy_m_s: pose.vel_body.1,
        yaw_rad: pose.yaw_rad,
        pos_x_m: pose.pos_x_m,
        pos_y_m: pose.pos_y_m,
    }
}

#[derive(Debug, Clone)]
pub struct SimFrame {
    pub rendered: RenderedFrame,
    pub truth: CameraPose,
}

/// Renders a trajectory in memory.
pub fn render_sequence(
    world: &World2D,
    trajectory: &[TimedPose],
    intr: &CameraIntrinsics<f64>,
    seed: u64,
) -> Result<Vec<SimFrame>, SimError> {
    let renderer = Renderer::new(*intr, seed);
    trajectory
        .iter()
        .map(|tp| {
            Ok(SimFrame {
                rendered: renderer.render(world, &tp.pose, tp.t)?,
                truth: tp.pose,
            })
        })
        .collect()
}

/// Renders a trajectory to `out_dir` as PGM pairs plus `manifest.json`.
pub fn generate_sequence(
    world: &World2D,
    trajectory: &[TimedPose],
    intr: &CameraIntrinsics<f64>,
    seed: u64,
    out_dir: &Path,
) -> Result<SequenceManifest, SimError> {
    if trajectory.is_empty() {
        return Err(SimError::InvalidConfig("empty trajectory".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| SimError::Io(out_dir.to_path_buf(), e))?;
    let renderer = Renderer::new(*intr, seed);
    let mut frames = Vec::with_capacity(trajectory.len());
    for (i, tp) in trajectory.iter().enumerate() {
        let r = renderer.render(world, &tp.pose, tp.t)?;
        let (left, right) = (format!("left_{i:05}.pgm"), format!("right_{i:05}.pgm"));
        save_pgm(&r.frame.left, out_dir.join(&left))?;
        save_pgm(&r.frame.right, out_dir.join(&right))?;
        frames.push(ManifestFrame {
            timestamp_s: tp.t,
            left_path: left.into(),
            right_path: right.into(),
            gyro_z_rad_s: tp.pose.yaw_rate_rad_s,
            ground_truth: Some(ground_truth(&tp.pose)),
        });
    }
    let manifest = SequenceManifest {
        intrinsics: *intr,
        frames,
        root: out_dir.to_path_buf(),
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}
