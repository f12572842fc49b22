//! Closed-loop obstacle avoidance flown on the estimator's output alone.
//!
//! The controller sees only the estimator (velocity and nearest obstacle) and
//! the gyro. A four-mode state machine (Check, Forward, Hover, Turn) produces
//! velocity and yaw-rate references; a force field pushes back from close
//! obstacles; a first-order model stands in for the attitude loop.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use edgefs_core::frame_io::CameraIntrinsics;
use edgefs_core::{EdgeFsF64, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::render::{CameraPose, Renderer};
use crate::scene::World2D;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NavMode {
    Check,
    Forward,
    Hover,
    Turn,
}

impl NavMode {
    pub const ALL: [NavMode; 4] = [NavMode::Check, NavMode::Forward, NavMode::Hover, NavMode::Turn];

    pub fn name(self) -> &'static str {
        match self {
            NavMode::Check => "check",
            NavMode::Forward => "forward",
            NavMode::Hover => "hover",
            NavMode::Turn => "turn",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NavMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    pub obstacle_threshold_m: f64,
    pub cruise_speed_m_s: f64,
    pub hover_duration_s: f64,
    pub turn_angle_rad: f64,
    pub turn_rate_rad_s: f64,
    pub ff_distance_m: f64,
    pub ff_gain: f64,
    pub tracking_tau_s: f64,
    /// Weight of the velocity-error correction in the guidance law.
    pub guidance_gain: f64,
    /// Stationary standard deviation of the wind gust, m/s.
    pub gust_sigma_m_s: f64,
    pub gust_tau_s: f64,
    pub collision_radius_m: f64,
    pub random_turn_direction: bool,
    pub rate_hz: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            obstacle_threshold_m: 1.0,
            cruise_speed_m_s: 0.3,
            hover_duration_s: 1.0,
            turn_angle_rad: 60f64.to_radians(),
            turn_rate_rad_s: 1.0,
            ff_distance_m: 0.8,
            ff_gain: 0.5,
            tracking_tau_s: 0.3,
            guidance_gain: 0.5,
            gust_sigma_m_s: 0.03,
            gust_tau_s: 2.0,
            collision_radius_m: 0.05,
            random_turn_direction: false,
            rate_hz: 30.0,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("obstacle_threshold_m", self.obstacle_threshold_m),
            ("hover_duration_s", self.hover_duration_s),
            ("turn_rate_rad_s", self.turn_rate_rad_s),
            ("ff_distance_m", self.ff_distance_m),
            ("ff_gain", self.ff_gain),
            ("tracking_tau_s", self.tracking_tau_s),
            ("gust_tau_s", self.gust_tau_s),
            ("collision_radius_m", self.collision_radius_m),
            ("rate_hz", self.rate_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("cruise_speed_m_s", self.cruise_speed_m_s),
            ("guidance_gain", self.guidance_gain),
            ("gust_sigma_m_s", self.gust_sigma_m_s),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.turn_angle_rad > 0.0 && self.turn_angle_rad < std::f64::consts::PI) {
            return Err(SimError::InvalidConfig(format!(
                "turn_angle_rad must lie in (0, pi), got {}",
                self.turn_angle_rad
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Hover length in control ticks.
    pub fn hover_ticks(&self) -> u32 {
        ((self.hover_duration_s * self.rate_hz).round() as u32).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmState {
    pub mode: NavMode,
    /// Ticks spent in `mode`, counting the entry tick.
    pub ticks_in_mode: u32,
    pub turn_progress_rad: f64,
    /// +1 turns left (counter-clockwise), -1 right.
    pub turn_sign: f64,
}

impl Default for FsmState {
    fn default() -> Self {
        Self {
            mode: NavMode::Check,
            ticks_in_mode: 0,
            turn_progress_rad: 0.0,
            turn_sign: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FsmCommand {
    /// Body `(forward, right)`, m/s.
    pub vel_ref: (f64, f64),
    pub yaw_rate_ref: f64,
}

fn enter(mode: NavMode, from: &FsmState) -> FsmState {
    FsmState {
        mode,
        ticks_in_mode: 1,
        turn_progress_rad: 0.0,
        turn_sign: from.turn_sign,
    }
}

fn turn_step(state: &FsmState, cfg: &NavConfig, dt: f64) -> (FsmState, FsmCommand) {
    let remaining = cfg.turn_angle_rad - state.turn_progress_rad;
    let step = (cfg.turn_rate_rad_s * dt).min(remaining);
    let done = step >= remaining;
    let progress = if done {
        cfg.turn_angle_rad
    } else {
        state.turn_progress_rad + step
    };
    let next = FsmState {
        mode: if done { NavMode::Check } else { NavMode::Turn },
        ticks_in_mode: if done { 0 } else { state.ticks_in_mode + 1 },
        turn_progress_rad: progress,
        turn_sign: state.turn_sign,
    };
    let cmd = FsmCommand {
        vel_ref: (0.0, 0.0),
        yaw_rate_ref: state.turn_sign * step / dt,
    };
    (next, cmd)
}

/// One control tick of the avoidance state machine.
///
/// Check decides immediately (it never holds for a tick of its own): a clear
/// way gives Forward, otherwise Hover. Forward cruises until an obstacle is
/// closer than the threshold. Hover holds zero velocity for exactly
/// [`NavConfig::hover_ticks`] ticks, then Turn rotates by exactly
/// `turn_angle_rad` and hands back to Check.
pub fn step_fsm(state: &FsmState, nearest_m: Option<f64>, cfg: &NavConfig, dt: f64) -> (FsmState, FsmCommand) {
    let clear = nearest_m.is_none_or(|d| d > cfg.obstacle_threshold_m);
    let blocked = nearest_m.is_some_and(|d| d < cfg.obstacle_threshold_m);
    let cruise = FsmCommand {
        vel_ref: (cfg.cruise_speed_m_s, 0.0),
        yaw_rate_ref: 0.0,
    };
    let hold = FsmCommand::default();
    match state.mode {
        NavMode::Check if clear => (enter(NavMode::Forward, state), cruise),
        NavMode::Check => (enter(NavMode::Hover, state), hold),
        NavMode::Forward if blocked => (enter(NavMode::Hover, state), hold),
        NavMode::Forward => (
            FsmState {
                ticks_in_mode: state.ticks_in_mode + 1,
                ..*state
            },
            cruise,
        ),
        NavMode::Hover if state.ticks_in_mode >= cfg.hover_ticks() => {
            let start = FsmState {
                ticks_in_mode: 0,
                ..enter(NavMode::Turn, state)
            };
            turn_step(&start, cfg, dt)
        }
        NavMode::Hover => (
            FsmState {
                ticks_in_mode: state.ticks_in_mode + 1,
                ..*state
            },
            hold,
        ),
        NavMode::Turn => turn_step(state, cfg, dt),
    }
}

/// Backward velocity reference (m/s, never positive) from the nearest
/// obstacle: `-gain * (engage - nearest)` inside the engage distance.
pub fn force_field(nearest_m: Option<f64>, cfg: &NavConfig) -> f64 {
    match nearest_m {
        Some(d) if d < cfg.ff_distance_m => -cfg.ff_gain * (cfg.ff_distance_m - d),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    /// Pose with the plant's body velocity (gust excluded).
    pub pose: CameraPose,
    pub fsm: FsmState,
    pub mode_entry_time_s: f64,
    pub commanded_vel: (f64, f64),
    pub sim_time_s: f64,
    pub collided: bool,
}

impl NavState {
    pub fn new(pose: CameraPose) -> Self {
        Self {
            pose,
            fsm: FsmState::default(),
            mode_entry_time_s: 0.0,
            commanded_vel: (0.0, 0.0),
            sim_time_s: 0.0,
            collided: false,
        }
    }
}

/// First-order body-velocity tracking, then pose integration. `disturbance`
/// is a world-frame velocity added to the motion (wind). Flags a collision
/// when the new position is within the collision radius of any wall or
/// leaves the world.
pub fn step_dynamics(
    state: &NavState,
    vel_ref: (f64, f64),
    yaw_rate_ref: f64,
    dt: f64,
    cfg: &NavConfig,
    world: &World2D,
    disturbance: (f64, f64),
) -> NavState {
    let a = (dt / cfg.tracking_tau_s).min(1.0);
    let (vx, vy) = state.pose.vel_body;
    let mut pose = state.pose;
    pose.vel_body = (vx + a * (vel_ref.0 - vx), vy + a * (vel_ref.1 - vy));
    pose.yaw_rate_rad_s = yaw_rate_ref;
    pose.yaw_rad += yaw_rate_ref * dt;
    let v = pose.world_velocity();
    pose.pos_x_m += (v.0 + disturbance.0) * dt;
    pose.pos_y_m += (v.1 + disturbance.1) * dt;
    let near_wall = world
        .nearest_segment(pose.position())
        .is_some_and(|(_, d)| d < cfg.collision_radius_m);
    NavState {
        pose,
        commanded_vel: vel_ref,
        sim_time_s: state.sim_time_s + dt,
        collided: state.collided || near_wall || !world.contains(pose.position()),
        ..*state
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// True body velocity including the gust.
    pub vx_true: f64,
    pub vy_true: f64,
    pub mode: NavMode,
    pub vx_ref: f64,
    pub vy_ref: f64,
    pub yaw_rate_ref: f64,
    pub vx_est: Option<f64>,
    pub vy_est: Option<f64>,
    pub nearest_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionInfo {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Angle between heading and the wall hit, 0..90 degrees.
    pub wall_angle_deg: f64,
    /// A turn happened earlier in the episode and the vehicle was
    /// translating (not turning) when it hit.
    pub after_turn: bool,
    /// `after_turn` with the heading within 30 degrees of the wall.
    pub near_parallel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub seed: u64,
    pub ticks: Vec<TickRecord>,
    pub collision: Option<CollisionInfo>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub duration_s: f64,
    pub collision: bool,
    pub collision_info: Option<CollisionInfo>,
    pub mode_histogram: std::collections::BTreeMap<String, usize>,
    pub turns: usize,
    pub distance_flown_m: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EpisodeLog {
    pub fn survived(&self, min_duration_s: f64) -> bool {
        self.collision.is_none() && self.duration_s + 1e-9 >= min_duration_s
    }

    pub fn summary(&self) -> EpisodeSummary {
        let mut hist = [0usize; 4];
        for r in &self.ticks {
            hist[r.mode.index()] += 1;
        }
        let turns = self
            .ticks
            .windows(2)
            .filter(|w| w[0].mode != NavMode::Turn && w[1].mode == NavMode::Turn)
            .count();
        let distance = self
            .ticks
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum();
        EpisodeSummary {
            seed: self.seed,
            duration_s: self.duration_s,
            collision: self.collision.is_some(),
            collision_info: self.collision,
            mode_histogram: NavMode::ALL
                .iter()
                .map(|m| (m.name().to_string(), hist[m.index()]))
                .collect(),
            turns,
            distance_flown_m: distance,
        }
    }

    pub fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "x",
            "y",
            "yaw",
            "vx_true",
            "vy_true",
            "mode",
            "vx_ref",
            "vy_ref",
            "yaw_rate_ref",
            "vx_est",
            "vy_est",
            "nearest",
        ])?;
        for r in &self.ticks {
            w.write_record([
                format!("{:.4}", r.t),
                format!("{:.6}", r.x),
                format!("{:.6}", r.y),
                format!("{:.6}", r.yaw),
                format!("{:.6}", r.vx_true),
                format!("{:.6}", r.vy_true),
                r.mode.to_string(),
                format!("{:.6}", r.vx_ref),
                format!("{:.6}", r.vy_ref),
                format!("{:.6}", r.yaw_rate_ref),
                opt(r.vx_est),
                opt(r.vy_est),
                opt(r.nearest_m),
            ])?;
        }
        w.flush()
    }

    pub fn save(&self, csv_path: &Path, summary_path: &Path) -> Result<(), SimError> {
        let f = File::create(csv_path).map_err(|e| SimError::Io(csv_path.to_path_buf(), e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| SimError::Io(csv_path.to_path_buf(), e))?;
        let json = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        std::fs::write(summary_path, json + "\n").map_err(|e| SimError::Io(summary_path.to_path_buf(), e))
    }
}

fn wall_angle_deg(world: &World2D, pose: &CameraPose) -> f64 {
    let Some((i, _)) = world.nearest_segment(pose.position()) else {
        return 90.0;
    };
    let s = &world.segments[i];
    let along = (s.b.0 - s.a.0, s.b.1 - s.a.1);
    let f = pose.forward();
    let cos = (f.0 * along.0 + f.1 * along.1).abs() / along.0.hypot(along.1);
    cos.clamp(0.0, 1.0).acos().to_degrees()
}

/// Flies one episode at `cfg.rate_hz` until collision or `max_time_s`.
///
/// Each tick: render at the current pose, run the estimator, step the state
/// machine on the nearest obstacle, form the guidance command, integrate.
/// Velocity feedback uses the median-filtered estimate outside of Turn; the
/// filter is cleared when a turn ends because its contents span the turn.
pub fn run_episode(
    world: &World2D,
    start: CameraPose,
    cfg: &NavConfig,
    intr: &CameraIntrinsics<f64>,
    seed: u64,
    max_time_s: f64,
) -> Result<EpisodeLog, SimError> {
    cfg.validate()?;
    let dt = cfg.dt();
    let renderer = Renderer::new(*intr, seed);
    let mut estimator = EdgeFsF64::new(*intr, PipelineConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6057_0000_0000);
    let gust_decay = (-dt / cfg.gust_tau_s).exp();
    let gust_kick = cfg.gust_sigma_m_s * (1.0 - gust_decay * gust_decay).sqrt();
    let mut gust = (0.0, 0.0);

    let mut state = NavState::new(start);
    let mut ticks = Vec::new();
    let mut collision = None;
    let mut turned = false;
    let max_ticks = (max_time_s * cfg.rate_hz).round() as u64;

    for k in 0..max_ticks {
        let t = k as f64 * dt;
        let rendered = match renderer.render(world, &state.pose, t) {
            Ok(r) => r,
            Err(_) => break,
        };
        let out = estimator
            .process(&rendered.frame)
            .map_err(|e| SimError::InvalidConfig(format!("estimator failed: {e}")))?;
        let nearest = out.nearest.map(|o| o.distance_m);

        let prev_mode = state.fsm.mode;
        let (mut fsm, cmd) = step_fsm(&state.fsm, nearest, cfg, dt);
        if fsm.mode == NavMode::Hover && prev_mode != NavMode::Hover && cfg.random_turn_direction {
            fsm.turn_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        let acting = acting_mode(fsm.mode);
        if fsm.mode == NavMode::Check {
            estimator.reset_filter();
            turned = true;
        }

        let estimate = out.filtered.filter(|e| e.valid);
        let mut vel_set = cmd.vel_ref;
        if acting != NavMode::Turn {
            vel_set.0 += force_field(nearest, cfg);
            if let Some(e) = estimate {
                vel_set.0 += cfg.guidance_gain * (vel_set.0 - e.vx_m_s);
                vel_set.1 += cfg.guidance_gain * (vel_set.1 - e.vy_m_s);
            }
        }

        let n: (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        gust = (
            gust_decay * gust.0 + gust_kick * n.0,
            gust_decay * gust.1 + gust_kick * n.1,
        );

        let mut next = step_dynamics(&state, vel_set, cmd.yaw_rate_ref, dt, cfg, world, gust);
        if fsm.mode != prev_mode {
            next.mode_entry_time_s = t;
        }
        next.fsm = fsm;

        let (f, r) = (next.pose.forward(), next.pose.right());
        let (bx, by) = next.pose.vel_body;
        ticks.push(TickRecord {
            t: next.sim_time_s,
            x: next.pose.pos_x_m,
            y: next.pose.pos_y_m,
            yaw: next.pose.yaw_rad,
            vx_true: bx + gust.0 * f.0 + gust.1 * f.1,
            vy_true: by + gust.0 * r.0 + gust.1 * r.1,
            mode: acting,
            vx_ref: vel_set.0,
            vy_ref: vel_set.1,
            yaw_rate_ref: cmd.yaw_rate_ref,
            vx_est: estimate.map(|e| e.vx_m_s),
            vy_est: estimate.map(|e| e.vy_m_s),
            nearest_m: nearest,
        });
        state = next;
        if state.collided {
            let angle = wall_angle_deg(world, &state.pose);
            let translating = cmd.yaw_rate_ref == 0.0;
            collision = Some(CollisionInfo {
                t: state.sim_time_s,
                x: state.pose.pos_x_m,
                y: state.pose.pos_y_m,
                wall_angle_deg: angle,
                after_turn: turned && translating,
                near_parallel: turned && translating && angle < 30.0,
            });
            break;
        }
    }
    Ok(EpisodeLog {
        seed,
        duration_s: state.sim_time_s,
        ticks,
        collision,
    })
}

/// Mode whose command a tick applies. Check only ever appears as the state
/// left behind by a finished turn, and that tick carried the last turn step.
fn acting_mode(next: NavMode) -> NavMode {
    match next {
        NavMode::Check => NavMode::Turn,
        m => m,
    }
}
