//! Temporal edge-distribution matching with an adaptive time horizon and yaw
//! derotation, yielding per-column translational flow in px/s.

use std::collections::VecDeque;

use thiserror::Error;

use crate::block_matcher::{match_profiles, MatchConfig, MatchError};
use crate::edge_distribution::EdgeDistribution;
use crate::frame_io::CameraIntrinsics;
use crate::scalar::{median, Scalar};

pub const DEFAULT_HISTORY: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("flow needs at least 2 distributions in history, have {0}")]
    InsufficientHistory(usize),
    #[error("history timestamps must increase: {prev} then {next}")]
    NonMonotonicTimestamp { prev: f64, next: f64 },
    #[error("history capacity must be at least 2, got {0}")]
    InvalidCapacity(usize),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub distribution: EdgeDistribution,
    /// Yaw rate over the interval ending at this entry.
    pub gyro_z_rad_s: f64,
}

impl HistoryEntry {
    pub fn timestamp_s(&self) -> f64 {
        self.distribution.source_timestamp_s()
    }
}

/// Bounded ring of recent distributions, newest last.
#[derive(Debug, Clone)]
pub struct DistributionHistory {
    entries: VecDeque<HistoryEntry>,
    capacity: usize,
}

impl Default for DistributionHistory {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY).expect("default capacity")
    }
}

impl DistributionHistory {
    pub fn new(capacity: usize) -> Result<Self, FlowError> {
        if capacity < 2 {
            return Err(FlowError::InvalidCapacity(capacity));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn push(&mut self, distribution: EdgeDistribution, gyro_z_rad_s: f64) -> Result<(), FlowError> {
        if let Some(last) = self.entries.back() {
            let (prev, next) = (last.timestamp_s(), distribution.source_timestamp_s());
            if !(next > prev) {
                return Err(FlowError::NonMonotonicTimestamp { prev, next });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(HistoryEntry {
            distribution,
            gyro_z_rad_s,
        });
        Ok(())
    }

    /// Entry `n` frames before the newest (`back(0)` is the newest).
    pub fn back(&self, n: usize) -> Option<&HistoryEntry> {
        let len = self.entries.len();
        if n >= len {
            None
        } else {
            self.entries.get(len - 1 - n)
        }
    }

    pub fn latest(&self) -> Option<&HistoryEntry> {
        self.back(0)
    }

    /// Time between the newest entry and the one `n` frames back.
    pub fn elapsed_s(&self, n: usize) -> Option<f64> {
        Some(self.back(0)?.timestamp_s() - self.back(n)?.timestamp_s())
    }

    /// Yaw rate averaged over the last `n` intervals, time-weighted.
    pub fn mean_gyro_z(&self, n: usize) -> Option<f64> {
        let elapsed = self.elapsed_s(n)?;
        if n == 0 || elapsed <= 0.0 {
            return None;
        }
        let mut angle = 0.0;
        for j in 0..n {
            let newer = self.back(j)?;
            let older = self.back(j + 1)?;
            angle += newer.gyro_z_rad_s * (newer.timestamp_s() - older.timestamp_s());
        }
        Some(angle / elapsed)
    }
}

/// Chooses how many frames back to match so the expected displacement is
/// about `target_px`: `n = clamp(round(target / max(|prev|, floor)), 1, len - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonRule {
    pub target_px: f64,
    pub floor_px: f64,
}

impl Default for HorizonRule {
    fn default() -> Self {
        Self {
            target_px: 3.0,
            floor_px: 0.05,
        }
    }
}

impl HorizonRule {
    pub fn select(&self, prev_flow_px_per_frame: f64, history_len: usize) -> Result<usize, FlowError> {
        if history_len < 2 {
            return Err(FlowError::InsufficientHistory(history_len));
        }
        let speed = prev_flow_px_per_frame.abs().max(self.floor_px);
        let raw = (self.target_px / speed).round();
        let max_n = (history_len - 1) as f64;
        Ok(raw.clamp(1.0, max_n) as usize)
    }
}

pub fn select_horizon(prev_flow_px_per_frame: f64, history: &DistributionHistory) -> Result<usize, FlowError> {
    HorizonRule::default().select(prev_flow_px_per_frame, history.len())
}

/// Image flow induced by yaw, constant across columns: `omega_z * w / fov`.
pub fn derotation_flow<T: Scalar>(gyro_z_rad_s: T, intr: &CameraIntrinsics<T>) -> T {
    gyro_z_rad_s * T::from_usize_lossy(intr.width_px()) / intr.fov_h_rad()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile<T> {
    /// Measured displacement over the horizon, px.
    pub displacement_px: Vec<T>,
    /// Measured flow `displacement / elapsed`, px/s.
    pub flow_px_s: Vec<T>,
    /// `flow_px_s - rotational_px_s` on valid columns, zero elsewhere.
    pub translational_px_s: Vec<T>,
    pub rotational_px_s: T,
    pub valid: Vec<bool>,
    pub horizon_frames: usize,
    pub elapsed_s: T,
}

impl<T: Scalar> FlowProfile<T> {
    pub fn width(&self) -> usize {
        self.valid.len()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Median measured displacement magnitude per frame over valid columns.
    pub fn typical_px_per_frame(&self) -> Option<f64> {
        let mags: Vec<f64> = self
            .displacement_px
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(d, _)| d.as_f64().abs())
            .collect();
        median(&mags).map(|m| m / self.horizon_frames as f64)
    }

    /// Median derotated displacement magnitude per frame over valid columns.
    /// The rotational part is absorbed by the pre-shift, so this is what the
    /// matcher actually has to resolve.
    pub fn translational_px_per_frame(&self) -> Option<f64> {
        let per_frame = self.elapsed_s.as_f64() / self.horizon_frames as f64;
        let mags: Vec<f64> = self
            .translational_px_s
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(d, _)| d.as_f64().abs() * per_frame)
            .collect();
        median(&mags)
    }
}

/// Matches the newest distribution against the one `n` frames back, with the
/// search pre-shifted by the rounded yaw-induced displacement.
///
/// The yaw rate is taken from the gyro samples stored in `history`, averaged
/// over the horizon.
pub fn compute_flow_with_horizon<T: Scalar>(
    history: &DistributionHistory,
    horizon: usize,
    intr: &CameraIntrinsics<T>,
    cfg: &MatchConfig,
) -> Result<FlowProfile<T>, FlowError> {
    if history.len() < 2 {
        return Err(FlowError::InsufficientHistory(history.len()));
    }
    let n = horizon.clamp(1, history.len() - 1);
    let current = history.latest().expect("non-empty");
    let past = history.back(n).expect("n < len");
    let elapsed = T::lit(history.elapsed_s(n).expect("n < len"));
    let gyro = T::lit(history.mean_gyro_z(n).expect("n >= 1"));
    let rotational = derotation_flow(gyro, intr);

    let pre_shift = (rotational * elapsed).round().to_i32().unwrap_or(0);
    let width = current.distribution.len();
    let shifts = vec![pre_shift; width];
    let matched = match_profiles::<T>(&past.distribution, &current.distribution, cfg, &shifts)?;

    let mut flow_px_s = vec![T::zero(); width];
    let mut translational_px_s = vec![T::zero(); width];
    for i in 0..width {
        if matched.valid[i] {
            flow_px_s[i] = matched.displacement_px[i] / elapsed;
            translational_px_s[i] = flow_px_s[i] - rotational;
        }
    }
    Ok(FlowProfile {
        displacement_px: matched.displacement_px,
        flow_px_s,
        translational_px_s,
        rotational_px_s: rotational,
        valid: matched.valid,
        horizon_frames: n,
        elapsed_s: elapsed,
    })
}

/// Full flow step: choose the horizon from the previous per-frame flow, then
/// match.
pub fn compute_flow<T: Scalar>(
    history: &DistributionHistory,
    prev_flow_px_per_frame: f64,
    intr: &CameraIntrinsics<T>,
    cfg: &MatchConfig,
    rule: &HorizonRule,
) -> Result<FlowProfile<T>, FlowError> {
    let n = rule.select(prev_flow_px_per_frame, history.len())?;
    compute_flow_with_horizon(history, n, intr, cfg)
}

/// Stateful flow estimator: owns the history and the previous derotated flow
/// magnitude that drives the horizon.
#[derive(Debug, Clone)]
pub struct EdgeFlow {
    history: DistributionHistory,
    rule: HorizonRule,
    prev_px_per_frame: f64,
}

impl Default for EdgeFlow {
    fn default() -> Self {
        Self::new(DistributionHistory::default(), HorizonRule::default())
    }
}

impl EdgeFlow {
    pub fn new(history: DistributionHistory, rule: HorizonRule) -> Self {
        Self {
            history,
            rule,
            prev_px_per_frame: 0.0,
        }
    }

    pub fn history(&self) -> &DistributionHistory {
        &self.history
    }

    pub fn prev_px_per_frame(&self) -> f64 {
        self.prev_px_per_frame
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.prev_px_per_frame = 0.0;
    }

    /// Adds a distribution and, once two are available, returns the flow.
    pub fn update<T: Scalar>(
        &mut self,
        distribution: EdgeDistribution,
        gyro_z_rad_s: f64,
        intr: &CameraIntrinsics<T>,
        cfg: &MatchConfig,
    ) -> Result<Option<FlowProfile<T>>, FlowError> {
        self.history.push(distribution, gyro_z_rad_s)?;
        if self.history.len() < 2 {
            return Ok(None);
        }
        let flow = compute_flow(&self.history, self.prev_px_per_frame, intr, cfg, &self.rule)?;
        if let Some(p) = flow.translational_px_per_frame() {
            self.prev_px_per_frame = p;
        }
        Ok(Some(flow))
    }
}
