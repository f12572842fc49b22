//! Per-frame composition of the estimator stages.

use thiserror::Error;

use crate::block_matcher::{MatchConfig, MatchError};
use crate::edge_distribution::{edge_distribution, EdgeError};
use crate::edge_flow::{EdgeFlow, FlowError, FlowProfile};
use crate::edge_stereo::{
    compute_disparity, disparity_to_depth, nearest_obstacle, DepthProfile, Obstacle, DEFAULT_MIN_DISPARITY_PX,
    DEFAULT_OBSTACLE_WINDOW,
};
use crate::frame_io::{CameraIntrinsics, StereoFrame};
use crate::scalar::Scalar;
use crate::velocity_estimator::{
    fit_velocity, fit_velocity_robust, scale_flow, MedianFilter, VelocityEstimate, DEFAULT_MIN_POINTS, MEDIAN_WINDOW,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("frame is {found_w}x{found_h}, intrinsics expect {want_w}x{want_h}")]
    FrameSize {
        found_w: usize,
        found_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub matcher: MatchConfig,
    pub min_disparity_px: f64,
    pub min_points: usize,
    pub median_window: usize,
    pub obstacle_window: usize,
    /// Reject gross flow mismatches before the line fit.
    pub robust_fit: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            matcher: MatchConfig::default(),
            min_disparity_px: DEFAULT_MIN_DISPARITY_PX,
            min_points: DEFAULT_MIN_POINTS,
            median_window: MEDIAN_WINDOW,
            obstacle_window: DEFAULT_OBSTACLE_WINDOW,
            robust_fit: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameOutput<T> {
    pub timestamp_s: f64,
    /// `None` on the first frame.
    pub flow: Option<FlowProfile<T>>,
    pub depth: DepthProfile<T>,
    pub raw: VelocityEstimate<T>,
    /// Median of the most recent valid raw estimates.
    pub filtered: Option<VelocityEstimate<T>>,
    pub nearest: Option<Obstacle<T>>,
}

/// Stateful estimator: stereo frames in, velocity and obstacle distance out.
#[derive(Debug, Clone)]
pub struct EdgeFs<T> {
    intrinsics: CameraIntrinsics<T>,
    config: PipelineConfig,
    flow: EdgeFlow,
    filter: MedianFilter<T>,
}

impl<T: Scalar> EdgeFs<T> {
    pub fn new(intrinsics: CameraIntrinsics<T>, config: PipelineConfig) -> Self {
        Self {
            intrinsics,
            config,
            flow: EdgeFlow::default(),
            filter: MedianFilter::new(config.median_window),
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics<T> {
        &self.intrinsics
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.flow.reset();
        self.filter.clear();
    }

    /// Drops the median-filter contents but keeps the flow history.
    pub fn reset_filter(&mut self) {
        self.filter.clear();
    }

    pub fn process(&mut self, frame: &StereoFrame) -> Result<FrameOutput<T>, PipelineError> {
        let intr = &self.intrinsics;
        if frame.left.width_px() != intr.width_px() || frame.left.height_px() != intr.height_px() {
            return Err(PipelineError::FrameSize {
                found_w: frame.left.width_px(),
                found_h: frame.left.height_px(),
                want_w: intr.width_px(),
                want_h: intr.height_px(),
            });
        }
        let t = frame.timestamp_s;
        let left = edge_distribution(&frame.left, t)?;
        let right = edge_distribution(&frame.right, t)?;

        let disparity = compute_disparity::<T>(&left, &right, &self.config.matcher)?;
        let depth = disparity_to_depth(&disparity, intr, T::lit(self.config.min_disparity_px));
        let nearest = nearest_obstacle(&depth, self.config.obstacle_window);

        let flow = self
            .flow
            .update::<T>(left, frame.gyro_z_rad_s, intr, &self.config.matcher)?;
        let raw = match &flow {
            Some(f) => {
                let points = scale_flow(f, &depth, intr);
                if self.config.robust_fit {
                    fit_velocity_robust(&points, self.config.min_points, t)
                } else {
                    fit_velocity(&points, self.config.min_points, t)
                }
            }
            None => VelocityEstimate::invalid(0, t),
        };
        let filtered = if raw.valid {
            self.filter.push(raw)
        } else {
            self.filter.current()
        };
        Ok(FrameOutput {
            timestamp_s: t,
            flow,
            depth,
            raw,
            filtered,
            nearest,
        })
    }
}
