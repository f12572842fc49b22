//! Edge-based stereo flow and velocity estimation for small cameras.
//!
//! Each image is compressed into a one-dimensional horizontal edge profile.
//! Profiles are block matched over time for optical flow and between the two
//! cameras for depth, and a line fit through depth-scaled flow yields the
//! forward and sideways velocity.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`). Aliases
//! for both precisions are provided below.

pub mod block_matcher;
pub mod edge_distribution;
pub mod edge_flow;
pub mod edge_stereo;
pub mod frame_io;
pub mod oracles;
pub mod pipeline;
pub mod scalar;
pub mod velocity_estimator;

pub use block_matcher::{match_profiles, MatchConfig, MatchError, MatchProfile};
pub use edge_distribution::{edge_distribution, EdgeDistribution, EdgeError};
pub use edge_flow::{compute_flow, EdgeFlow, FlowError, FlowProfile};
pub use edge_stereo::{compute_disparity, disparity_to_depth, nearest_obstacle, DepthProfile, DepthSample, Obstacle};
pub use frame_io::{CameraIntrinsics, FrameIoError, GrayImage, SequenceManifest, StereoFrame};
pub use pipeline::{EdgeFs, FrameOutput, PipelineConfig, PipelineError};
pub use scalar::Scalar;
pub use velocity_estimator::{compute_metrics, fit_velocity, MetricsReport, VelocityEstimate};

pub type CameraIntrinsicsF32 = CameraIntrinsics<f32>;
pub type CameraIntrinsicsF64 = CameraIntrinsics<f64>;
pub type MatchProfileF32 = MatchProfile<f32>;
pub type MatchProfileF64 = MatchProfile<f64>;
pub type FlowProfileF32 = FlowProfile<f32>;
pub type FlowProfileF64 = FlowProfile<f64>;
pub type DepthProfileF32 = DepthProfile<f32>;
pub type DepthProfileF64 = DepthProfile<f64>;
pub type VelocityEstimateF32 = VelocityEstimate<f32>;
pub type VelocityEstimateF64 = VelocityEstimate<f64>;
pub type EdgeFsF32 = EdgeFs<f32>;
pub type EdgeFsF64 = EdgeFs<f64>;
