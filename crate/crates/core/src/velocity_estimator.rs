//! Depth-scaled flow, the velocity line fit, median filtering and the
//! estimate-vs-truth quality metrics.
//!
//! With `x` the normalized column coordinate and `o` the translational flow in
//! rad/s, each column satisfies `d(x) * o(x) = -v_y + x * v_x`, so an ordinary
//! least-squares line through `(x, d * o)` has slope `v_x` and intercept `-v_y`.

use std::collections::VecDeque;

use thiserror::Error;

use crate::edge_flow::FlowProfile;
use crate::edge_stereo::DepthProfile;
use crate::frame_io::CameraIntrinsics;
use crate::scalar::{median, Scalar};

pub const DEFAULT_MIN_POINTS: usize = 20;
pub const MEDIAN_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint<T> {
    /// `(u - w/2) / f`
    pub x_norm: T,
    /// Depth times angular translational flow, m/s.
    pub y_scaled: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate<T> {
    /// Forward, m/s.
    pub vx_m_s: T,
    /// Sideways (positive to the right), m/s.
    pub vy_m_s: T,
    pub n_points: usize,
    pub residual_rms: T,
    pub timestamp_s: f64,
    pub valid: bool,
}

impl<T: Scalar> VelocityEstimate<T> {
    pub fn invalid(n_points: usize, timestamp_s: f64) -> Self {
        Self {
            vx_m_s: T::zero(),
            vy_m_s: T::zero(),
            n_points,
            residual_rms: T::zero(),
            timestamp_s,
            valid: false,
        }
    }
}

/// Builds fit points from columns valid in both profiles.
pub fn scale_flow<T: Scalar>(
    flow: &FlowProfile<T>,
    depth: &DepthProfile<T>,
    intr: &CameraIntrinsics<T>,
) -> Vec<FitPoint<T>> {
    let f = intr.focal_px();
    (0..flow.width().min(depth.width()))
        .filter(|&u| flow.valid[u])
        .filter_map(|u| {
            let d = depth.depth(u)?;
            let angular = flow.translational_px_s[u] / f;
            Some(FitPoint {
                x_norm: intr.column_to_normalized(u),
                y_scaled: d * angular,
            })
        })
        .collect()
}

/// Ordinary least squares of `y_scaled` on `x_norm`; `v_x = slope`,
/// `v_y = -intercept`. Fewer than `min_points` points (or no spread in `x`)
/// yields an invalid estimate carrying the point count.
pub fn fit_velocity<T: Scalar>(points: &[FitPoint<T>], min_points: usize, timestamp_s: f64) -> VelocityEstimate<T> {
    let n = points.len();
    if n < min_points.max(2) {
        return VelocityEstimate::invalid(n, timestamp_s);
    }
    let (lo, hi) = points.iter().fold((points[0].x_norm, points[0].x_norm), |(lo, hi), p| {
        (lo.min(p.x_norm), hi.max(p.x_norm))
    });
    if !(hi > lo) {
        return VelocityEstimate::invalid(n, timestamp_s);
    }
    let nf = T::from_usize_lossy(n);
    let mean_x = points.iter().fold(T::zero(), |a, p| a + p.x_norm) / nf;
    let mean_y = points.iter().fold(T::zero(), |a, p| a + p.y_scaled) / nf;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for p in points {
        let dx = p.x_norm - mean_x;
        sxx += dx * dx;
        sxy += dx * (p.y_scaled - mean_y);
    }
    if !(sxx > T::zero()) {
        return VelocityEstimate::invalid(n, timestamp_s);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse = points.iter().fold(T::zero(), |a, p| {
        let r = p.y_scaled - (intercept + slope * p.x_norm);
        a + r * r
    });
    VelocityEstimate {
        vx_m_s: slope,
        vy_m_s: -intercept,
        n_points: n,
        residual_rms: (sse / nf).sqrt(),
        timestamp_s,
        valid: true,
    }
}

/// Residuals beyond this many robust standard deviations are dropped.
pub const OUTLIER_GATE_SIGMA: f64 = 3.0;

/// Line fit that tolerates gross flow mismatches. A Theil-Sen line seeds the
/// residuals, points further than [`OUTLIER_GATE_SIGMA`] MAD-sigmas from it are
/// dropped, and the inliers go through [`fit_velocity`]. `n_points` counts
/// inliers only.
pub fn fit_velocity_robust<T: Scalar>(
    points: &[FitPoint<T>],
    min_points: usize,
    timestamp_s: f64,
) -> VelocityEstimate<T> {
    let n = points.len();
    if n < min_points.max(2) {
        return VelocityEstimate::invalid(n, timestamp_s);
    }
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let dx = b.x_norm - a.x_norm;
            if dx != T::zero() {
                slopes.push((b.y_scaled - a.y_scaled) / dx);
            }
        }
    }
    let Some(slope) = median(&slopes) else {
        return VelocityEstimate::invalid(n, timestamp_s);
    };
    let offsets: Vec<T> = points.iter().map(|p| p.y_scaled - slope * p.x_norm).collect();
    let intercept = median(&offsets).expect("non-empty");
    let resid: Vec<T> = offsets.iter().map(|&o| (o - intercept).abs()).collect();
    let mad = median(&resid).expect("non-empty");
    // a near-perfect seed would gate out honest noise, so floor the threshold
    let scale = (T::lit(1.4826) * mad).max(T::lit(1e-9) * (T::one() + intercept.abs()));
    let gate = T::lit(OUTLIER_GATE_SIGMA) * scale;
    let inliers: Vec<FitPoint<T>> = points
        .iter()
        .zip(&resid)
        .filter(|(_, &r)| r <= gate)
        .map(|(p, _)| *p)
        .collect();
    fit_velocity(&inliers, min_points, timestamp_s)
}

/// Componentwise median of the valid estimates in `window`; the timestamp is
/// the newest one. Returns `None` when no estimate is valid.
pub fn median_filter_velocity<T: Scalar>(window: &[VelocityEstimate<T>]) -> Option<VelocityEstimate<T>> {
    let valid: Vec<&VelocityEstimate<T>> = window.iter().filter(|e| e.valid).collect();
    let newest = window.iter().map(|e| e.timestamp_s).fold(f64::NEG_INFINITY, f64::max);
    let vx = median(&valid.iter().map(|e| e.vx_m_s).collect::<Vec<_>>())?;
    let vy = median(&valid.iter().map(|e| e.vy_m_s).collect::<Vec<_>>())?;
    let n_points = valid.iter().map(|e| e.n_points).min().unwrap_or(0);
    let rms = median(&valid.iter().map(|e| e.residual_rms).collect::<Vec<_>>())?;
    Some(VelocityEstimate {
        vx_m_s: vx,
        vy_m_s: vy,
        n_points,
        residual_rms: rms,
        timestamp_s: newest,
        valid: true,
    })
}

/// Sliding window over the last [`MEDIAN_WINDOW`] estimates.
#[derive(Debug, Clone)]
pub struct MedianFilter<T> {
    window: VecDeque<VelocityEstimate<T>>,
    size: usize,
}

impl<T: Scalar> Default for MedianFilter<T> {
    fn default() -> Self {
        Self::new(MEDIAN_WINDOW)
    }
}

impl<T: Scalar> MedianFilter<T> {
    pub fn new(size: usize) -> Self {
        Self {
            window: VecDeque::with_capacity(size.max(1)),
            size: size.max(1),
        }
    }

    pub fn push(&mut self, estimate: VelocityEstimate<T>) -> Option<VelocityEstimate<T>> {
        if self.window.len() == self.size {
            self.window.pop_front();
        }
        self.window.push_back(estimate);
        self.current()
    }

    pub fn current(&self) -> Option<VelocityEstimate<T>> {
        let (a, b) = self.window.as_slices();
        let mut all = a.to_vec();
        all.extend_from_slice(b);
        median_filter_velocity(&all)
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("series lengths differ: {estimates} estimates, {truth} truth")]
    LengthMismatch { estimates: usize, truth: usize },
    #[error("empty series")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport<T> {
    /// Mean squared error.
    pub mse: T,
    /// Population variance of `estimate - truth`.
    pub var: T,
    /// Lag-0 normalized cross-correlation of the zero-mean series. `None` when
    /// either series has zero variance.
    pub nmxm: Option<T>,
}

pub fn compute_metrics<T: Scalar>(estimates: &[T], truth: &[T]) -> Result<MetricsReport<T>, MetricsError> {
    if estimates.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            estimates: estimates.len(),
            truth: truth.len(),
        });
    }
    if estimates.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = T::from_usize_lossy(estimates.len());
    let errors: Vec<T> = estimates.iter().zip(truth).map(|(&e, &t)| e - t).collect();
    let mse = errors.iter().fold(T::zero(), |a, &e| a + e * e) / n;
    let mean_err = errors.iter().fold(T::zero(), |a, &e| a + e) / n;
    let var = errors
        .iter()
        .fold(T::zero(), |a, &e| a + (e - mean_err) * (e - mean_err))
        / n;

    let mean_e = estimates.iter().fold(T::zero(), |a, &x| a + x) / n;
    let mean_t = truth.iter().fold(T::zero(), |a, &x| a + x) / n;
    let (mut see, mut stt, mut set) = (T::zero(), T::zero(), T::zero());
    for (&e, &t) in estimates.iter().zip(truth) {
        let (de, dt) = (e - mean_e, t - mean_t);
        see += de * de;
        stt += dt * dt;
        set += de * dt;
    }
    let nmxm = if see > T::zero() && stt > T::zero() {
        let r = set / (see.sqrt() * stt.sqrt());
        Some(r.max(-T::one()).min(T::one()))
    } else {
        None
    };
    Ok(MetricsReport { mse, var, nmxm })
}
