//! Per-column stereo disparity from left/right edge distributions, converted
//! to metric depth with `d = w * r / (fov * s)`.
//!
//! Columns are indexed by the LEFT image, so depth lines up with flow computed
//! on the left camera. For a rectified rig a scene point at left column `u`
//! appears at `u - s` on the right, `s >= 0`.

use crate::block_matcher::{match_profiles, MatchConfig, MatchError, MatchProfile};
use crate::edge_distribution::EdgeDistribution;
use crate::frame_io::CameraIntrinsics;
use crate::scalar::Scalar;

/// Default minimum usable disparity, px.
pub const DEFAULT_MIN_DISPARITY_PX: f64 = 0.25;
/// Default obstacle-detector window, columns.
pub const DEFAULT_OBSTACLE_WINDOW: usize = 11;

/// Matches left against right with a one-sided search covering disparities
/// `0..=search_range_px`. The returned profile holds disparities (non-negative).
pub fn compute_disparity<T: Scalar>(
    left: &EdgeDistribution,
    right: &EdgeDistribution,
    cfg: &MatchConfig,
) -> Result<MatchProfile<T>, MatchError> {
    let range = cfg.search_range_px as i32;
    let stereo_cfg = cfg.with_search_bounds(-range, 0);
    let zero = vec![0; left.len()];
    // left[u] ~ right[u - s]: the matcher reports k = -s
    let mut profile = match_profiles::<T>(left, right, &stereo_cfg, &zero)?;
    for (d, k) in profile.displacement_px.iter_mut().zip(profile.integer_px.iter_mut()) {
        *d = -*d;
        *k = -*k;
    }
    Ok(profile)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthSample<T> {
    Valid(T),
    /// Matched, but the disparity is below the usable minimum.
    BeyondRange,
    Invalid,
}

impl<T: Copy> DepthSample<T> {
    pub fn depth(&self) -> Option<T> {
        match *self {
            DepthSample::Valid(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthProfile<T> {
    pub disparity_px: Vec<T>,
    pub depth_m: Vec<DepthSample<T>>,
}

impl<T: Scalar> DepthProfile<T> {
    pub fn width(&self) -> usize {
        self.depth_m.len()
    }

    pub fn depth(&self, column: usize) -> Option<T> {
        self.depth_m[column].depth()
    }

    pub fn is_valid(&self, column: usize) -> bool {
        matches!(self.depth_m[column], DepthSample::Valid(_))
    }

    pub fn valid_count(&self) -> usize {
        self.depth_m
            .iter()
            .filter(|s| matches!(s, DepthSample::Valid(_)))
            .count()
    }

    pub fn mean_valid_depth(&self) -> Option<T> {
        let mut sum = T::zero();
        let mut n = 0usize;
        for d in self.depth_m.iter().filter_map(DepthSample::depth) {
            sum += d;
            n += 1;
        }
        (n > 0).then(|| sum / T::from_usize_lossy(n))
    }
}

/// `w * r / (fov * s)`.
pub fn depth_from_disparity<T: Scalar>(disparity_px: T, intr: &CameraIntrinsics<T>) -> T {
    T::from_usize_lossy(intr.width_px()) * intr.baseline_m() / (intr.fov_h_rad() * disparity_px)
}

/// Inverse of [`depth_from_disparity`].
pub fn disparity_from_depth<T: Scalar>(depth_m: T, intr: &CameraIntrinsics<T>) -> T {
    T::from_usize_lossy(intr.width_px()) * intr.baseline_m() / (intr.fov_h_rad() * depth_m)
}

pub fn disparity_to_depth<T: Scalar>(
    profile: &MatchProfile<T>,
    intr: &CameraIntrinsics<T>,
    min_disparity_px: T,
) -> DepthProfile<T> {
    let depth_m = profile
        .displacement_px
        .iter()
        .zip(&profile.valid)
        .map(|(&s, &valid)| {
            if !valid {
                DepthSample::Invalid
            } else if s < min_disparity_px {
                DepthSample::BeyondRange
            } else {
                DepthSample::Valid(depth_from_disparity(s, intr))
            }
        })
        .collect();
    DepthProfile {
        disparity_px: profile.displacement_px.clone(),
        depth_m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle<T> {
    pub distance_m: T,
    /// Centre column of the closest window.
    pub column: usize,
}

/// Smallest mean depth over any `window` consecutive columns that are all
/// valid. Ties keep the leftmost window.
pub fn nearest_obstacle<T: Scalar>(depth: &DepthProfile<T>, window: usize) -> Option<Obstacle<T>> {
    let w = depth.width();
    if window == 0 || window > w {
        return None;
    }
    let k = T::from_usize_lossy(window);
    let mut best: Option<Obstacle<T>> = None;
    for start in 0..=w - window {
        let mut sum = T::zero();
        let mut all_valid = true;
        for s in &depth.depth_m[start..start + window] {
            match s.depth() {
                Some(d) => sum += d,
                None => {
                    all_valid = false;
                    break;
                }
            }
        }
        if !all_valid {
            continue;
        }
        let mean = sum / k;
        if best.is_none_or(|b| mean < b.distance_m) {
            best = Some(Obstacle {
                distance_m: mean,
                column: start + window / 2,
            });
        }
    }
    best
}
