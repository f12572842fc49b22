//! Brute-force references used to check the production path.
//!
//! Nothing here calls into `block_matcher`: the 1-D exhaustive matcher
//! re-derives bounds, costs, tie-breaking and the sub-pixel vertex on its own.
//! The dense 2-D block matcher is the expensive whole-image comparator.

use thiserror::Error;

use crate::block_matcher::{MatchConfig, MatchError, MatchProfile};
use crate::edge_distribution::EdgeDistribution;
use crate::frame_io::{CameraIntrinsics, GrayImage};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("image {width}x{height} too small for window {window} and range {range}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
        range: usize,
    },
    #[error("non-positive depth {depth} at column {column}")]
    NonPositiveDepth { column: usize, depth: f64 },
}

/// Straight full search with the same contract as the production matcher.
pub fn exhaustive_match_1d<T: Scalar>(
    reference: &EdgeDistribution,
    target: &EdgeDistribution,
    cfg: &MatchConfig,
    shift_px: &[i32],
) -> Result<MatchProfile<T>, MatchError> {
    let n = reference.len();
    if target.len() != n {
        return Err(MatchError::LengthMismatch {
            reference: n,
            target: target.len(),
        });
    }
    if shift_px.len() != n {
        return Err(MatchError::ShiftLengthMismatch {
            expected: n,
            found: shift_px.len(),
        });
    }
    cfg.validate(n)?;

    let r: Vec<i64> = reference.values().iter().map(|&v| i64::from(v)).collect();
    let t: Vec<i64> = target.values().iter().map(|&v| i64::from(v)).collect();
    let half = (cfg.window_px / 2) as i64;
    let skip = (cfg.search_range_px + cfg.window_px / 2) as i64;
    let mean_ref = r.iter().sum::<i64>() as f64 / n as f64;
    let flat_threshold = cfg.flat_fraction * cfg.window_px as f64 * mean_ref;

    // candidate order: by |k|, then k ascending; first strict minimum wins
    let mut order: Vec<i64> = (i64::from(cfg.search_min_px)..=i64::from(cfg.search_max_px)).collect();
    order.sort_by_key(|&k| (k.abs(), k));

    let mut out = MatchProfile::empty(n);
    for col in 0..n as i64 {
        if col < skip || col >= n as i64 - skip {
            continue;
        }
        let s = i64::from(shift_px[col as usize]);
        let cost_at = |k: i64| -> Option<i64> {
            let mut total = 0i64;
            for j in -half..=half {
                let ti = col + j + k + s;
                if ti < 0 || ti >= n as i64 {
                    return None;
                }
                total += (r[(col + j) as usize] - t[ti as usize]).abs();
            }
            Some(total)
        };
        let mut costs = Vec::new();
        let mut in_bounds = true;
        for k in i64::from(cfg.search_min_px)..=i64::from(cfg.search_max_px) {
            match cost_at(k) {
                Some(c) => costs.push((k, c)),
                None => {
                    in_bounds = false;
                    break;
                }
            }
        }
        if !in_bounds {
            continue;
        }
        let lookup = |k: i64| costs.iter().find(|(kk, _)| *kk == k).map(|(_, c)| *c);
        let mut best_k = order[0];
        let mut best_c = lookup(best_k).unwrap();
        for &k in &order[1..] {
            let c = lookup(k).unwrap();
            if c < best_c {
                best_k = k;
                best_c = c;
            }
        }
        let max_c = costs.iter().map(|(_, c)| *c).max().unwrap();
        let min_c = costs.iter().map(|(_, c)| *c).min().unwrap();
        let mut low = max_c == min_c || ((max_c - min_c) as f64) < flat_threshold;

        let mut frac = 0.0f64;
        if cfg.subpixel && best_c > 0 {
            if let (Some(cm), Some(cp)) = (
                (best_k > i64::from(cfg.search_min_px))
                    .then(|| lookup(best_k - 1))
                    .flatten(),
                (best_k < i64::from(cfg.search_max_px))
                    .then(|| lookup(best_k + 1))
                    .flatten(),
            ) {
                let (a, b, c) = (cm as f64, best_c as f64, cp as f64);
                let curvature = a + c - 2.0 * b;
                if curvature > 0.0 {
                    frac = ((a - c) / (2.0 * curvature)).clamp(-0.5, 0.5);
                } else {
                    low = true;
                }
            }
        }
        let c = col as usize;
        let total = (best_k + s) as i32;
        out.integer_px[c] = total;
        out.displacement_px[c] = T::lit(total as f64 + frac);
        out.cost[c] = best_c as u32;
        out.low_confidence[c] = low;
        out.valid[c] = !low;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseFlowConfig {
    /// Square block side, odd.
    pub window_px: usize,
    pub search_range_px: usize,
    pub grid_step_px: usize,
}

impl Default for DenseFlowConfig {
    fn default() -> Self {
        Self::from(&MatchConfig::default())
    }
}

impl From<&MatchConfig> for DenseFlowConfig {
    fn from(cfg: &MatchConfig) -> Self {
        Self {
            window_px: cfg.window_px,
            search_range_px: cfg.search_range_px,
            grid_step_px: 8,
        }
    }
}

/// Integer 2-D displacements on a regular grid. Cell `(gx, gy)` is centred at
/// pixel `(origin + gx * step, origin_v + gy * step)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFlowField {
    pub grid_step_px: usize,
    pub origin_u: usize,
    pub origin_v: usize,
    pub cols: usize,
    pub rows: usize,
    pub du: Vec<i32>,
    pub dv: Vec<i32>,
    pub valid: Vec<bool>,
}

impl DenseFlowField {
    pub fn cell(&self, gx: usize, gy: usize) -> Option<(i32, i32)> {
        let i = gy * self.cols + gx;
        self.valid[i].then(|| (self.du[i], self.dv[i]))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

fn block_sad(a: &GrayImage, b: &GrayImage, u: usize, v: usize, du: i32, dv: i32, half: usize) -> u32 {
    let w = a.width_px();
    let pa = a.pixels();
    let pb = b.pixels();
    let mut total = 0u32;
    for y in (v - half)..=(v + half) {
        let yb = (y as i64 + i64::from(dv)) as usize;
        let ra = &pa[y * w + u - half..=y * w + u + half];
        let start_b = yb * w + (u as i64 + i64::from(du)) as usize - half;
        let rb = &pb[start_b..start_b + 2 * half + 1];
        total += ra.iter().zip(rb).map(|(&x, &y)| u32::from(x.abs_diff(y))).sum::<u32>();
    }
    total
}

fn dense_search(
    a: &GrayImage,
    b: &GrayImage,
    cfg: &DenseFlowConfig,
    du_range: (i32, i32),
    dv_range: (i32, i32),
) -> Result<DenseFlowField, OracleError> {
    if a.width_px() != b.width_px() || a.height_px() != b.height_px() {
        return Err(OracleError::SizeMismatch(
            a.width_px(),
            a.height_px(),
            b.width_px(),
            b.height_px(),
        ));
    }
    let (w, h) = (a.width_px(), a.height_px());
    let half = cfg.window_px / 2;
    let border = cfg.search_range_px + half;
    if cfg.window_px.is_multiple_of(2) || cfg.grid_step_px == 0 || 2 * border >= w || 2 * border >= h {
        return Err(OracleError::ImageTooSmall {
            width: w,
            height: h,
            window: cfg.window_px,
            range: cfg.search_range_px,
        });
    }
    let cols = (w - 2 * border - 1) / cfg.grid_step_px + 1;
    let rows = (h - 2 * border - 1) / cfg.grid_step_px + 1;
    let mut field = DenseFlowField {
        grid_step_px: cfg.grid_step_px,
        origin_u: border,
        origin_v: border,
        cols,
        rows,
        du: vec![0; cols * rows],
        dv: vec![0; cols * rows],
        valid: vec![false; cols * rows],
    };
    for gy in 0..rows {
        for gx in 0..cols {
            let (u, v) = (border + gx * cfg.grid_step_px, border + gy * cfg.grid_step_px);
            let mut best = (u32::MAX, 0i32, 0i32);
            let mut worst = 0u32;
            for dv in dv_range.0..=dv_range.1 {
                for du in du_range.0..=du_range.1 {
                    let c = block_sad(a, b, u, v, du, dv, half);
                    worst = worst.max(c);
                    let closer = du.abs() + dv.abs() < best.1.abs() + best.2.abs();
                    if c < best.0 || (c == best.0 && closer) {
                        best = (c, du, dv);
                    }
                }
            }
            let i = gy * cols + gx;
            field.du[i] = best.1;
            field.dv[i] = best.2;
            field.valid[i] = worst > best.0;
        }
    }
    Ok(field)
}

/// Exhaustive 2-D SAD block matching: `a(u, v) ~ b(u + du, v + dv)` with both
/// components searched over `±range`.
pub fn dense_block_flow(a: &GrayImage, b: &GrayImage, cfg: &DenseFlowConfig) -> Result<DenseFlowField, OracleError> {
    let r = cfg.search_range_px as i32;
    dense_search(a, b, cfg, (-r, r), (-r, r))
}

/// Dense stereo counterpart: per grid cell, `left(u, v) ~ right(u - s, v)`,
/// `s` in `0..=range`. The returned `du` holds the disparity `s`.
pub fn dense_block_disparity(
    left: &GrayImage,
    right: &GrayImage,
    cfg: &DenseFlowConfig,
) -> Result<DenseFlowField, OracleError> {
    let r = cfg.search_range_px as i32;
    let mut field = dense_search(left, right, cfg, (-r, 0), (0, 0))?;
    for d in &mut field.du {
        *d = -*d;
    }
    Ok(field)
}

/// Expected angular flow per column, normalized units (rad/s):
/// `(-v_y + x * v_x) / d(x) + omega_z`.
pub fn analytic_flow<T: Scalar>(
    intr: &CameraIntrinsics<T>,
    vx_m_s: T,
    vy_m_s: T,
    gyro_z_rad_s: T,
    depth_per_column: &[T],
) -> Result<Vec<T>, OracleError> {
    depth_per_column
        .iter()
        .enumerate()
        .map(|(u, &d)| {
            if !(d > T::zero()) {
                return Err(OracleError::NonPositiveDepth {
                    column: u,
                    depth: d.as_f64(),
                });
            }
            let x = intr.column_to_normalized(u);
            Ok((-vy_m_s + x * vx_m_s) / d + gyro_z_rad_s)
        })
        .collect()
}
