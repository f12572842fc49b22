//! 1-D SAD block matching between edge distributions, with parabolic
//! sub-pixel refinement. Shared by temporal flow and stereo disparity.
//!
//! Sign convention: the displacement `k` of column `i` is the shift applied to
//! the target index so that `reference[i] ≈ target[i + k]`. Content that moves
//! right between reference and target therefore has positive displacement.

use thiserror::Error;

use crate::edge_distribution::EdgeDistribution;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchError {
    #[error("distribution lengths differ: reference {reference}, target {target}")]
    LengthMismatch { reference: usize, target: usize },
    #[error("shift array has {found} entries for {expected} columns")]
    ShiftLengthMismatch { expected: usize, found: usize },
    #[error("invalid match config: {0}")]
    InvalidConfig(String),
    #[error("window/range need {needed} columns, distribution has {width}")]
    WindowExceedsWidth { needed: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// SAD block size, odd.
    pub window_px: usize,
    /// Symmetric bound on the search; also sets the excluded border.
    pub search_range_px: usize,
    pub search_min_px: i32,
    pub search_max_px: i32,
    pub subpixel: bool,
    /// Columns whose cost spread over the search is below
    /// `flat_fraction * window_px * mean(reference)` are low-confidence.
    pub flat_fraction: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self::new(11, 15)
    }
}

impl MatchConfig {
    /// Symmetric search over `[-range, range]`.
    pub fn new(window_px: usize, search_range_px: usize) -> Self {
        let r = search_range_px as i32;
        Self {
            window_px,
            search_range_px,
            search_min_px: -r,
            search_max_px: r,
            subpixel: true,
            flat_fraction: 0.01,
        }
    }

    pub fn with_search_bounds(mut self, min_px: i32, max_px: i32) -> Self {
        self.search_min_px = min_px;
        self.search_max_px = max_px;
        self
    }

    pub fn with_subpixel(mut self, on: bool) -> Self {
        self.subpixel = on;
        self
    }

    pub fn half_window(&self) -> usize {
        self.window_px / 2
    }

    /// Columns excluded on each side: range plus half the block.
    pub fn excluded_border(&self) -> usize {
        self.search_range_px + self.half_window()
    }

    pub fn candidate_count(&self) -> usize {
        (self.search_max_px - self.search_min_px + 1) as usize
    }

    pub fn validate(&self, width: usize) -> Result<(), MatchError> {
        if self.window_px < 3 || self.window_px.is_multiple_of(2) {
            return Err(MatchError::InvalidConfig(format!(
                "window {} must be odd and >= 3",
                self.window_px
            )));
        }
        if self.search_min_px > self.search_max_px {
            return Err(MatchError::InvalidConfig(format!(
                "search bounds [{}, {}] are inverted",
                self.search_min_px, self.search_max_px
            )));
        }
        let range = self.search_range_px as i64;
        if i64::from(self.search_min_px).abs() > range || i64::from(self.search_max_px).abs() > range {
            return Err(MatchError::InvalidConfig(format!(
                "search bounds [{}, {}] exceed range {}",
                self.search_min_px, self.search_max_px, self.search_range_px
            )));
        }
        if !(self.flat_fraction >= 0.0) {
            return Err(MatchError::InvalidConfig("flat_fraction must be >= 0".into()));
        }
        let needed = 2 * self.excluded_border() + 1;
        if needed > width {
            return Err(MatchError::WindowExceedsWidth { needed, width });
        }
        Ok(())
    }

    fn flat_threshold(&self, reference: &EdgeDistribution) -> f64 {
        self.flat_fraction * self.window_px as f64 * reference.mean()
    }
}

/// Per-column result of a match. Entries outside the valid mask carry no
/// meaning beyond `low_confidence`, which is set when a full search ran but
/// the cost surface was too flat to trust.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchProfile<T> {
    /// Sub-pixel displacement including the pre-shift.
    pub displacement_px: Vec<T>,
    /// Integer argmin including the pre-shift.
    pub integer_px: Vec<i32>,
    pub valid: Vec<bool>,
    pub low_confidence: Vec<bool>,
    /// Best SAD cost per column.
    pub cost: Vec<u32>,
}

impl<T: Scalar> MatchProfile<T> {
    pub fn empty(width: usize) -> Self {
        Self {
            displacement_px: vec![T::zero(); width],
            integer_px: vec![0; width],
            valid: vec![false; width],
            low_confidence: vec![false; width],
            cost: vec![0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.valid.len()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Whether the search ran at this column (in-bounds), regardless of confidence.
    pub fn searched(&self, column: usize) -> bool {
        self.valid[column] || self.low_confidence[column]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpixelOffset<T> {
    pub offset: T,
    /// Set when the parabola through the three costs has no minimum.
    pub degenerate: bool,
}

/// Vertex of the parabola through costs at `k*-1, k*, k*+1`, relative to `k*`:
/// `0.5 * (c- - c+) / (c- - 2 c0 + c+)`, clamped to `[-0.5, 0.5]`.
pub fn subpixel_refine<T: Scalar>(c_minus: T, c_center: T, c_plus: T) -> SubpixelOffset<T> {
    let denom = c_minus - T::lit(2.0) * c_center + c_plus;
    if !(denom > T::zero()) {
        return SubpixelOffset {
            offset: T::zero(),
            degenerate: true,
        };
    }
    let half = T::lit(0.5);
    let offset = half * (c_minus - c_plus) / denom;
    SubpixelOffset {
        offset: offset.max(-half).min(half),
        degenerate: false,
    }
}

#[inline]
fn sad(a: &[u32], b: &[u32]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y)).sum()
}

/// SAD of the `window`-wide block centred at `center` in `reference` against
/// the block centred at `center + offset` in `target`. `None` if either block
/// leaves the arrays.
pub fn block_cost(reference: &[u32], target: &[u32], center: usize, offset: isize, window: usize) -> Option<u32> {
    let half = (window / 2) as isize;
    let c = center as isize;
    let (r0, t0) = (c - half, c + offset - half);
    let w = window as isize;
    if r0 < 0 || t0 < 0 || r0 + w > reference.len() as isize || t0 + w > target.len() as isize {
        return None;
    }
    let (r0, t0) = (r0 as usize, t0 as usize);
    Some(sad(&reference[r0..r0 + window], &target[t0..t0 + window]))
}

/// Matches every column of `reference` against `target`.
///
/// `shift_px[i]` pre-shifts the search window of column `i`, so the search
/// covers `k + shift_px[i]` for `k` in the configured bounds. A column is
/// searched only if it lies outside the excluded border and every candidate
/// block stays inside the target. Equal costs resolve to the smallest `|k|`,
/// and between `-a` and `+a` to `-a`.
pub fn match_profiles<T: Scalar>(
    reference: &EdgeDistribution,
    target: &EdgeDistribution,
    cfg: &MatchConfig,
    shift_px: &[i32],
) -> Result<MatchProfile<T>, MatchError> {
    let width = reference.len();
    if target.len() != width {
        return Err(MatchError::LengthMismatch {
            reference: width,
            target: target.len(),
        });
    }
    if shift_px.len() != width {
        return Err(MatchError::ShiftLengthMismatch {
            expected: width,
            found: shift_px.len(),
        });
    }
    cfg.validate(width)?;

    let r = reference.values();
    let t = target.values();
    let half = cfg.half_window() as isize;
    let window = cfg.window_px;
    let border = cfg.excluded_border();
    let (k_min, k_max) = (cfg.search_min_px, cfg.search_max_px);
    let n_cand = cfg.candidate_count();
    let theta = cfg.flat_threshold(reference);

    let mut profile = MatchProfile::empty(width);
    let mut costs = vec![0u32; n_cand];

    for i in border..width - border {
        let shift = shift_px[i] as isize;
        let first = i as isize - half + k_min as isize + shift;
        let last = i as isize + half + k_max as isize + shift;
        if first < 0 || last >= width as isize {
            continue;
        }
        let ref_block = &r[i - half as usize..=i + half as usize];
        for (start, c) in (first as usize..).zip(costs.iter_mut()) {
            *c = sad(ref_block, &t[start..start + window]);
        }

        let mut best = 0usize;
        let (mut lo, mut hi) = (costs[0], costs[0]);
        for (ci, &c) in costs.iter().enumerate().skip(1) {
            lo = lo.min(c);
            hi = hi.max(c);
            let k = k_min + ci as i32;
            let kb = k_min + best as i32;
            if c < costs[best] || (c == costs[best] && k.abs() < kb.abs()) {
                best = ci;
            }
        }
        let k_star = k_min + best as i32;

        let mut flat = hi == lo || f64::from(hi - lo) < theta;
        let mut offset = T::zero();
        // an exact match sits at the bottom of a V, not a parabola
        if cfg.subpixel && costs[best] > 0 && best > 0 && best + 1 < n_cand {
            let sp = subpixel_refine(
                T::lit(f64::from(costs[best - 1])),
                T::lit(f64::from(costs[best])),
                T::lit(f64::from(costs[best + 1])),
            );
            offset = sp.offset;
            flat |= sp.degenerate;
        }

        let total = k_star + shift_px[i];
        profile.integer_px[i] = total;
        profile.displacement_px[i] = T::from_i32_exact(total) + offset;
        profile.cost[i] = costs[best];
        profile.low_confidence[i] = flat;
        profile.valid[i] = !flat;
    }
    Ok(profile)
}
