//! Horizontal Sobel gradients compressed into a per-column edge distribution.

use thiserror::Error;

use crate::frame_io::GrayImage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EdgeError {
    #[error("image {width}x{height} too small for a 3x3 Sobel kernel")]
    ImageTooSmall { width: usize, height: usize },
}

/// Signed per-pixel horizontal gradient. The 1-pixel frame is always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientImage {
    width_px: usize,
    height_px: usize,
    data: Vec<i16>,
}

impl GradientImage {
    pub fn width_px(&self) -> usize {
        self.width_px
    }

    pub fn height_px(&self) -> usize {
        self.height_px
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> i16 {
        self.data[v * self.width_px + u]
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    /// Builds a gradient image directly; intended for tests and tooling.
    pub fn from_raw(width_px: usize, height_px: usize, data: Vec<i16>) -> Self {
        assert_eq!(data.len(), width_px * height_px);
        Self {
            width_px,
            height_px,
            data,
        }
    }
}

/// Column-wise sum of absolute horizontal gradients.
///
/// Values are `u32`: the worst case per column is `height * 1020`, far below
/// the 32-bit limit for any sane image height.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDistribution {
    values: Vec<u32>,
    source_timestamp_s: f64,
}

impl EdgeDistribution {
    pub fn new(values: Vec<u32>, source_timestamp_s: f64) -> Self {
        Self {
            values,
            source_timestamp_s,
        }
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source_timestamp_s(&self) -> f64 {
        self.source_timestamp_s
    }

    pub fn total(&self) -> u64 {
        self.values.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.total() as f64 / self.values.len() as f64
        }
    }
}

/// Horizontal Sobel `[[-1,0,1],[-2,0,2],[-1,0,1]]`; border pixels are zero.
pub fn sobel_horizontal(img: &GrayImage) -> Result<GradientImage, EdgeError> {
    let (w, h) = (img.width_px(), img.height_px());
    if w < 3 || h < 3 {
        return Err(EdgeError::ImageTooSmall { width: w, height: h });
    }
    let px = img.pixels();
    let mut data = vec![0i16; w * h];
    for v in 1..h - 1 {
        let above = &px[(v - 1) * w..v * w];
        let mid = &px[v * w..(v + 1) * w];
        let below = &px[(v + 1) * w..(v + 2) * w];
        let out = &mut data[v * w..(v + 1) * w];
        for u in 1..w - 1 {
            let right = i16::from(above[u + 1]) + 2 * i16::from(mid[u + 1]) + i16::from(below[u + 1]);
            let left = i16::from(above[u - 1]) + 2 * i16::from(mid[u - 1]) + i16::from(below[u - 1]);
            out[u] = right - left;
        }
    }
    Ok(GradientImage {
        width_px: w,
        height_px: h,
        data,
    })
}

/// Sums `|gradient|` down each column.
pub fn compress(grad: &GradientImage, source_timestamp_s: f64) -> EdgeDistribution {
    let w = grad.width_px;
    let mut values = vec![0u32; w];
    for row in grad.data.chunks_exact(w) {
        for (acc, &g) in values.iter_mut().zip(row) {
            *acc += u32::from(g.unsigned_abs());
        }
    }
    EdgeDistribution {
        values,
        source_timestamp_s,
    }
}

/// `compress(sobel_horizontal(img))`.
pub fn edge_distribution(img: &GrayImage, source_timestamp_s: f64) -> Result<EdgeDistribution, EdgeError> {
    Ok(compress(&sobel_horizontal(img)?, source_timestamp_s))
}
