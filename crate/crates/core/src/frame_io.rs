//! Grayscale images, stereo frames, binary PGM I/O and sequence manifests.
//!
//! Manifests are a single JSON document referencing PGM files by path
//! relative to the manifest's directory. Angles are stored in degrees on disk
//! and converted to radians at load.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("PGM dimensions overflow: {0}")]
    DimensionOverflow(String),
    #[error("PGM maxval {0} is not supported (8-bit only)")]
    UnsupportedMaxval(u64),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("manifest schema violation: {0}")]
    Schema(String),
    #[error("manifest references missing image {0}")]
    MissingImage(PathBuf),
    #[error("image {path} is {found_w}x{found_h}, intrinsics say {expected_w}x{expected_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("timestamps not strictly increasing at frame {index}: {prev} then {next}")]
    NonMonotonicTimestamps { index: usize, prev: f64, next: f64 },
}

impl FrameIoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FrameIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Pinhole camera record shared by every stage.
///
/// `focal_px` is derived as `width_px / fov_h_rad` (small-angle pixels per
/// radian) and is recomputed, never set independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    width_px: usize,
    height_px: usize,
    fov_h_rad: T,
    fov_v_rad: T,
    baseline_m: T,
    focal_px: T,
}

impl<T: Scalar> CameraIntrinsics<T> {
    pub fn new(
        width_px: usize,
        height_px: usize,
        fov_h_rad: T,
        fov_v_rad: T,
        baseline_m: T,
    ) -> Result<Self, FrameIoError> {
        if width_px == 0 || height_px == 0 {
            return Err(FrameIoError::InvalidIntrinsics(format!(
                "image size {width_px}x{height_px} must be positive"
            )));
        }
        let pi = T::PI();
        if !(fov_h_rad > T::zero() && fov_h_rad < pi) {
            return Err(FrameIoError::InvalidIntrinsics(format!(
                "horizontal fov {fov_h_rad} rad outside (0, pi)"
            )));
        }
        if !(fov_v_rad > T::zero() && fov_v_rad < pi) {
            return Err(FrameIoError::InvalidIntrinsics(format!(
                "vertical fov {fov_v_rad} rad outside (0, pi)"
            )));
        }
        if !(baseline_m > T::zero()) || !baseline_m.is_finite() {
            return Err(FrameIoError::InvalidIntrinsics(format!(
                "baseline {baseline_m} m must be positive"
            )));
        }
        Ok(Self {
            width_px,
            height_px,
            fov_h_rad,
            fov_v_rad,
            baseline_m,
            focal_px: T::from_usize_lossy(width_px) / fov_h_rad,
        })
    }

    pub fn from_degrees(
        width_px: usize,
        height_px: usize,
        fov_h_deg: f64,
        fov_v_deg: f64,
        baseline_m: f64,
    ) -> Result<Self, FrameIoError> {
        Self::new(
            width_px,
            height_px,
            T::lit(fov_h_deg.to_radians()),
            T::lit(fov_v_deg.to_radians()),
            T::lit(baseline_m),
        )
    }

    /// The "delfly-stereoboard" preset: 128x96 px, 57.4 x 44.5 deg, 6 cm baseline.
    pub fn delfly_stereoboard() -> Self {
        Self::from_degrees(128, 96, 57.4, 44.5, 0.06).expect("preset is valid")
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "delfly-stereoboard" => Some(Self::delfly_stereoboard()),
            _ => None,
        }
    }

    pub fn width_px(&self) -> usize {
        self.width_px
    }

    pub fn height_px(&self) -> usize {
        self.height_px
    }

    pub fn fov_h_rad(&self) -> T {
        self.fov_h_rad
    }

    pub fn fov_v_rad(&self) -> T {
        self.fov_v_rad
    }

    pub fn baseline_m(&self) -> T {
        self.baseline_m
    }

    /// Pixels per radian, `w / fov_h`.
    pub fn focal_px(&self) -> T {
        self.focal_px
    }

    /// Normalized image coordinate of column `u`: `(u - w/2) / f`.
    pub fn column_to_normalized(&self, u: usize) -> T {
        (T::from_usize_lossy(u) - T::from_usize_lossy(self.width_px) / T::lit(2.0)) / self.focal_px
    }

    pub fn cast<U: Scalar>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics::new(
            self.width_px,
            self.height_px,
            U::lit(self.fov_h_rad.as_f64()),
            U::lit(self.fov_v_rad.as_f64()),
            U::lit(self.baseline_m.as_f64()),
        )
        .expect("cast of valid intrinsics stays valid")
    }
}

/// 8-bit grayscale image, row-major. Pixel (u, v) is `pixels[v * width + u]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width_px: usize,
    height_px: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width_px: usize, height_px: usize, pixels: Vec<u8>) -> Result<Self, FrameIoError> {
        let expected = width_px
            .checked_mul(height_px)
            .ok_or_else(|| FrameIoError::DimensionOverflow(format!("{width_px}x{height_px}")))?;
        if pixels.len() != expected {
            return Err(FrameIoError::InvalidImage(format!(
                "{} pixels for a {width_px}x{height_px} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width_px,
            height_px,
            pixels,
        })
    }

    pub fn filled(width_px: usize, height_px: usize, value: u8) -> Self {
        Self {
            width_px,
            height_px,
            pixels: vec![value; width_px * height_px],
        }
    }

    /// Builds an image from a per-pixel function of (column, row).
    pub fn from_fn(width_px: usize, height_px: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width_px * height_px);
        for v in 0..height_px {
            for u in 0..width_px {
                pixels.push(f(u, v));
            }
        }
        Self {
            width_px,
            height_px,
            pixels,
        }
    }

    pub fn width_px(&self) -> usize {
        self.width_px
    }

    pub fn height_px(&self) -> usize {
        self.height_px
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width_px + u]
    }

    pub fn row(&self, v: usize) -> &[u8] {
        &self.pixels[v * self.width_px..(v + 1) * self.width_px]
    }
}

/// Timestamped left/right pair with the yaw-rate gyro sample taken with it.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    pub timestamp_s: f64,
    pub left: GrayImage,
    pub right: GrayImage,
    pub gyro_z_rad_s: f64,
}

impl StereoFrame {
    pub fn new(timestamp_s: f64, left: GrayImage, right: GrayImage, gyro_z_rad_s: f64) -> Result<Self, FrameIoError> {
        if left.width_px != right.width_px || left.height_px != right.height_px {
            return Err(FrameIoError::InvalidImage(format!(
                "stereo pair dimensions differ: {}x{} vs {}x{}",
                left.width_px, left.height_px, right.width_px, right.height_px
            )));
        }
        Ok(Self {
            timestamp_s,
            left,
            right,
            gyro_z_rad_s,
        })
    }
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64, FrameIoError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            let digit = u64::from(self.bytes[self.pos] - b'0');
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(digit))
                .ok_or_else(|| FrameIoError::DimensionOverflow(format!("{what} too large")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(FrameIoError::MalformedHeader(format!("expected {what}")));
        }
        Ok(value)
    }
}

/// Parses a binary P5 PGM from memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, FrameIoError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FrameIoError::MalformedHeader("missing P5 magic".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(FrameIoError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(FrameIoError::MalformedHeader("maxval 0".into()));
    }
    if maxval > 255 {
        return Err(FrameIoError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(FrameIoError::MalformedHeader("missing whitespace after maxval".into())),
    }
    let width = usize::try_from(width).map_err(|_| FrameIoError::DimensionOverflow(format!("width {width}")))?;
    let height = usize::try_from(height).map_err(|_| FrameIoError::DimensionOverflow(format!("height {height}")))?;
    let expected = width
        .checked_mul(height)
        .filter(|n| *n <= isize::MAX as usize)
        .ok_or_else(|| FrameIoError::DimensionOverflow(format!("{width}x{height}")))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(FrameIoError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::new(width, height, payload[..expected].to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width_px, img.height_px).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, FrameIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FrameIoError::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), FrameIoError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| FrameIoError::io(path, e))?;
    file.write_all(&encode_pgm(img)).map_err(|e| FrameIoError::io(path, e))
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    #[serde(rename = "vx")]
    pub vx_m_s: f64,
    #[serde(rename = "vy")]
    pub vy_m_s: f64,
    #[serde(rename = "yaw")]
    pub yaw_rad: f64,
    #[serde(rename = "x")]
    pub pos_x_m: f64,
    #[serde(rename = "y")]
    pub pos_y_m: f64,
}

/// One manifest entry. Image paths are kept as written (relative to the
/// manifest directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    #[serde(rename = "t")]
    pub timestamp_s: f64,
    #[serde(rename = "left")]
    pub left_path: PathBuf,
    #[serde(rename = "right")]
    pub right_path: PathBuf,
    #[serde(rename = "gyro_z")]
    pub gyro_z_rad_s: f64,
    #[serde(rename = "gt", default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsDoc {
    width_px: usize,
    height_px: usize,
    fov_h_deg: f64,
    fov_v_deg: f64,
    baseline_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    intrinsics: IntrinsicsDoc,
    frames: Vec<ManifestFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub intrinsics: CameraIntrinsics<f64>,
    pub frames: Vec<ManifestFrame>,
    /// Directory image paths are resolved against.
    pub root: PathBuf,
}

impl SequenceManifest {
    pub fn has_ground_truth(&self) -> bool {
        self.frames.first().is_some_and(|f| f.ground_truth.is_some())
    }

    pub fn left_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.frames[index].left_path)
    }

    pub fn right_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.frames[index].right_path)
    }

    pub fn load_frame(&self, index: usize) -> Result<StereoFrame, FrameIoError> {
        let entry = &self.frames[index];
        let left = load_pgm(self.left_path(index))?;
        let right = load_pgm(self.right_path(index))?;
        StereoFrame::new(entry.timestamp_s, left, right, entry.gyro_z_rad_s)
    }

    pub fn to_json(&self) -> String {
        let doc = ManifestDoc {
            intrinsics: IntrinsicsDoc {
                width_px: self.intrinsics.width_px(),
                height_px: self.intrinsics.height_px(),
                fov_h_deg: self.intrinsics.fov_h_rad().to_degrees(),
                fov_v_deg: self.intrinsics.fov_v_rad().to_degrees(),
                baseline_m: self.intrinsics.baseline_m(),
            },
            frames: self.frames.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FrameIoError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| FrameIoError::io(path, e))
    }

    fn validate(&self) -> Result<(), FrameIoError> {
        if self.frames.is_empty() {
            return Err(FrameIoError::Schema("manifest has no frames".into()));
        }
        let with_gt = self.frames.iter().filter(|f| f.ground_truth.is_some()).count();
        if with_gt != 0 && with_gt != self.frames.len() {
            return Err(FrameIoError::Schema(format!(
                "ground truth on {with_gt} of {} frames; must be all or none",
                self.frames.len()
            )));
        }
        for (i, pair) in self.frames.windows(2).enumerate() {
            if !(pair[1].timestamp_s > pair[0].timestamp_s) {
                return Err(FrameIoError::NonMonotonicTimestamps {
                    index: i + 1,
                    prev: pair[0].timestamp_s,
                    next: pair[1].timestamp_s,
                });
            }
        }
        let (w, h) = (self.intrinsics.width_px(), self.intrinsics.height_px());
        for i in 0..self.frames.len() {
            for path in [self.left_path(i), self.right_path(i)] {
                if !path.is_file() {
                    return Err(FrameIoError::MissingImage(path));
                }
                let (fw, fh) = read_pgm_dimensions(&path)?;
                if (fw, fh) != (w, h) {
                    return Err(FrameIoError::DimensionMismatch {
                        path,
                        expected_w: w,
                        expected_h: h,
                        found_w: fw,
                        found_h: fh,
                    });
                }
            }
        }
        Ok(())
    }
}

fn read_pgm_dimensions(path: &Path) -> Result<(usize, usize), FrameIoError> {
    let img = load_pgm(path)?;
    Ok((img.width_px(), img.height_px()))
}

/// Parses a manifest document; image paths resolve against `root`. Does not
/// touch the filesystem.
pub fn parse_manifest(json: &str, root: impl Into<PathBuf>) -> Result<SequenceManifest, FrameIoError> {
    let doc: ManifestDoc = serde_json::from_str(json).map_err(|e| FrameIoError::Schema(e.to_string()))?;
    let i = &doc.intrinsics;
    let intrinsics = CameraIntrinsics::from_degrees(i.width_px, i.height_px, i.fov_h_deg, i.fov_v_deg, i.baseline_m)
        .map_err(|e| FrameIoError::Schema(e.to_string()))?;
    Ok(SequenceManifest {
        intrinsics,
        frames: doc.frames,
        root: root.into(),
    })
}

/// Loads a manifest and checks every invariant: monotonic timestamps,
/// all-or-none ground truth, and image files present with matching size.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SequenceManifest, FrameIoError> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|e| FrameIoError::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&json, root)?;
    manifest.validate()?;
    Ok(manifest)
}
