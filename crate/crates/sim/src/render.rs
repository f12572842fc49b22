//! Ray-cast stereo rendering of a [`World2D`].
//!
//! Body axes: `x` forward, `y` to the right. Yaw is counter-clockwise in the
//! world frame, so a positive yaw rate turns the camera left and moves image
//! content towards larger column indices.

use edgefs_core::frame_io::{CameraIntrinsics, GrayImage, StereoFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::{Vec2, World2D};
use crate::SimError;

/// Intensity used where a ray leaves the world.
pub const SKY_LEVEL: f64 = 128.0;
/// Peak per-row ripple amplitude, intensity units.
pub const RIPPLE_AMPLITUDE: f64 = 3.0;
const SUBSAMPLES: usize = 4;
/// Horizontal lens blur, binomial taps (sigma about 1 px).
const PSF: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CameraPose {
    pub pos_x_m: f64,
    pub pos_y_m: f64,
    pub yaw_rad: f64,
    /// Body-frame velocity `(forward, right)`, m/s.
    pub vel_body: (f64, f64),
    pub yaw_rate_rad_s: f64,
}

impl CameraPose {
    pub fn at(pos_x_m: f64, pos_y_m: f64, yaw_rad: f64) -> Self {
        Self {
            pos_x_m,
            pos_y_m,
            yaw_rad,
            ..Self::default()
        }
    }

    pub fn position(&self) -> Vec2 {
        (self.pos_x_m, self.pos_y_m)
    }

    pub fn forward(&self) -> Vec2 {
        (self.yaw_rad.cos(), self.yaw_rad.sin())
    }

    pub fn right(&self) -> Vec2 {
        (self.yaw_rad.sin(), -self.yaw_rad.cos())
    }

    /// Body velocity rotated into the world frame.
    pub fn world_velocity(&self) -> Vec2 {
        let (f, r) = (self.forward(), self.right());
        let (vx, vy) = self.vel_body;
        (vx * f.0 + vy * r.0, vx * f.1 + vy * r.1)
    }
}

/// Rendered pair plus the left camera's true z-depth per column (`None` where
/// the centre ray escapes).
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub frame: StereoFrame,
    pub depth_m: Vec<Option<f64>>,
}

/// Holds the seed-derived per-row ripple so repeated renders stay cheap.
#[derive(Debug, Clone)]
pub struct Renderer {
    intr: CameraIntrinsics<f64>,
    row_gain: Vec<f64>,
}

impl Renderer {
    pub fn new(intr: CameraIntrinsics<f64>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0000_7269_7070_6c65);
        let row_gain = (0..intr.height_px())
            .map(|_| rng.random_range(-RIPPLE_AMPLITUDE..=RIPPLE_AMPLITUDE))
            .collect();
        Self { intr, row_gain }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics<f64> {
        &self.intr
    }

    /// Mean texture and ripple over the column footprint seen from `eye`.
    fn column(&self, world: &World2D, eye: Vec2, pose: &CameraPose, u: usize) -> (f64, f64) {
        let f = self.intr.focal_px();
        let half_w = self.intr.width_px() as f64 / 2.0;
        let (fw, rt) = (pose.forward(), pose.right());
        let (mut a, mut b) = (0.0, 0.0);
        for k in 0..SUBSAMPLES {
            let x = (u as f64 - half_w + (k as f64 + 0.5) / SUBSAMPLES as f64 - 0.5) / f;
            let dir = (fw.0 + x * rt.0, fw.1 + x * rt.1);
            match world.cast(eye, dir) {
                Some((_, i, along)) => {
                    let seg = &world.segments[i];
                    a += seg.texture.sample(along);
                    b += seg.ripple.sample(along);
                }
                None => a += SKY_LEVEL,
            }
        }
        (a / SUBSAMPLES as f64, b / SUBSAMPLES as f64)
    }

    fn eye_image(&self, world: &World2D, eye: Vec2, pose: &CameraPose) -> GrayImage {
        let (w, h) = (self.intr.width_px(), self.intr.height_px());
        let sharp: Vec<(f64, f64)> = (0..w).map(|u| self.column(world, eye, pose, u)).collect();
        let half = PSF.len() / 2;
        let cols: Vec<(f64, f64)> = (0..w)
            .map(|u| {
                PSF.iter().enumerate().fold((0.0, 0.0), |(a, b), (k, wk)| {
                    // clamp at the image edge
                    let j = (u + k).saturating_sub(half).min(w - 1);
                    (a + wk * sharp[j].0, b + wk * sharp[j].1)
                })
            })
            .collect();
        GrayImage::from_fn(w, h, |u, v| {
            let (a, b) = cols[u];
            (a + self.row_gain[v] * b).round().clamp(0.0, 255.0) as u8
        })
    }

    pub fn render(&self, world: &World2D, pose: &CameraPose, timestamp_s: f64) -> Result<RenderedFrame, SimError> {
        if !world.contains(pose.position()) || !pose.yaw_rad.is_finite() {
            return Err(SimError::InvalidPose(format!(
                "({:.3}, {:.3}, {:.3}) outside world",
                pose.pos_x_m, pose.pos_y_m, pose.yaw_rad
            )));
        }
        let half_r = self.intr.baseline_m() / 2.0;
        let rt = pose.right();
        let p = pose.position();
        let left_eye = (p.0 - half_r * rt.0, p.1 - half_r * rt.1);
        let right_eye = (p.0 + half_r * rt.0, p.1 + half_r * rt.1);

        let fw = pose.forward();
        // ray direction has unit forward component, so t is the z-depth
        let depth_m = (0..self.intr.width_px())
            .map(|u| {
                let x = self.intr.column_to_normalized(u);
                world
                    .cast(left_eye, (fw.0 + x * rt.0, fw.1 + x * rt.1))
                    .map(|hit| hit.0)
            })
            .collect();
        let frame = StereoFrame::new(
            timestamp_s,
            self.eye_image(world, left_eye, pose),
            self.eye_image(world, right_eye, pose),
            pose.yaw_rate_rad_s,
        )
        .expect("both eyes share intrinsics");
        Ok(RenderedFrame { frame, depth_m })
    }
}

pub fn render_stereo(
    world: &World2D,
    pose: &CameraPose,
    intr: &CameraIntrinsics<f64>,
    seed: u64,
    timestamp_s: f64,
) -> Result<RenderedFrame, SimError> {
    Renderer::new(*intr, seed).render(world, pose, timestamp_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::WorldPreset;

    fn intr() -> CameraIntrinsics<f64> {
        CameraIntrinsics::delfly_stereoboard()
    }

    #[test]
    fn body_axes() {
        let p = CameraPose::at(0.0, 0.0, 0.0);
        assert_eq!(p.forward(), (1.0, 0.0));
        assert_eq!(p.right(), (0.0, -1.0));
        let p = CameraPose {
            vel_body: (0.0, 0.3),
            ..CameraPose::at(0.0, 0.0, std::f64::consts::FRAC_PI_2)
        };
        let v = p.world_velocity();
        assert!((v.0 - 0.3).abs() < 1e-12 && v.1.abs() < 1e-12);
    }

    #[test]
    fn wall_depth_is_planar_z() {
        let world = WorldPreset::FlatWall.build(2);
        let r = render_stereo(&world, &CameraPose::at(2.0, 0.0, 0.0), &intr(), 0, 0.0).unwrap();
        // z-depth of a fronto-parallel wall is the same in every column
        for d in &r.depth_m {
            assert!((d.unwrap() - 1.0).abs() < 1e-12);
        }
        // Euclidean range grows as 1/cos towards the edges
        let x = intr().column_to_normalized(0);
        let range = r.depth_m[0].unwrap() * (1.0 + x * x).sqrt();
        assert!(range > 1.05);
    }

    #[test]
    fn deterministic() {
        let world = WorldPreset::Room4x4.build(9);
        let pose = CameraPose::at(1.3, 2.2, 0.7);
        let a = render_stereo(&world, &pose, &intr(), 4, 0.0).unwrap();
        let b = render_stereo(&world, &pose, &intr(), 4, 0.0).unwrap();
        assert_eq!(a, b);
        let c = render_stereo(&world, &pose, &intr(), 5, 0.0).unwrap();
        assert_ne!(a.frame.left, c.frame.left);
    }

    #[test]
    fn sky_has_no_depth() {
        let world = WorldPreset::FlatWall.build(2);
        let r = render_stereo(&world, &CameraPose::at(0.0, 0.0, std::f64::consts::PI), &intr(), 0, 0.0).unwrap();
        assert!(r.depth_m.iter().all(Option::is_none));
        assert!(r.frame.left.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn pose_outside_world_rejected() {
        let world = WorldPreset::Room4x4.build(1);
        assert!(matches!(
            render_stereo(&world, &CameraPose::at(5.0, 1.0, 0.0), &intr(), 0, 0.0),
            Err(SimError::InvalidPose(_))
        ));
    }

    #[test]
    fn ripple_is_small() {
        let world = WorldPreset::FlatWall.build(2);
        let r = render_stereo(&world, &CameraPose::at(2.0, 0.0, 0.0), &intr(), 3, 0.0).unwrap();
        for u in 0..128 {
            let col: Vec<i32> = (0..96).map(|v| i32::from(r.frame.left.get(u, v))).collect();
            let spread = col.iter().max().unwrap() - col.iter().min().unwrap();
            assert!(spread <= 2 * RIPPLE_AMPLITUDE as i32 + 1);
        }
    }
}
