//! Floor-plan worlds: textured wall segments in a 2-D plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::SimError;

pub type Vec2 = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
struct StripeLayer {
    /// Stripe start positions, increasing, first is 0.
    starts: Vec<f64>,
    levels: Vec<f64>,
    ramp_m: f64,
}

impl StripeLayer {
    fn random(rng: &mut impl Rng, length_m: f64, min_w: f64, max_w: f64, lo: f64, hi: f64) -> Self {
        let mut starts = vec![0.0];
        let mut levels = vec![rng.random_range(lo..hi)];
        let mut pos = 0.0;
        while pos < length_m {
            pos += rng.random_range(min_w..max_w);
            starts.push(pos);
            // keep neighbours apart so every boundary is a real edge
            let prev = *levels.last().unwrap();
            let mut next = rng.random_range(lo..hi);
            while (next - prev).abs() < 0.15 * (hi - lo) {
                next = rng.random_range(lo..hi);
            }
            levels.push(next);
        }
        Self {
            starts,
            levels,
            ramp_m: 0.2 * min_w,
        }
    }

    fn sample(&self, s: f64) -> f64 {
        let i = self.starts.partition_point(|&x| x <= s).saturating_sub(1);
        if i + 1 < self.starts.len() && self.ramp_m > 0.0 {
            let to_next = self.starts[i + 1] - s;
            if to_next < self.ramp_m {
                let a = to_next / self.ramp_m;
                return a * self.levels[i] + (1.0 - a) * self.levels[i + 1];
            }
        }
        self.levels[i]
    }
}

/// 1-D intensity pattern along a wall: one or more layers of stripes with
/// random width and level, joined by short linear ramps, summed.
#[derive(Debug, Clone, PartialEq)]
pub struct StripeTexture {
    layers: Vec<StripeLayer>,
}

impl StripeTexture {
    pub fn constant(level: f64) -> Self {
        Self {
            layers: vec![StripeLayer {
                starts: vec![0.0],
                levels: vec![level],
                ramp_m: 0.0,
            }],
        }
    }

    /// Covers `[0, length_m]` with stripes `min_w..max_w` wide and levels in
    /// `lo..hi`. Narrower stripes mean more edges per metre.
    pub fn random(rng: &mut impl Rng, length_m: f64, min_w: f64, max_w: f64, lo: f64, hi: f64) -> Self {
        Self {
            layers: vec![StripeLayer::random(rng, length_m, min_w, max_w, lo, hi)],
        }
    }

    /// Coarse high-contrast stripes (4-15 cm) over fine low-contrast ones
    /// (1-3 cm), levels within 30..225. Gives several distinct edges per
    /// matching window from 0.5 m to 3 m.
    pub fn poster(rng: &mut impl Rng, length_m: f64) -> Self {
        let coarse = StripeLayer::random(rng, length_m, 0.04, 0.15, 30.0, 160.0);
        let fine = StripeLayer::random(rng, length_m, 0.01, 0.03, 0.0, 65.0);
        Self {
            layers: vec![coarse, fine],
        }
    }

    pub fn sample(&self, s: f64) -> f64 {
        self.layers.iter().map(|l| l.sample(s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    /// Intensity as a function of distance from `a`, 0..255.
    pub texture: StripeTexture,
    /// Row-ripple pattern, roughly -1..1.
    pub ripple: StripeTexture,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b.0 - self.a.0).hypot(self.b.1 - self.a.1)
    }

    /// Distance from point `p` to the segment.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0);
        (p.0 - (self.a.0 + t * dx)).hypot(p.1 - (self.a.1 + t * dy))
    }

    /// Ray `origin + t * dir` against the segment: `(t, distance along
    /// segment)` for the hit with `t > 0`.
    pub fn intersect(&self, origin: Vec2, dir: Vec2) -> Option<(f64, f64)> {
        let e = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let denom = dir.0 * e.1 - dir.1 * e.0;
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = (self.a.0 - origin.0, self.a.1 - origin.1);
        let t = (w.0 * e.1 - w.1 * e.0) / denom;
        let u = (w.0 * dir.1 - w.1 * dir.0) / denom;
        (t > 1e-9 && (0.0..=1.0).contains(&u)).then(|| (t, u * self.length()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World2D {
    pub segments: Vec<Segment>,
    /// `(min, max)` corners of the flyable area.
    pub bounds: (Vec2, Vec2),
}

impl World2D {
    pub fn new(segments: Vec<Segment>, bounds: (Vec2, Vec2)) -> Result<Self, SimError> {
        if let Some(i) = segments.iter().position(|s| !(s.length() > 1e-9)) {
            return Err(SimError::InvalidWorld(format!("segment {i} is degenerate")));
        }
        Ok(Self { segments, bounds })
    }

    /// Nearest hit along a ray: `(t, segment index, distance along segment)`.
    pub fn cast(&self, origin: Vec2, dir: Vec2) -> Option<(f64, usize, f64)> {
        self.segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.intersect(origin, dir).map(|(t, along)| (t, i, along)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let ((x0, y0), (x1, y1)) = self.bounds;
        (x0..=x1).contains(&p.0) && (y0..=y1).contains(&p.1)
    }

    /// Closest segment and its distance from `p`.
    pub fn nearest_segment(&self, p: Vec2) -> Option<(usize, f64)> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.distance_to(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Named worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldPreset {
    /// Closed 4 x 4 m room, corners at (0, 0) and (4, 4).
    Room4x4,
    /// Single 30 m wall along x = 3.
    FlatWall,
    /// Wall at x = 3 with three 0.1 m square poles in front of it.
    PoleField,
    /// Like `FlatWall` but untextured.
    BlankWall,
}

impl WorldPreset {
    pub const ALL: [WorldPreset; 4] = [
        WorldPreset::Room4x4,
        WorldPreset::FlatWall,
        WorldPreset::PoleField,
        WorldPreset::BlankWall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorldPreset::Room4x4 => "room4x4",
            WorldPreset::FlatWall => "flat-wall",
            WorldPreset::PoleField => "pole-field",
            WorldPreset::BlankWall => "blank-wall",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, SimError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| SimError::UnknownPreset(name.to_string()))
    }

    pub fn build(self, seed: u64) -> World2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E_ED0F_3A11);
        let wall = |a: Vec2, b: Vec2, rng: &mut ChaCha8Rng| {
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            Segment {
                a,
                b,
                texture: StripeTexture::poster(rng, len),
                ripple: StripeTexture::random(rng, len, 0.05, 0.2, -1.0, 1.0),
            }
        };
        let (segments, bounds) = match self {
            WorldPreset::Room4x4 => {
                let c = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)];
                let segs = (0..4).map(|i| wall(c[i], c[(i + 1) % 4], &mut rng)).collect();
                (segs, ((0.0, 0.0), (4.0, 4.0)))
            }
            WorldPreset::FlatWall => (
                vec![wall((3.0, -15.0), (3.0, 15.0), &mut rng)],
                ((-15.0, -15.0), (3.0, 15.0)),
            ),
            WorldPreset::PoleField => {
                let mut segs = vec![wall((3.0, -15.0), (3.0, 15.0), &mut rng)];
                for &(cx, cy) in &[(0.8, 0.0), (1.6, -0.6), (2.2, 0.7)] {
                    let h = 0.05;
                    let c = [(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)];
                    for i in 0..4 {
                        segs.push(wall(c[i], c[(i + 1) % 4], &mut rng));
                    }
                }
                (segs, ((-15.0, -15.0), (3.0, 15.0)))
            }
            WorldPreset::BlankWall => (
                vec![Segment {
                    a: (3.0, -15.0),
                    b: (3.0, 15.0),
                    texture: StripeTexture::constant(150.0),
                    ripple: StripeTexture::constant(0.0),
                }],
                ((-15.0, -15.0), (3.0, 15.0)),
            ),
        };
        World2D { segments, bounds }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_deterministic_and_bounded() {
        let a = StripeTexture::poster(&mut ChaCha8Rng::seed_from_u64(3), 5.0);
        let b = StripeTexture::poster(&mut ChaCha8Rng::seed_from_u64(3), 5.0);
        assert_eq!(a, b);
        for i in 0..5000 {
            let v = a.sample(i as f64 * 0.001);
            assert!((30.0..=225.0).contains(&v));
        }
        assert_eq!(StripeTexture::constant(9.0).sample(123.0), 9.0);
    }

    #[test]
    fn ray_hits_facing_wall() {
        let world = WorldPreset::FlatWall.build(1);
        let (t, i, along) = world.cast((2.0, 0.0), (1.0, 0.0)).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert_eq!(i, 0);
        assert!((along - 15.0).abs() < 1e-12);
        assert!(world.cast((2.0, 0.0), (-1.0, 0.0)).is_none());
        // oblique ray direction is not normalised: t scales accordingly
        let (t, _, _) = world.cast((2.0, 0.0), (1.0, 0.5)).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_distance() {
        let s = Segment {
            a: (0.0, 0.0),
            b: (4.0, 0.0),
            texture: StripeTexture::constant(0.0),
            ripple: StripeTexture::constant(0.0),
        };
        assert!((s.distance_to((2.0, 0.04)) - 0.04).abs() < 1e-12);
        assert!((s.distance_to((5.0, 0.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn room_is_closed() {
        let world = WorldPreset::Room4x4.build(5);
        for k in 0..360 {
            let a = (k as f64).to_radians();
            let (t, _, _) = world.cast((2.0, 2.0), (a.cos(), a.sin())).unwrap();
            assert!((2.0 - 1e-9..=2.0 * 2f64.sqrt() + 1e-9).contains(&t));
        }
    }

    #[test]
    fn presets_round_trip_names() {
        for p in WorldPreset::ALL {
            assert_eq!(WorldPreset::from_name(p.name()).unwrap(), p);
        }
        assert!(matches!(
            WorldPreset::from_name("moon"),
            Err(SimError::UnknownPreset(_))
        ));
    }

    #[test]
    fn degenerate_segment_rejected() {
        let s = Segment {
            a: (1.0, 1.0),
            b: (1.0, 1.0),
            texture: StripeTexture::constant(0.0),
            ripple: StripeTexture::constant(0.0),
        };
        assert!(World2D::new(vec![s], ((0.0, 0.0), (1.0, 1.0))).is_err());
    }
}
