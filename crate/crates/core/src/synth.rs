//! Synthetic stable/shaky video pairs with known camera motion.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{Frame, FrameSequence, Role};
use crate::rigid::{image_center, warp, RigidTransform};

/// Largest fraction of a shaken frame allowed to come from outside the
/// stable view.
pub const MAX_OUT_OF_VIEW: f64 = 0.4;

/// Jitter and smooth-path law for [`synthesize_pair`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ShakeProfile {
    /// Innovation std of the rotation jitter (radians).
    pub rotation_std: f64,
    /// Innovation std of the translation jitter (pixels).
    pub translation_std: f64,
    /// Mean reversion of the jitter walk: `j_t = persistence * j_{t-1} + noise`.
    pub persistence: f64,
    /// Smooth-path sinusoid amplitudes for `(tx, ty, theta)`.
    pub path_amplitude: [f64; 3],
    /// Smooth-path period in frames.
    pub path_period: f64,
    pub seed: u64,
}

impl Default for ShakeProfile {
    fn default() -> Self {
        Self {
            rotation_std: 0.006,
            translation_std: 1.5,
            persistence: 0.5,
            path_amplitude: [6.0, 3.0, 0.01],
            path_period: 48.0,
            seed: 0,
        }
    }
}

impl ShakeProfile {
    /// No jitter and no smooth motion.
    pub fn still(seed: u64) -> Self {
        Self {
            rotation_std: 0.0,
            translation_std: 0.0,
            path_amplitude: [0.0; 3],
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.rotation_std) || !ok(self.translation_std) {
            return Err(Error::InvalidArgument("jitter std must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(Error::InvalidArgument("persistence must lie in [0, 1)".into()));
        }
        if !(self.path_period > 0.0) || self.path_amplitude.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("smooth path needs a positive period and finite amplitudes".into()));
        }
        Ok(())
    }

    /// Smooth camera path and per-frame jitter for `n` frames of size `w x h`.
    pub fn transforms(&self, n: usize, w: usize, h: usize) -> Result<(Vec<RigidTransform>, Vec<RigidTransform>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let tau = core::f64::consts::TAU;
        let phases: [f64; 3] = [rng.random::<f64>() * tau, rng.random::<f64>() * tau, rng.random::<f64>() * tau];
        let c = image_center(w, h);
        let path = (0..n)
            .map(|t| {
                let s = |k: usize| {
                    self.path_amplitude[k] * ((tau * t as f64 / self.path_period + phases[k]).sin() - phases[k].sin())
                };
                RigidTransform::new(s(2), s(0), s(1), c)
            })
            .collect();
        let rot = Normal::new(0.0, self.rotation_std).map_err(|_| Error::InvalidArgument("rotation std".into()))?;
        let tr = Normal::new(0.0, self.translation_std).map_err(|_| Error::InvalidArgument("translation std".into()))?;
        let (mut th, mut tx, mut ty) = (0.0, 0.0, 0.0);
        let mut jitter = Vec::with_capacity(n);
        for _ in 0..n {
            th = self.persistence * th + rot.sample(&mut rng);
            tx = self.persistence * tx + tr.sample(&mut rng);
            ty = self.persistence * ty + tr.sample(&mut rng);
            jitter.push(RigidTransform::new(th, tx, ty, c));
        }
        Ok((path, jitter))
    }
}

/// Fraction of a `w x h` frame warped by `t` whose source lies outside the frame.
pub fn out_of_view_fraction(t: &RigidTransform, w: usize, h: usize) -> f64 {
    let inv = t.inverse();
    let (mx, my) = ((w - 1) as f64, (h - 1) as f64);
    let mut out = 0usize;
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            if sx < -0.5 || sy < -0.5 || sx > mx + 0.5 || sy > my + 0.5 {
                out += 1;
            }
        }
    }
    out as f64 / (w * h) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Grating {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sprite {
    /// Orbit centre and radius in world pixels.
    orbit: (f64, f64, f64),
    /// Angular speed (radians per frame) and phase.
    speed: f64,
    phase: f64,
    radius: f64,
    colour: [f64; 3],
    stripe: f64,
}

/// Infinite textured plane plus independently moving disc sprites.
#[derive(Clone, Debug, PartialEq)]
pub struct ProceduralScene {
    pub width: usize,
    pub height: usize,
    gratings: Vec<Grating>,
    sprites: Vec<Sprite>,
}

impl ProceduralScene {
    /// `sprites` discs, each covering about 7% of the frame.
    pub fn new(width: usize, height: usize, sprites: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce0e);
        let tau = core::f64::consts::TAU;
        let gratings = (0..10)
            .map(|i| {
                // octave-spaced spatial frequencies between ~0.06 and ~0.55 rad/px
                let f = 0.06 * 1.28f64.powi(i) * (0.9 + 0.2 * rng.random::<f64>());
                let dir = rng.random::<f64>() * tau;
                let base = 0.05 + 0.02 * rng.random::<f64>();
                Grating {
                    fx: f * dir.cos(),
                    fy: f * dir.sin(),
                    phase: rng.random::<f64>() * tau,
                    amp: [
                        base * (0.6 + 0.8 * rng.random::<f64>()),
                        base * (0.6 + 0.8 * rng.random::<f64>()),
                        base * (0.6 + 0.8 * rng.random::<f64>()),
                    ],
                }
            })
            .collect();
        let side = width.min(height) as f64;
        let c = image_center(width, height);
        let sprites = (0..sprites)
            .map(|i| {
                let radius = 0.15 * side;
                let orbit_r = 0.22 * side;
                Sprite {
                    orbit: (c.0, c.1, orbit_r),
                    speed: (0.05 + 0.03 * rng.random::<f64>()) * if i % 2 == 0 { 1.0 } else { -1.0 },
                    phase: core::f64::consts::PI * i as f64 + 0.5 * rng.random::<f64>(),
                    radius,
                    colour: [
                        0.2 + 0.4 * rng.random::<f64>(),
                        0.2 + 0.4 * rng.random::<f64>(),
                        0.2 + 0.4 * rng.random::<f64>(),
                    ],
                    stripe: 0.5 + 0.3 * rng.random::<f64>(),
                }
            })
            .collect();
        Self {
            width,
            height,
            gratings,
            sprites,
        }
    }

    fn background(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = [0.4; 3];
        for g in &self.gratings {
            let s = (g.fx * x + g.fy * y + g.phase).sin();
            for c in 0..3 {
                out[c] += g.amp[c] * s;
            }
        }
        out
    }

    fn sprite_centre(&self, s: &Sprite, t: f64) -> (f64, f64) {
        let a = s.phase + s.speed * t;
        (s.orbit.0 + s.orbit.2 * a.cos(), s.orbit.1 + s.orbit.2 * a.sin())
    }

    /// Colour at world point `(x, y)` at time `t`, with sprite coverage in `[0, 1]`.
    fn world(&self, x: f64, y: f64, t: f64) -> ([f64; 3], f64) {
        let mut col = self.background(x, y);
        let mut cover = 0.0f64;
        for s in &self.sprites {
            let (cx, cy) = self.sprite_centre(s, t);
            let (dx, dy) = (x - cx, y - cy);
            let d = (dx * dx + dy * dy).sqrt();
            // one pixel soft edge
            let alpha = (s.radius - d + 0.5).clamp(0.0, 1.0);
            if alpha > 0.0 {
                // texture moves rigidly with the sprite
                let tex = 0.15 * (s.stripe * dx).sin() * (0.7 * s.stripe * dy).cos();
                for c in 0..3 {
                    col[c] = (1.0 - alpha) * col[c] + alpha * (s.colour[c] + tex);
                }
                cover = cover.max(alpha);
            }
        }
        (col, cover)
    }

    /// Renders time `t` seen through `camera` (frame = world moved by `camera`).
    pub fn render(&self, camera: &RigidTransform, t: usize) -> Frame {
        let inv = camera.inverse();
        Frame::from_fn(self.width, self.height, t as i64, |x, y| {
            let (wx, wy) = inv.apply(x as f64, y as f64);
            let (c, _) = self.world(wx, wy, t as f64);
            [c[0] as f32, c[1] as f32, c[2] as f32]
        })
        .expect("scene dimensions are validated by the caller")
    }

    /// Pixels of frame `t` covered by a sprite.
    pub fn object_mask(&self, camera: &RigidTransform, t: usize) -> Vec<bool> {
        let inv = camera.inverse();
        let mut mask = vec![false; self.width * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                let (wx, wy) = inv.apply(x as f64, y as f64);
                mask[y * self.width + x] = self.world(wx, wy, t as f64).1 > 0.0;
            }
        }
        mask
    }
}

/// Content for [`synthesize_pair`].
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    /// Render `frames` frames of a procedural scene.
    Procedural { scene: &'a ProceduralScene, frames: usize },
    /// Warp an existing (assumed steady) sequence.
    Frames(&'a FrameSequence),
}

/// A stable sequence, its shaken counterpart and the ground truth linking them.
#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub stable: FrameSequence,
    pub unstable: FrameSequence,
    /// Smooth camera path applied to the source.
    pub path: Vec<RigidTransform>,
    /// Per-frame jitter: `unstable_t = warp(stable_t, jitter_t)`.
    pub jitter: Vec<RigidTransform>,
}

pub fn synthesize_pair(source: Source<'_>, profile: &ShakeProfile) -> Result<SyntheticPair> {
    let (n, w, h) = match source {
        Source::Procedural { scene, frames } => (frames, scene.width, scene.height),
        Source::Frames(seq) => {
            let (w, h) = seq.dims().ok_or(Error::SequenceTooShort { needed: 1, got: 0 })?;
            (seq.len(), w, h)
        }
    };
    if n == 0 {
        return Err(Error::SequenceTooShort { needed: 1, got: 0 });
    }
    let (path, jitter) = profile.transforms(n, w, h)?;
    for (t, j) in jitter.iter().enumerate() {
        let fraction = out_of_view_fraction(j, w, h);
        if fraction > MAX_OUT_OF_VIEW {
            return Err(Error::ExcessiveJitter { frame: t, fraction });
        }
    }
    let (stable, unstable): (Vec<Frame>, Vec<Frame>) = match source {
        Source::Procedural { scene, .. } => (0..n)
            .map(|t| {
                let s = scene.render(&path[t], t);
                let u = if jitter[t].is_identity() {
                    s.clone()
                } else {
                    scene.render(&jitter[t].compose(&path[t]), t)
                };
                (s, u)
            })
            .unzip(),
        Source::Frames(seq) => seq
            .frames()
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let s = warp(f, &path[t]);
                let u = warp(f, &jitter[t].compose(&path[t]));
                (s, u)
            })
            .unzip(),
    };
    Ok(SyntheticPair {
        stable: FrameSequence::renumbered(stable, 0, Role::Stable)?,
        unstable: FrameSequence::renumbered(unstable, 0, Role::Unstable)?,
        path,
        jitter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::global_flow_with;
    use crate::flow::GlobalFlowConfig;

    #[test]
    fn zero_jitter_gives_identical_sequences() {
        let scene = ProceduralScene::new(48, 48, 2, 1);
        let profile = ShakeProfile {
            rotation_std: 0.0,
            translation_std: 0.0,
            ..ShakeProfile::default()
        };
        let p = synthesize_pair(Source::Procedural { scene: &scene, frames: 4 }, &profile).unwrap();
        assert_eq!(p.stable.frames(), p.unstable.frames());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let scene = ProceduralScene::new(40, 40, 2, 3);
        let profile = ShakeProfile { seed: 9, ..ShakeProfile::default() };
        let a = synthesize_pair(Source::Procedural { scene: &scene, frames: 3 }, &profile).unwrap();
        let b = synthesize_pair(Source::Procedural { scene: &scene, frames: 3 }, &profile).unwrap();
        assert_eq!(a.unstable, b.unstable);
        assert_eq!(a.jitter, b.jitter);
    }

    #[test]
    fn excessive_jitter_is_rejected() {
        let scene = ProceduralScene::new(32, 32, 0, 0);
        let profile = ShakeProfile {
            translation_std: 40.0,
            ..ShakeProfile::default()
        };
        assert!(matches!(
            synthesize_pair(Source::Procedural { scene: &scene, frames: 5 }, &profile),
            Err(Error::ExcessiveJitter { .. })
        ));
    }

    #[test]
    fn stable_path_is_the_configured_sinusoid() {
        let profile = ShakeProfile::default();
        let (path, _) = profile.transforms(96, 64, 64).unwrap();
        assert_eq!(path[0].tx, 0.0);
        // the path has exactly one period's worth of periodicity
        let p = profile.path_period as usize;
        for t in 0..96 - p {
            assert!((path[t].tx - path[t + p].tx).abs() < 1e-9);
        }
    }

    #[test]
    fn sprites_cover_at_least_a_tenth() {
        let scene = ProceduralScene::new(64, 64, 2, 5);
        let cam = RigidTransform::identity(image_center(64, 64));
        let mask = scene.object_mask(&cam, 3);
        let frac = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
        assert!(frac >= 0.1, "{frac}");
    }

    #[test]
    fn translation_jitter_recovered_by_oracle() {
        let scene = ProceduralScene::new(96, 96, 2, 11);
        let profile = ShakeProfile {
            rotation_std: 0.0,
            translation_std: 2.0,
            seed: 4,
            ..ShakeProfile::default()
        };
        let p = synthesize_pair(Source::Procedural { scene: &scene, frames: 6 }, &profile).unwrap();
        for t in 0..6 {
            let g = global_flow_with(&p.stable.frames()[t], &p.unstable.frames()[t], &GlobalFlowConfig::default()).unwrap();
            let j = p.jitter[t];
            let err = (g.rigid.tx - j.tx).hypot(g.rigid.ty - j.ty);
            assert!(err < 0.1, "frame {t}: {err} ({:?} vs {:?})", g.rigid, j);
        }
    }
}
