//! Frames and frame sequences.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

/// Smallest supported frame side.
pub const MIN_SIDE: usize = 32;

/// An RGB frame stored as three planes (`3 x H x W`) with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
    /// Frame number within its source video; padding frames may be negative.
    pub index: i64,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>, index: i64) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "frame {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        if data.len() != 3 * width * height {
            return Err(Error::ShapeMismatch {
                op: "frame",
                lhs: vec![3, height, width],
                rhs: vec![data.len()],
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
            index,
        })
    }

    /// Builds a frame from planar data, clamping into `[0, 1]` (NaN maps to 0).
    pub fn from_planes_clamped(width: usize, height: usize, mut data: Vec<f32>, index: i64) -> Result<Self> {
        data.iter_mut().for_each(|v| *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self::new(width, height, data, index)
    }

    /// Evaluates `f(x, y) -> [r, g, b]` at every pixel centre.
    pub fn from_fn(width: usize, height: usize, index: i64, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        let plane = width * height;
        let mut data = vec![0.0; 3 * plane];
        for y in 0..height {
            for x in 0..width {
                let rgb = f(x, y);
                for c in 0..3 {
                    data[c * plane + y * width + x] = rgb[c];
                }
            }
        }
        Self::from_planes_clamped(width, height, data, index)
    }

    /// The `w x h` sub-image with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Frame> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let plane = self.width * self.height;
        let mut data = Vec::with_capacity(3 * w * h);
        for c in 0..3 {
            for y in y0..y0 + h {
                let row = c * plane + y * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Frame::new(w, h, data, self.index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Planar `3 x H x W` data.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let n = self.width * self.height;
        let i = y * self.width + x;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    /// Rec. 601 luma.
    pub fn luma(&self) -> Vec<f32> {
        let n = self.width * self.height;
        (0..n)
            .map(|i| 0.299 * self.data[i] + 0.587 * self.data[n + i] + 0.114 * self.data[2 * n + i])
            .collect()
    }

    /// Copy with every value multiplied by `gain` and clamped.
    pub fn scaled(&self, gain: f32) -> Frame {
        let data = self.data.iter().map(|v| (v * gain).clamp(0.0, 1.0)).collect();
        Frame { data, ..self.clone() }
    }

    /// Peak signal-to-noise ratio in dB over the window `[x0, x1) x [y0, y1)`.
    pub fn psnr_region(&self, other: &Frame, (x0, y0, x1, y1): (usize, usize, usize, usize)) -> f64 {
        let n = self.width * self.height;
        let mut se = 0.0f64;
        let mut count = 0usize;
        for c in 0..3 {
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = c * n + y * self.width + x;
                    let d = (self.data[i] - other.data[i]) as f64;
                    se += d * d;
                    count += 1;
                }
            }
        }
        let mse = se / count.max(1) as f64;
        if mse == 0.0 {
            f64::INFINITY
        } else {
            -10.0 * mse.log10()
        }
    }

    pub fn psnr(&self, other: &Frame) -> f64 {
        self.psnr_region(other, (0, 0, self.width, self.height))
    }

    /// Central crop covering `fraction` of each side (used by tests and metrics).
    pub fn interior(&self, fraction: f64) -> (usize, usize, usize, usize) {
        let mx = ((1.0 - fraction) * 0.5 * self.width as f64).round() as usize;
        let my = ((1.0 - fraction) * 0.5 * self.height as f64).round() as usize;
        (mx, my, self.width - mx, self.height - my)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Unstable,
    Stable,
    Synthesized,
    Aligned,
}

/// Consecutive frames of one resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    pub role: Role,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, role: Role) -> Result<Self> {
        if let Some(first) = frames.first() {
            for (i, f) in frames.iter().enumerate() {
                if f.dims() != first.dims() {
                    return Err(Error::InvalidArgument(format!(
                        "frame {} is {}x{}, expected {}x{}",
                        f.index,
                        f.width,
                        f.height,
                        first.width,
                        first.height
                    )));
                }
                if f.index != first.index + i as i64 {
                    return Err(Error::InvalidArgument(format!(
                        "frame indices not consecutive at position {i} (index {})",
                        f.index
                    )));
                }
            }
        }
        Ok(Self { frames, role })
    }

    /// Re-indexes `frames` from `start` before validating.
    pub fn renumbered(mut frames: Vec<Frame>, start: i64, role: Role) -> Result<Self> {
        for (i, f) in frames.iter_mut().enumerate() {
            f.index = start + i as i64;
        }
        Self::new(frames, role)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(Frame::dims)
    }

    pub fn get(&self, i: usize) -> Option<&Frame> {
        self.frames.get(i)
    }
}

/// Replicates the first and last frame `k` times so that every original
/// frame can sit at the centre of a `2k + 1` window.
pub fn pad_boundary_frames(seq: &FrameSequence, k: usize) -> FrameSequence {
    if k == 0 || seq.is_empty() {
        return seq.clone();
    }
    let first = &seq.frames[0];
    let last = &seq.frames[seq.len() - 1];
    let mut frames = Vec::with_capacity(seq.len() + 2 * k);
    frames.extend(core::iter::repeat_n(first.clone(), k));
    frames.extend(seq.frames.iter().cloned());
    frames.extend(core::iter::repeat_n(last.clone(), k));
    FrameSequence::renumbered(frames, first.index - k as i64, seq.role).expect("padding keeps sequence well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize) -> FrameSequence {
        let frames = (0..n)
            .map(|i| Frame::from_fn(32, 32, i as i64, |x, y| [(x + i) as f32 / 64.0, y as f32 / 32.0, 0.5]).unwrap())
            .collect();
        FrameSequence::new(frames, Role::Unstable).unwrap()
    }

    #[test]
    fn padding_adds_k_frames_each_side() {
        let s = seq(5);
        let p = pad_boundary_frames(&s, 2);
        assert_eq!(p.len(), 9);
        assert_eq!(p.frames()[0].data(), s.frames()[0].data());
        assert_eq!(p.frames()[8].data(), s.frames()[4].data());
        assert_eq!(p.frames()[2].index, 0);
        assert_eq!(p.frames()[0].index, -2);
    }

    #[test]
    fn zero_padding_is_identity() {
        let s = seq(5);
        assert_eq!(pad_boundary_frames(&s, 0), s);
    }

    #[test]
    fn frames_enforce_invariants() {
        assert!(Frame::new(16, 32, vec![0.0; 3 * 16 * 32], 0).is_err());
        assert!(Frame::new(32, 32, vec![1.5; 3 * 32 * 32], 0).is_err());
        let a = Frame::new(32, 32, vec![0.0; 3 * 32 * 32], 0).unwrap();
        let b = Frame::new(32, 32, vec![0.0; 3 * 32 * 32], 2).unwrap();
        assert!(FrameSequence::new(vec![a, b], Role::Stable).is_err());
    }
}
