//! Window-based frame synthesis: a small residual U-Net maps `2k + 1`
//! consecutive frames to a stabilized version of the centre frame.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{pad_boundary_frames, Frame, FrameSequence, Role};
use crate::nn::{push_conv, Bound, LEAK};
use crate::par;
use crate::tensor::{ParamSet, Tape, Var};

/// `2k + 1` consecutive frames centred on frame `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalWindow {
    pub frames: Vec<Frame>,
    pub k: usize,
    /// Whether leading slots hold previously synthesized frames.
    pub recurrent: bool,
}

impl TemporalWindow {
    pub fn new(frames: Vec<Frame>, k: usize, recurrent: bool) -> Result<Self> {
        if frames.len() != 2 * k + 1 {
            return Err(Error::WindowLength {
                expected: 2 * k + 1,
                got: frames.len(),
            });
        }
        if frames.iter().any(|f| f.dims() != frames[0].dims()) {
            return Err(Error::InvalidArgument("window frames differ in size".into()));
        }
        Ok(Self { frames, k, recurrent })
    }

    /// Window centred on `padded[t + k]` of a sequence padded by `k`.
    pub fn from_padded(padded: &FrameSequence, t: usize, k: usize) -> Result<Self> {
        let frames = padded
            .frames()
            .get(t..t + 2 * k + 1)
            .ok_or(Error::SequenceTooShort {
                needed: t + 2 * k + 1,
                got: padded.len(),
            })?
            .to_vec();
        Self::new(frames, k, false)
    }

    pub fn center(&self) -> &Frame {
        &self.frames[self.k]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    /// Planar data of all frames concatenated: `3(2k+1) x H x W`.
    pub fn stacked(&self) -> Vec<f32> {
        self.frames.iter().flat_map(|f| f.data().iter().copied()).collect()
    }
}

/// Architecture knobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SynthesisConfig {
    /// Half window.
    pub k: usize,
    /// Channels of the first encoder level.
    pub base_width: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { k: 2, base_width: 32 }
    }
}

/// Encoder-decoder with skips; output is a residual added to the centre frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisNet {
    config: SynthesisConfig,
    params: ParamSet<f32>,
}

impl SynthesisNet {
    /// Random encoder/decoder weights with an all-zero output layer, so the
    /// untrained network reproduces the centre frame.
    pub fn new(config: SynthesisConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = config.base_width;
        let cin = 3 * (2 * config.k + 1);
        let mut ps = ParamSet::new();
        push_conv(&mut ps, "e1", b, cin, 3, 1.0, &mut rng);
        push_conv(&mut ps, "e2", b, b, 3, 1.0, &mut rng);
        push_conv(&mut ps, "e3", 2 * b, b, 3, 1.0, &mut rng);
        push_conv(&mut ps, "e4", 2 * b, 2 * b, 3, 1.0, &mut rng);
        push_conv(&mut ps, "d1", 2 * b, 2 * b, 3, 1.0, &mut rng);
        push_conv(&mut ps, "d2", b, 3 * b, 3, 1.0, &mut rng);
        push_conv(&mut ps, "d3", b, 2 * b, 3, 1.0, &mut rng);
        push_conv(&mut ps, "d4", 3, b, 3, 0.0, &mut rng);
        Self { config, params: ps }
    }

    /// Rebuilds a network from a parameter table, inferring `k` and the base
    /// width from the first layer.
    pub fn from_params(params: ParamSet<f32>) -> Result<Self> {
        let e1 = params
            .get("e1.w")
            .ok_or_else(|| Error::InvalidArgument("missing parameter e1.w".into()))?;
        let s = e1.shape();
        if s.len() != 4 || s[1] % 3 != 0 || (s[1] / 3) % 2 == 0 {
            return Err(Error::InvalidArgument(format!("e1.w has unexpected shape {s:?}")));
        }
        let config = SynthesisConfig {
            k: (s[1] / 3 - 1) / 2,
            base_width: s[0],
        };
        let reference = Self::new(config, 0);
        let ok = params.len() == reference.params.len()
            && params
                .iter()
                .zip(reference.params.iter())
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape());
        if !ok {
            return Err(Error::InvalidArgument("parameter table does not match the synthesis network".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> SynthesisConfig {
        self.config
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    /// Re-draws the output layer with a small random scale (tests and
    /// diagnostics that need a non-trivial residual).
    pub fn randomize_output(&mut self, scale: f32, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tmp = ParamSet::<f32>::new();
        push_conv(&mut tmp, "d4", 3, self.config.base_width, 3, 1.0, &mut rng);
        let w: Vec<f32> = tmp.get("d4.w").expect("just pushed").data().iter().map(|v| v * scale).collect();
        self.params.get_mut("d4.w").expect("layer exists").data_mut().copy_from_slice(&w);
    }

    /// Differentiable forward pass. `input`: `N x 3(2k+1) x H x W`;
    /// returns `N x 3 x H x W` in `[0, 1]`.
    pub fn forward(&self, tape: &mut Tape<f32>, vars: &[Var], input: Var) -> Result<Var> {
        let shape = tape.shape(input).to_vec();
        let cin = 3 * (2 * self.config.k + 1);
        if shape.len() != 4 || shape[1] != cin {
            return Err(Error::ShapeMismatch {
                op: "synthesis forward",
                lhs: shape,
                rhs: vec![0, cin, 0, 0],
            });
        }
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        // pad to a multiple of 4 by edge replication
        let (hp, wp) = (h.div_ceil(4) * 4, w.div_ceil(4) * 4);
        let x = if (hp, wp) == (h, w) {
            input
        } else {
            let mut grid = Vec::with_capacity(n * 2 * hp * wp);
            for _ in 0..n {
                grid.extend((0..hp * wp).map(|i| (i % wp) as f32));
                grid.extend((0..hp * wp).map(|i| (i / wp) as f32));
            }
            let coords = tape.constant(&[n, 2, hp, wp], grid)?;
            tape.grid_sample(input, coords)?
        };
        let b = Bound {
            params: &self.params,
            vars,
        };
        let leak = LEAK as f32;
        let act = |tape: &mut Tape<f32>, name: &str, x: Var, stride: usize| -> Result<Var> {
            let y = b.conv(tape, name, x, stride, 1)?;
            Ok(tape.leaky_relu(y, leak))
        };
        let e1 = act(tape, "e1", x, 1)?;
        let e2 = act(tape, "e2", e1, 2)?;
        let e3 = act(tape, "e3", e2, 2)?;
        let e4 = act(tape, "e4", e3, 1)?;
        let d1 = act(tape, "d1", e4, 1)?;
        let u1 = tape.upsample2x(d1)?;
        let c1 = tape.concat(&[u1, e2])?;
        let d2 = act(tape, "d2", c1, 1)?;
        let u2 = tape.upsample2x(d2)?;
        let c2 = tape.concat(&[u2, e1])?;
        let d3 = act(tape, "d3", c2, 1)?;
        let mut residual = b.conv(tape, "d4", d3, 1, 1)?;
        if (hp, wp) != (h, w) {
            residual = tape.narrow(residual, 2, 0, h)?;
            residual = tape.narrow(residual, 3, 0, w)?;
        }
        let center = tape.narrow(input, 1, 3 * self.config.k, 3)?;
        let out = tape.add(center, residual)?;
        Ok(tape.clamp(out, 0.0, 1.0))
    }

    /// Stacks windows into one `N x 3(2k+1) x H x W` batch.
    pub fn batch_input(&self, tape: &mut Tape<f32>, windows: &[TemporalWindow]) -> Result<Var> {
        let k = self.config.k;
        let first = windows.first().ok_or(Error::InvalidArgument("empty window batch".into()))?;
        let (w, h) = first.dims();
        let mut data = Vec::with_capacity(windows.len() * 3 * (2 * k + 1) * w * h);
        for win in windows {
            if win.frames.len() != 2 * k + 1 {
                return Err(Error::WindowLength {
                    expected: 2 * k + 1,
                    got: win.frames.len(),
                });
            }
            if win.dims() != (w, h) {
                return Err(Error::InvalidArgument("window batch mixes resolutions".into()));
            }
            data.extend(win.stacked());
        }
        tape.constant(&[windows.len(), 3 * (2 * k + 1), h, w], data)
    }

    /// Synthesizes one frame per window (no gradients kept).
    pub fn synthesize_batch(&self, windows: &[TemporalWindow]) -> Result<Vec<Frame>> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let frozen: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                tape.constant(p.tensor.shape(), p.tensor.data().to_vec())
                    .expect("parameter shapes are consistent")
            })
            .collect();
        let input = self.batch_input(&mut tape, windows)?;
        let out = self.forward(&mut tape, &frozen, input)?;
        let (w, h) = windows[0].dims();
        tape.value(out)
            .chunks(3 * w * h)
            .zip(windows)
            .map(|(d, win)| Frame::from_planes_clamped(w, h, d.to_vec(), win.center().index))
            .collect()
    }
}

/// `f_theta(S_t)` for a single window.
pub fn synthesize(window: &TemporalWindow, net: &SynthesisNet) -> Result<Frame> {
    if window.k != net.config.k || window.frames.len() != 2 * net.config.k + 1 {
        return Err(Error::WindowLength {
            expected: 2 * net.config.k + 1,
            got: window.frames.len(),
        });
    }
    Ok(net.synthesize_batch(core::slice::from_ref(window))?.remove(0))
}

/// Windows processed per forward pass during inference.
const INFERENCE_CHUNK: usize = 4;

/// Slides the window over `seq` (padded internally so the output has the
/// same length). In recurrent mode the `k` leading slots of each window hold
/// the most recent synthesized frames.
pub fn stabilize_video(seq: &FrameSequence, net: &SynthesisNet, recurrent: bool) -> Result<FrameSequence> {
    let k = net.config.k;
    let padded = pad_boundary_frames(seq, k);
    let n = seq.len();
    let out = if !recurrent || k == 0 {
        let windows: Vec<TemporalWindow> = (0..n).map(|t| TemporalWindow::from_padded(&padded, t, k)).collect::<Result<_>>()?;
        let chunks: Vec<&[TemporalWindow]> = windows.chunks(INFERENCE_CHUNK).collect();
        let results = par::map(&chunks, |_, c| net.synthesize_batch(c));
        let mut frames = Vec::with_capacity(n);
        for r in results {
            frames.extend(r?);
        }
        frames
    } else {
        let mut frames: Vec<Frame> = Vec::with_capacity(n);
        for t in 0..n {
            let mut win = TemporalWindow::from_padded(&padded, t, k)?;
            for slot in 0..k {
                // slot `slot` holds frame t - k + slot
                if let Some(prev) = (t + slot).checked_sub(k).and_then(|i| frames.get(i)) {
                    win.frames[slot] = prev.clone();
                }
            }
            win.recurrent = true;
            frames.push(synthesize(&win, net)?);
        }
        frames
    };
    let start = seq.frames().first().map_or(0, |f| f.index);
    FrameSequence::renumbered(out, start, Role::Synthesized)
}
