//! Stability, cropping and distortion scores of a stabilized video.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{dense_flow, global_flow_with, FlowField, GlobalFlowConfig};
use crate::image::{Frame, FrameSequence};
use crate::par;
use crate::rigid::RigidTransform;

/// Shortest video accepted by [`stability_score`].
pub const MIN_STABILITY_FRAMES: usize = 32;
/// Low-frequency band of the stability ratio (DFT indices, DC = 0).
pub const STABILITY_BAND: core::ops::RangeInclusive<usize> = 1..=5;
/// Fraction of frames that must yield an affine fit.
pub const MIN_FITTED_FRACTION: f64 = 0.8;
/// Non-DC path energy treated as zero.
const ZERO_ENERGY: f64 = 1e-12;

/// Accumulated camera motion, one entry per frame (the first is zero).
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraPath {
    pub tx: Vec<f64>,
    pub ty: Vec<f64>,
    pub theta: Vec<f64>,
}

impl CameraPath {
    /// Running sums of inter-frame parameters.
    pub fn accumulate(steps: &[RigidTransform]) -> Self {
        let mut p = CameraPath {
            tx: Vec::with_capacity(steps.len() + 1),
            ty: Vec::with_capacity(steps.len() + 1),
            theta: Vec::with_capacity(steps.len() + 1),
        };
        let (mut x, mut y, mut r) = (0.0, 0.0, 0.0);
        p.tx.push(x);
        p.ty.push(y);
        p.theta.push(r);
        for s in steps {
            x += s.tx;
            y += s.ty;
            r += s.theta;
            p.tx.push(x);
            p.ty.push(y);
            p.theta.push(r);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty()
    }

    pub fn channels(&self) -> [&[f64]; 3] {
        [&self.tx, &self.ty, &self.theta]
    }
}

/// How the three channel ratios are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Reduction {
    #[default]
    Mean,
    Min,
}

/// Share of non-DC spectral energy in [`STABILITY_BAND`]; 1.0 when the
/// signal is constant.
pub fn low_frequency_ratio(signal: &[f64]) -> f64 {
    let n = signal.len();
    let tau = core::f64::consts::TAU;
    let mut band = 0.0;
    let mut total = 0.0;
    for k in 1..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &x) in signal.iter().enumerate() {
            let a = tau * ((k * t) % n) as f64 / n as f64;
            re += x * a.cos();
            im -= x * a.sin();
        }
        let e = re * re + im * im;
        total += e;
        if STABILITY_BAND.contains(&k) {
            band += e;
        }
    }
    if total <= ZERO_ENERGY {
        1.0
    } else {
        band / total
    }
}

/// Score of an accumulated path.
pub fn path_stability(path: &CameraPath, reduction: Reduction) -> f64 {
    let r = path.channels().map(low_frequency_ratio);
    match reduction {
        Reduction::Mean => r.iter().sum::<f64>() / 3.0,
        Reduction::Min => r.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

/// Rigid motion between consecutive frames (identity for identical frames).
pub fn inter_frame_motion(a: &Frame, b: &Frame, flow: &GlobalFlowConfig) -> Result<RigidTransform> {
    let (w, h) = a.dims();
    if a.data() == b.data() {
        return Ok(RigidTransform::for_frame(0.0, 0.0, 0.0, w, h));
    }
    Ok(global_flow_with(a, b, flow)?.rigid)
}

pub fn camera_path(video: &FrameSequence, flow: &GlobalFlowConfig) -> Result<CameraPath> {
    let f = video.frames();
    let pairs: Vec<usize> = (0..f.len().saturating_sub(1)).collect();
    let steps = par::map(&pairs, |_, &i| inter_frame_motion(&f[i], &f[i + 1], flow).map_err(|_| Error::TransformFit(i)));
    Ok(CameraPath::accumulate(&steps.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Frequency-ratio smoothness of the camera path, in `[0, 1]`.
pub fn stability_score(video: &FrameSequence) -> Result<f64> {
    stability_score_with(video, Reduction::Mean, &GlobalFlowConfig::default())
}

pub fn stability_score_with(video: &FrameSequence, reduction: Reduction, flow: &GlobalFlowConfig) -> Result<f64> {
    if video.len() < MIN_STABILITY_FRAMES {
        return Err(Error::SequenceTooShort {
            needed: MIN_STABILITY_FRAMES,
            got: video.len(),
        });
    }
    Ok(path_stability(&camera_path(video, flow)?, reduction))
}

/// 2x3 affine map `p -> A p + t` (row-major `[a, b, tx, c, d, ty]`).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Affine(pub [f64; 6]);

impl Affine {
    pub const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    /// Scale factor `sqrt(|det A|)`.
    pub fn scale(&self) -> f64 {
        let [a, b, _, c, d, _] = self.0;
        (a * d - b * c).abs().sqrt()
    }

    /// Singular values of the linear part, largest first.
    pub fn singular_values(&self) -> (f64, f64) {
        let [a, b, _, c, d, _] = self.0;
        let q = a * a + b * b + c * c + d * d;
        let det = (a * d - b * c).abs();
        let p = (q + 2.0 * det).max(0.0).sqrt();
        let m = (q - 2.0 * det).max(0.0).sqrt();
        ((p + m) / 2.0, (p - m) / 2.0)
    }

    /// `min(1, 1 / scale)`.
    pub fn cropping(&self) -> f64 {
        let s = self.scale();
        if s <= 1.0 {
            1.0
        } else {
            1.0 / s
        }
    }

    /// Smaller over larger singular value.
    pub fn distortion(&self) -> f64 {
        let (hi, lo) = self.singular_values();
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !(d.abs() > 1e-12 * scale * scale * scale) {
        return None;
    }
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut mi = m;
        for row in 0..3 {
            mi[row][i] = r[row];
        }
        *o = det(&mi) / d;
    }
    Some(out)
}

/// Weighted least-squares affine fit of `p -> p + F(p)`, solved for the
/// displacement so that zero flow gives the identity exactly. Coordinates
/// are centred on the image for conditioning.
pub fn fit_affine(flow: &FlowField, weights: &[f32]) -> Result<Affine> {
    let (w, h) = flow.dims();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut m = [[0.0f64; 3]; 3];
    let mut ru = [0.0f64; 3];
    let mut rv = [0.0f64; 3];
    for (i, &wt) in weights.iter().enumerate() {
        if wt <= 0.0 {
            continue;
        }
        let wt = wt as f64;
        let x = (i % w) as f64 - cx;
        let y = (i / w) as f64 - cy;
        let basis = [x, y, 1.0];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += wt * basis[r] * basis[c];
            }
            ru[r] += wt * basis[r] * flow.u()[i] as f64;
            rv[r] += wt * basis[r] * flow.v()[i] as f64;
        }
    }
    let pu = solve3(m, ru).ok_or(Error::DegenerateFit)?;
    let pv = solve3(m, rv).ok_or(Error::DegenerateFit)?;
    let (a, b, c, d) = (1.0 + pu[0], pu[1], pv[0], 1.0 + pv[1]);
    // back to pixel coordinates: p' = A (p - c) + c + t
    let tx = pu[2] + cx - a * cx - b * cy;
    let ty = pv[2] + cy - c * cx - d * cy;
    Ok(Affine([a, b, tx, c, d, ty]))
}

/// Affine map from `original` to `stabilized`, with two Huber reweighting
/// passes against moving objects. Identical frames give the identity.
pub fn frame_affine(original: &Frame, stabilized: &Frame) -> Result<Affine> {
    if original.dims() != stabilized.dims() {
        return Err(Error::ShapeMismatch {
            op: "frame_affine",
            lhs: alloc::vec![original.height(), original.width()],
            rhs: alloc::vec![stabilized.height(), stabilized.width()],
        });
    }
    if original.data() == stabilized.data() {
        return Ok(Affine::IDENTITY);
    }
    let flow = dense_flow(original, stabilized)?;
    let conf = flow.confidence();
    if conf.iter().filter(|&&c| c > 0.0).count() < 3 {
        return Err(Error::DegenerateFit);
    }
    let mut fit = fit_affine(&flow, conf)?;
    let (w, _) = flow.dims();
    for _ in 0..2 {
        let [a, b, tx, c, d, ty] = fit.0;
        let weights: Vec<f32> = conf
            .iter()
            .enumerate()
            .map(|(i, &cf)| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let ru = flow.u()[i] as f64 - (a * x + b * y + tx - x);
                let rv = flow.v()[i] as f64 - (c * x + d * y + ty - y);
                let r = ru.hypot(rv);
                // Huber weight, delta 1 px
                cf * if r <= 1.0 { 1.0 } else { (1.0 / r) as f32 }
            })
            .collect();
        fit = fit_affine(&flow, &weights)?;
    }
    Ok(fit)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameScore {
    pub index: i64,
    /// `None` when the affine fit failed.
    pub cropping: Option<f64>,
    pub distortion: Option<f64>,
}

/// Cropping and distortion of a pair of videos.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameScores {
    pub cropping: f64,
    /// Mean (or minimum, see [`frame_scores`]) anisotropy.
    pub distortion: f64,
    pub per_frame: Vec<FrameScore>,
}

/// Per-frame affine fits. `distortion_reduction` picks mean or minimum over frames.
pub fn frame_scores(original: &FrameSequence, stabilized: &FrameSequence, distortion_reduction: Reduction) -> Result<FrameScores> {
    if original.len() != stabilized.len() {
        return Err(Error::LengthMismatch {
            op: "frame_scores",
            left: original.len(),
            right: stabilized.len(),
        });
    }
    let pairs: Vec<(&Frame, &Frame)> = original.frames().iter().zip(stabilized.frames()).collect();
    let fits = par::map(&pairs, |_, (o, s)| frame_affine(o, s));
    let mut per_frame = Vec::with_capacity(fits.len());
    let (mut crop, mut dist, mut dmin, mut fitted) = (0.0, 0.0, f64::INFINITY, 0usize);
    for (fit, (o, _)) in fits.into_iter().zip(&pairs) {
        let score = match fit {
            Ok(a) => {
                let (c, d) = (a.cropping(), a.distortion());
                crop += c;
                dist += d;
                dmin = dmin.min(d);
                fitted += 1;
                FrameScore {
                    index: o.index,
                    cropping: Some(c),
                    distortion: Some(d),
                }
            }
            Err(Error::DegenerateFit) => FrameScore {
                index: o.index,
                cropping: None,
                distortion: None,
            },
            Err(e) => return Err(e),
        };
        per_frame.push(score);
    }
    let total = pairs.len();
    if total == 0 || (fitted as f64) < MIN_FITTED_FRACTION * total as f64 {
        return Err(Error::TooFewFits { fitted, total });
    }
    Ok(FrameScores {
        cropping: crop / fitted as f64,
        distortion: match distortion_reduction {
            Reduction::Mean => dist / fitted as f64,
            Reduction::Min => dmin,
        },
        per_frame,
    })
}

pub fn cropping_score(original: &FrameSequence, stabilized: &FrameSequence) -> Result<f64> {
    Ok(frame_scores(original, stabilized, Reduction::Mean)?.cropping)
}

pub fn distortion_score(original: &FrameSequence, stabilized: &FrameSequence) -> Result<f64> {
    Ok(frame_scores(original, stabilized, Reduction::Mean)?.distortion)
}

/// All three scores.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Report {
    pub stability: f64,
    pub cropping: f64,
    pub distortion: f64,
    pub per_frame: Vec<FrameScore>,
}

/// Options of [`evaluate`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub stability: Reduction,
    pub distortion: Reduction,
}

/// Stability of `stabilized` plus cropping and distortion against `original`.
pub fn evaluate(original: &FrameSequence, stabilized: &FrameSequence, opts: EvalOptions) -> Result<Report> {
    let stability = stability_score_with(stabilized, opts.stability, &GlobalFlowConfig::default())?;
    let s = frame_scores(original, stabilized, opts.distortion)?;
    Ok(Report {
        stability,
        cropping: s.cropping,
        distortion: s.distortion,
        per_frame: s.per_frame,
    })
}
