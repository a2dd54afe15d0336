//! Inner (self-supervised) and outer (paired) objectives.
//!
//! Frame sequences are passed as batched tape variables of shape
//! `T x 3 x H x W`.

mod cx;
mod features;
mod surrogate;

use alloc::vec::Vec;

pub use cx::{contextual_similarity, contextual_similarity_matrix, CX_BANDWIDTH, CX_EPS, CX_MAX_POSITIONS};
pub use features::{FeatureExtractor, STAGE_WIDTHS};
pub use surrogate::{flow_magnitude, surrogate_flow, surrogate_levels, SurrogateFlowConfig};

use crate::error::{Error, Result};
use crate::image::Frame;
use crate::real::Real;
use crate::tensor::{Tape, Var};

/// Relative weights of the inner stability and quality terms.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub lambda_s: f64,
    pub lambda_p: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_s: 10.0,
            lambda_p: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_s: f64, lambda_p: f64) -> Result<Self> {
        let w = Self { lambda_s, lambda_p };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.lambda_s) || !ok(self.lambda_p) || (self.lambda_s == 0.0 && self.lambda_p == 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "loss weights must be non-negative and not both zero (got {}, {})",
                self.lambda_s,
                self.lambda_p
            )));
        }
        Ok(())
    }
}

/// Video categories with preset loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Category {
    Crowd,
    Running,
    QuickRotation,
    Parallax,
    Regular,
    Zoom,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Crowd,
        Category::Running,
        Category::QuickRotation,
        Category::Parallax,
        Category::Regular,
        Category::Zoom,
    ];

    pub fn weights(self) -> LossWeights {
        match self {
            Category::Crowd | Category::Running | Category::QuickRotation => LossWeights::default(),
            Category::Parallax | Category::Regular | Category::Zoom => LossWeights {
                lambda_s: 1.0,
                lambda_p: 1.0,
            },
        }
    }
}

/// Frozen components shared by every loss evaluation.
#[derive(Clone, Debug)]
pub struct LossContext {
    pub features: FeatureExtractor,
    pub flow: SurrogateFlowConfig,
}

impl LossContext {
    pub fn new(feature_seed: u64) -> Self {
        Self {
            features: FeatureExtractor::new(feature_seed),
            flow: SurrogateFlowConfig::default(),
        }
    }
}

impl Default for LossContext {
    fn default() -> Self {
        Self::new(0)
    }
}

/// Scalar handles of the inner objective and its parts.
#[derive(Clone, Copy, Debug)]
pub struct InnerTerms {
    pub stability: Var,
    pub perceptual: Var,
    pub gram: Var,
    pub contextual: Var,
    pub quality: Var,
    pub total: Var,
}

/// Plain values of [`InnerTerms`], for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InnerBreakdown {
    pub stability: f64,
    pub perceptual: f64,
    pub gram: f64,
    pub contextual: f64,
    pub total: f64,
}

impl InnerTerms {
    pub fn values<R: Real>(&self, tape: &Tape<R>) -> InnerBreakdown {
        let v = |x: Var| tape.scalar(x).to_f64();
        InnerBreakdown {
            stability: v(self.stability),
            perceptual: v(self.perceptual),
            gram: v(self.gram),
            contextual: v(self.contextual),
            total: v(self.total),
        }
    }
}

/// Scalar handles of the quality term.
#[derive(Clone, Copy, Debug)]
pub struct QualityTerms {
    pub perceptual: Var,
    pub gram: Var,
    pub contextual: Var,
    pub total: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct OuterTerms {
    pub stability: Var,
    pub contextual: Var,
    pub total: Var,
}

/// Frames as a constant `T x 3 x H x W` batch.
pub fn stack_frames<R: Real>(tape: &mut Tape<R>, frames: &[Frame]) -> Result<Var> {
    let first = frames.first().ok_or(Error::SequenceTooShort { needed: 1, got: 0 })?;
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(frames.len() * 3 * w * h);
    for f in frames {
        if f.dims() != (w, h) {
            return Err(Error::InvalidArgument("frames mix resolutions".into()));
        }
        data.extend(f.data().iter().map(|&v| R::lit(v as f64)));
    }
    tape.constant(&[frames.len(), 3, h, w], data)
}

fn check_pair<R: Real>(tape: &Tape<R>, op: &'static str, a: Var, b: Var) -> Result<usize> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa.len() != 4 || sb.len() != 4 || sa[1] != 3 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        });
    }
    if sa[0] != sb[0] {
        return Err(Error::LengthMismatch {
            op,
            left: sa[0],
            right: sb[0],
        });
    }
    if sa != sb {
        return Err(Error::ShapeMismatch {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        });
    }
    if sa[0] == 0 {
        return Err(Error::SequenceTooShort { needed: 1, got: 0 });
    }
    Ok(sa[0])
}

/// Mean surrogate-flow magnitude between synthesized and aligned frames,
/// averaged over the sequence.
pub fn inner_stability<R: Real>(tape: &mut Tape<R>, ctx: &LossContext, synth: Var, aligned: Var) -> Result<Var> {
    check_pair(tape, "inner_stability", synth, aligned)?;
    let f = surrogate_flow(tape, synth, aligned, &ctx.flow)?;
    let m = flow_magnitude(tape, f)?;
    Ok(tape.mean(m))
}

fn gram<R: Real>(tape: &mut Tape<R>, f: Var) -> Result<Var> {
    let s = tape.shape(f).to_vec();
    let (c, hw) = (s[1], s[2] * s[3]);
    let m = tape.reshape(f, &[c, hw])?;
    let mt = tape.transpose(m)?;
    let g = tape.matmul(m, mt)?;
    Ok(tape.scale(g, R::one() / R::lit((c * hw) as f64)))
}

/// Sum over frames of `-ln CX` on the final feature stage.
fn contextual_term<R: Real>(tape: &mut Tape<R>, x: Var, y: Var, frames: usize) -> Result<Var> {
    let mut terms = Vec::with_capacity(frames);
    for t in 0..frames {
        let xt = tape.narrow(x, 0, t, 1)?;
        let yt = tape.narrow(y, 0, t, 1)?;
        let cx = contextual_similarity(tape, xt, yt)?;
        let l = tape.ln(cx);
        terms.push(tape.scale(l, -R::one()));
    }
    tape.add_all(&terms)
}

/// Feature-space quality: per-stage mean squared feature difference, Gram
/// matrix distance and contextual term, each summed over frames.
pub fn inner_quality<R: Real>(tape: &mut Tape<R>, ctx: &LossContext, synth: Var, aligned: Var) -> Result<QualityTerms> {
    let frames = check_pair(tape, "inner_quality", synth, aligned)?;
    let fs = ctx.features.features(tape, synth)?;
    let fa = ctx.features.features(tape, aligned)?;
    let tr = R::lit(frames as f64);
    let mut perc = Vec::with_capacity(fs.len());
    let mut grams = Vec::with_capacity(fs.len() * frames);
    for (&x, &y) in fs.iter().zip(&fa) {
        let d = tape.sub(x, y)?;
        let d2 = tape.square(d);
        let m = tape.mean(d2);
        perc.push(tape.scale(m, tr));
        for t in 0..frames {
            let xt = tape.narrow(x, 0, t, 1)?;
            let yt = tape.narrow(y, 0, t, 1)?;
            let gx = gram(tape, xt)?;
            let gy = gram(tape, yt)?;
            let gd = tape.sub(gx, gy)?;
            let g2 = tape.square(gd);
            grams.push(tape.sum(g2));
        }
    }
    let perceptual = tape.add_all(&perc)?;
    let gram = tape.add_all(&grams)?;
    let last = fs.len() - 1;
    let contextual = contextual_term(tape, fs[last], fa[last], frames)?;
    let pg = tape.add(perceptual, gram)?;
    let total = tape.add(pg, contextual)?;
    Ok(QualityTerms {
        perceptual,
        gram,
        contextual,
        total,
    })
}

/// `lambda_s * stability + lambda_p * quality`.
pub fn inner_loss<R: Real>(
    tape: &mut Tape<R>,
    ctx: &LossContext,
    synth: Var,
    aligned: Var,
    weights: &LossWeights,
) -> Result<InnerTerms> {
    weights.validate()?;
    let stability = inner_stability(tape, ctx, synth, aligned)?;
    let q = inner_quality(tape, ctx, synth, aligned)?;
    let s = tape.scale(stability, R::lit(weights.lambda_s));
    let p = tape.scale(q.total, R::lit(weights.lambda_p));
    let total = tape.add(s, p)?;
    Ok(InnerTerms {
        stability,
        perceptual: q.perceptual,
        gram: q.gram,
        contextual: q.contextual,
        quality: q.total,
        total,
    })
}

/// Squared difference between the inter-frame motion of the synthesized
/// sequence and that of the stable one, summed over consecutive pairs.
pub fn outer_stability<R: Real>(tape: &mut Tape<R>, ctx: &LossContext, synth: Var, stable: Var) -> Result<Var> {
    let n = check_pair(tape, "outer_stability", synth, stable)?;
    if n < 2 {
        return Err(Error::SequenceTooShort { needed: 2, got: n });
    }
    let pairs = n - 1;
    let flow = |tape: &mut Tape<R>, v: Var| -> Result<Var> {
        let a = tape.narrow(v, 0, 0, pairs)?;
        let b = tape.narrow(v, 0, 1, pairs)?;
        surrogate_flow(tape, a, b, &ctx.flow)
    };
    let fs = flow(tape, synth)?;
    let fo = flow(tape, stable)?;
    let d = tape.sub(fs, fo)?;
    let d2 = tape.square(d);
    let m = tape.mean(d2);
    // mean over (pairs, 2 channels, pixels) -> sum over pairs of per-pixel squared norm
    Ok(tape.scale(m, R::lit((2 * pairs) as f64)))
}

/// `outer_stability + sum_t -ln CX` against the stable frames.
pub fn outer_loss<R: Real>(tape: &mut Tape<R>, ctx: &LossContext, synth: Var, stable: Var) -> Result<OuterTerms> {
    let n = check_pair(tape, "outer_loss", synth, stable)?;
    let stability = outer_stability(tape, ctx, synth, stable)?;
    let fs = ctx.features.features(tape, synth)?;
    let fo = ctx.features.features(tape, stable)?;
    let last = fs.len() - 1;
    let contextual = contextual_term(tape, fs[last], fo[last], n)?;
    let total = tape.add(stability, contextual)?;
    Ok(OuterTerms {
        stability,
        contextual,
        total,
    })
}
