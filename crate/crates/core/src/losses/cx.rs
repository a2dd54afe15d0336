//! Contextual similarity between two feature sets.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{BinOp, Reduce, Tape, Var};

/// Bandwidth `h`.
pub const CX_BANDWIDTH: f64 = 0.5;
/// Guard in the relative-distance normalisation.
pub const CX_EPS: f64 = 1e-5;
/// Largest number of positions compared directly.
pub const CX_MAX_POSITIONS: usize = 4096;

/// `CX(X, Y)` for feature maps `x`, `y` of shape `1 x C x H x W`. Positions
/// are pooled 2x2 until at most [`CX_MAX_POSITIONS`] remain.
pub fn contextual_similarity<R: Real>(tape: &mut Tape<R>, x: Var, y: Var) -> Result<Var> {
    let (mut x, mut y) = (x, y);
    loop {
        let s = tape.shape(x).to_vec();
        if s.len() != 4 || s[0] != 1 || tape.shape(y).len() != 4 || tape.shape(y)[..2] != s[..2] {
            return Err(Error::ShapeMismatch {
                op: "contextual_similarity",
                lhs: s,
                rhs: tape.shape(y).to_vec(),
            });
        }
        if s[2] * s[3] == 0 || tape.shape(y)[2] * tape.shape(y)[3] == 0 {
            return Err(Error::EmptyFeatureSet);
        }
        let too_many = s[2] * s[3] > CX_MAX_POSITIONS || tape.shape(y)[2] * tape.shape(y)[3] > CX_MAX_POSITIONS;
        if !too_many {
            break;
        }
        x = tape.avg_pool2x(x)?;
        y = tape.avg_pool2x(y)?;
    }
    let (sx, sy) = (tape.shape(x).to_vec(), tape.shape(y).to_vec());
    let c = sx[1];
    let xm = tape.reshape(x, &[c, sx[2] * sx[3]])?;
    let ym = tape.reshape(y, &[c, sy[2] * sy[3]])?;
    contextual_similarity_matrix(tape, xm, ym)
}

/// Same as [`contextual_similarity`] on `C x N` matrices (one column per position).
pub fn contextual_similarity_matrix<R: Real>(tape: &mut Tape<R>, x: Var, y: Var) -> Result<Var> {
    cx_with_bandwidth(tape, x, y, CX_BANDWIDTH)
}

pub(crate) fn cx_with_bandwidth<R: Real>(tape: &mut Tape<R>, x: Var, y: Var, h: f64) -> Result<Var> {
    let (ny, c) = (tape.shape(y)[1], tape.shape(y)[0]);
    if tape.shape(x)[0] != c {
        return Err(Error::ShapeMismatch {
            op: "contextual_similarity",
            lhs: tape.shape(x).to_vec(),
            rhs: tape.shape(y).to_vec(),
        });
    }
    if ny == 0 || tape.shape(x)[1] == 0 {
        return Err(Error::EmptyFeatureSet);
    }
    // centre both sets on the mean of Y
    let ysum = tape.reduce(y, 1, Reduce::Sum)?;
    let mu = tape.scale(ysum, R::one() / R::lit(ny as f64));
    let xc = tape.per_row(BinOp::Sub, x, mu)?;
    let yc = tape.per_row(BinOp::Sub, y, mu)?;
    let xn = unit_columns(tape, xc)?;
    let yn = unit_columns(tape, yc)?;
    let xt = tape.transpose(xn)?;
    let sim = tape.matmul(xt, yn)?;
    let neg = tape.scale(sim, -R::one());
    let dist = tape.offset(neg, R::one());
    let dmin = tape.reduce(dist, 1, Reduce::Min)?;
    let denom = tape.offset(dmin, R::lit(CX_EPS));
    let rel = tape.per_row(BinOp::Div, dist, denom)?;
    let arg = tape.scale(rel, -R::one() / R::lit(h));
    let arg = tape.offset(arg, R::one() / R::lit(h));
    let w = tape.exp(arg);
    let wsum = tape.reduce(w, 1, Reduce::Sum)?;
    let a = tape.per_row(BinOp::Div, w, wsum)?;
    let best = tape.reduce(a, 0, Reduce::Max)?;
    Ok(tape.mean(best))
}

fn unit_columns<R: Real>(tape: &mut Tape<R>, m: Var) -> Result<Var> {
    let sq = tape.square(m);
    let ss = tape.reduce(sq, 0, Reduce::Sum)?;
    let ss = tape.offset(ss, R::lit(1e-12));
    let norm = tape.sqrt(ss);
    tape.per_col(BinOp::Div, m, norm)
}
