//! Differentiable brightness-constancy flow used by the stability losses.
//!
//! A fixed pyramid of Gauss-Newton (Lucas-Kanade) steps written entirely in
//! tape primitives, so gradients reach both input images.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::pyramid_levels;
use crate::real::Real;
use crate::tensor::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SurrogateFlowConfig {
    /// Gauss-Newton steps per pyramid level.
    pub steps: usize,
    /// Pre-smoothing of the luma images.
    pub image_sigma: f64,
    /// Integration window of the normal equations.
    pub window_sigma: f64,
    /// Tikhonov term added to the diagonal of the 2x2 systems.
    pub regularization: f64,
}

impl Default for SurrogateFlowConfig {
    fn default() -> Self {
        Self {
            steps: 2,
            image_sigma: 1.0,
            window_sigma: 2.0,
            regularization: 1e-3,
        }
    }
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (2.5 * sigma).ceil() as i64;
    (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect()
}

/// Constants reused across the steps of one flow evaluation.
struct Kernels {
    luma: Var,
    smooth_img: Var,
    smooth_win: Var,
    grad: Var,
}

impl Kernels {
    fn new<R: Real>(tape: &mut Tape<R>, cfg: &SurrogateFlowConfig) -> Result<Self> {
        let luma = tape.constant(&[1, 3, 1, 1], vec![R::lit(0.299), R::lit(0.587), R::lit(0.114)])?;
        let g2 = |tape: &mut Tape<R>, sigma: f64| -> Result<Var> {
            let t = gaussian_taps(sigma);
            let k = t.len();
            let s: f64 = t.iter().sum();
            let data = (0..k * k).map(|i| R::lit(t[i / k] * t[i % k] / (s * s))).collect();
            tape.constant(&[1, 1, k, k], data)
        };
        let smooth_img = g2(tape, cfg.image_sigma)?;
        let smooth_win = g2(tape, cfg.window_sigma)?;
        let h = R::lit(0.5);
        let z = R::zero();
        #[rustfmt::skip]
        let grad = tape.constant(&[2, 1, 3, 3], vec![
            z, z, z, -h, z, h, z, z, z,
            z, -h, z, z, z, z, z, h, z,
        ])?;
        Ok(Self {
            luma,
            smooth_img,
            smooth_win,
            grad,
        })
    }
}

/// Zero-padded blur renormalised by the blurred all-ones image, so borders
/// are not darkened. `x`: `N x C x H x W`, blurred per channel.
fn blur<R: Real>(tape: &mut Tape<R>, x: Var, kernel: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let k = tape.shape(kernel)[2];
    let flat = tape.reshape(x, &[s[0] * s[1], 1, s[2], s[3]])?;
    let num = tape.conv2d(flat, kernel, None, 1, k / 2)?;
    let ones = tape.constant(&[1, 1, s[2], s[3]], vec![R::one(); s[2] * s[3]])?;
    let den = tape.conv2d(ones, kernel, None, 1, k / 2)?;
    let den = tape.reshape(den, &[s[2] * s[3]])?;
    let num2 = tape.reshape(num, &[s[0] * s[1], s[2] * s[3]])?;
    let out = tape.per_col(crate::tensor::BinOp::Div, num2, den)?;
    tape.reshape(out, &s)
}

/// Pixel-centre grid `N x 2 x H x W` offset by `(dx, dy)`.
fn base_grid<R: Real>(tape: &mut Tape<R>, n: usize, h: usize, w: usize, dx: f64, dy: f64) -> Result<Var> {
    let mut g = Vec::with_capacity(n * 2 * h * w);
    for _ in 0..n {
        g.extend((0..h * w).map(|i| R::lit((i % w) as f64 + dx)));
        g.extend((0..h * w).map(|i| R::lit((i / w) as f64 + dy)));
    }
    tape.constant(&[n, 2, h, w], g)
}

/// Central differences with edge replication: `N x 1 x H x W -> (Ix, Iy)`.
fn gradients<R: Real>(tape: &mut Tape<R>, k: &Kernels, img: Var) -> Result<(Var, Var)> {
    let s = tape.shape(img).to_vec();
    let (n, h, w) = (s[0], s[2], s[3]);
    let grid = base_grid(tape, n, h + 2, w + 2, -1.0, -1.0)?;
    let padded = tape.grid_sample(img, grid)?;
    let g = tape.conv2d(padded, k.grad, None, 1, 0)?;
    Ok((tape.narrow(g, 1, 0, 1)?, tape.narrow(g, 1, 1, 1)?))
}

fn prepare<R: Real>(tape: &mut Tape<R>, k: &Kernels, img: Var) -> Result<Var> {
    let y = tape.conv2d(img, k.luma, None, 1, 0)?;
    blur(tape, y, k.smooth_img)
}

/// Number of pyramid levels for an `h x w` image, limited so every level
/// halves exactly.
pub fn surrogate_levels(h: usize, w: usize) -> usize {
    let mut levels = pyramid_levels(h.min(w));
    while levels > 1 && (h % (1 << (levels - 1)) != 0 || w % (1 << (levels - 1)) != 0) {
        levels -= 1;
    }
    levels
}

/// Flow from `a` to `b` (`N x 3 x H x W` each) with `a(p) ≈ b(p + F(p))`.
/// Returns `N x 2 x H x W` (channel 0 = u, 1 = v).
pub fn surrogate_flow<R: Real>(tape: &mut Tape<R>, a: Var, b: Var, cfg: &SurrogateFlowConfig) -> Result<Var> {
    let sa = tape.shape(a).to_vec();
    if sa.len() != 4 || sa[1] != 3 || tape.shape(b) != sa.as_slice() {
        return Err(Error::ShapeMismatch {
            op: "surrogate_flow",
            lhs: sa,
            rhs: tape.shape(b).to_vec(),
        });
    }
    let (n, h, w) = (sa[0], sa[2], sa[3]);
    let k = Kernels::new(tape, cfg)?;
    let levels = surrogate_levels(h, w);
    let mut pa = vec![prepare(tape, &k, a)?];
    let mut pb = vec![prepare(tape, &k, b)?];
    for _ in 1..levels {
        let na = tape.avg_pool2x(*pa.last().expect("non-empty"))?;
        let nb = tape.avg_pool2x(*pb.last().expect("non-empty"))?;
        pa.push(na);
        pb.push(nb);
    }
    let reg = R::lit(cfg.regularization);
    let mut flow: Option<Var> = None;
    for lvl in (0..levels).rev() {
        let (la, lb) = (pa[lvl], pb[lvl]);
        let (hl, wl) = (tape.shape(la)[2], tape.shape(la)[3]);
        let mut f = match flow {
            None => tape.constant(&[n, 2, hl, wl], vec![R::zero(); n * 2 * hl * wl])?,
            Some(f) => {
                let up = tape.upsample2x(f)?;
                tape.scale(up, R::lit(2.0))
            }
        };
        let (gax, gay) = gradients(tape, &k, la)?;
        let base = base_grid(tape, n, hl, wl, 0.0, 0.0)?;
        for _ in 0..cfg.steps {
            let coords = tape.add(base, f)?;
            let warped = tape.grid_sample(lb, coords)?;
            let (gbx, gby) = gradients(tape, &k, warped)?;
            let sx = tape.add(gax, gbx)?;
            let ix = tape.scale(sx, R::lit(0.5));
            let sy = tape.add(gay, gby)?;
            let iy = tape.scale(sy, R::lit(0.5));
            let r = tape.sub(warped, la)?;
            let xx = tape.mul(ix, ix)?;
            let xy = tape.mul(ix, iy)?;
            let yy = tape.mul(iy, iy)?;
            let xr = tape.mul(ix, r)?;
            let yr = tape.mul(iy, r)?;
            let prods = tape.concat(&[xx, xy, yy, xr, yr])?;
            let m = blur(tape, prods, k.smooth_win)?;
            let sxx = tape.narrow(m, 1, 0, 1)?;
            let sxy = tape.narrow(m, 1, 1, 1)?;
            let syy = tape.narrow(m, 1, 2, 1)?;
            let sxr = tape.narrow(m, 1, 3, 1)?;
            let syr = tape.narrow(m, 1, 4, 1)?;
            let axx = tape.offset(sxx, reg);
            let ayy = tape.offset(syy, reg);
            let d1 = tape.mul(axx, ayy)?;
            let d2 = tape.mul(sxy, sxy)?;
            let det = tape.sub(d1, d2)?;
            // du = -(ayy sxr - sxy syr) / det, dv = -(axx syr - sxy sxr) / det
            let t1 = tape.mul(ayy, sxr)?;
            let t2 = tape.mul(sxy, syr)?;
            let nu = tape.sub(t2, t1)?;
            let du = tape.div(nu, det)?;
            let t3 = tape.mul(axx, syr)?;
            let t4 = tape.mul(sxy, sxr)?;
            let nv = tape.sub(t4, t3)?;
            let dv = tape.div(nv, det)?;
            let step = tape.concat(&[du, dv])?;
            f = tape.add(f, step)?;
        }
        flow = Some(f);
    }
    Ok(flow.expect("at least one level"))
}

/// Per-pixel flow magnitude `sqrt(u² + v² + 1e-9)`: `N x 2 x H x W -> N x 1 x H x W`.
pub fn flow_magnitude<R: Real>(tape: &mut Tape<R>, flow: Var) -> Result<Var> {
    let u = tape.narrow(flow, 1, 0, 1)?;
    let v = tape.narrow(flow, 1, 1, 1)?;
    let uu = tape.square(u);
    let vv = tape.square(v);
    let s = tape.add(uu, vv)?;
    let s = tape.offset(s, R::lit(1e-9));
    Ok(tape.sqrt(s))
}
