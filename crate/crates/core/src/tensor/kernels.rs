//! Dense kernels shared by the forward and backward passes.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn l(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfolds one `C x H x W` image into a `(C*kh*kw) x (Ho*Wo)` column matrix.
pub(crate) fn im2col<R: Real>(g: &ConvGeom, x: &[R], cols: &mut [R]) {
    let l = g.l();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * l..(row + 1) * l];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(R::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            R::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back into an image, accumulating.
pub(crate) fn col2im<R: Real>(g: &ConvGeom, cols: &[R], dx: &mut [R]) {
    let l = g.l();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * l..(row + 1) * l];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub(crate) fn conv_forward<R: Real>(g: &ConvGeom, x: &[R], w: &[R], b: Option<&[R]>) -> Vec<R> {
    let (k, l) = (g.k(), g.l());
    let mut out = vec![R::zero(); g.n * g.o * l];
    let mut cols = vec![R::zero(); k * l];
    let in_sz = g.c * g.h * g.w;
    for n in 0..g.n {
        im2col(g, &x[n * in_sz..(n + 1) * in_sz], &mut cols);
        let y = &mut out[n * g.o * l..(n + 1) * g.o * l];
        if let Some(b) = b {
            for (o, bias) in b.iter().enumerate() {
                y[o * l..(o + 1) * l].fill(*bias);
            }
        }
        let beta = if b.is_some() { R::one() } else { R::zero() };
        R::gemm(
            g.o,
            k,
            l,
            R::one(),
            (w, k as isize, 1),
            (&cols, l as isize, 1),
            beta,
            (y, l as isize, 1),
        );
    }
    out
}

/// Accumulates input, weight and bias gradients of a convolution.
pub(crate) fn conv_backward<R: Real>(
    g: &ConvGeom,
    x: &[R],
    w: &[R],
    gy: &[R],
    dx: Option<&mut [R]>,
    dw: Option<&mut [R]>,
    db: Option<&mut [R]>,
) {
    let (k, l) = (g.k(), g.l());
    let in_sz = g.c * g.h * g.w;
    if let Some(db) = db {
        for n in 0..g.n {
            for o in 0..g.o {
                let s: R = gy[(n * g.o + o) * l..(n * g.o + o + 1) * l].iter().copied().sum();
                db[o] += s;
            }
        }
    }
    if let Some(dw) = dw {
        let mut cols = vec![R::zero(); k * l];
        for n in 0..g.n {
            im2col(g, &x[n * in_sz..(n + 1) * in_sz], &mut cols);
            let gyn = &gy[n * g.o * l..(n + 1) * g.o * l];
            // dW (o x k) += gy (o x l) * cols^T (l x k)
            R::gemm(
                g.o,
                l,
                k,
                R::one(),
                (gyn, l as isize, 1),
                (&cols, 1, l as isize),
                R::one(),
                (dw, k as isize, 1),
            );
        }
    }
    if let Some(dx) = dx {
        let mut dcols = vec![R::zero(); k * l];
        for n in 0..g.n {
            let gyn = &gy[n * g.o * l..(n + 1) * g.o * l];
            // dcols (k x l) = W^T (k x o) * gy (o x l)
            R::gemm(
                k,
                g.o,
                l,
                R::one(),
                (w, 1, k as isize),
                (gyn, l as isize, 1),
                R::zero(),
                (&mut dcols, l as isize, 1),
            );
            col2im(g, &dcols, &mut dx[n * in_sz..(n + 1) * in_sz]);
        }
    }
}

/// Bilinear lookup with edge replication; returns the value and the
/// corner indices/weights used (for the adjoint).
#[inline]
pub(crate) fn bilinear_taps<R: Real>(x: R, y: R, w: usize, h: usize) -> ([usize; 4], [R; 4], bool, bool) {
    let maxx = R::lit((w - 1) as f64);
    let maxy = R::lit((h - 1) as f64);
    let inside_x = x > R::zero() && x < maxx;
    let inside_y = y > R::zero() && y < maxy;
    let xc = x.max(R::zero()).min(maxx);
    let yc = y.max(R::zero()).min(maxy);
    let x0 = xc.floor();
    let y0 = yc.floor();
    let fx = xc - x0;
    let fy = yc - y0;
    let x0 = x0.to_f64() as usize;
    let y0 = y0.to_f64() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let one = R::one();
    (
        [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
        [(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy],
        inside_x,
        inside_y,
    )
}

/// Samples `img` (`N x C x H x W`) at `coords` (`N x 2 x Ho x Wo`, x then y,
/// in pixels).
pub(crate) fn grid_sample<R: Real>(
    img: &[R],
    coords: &[R],
    (n, c, h, w): (usize, usize, usize, usize),
    (ho, wo): (usize, usize),
) -> Vec<R> {
    let lo = ho * wo;
    let mut out = vec![R::zero(); n * c * lo];
    for b in 0..n {
        let cx = &coords[(b * 2) * lo..(b * 2 + 1) * lo];
        let cy = &coords[(b * 2 + 1) * lo..(b * 2 + 2) * lo];
        for p in 0..lo {
            let (idx, wt, _, _) = bilinear_taps(cx[p], cy[p], w, h);
            for ch in 0..c {
                let plane = &img[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                out[(b * c + ch) * lo + p] =
                    wt[0] * plane[idx[0]] + wt[1] * plane[idx[1]] + wt[2] * plane[idx[2]] + wt[3] * plane[idx[3]];
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn grid_sample_backward<R: Real>(
    img: &[R],
    coords: &[R],
    gy: &[R],
    (n, c, h, w): (usize, usize, usize, usize),
    (ho, wo): (usize, usize),
    mut dimg: Option<&mut [R]>,
    mut dcoords: Option<&mut [R]>,
) {
    let lo = ho * wo;
    for b in 0..n {
        for p in 0..lo {
            let x = coords[(b * 2) * lo + p];
            let y = coords[(b * 2 + 1) * lo + p];
            let (idx, wt, inx, iny) = bilinear_taps(x, y, w, h);
            let maxx = R::lit((w - 1) as f64);
            let maxy = R::lit((h - 1) as f64);
            let fx = x.max(R::zero()).min(maxx) - x.max(R::zero()).min(maxx).floor();
            let fy = y.max(R::zero()).min(maxy) - y.max(R::zero()).min(maxy).floor();
            let mut gx = R::zero();
            let mut gyc = R::zero();
            for ch in 0..c {
                let g = gy[(b * c + ch) * lo + p];
                let base = (b * c + ch) * h * w;
                if let Some(d) = dimg.as_deref_mut() {
                    for t in 0..4 {
                        d[base + idx[t]] += wt[t] * g;
                    }
                }
                if dcoords.is_some() {
                    let plane = &img[base..base + h * w];
                    let (v00, v01, v10, v11) = (plane[idx[0]], plane[idx[1]], plane[idx[2]], plane[idx[3]]);
                    if inx {
                        gx += g * ((R::one() - fy) * (v01 - v00) + fy * (v11 - v10));
                    }
                    if iny {
                        gyc += g * ((R::one() - fx) * (v10 - v00) + fx * (v11 - v01));
                    }
                }
            }
            if let Some(d) = dcoords.as_deref_mut() {
                d[(b * 2) * lo + p] += gx;
                d[(b * 2 + 1) * lo + p] += gyc;
            }
        }
    }
}
