//! Dense optical flow (pyramidal Lucas-Kanade) and the camera-motion-only
//! global flow built on a robust rigid fit.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::image::Frame;
use crate::rigid::{fit_rigid_procrustes, RigidTransform};

/// Per-pixel displacement `(u, v)` with a confidence in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    confidence: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>, confidence: Vec<f32>) -> Result<Self> {
        let n = width * height;
        for (name, len) in [("u", u.len()), ("v", v.len()), ("confidence", confidence.len())] {
            if len != n {
                return Err(Error::InvalidArgument(alloc::format!(
                    "flow {name} has {len} values, expected {n}"
                )));
            }
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("flow contains non-finite values".into()));
        }
        if confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument("flow confidence outside [0, 1]".into()));
        }
        Ok(Self { width, height, u, v, confidence })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            confidence: vec![1.0; n],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn confidence(&self) -> &[f32] {
        &self.confidence
    }

    pub fn mean_magnitude(&self) -> f64 {
        let s: f64 = self.u.iter().zip(&self.v).map(|(&a, &b)| (a as f64).hypot(b as f64)).sum();
        s / self.u.len().max(1) as f64
    }

    /// Mean endpoint distance to `other` over all pixels.
    pub fn endpoint_error(&self, other: &FlowField) -> f64 {
        let s: f64 = (0..self.u.len())
            .map(|i| ((self.u[i] - other.u[i]) as f64).hypot((self.v[i] - other.v[i]) as f64))
            .sum();
        s / self.u.len().max(1) as f64
    }

    /// Area-averaged resize to `size x size`, returned as `[u plane, v plane]`.
    pub fn resized(&self, size: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; 2 * size * size];
        let sx = self.width as f64 / size as f64;
        let sy = self.height as f64 / size as f64;
        for oy in 0..size {
            let y0 = (oy as f64 * sy) as usize;
            let y1 = (((oy + 1) as f64 * sy).ceil() as usize).clamp(y0 + 1, self.height);
            for ox in 0..size {
                let x0 = (ox as f64 * sx) as usize;
                let x1 = (((ox + 1) as f64 * sx).ceil() as usize).clamp(x0 + 1, self.width);
                let (mut su, mut sv) = (0.0f64, 0.0f64);
                for y in y0..y1 {
                    for x in x0..x1 {
                        su += self.u[y * self.width + x] as f64;
                        sv += self.v[y * self.width + x] as f64;
                    }
                }
                let cnt = ((y1 - y0) * (x1 - x0)) as f64;
                out[oy * size + ox] = (su / cnt) as f32;
                out[size * size + oy * size + ox] = (sv / cnt) as f32;
            }
        }
        out
    }
}

/// Tuning for [`dense_flow_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    /// Gaussian integration window (pixels, per level).
    pub window_sigma: f32,
    /// Lucas-Kanade refinements per pyramid level.
    pub iterations: usize,
    /// Structure-tensor eigenvalue at which confidence reaches 0.5.
    pub texture_scale: f32,
    /// Residual (normalised intensity) at which confidence decays.
    pub residual_scale: f32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            window_sigma: 2.0,
            iterations: 5,
            texture_scale: 2e-3,
            residual_scale: 0.2,
        }
    }
}

/// Tuning for [`global_flow_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalFlowConfig {
    pub flow: FlowConfig,
    /// Pixels deviating from the rigid prediction by more than this are replaced.
    pub tau_out: f32,
    /// Pixels less confident than this are replaced.
    pub c_min: f32,
    pub huber_delta: f32,
    pub irls_iterations: usize,
    /// Smallest admissible inlier fraction.
    pub min_inliers: f64,
}

impl Default for GlobalFlowConfig {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            tau_out: 1.5,
            c_min: 0.2,
            huber_delta: 1.0,
            irls_iterations: 5,
            min_inliers: 0.1,
        }
    }
}

/// Number of pyramid levels used for a frame whose shorter side is `min_dim`.
pub fn pyramid_levels(min_dim: usize) -> usize {
    let mut levels = 1;
    let mut side = min_dim / 32;
    while side >= 2 {
        side /= 2;
        levels += 1;
    }
    levels
}

/// Single-channel image plane.
#[derive(Clone, Debug)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn sample(&self, x: f32, y: f32) -> f32 {
        let xc = x.clamp(0.0, (self.w - 1) as f32);
        let yc = y.clamp(0.0, (self.h - 1) as f32);
        let x0 = (xc.floor() as usize).min(self.w - 1);
        let y0 = (yc.floor() as usize).min(self.h - 1);
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = xc - x0 as f32;
        let fy = yc - y0 as f32;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bot = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn half(&self) -> Plane {
        let smooth = gaussian_blur(self, 1.0);
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                data[y * w + x] = 0.25
                    * (smooth.at(2 * x, 2 * y)
                        + smooth.at(2 * x + 1, 2 * y)
                        + smooth.at(2 * x, 2 * y + 1)
                        + smooth.at(2 * x + 1, 2 * y + 1));
            }
        }
        Plane { w, h, data }
    }

    /// Central-difference gradients with one-sided edges.
    fn gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let (w, h) = (self.w, self.h);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                gx[y * w + x] = (self.at(xr, y) - self.at(xl, y)) / (xr - xl).max(1) as f32;
                gy[y * w + x] = (self.at(x, yd) - self.at(x, yu)) / (yd - yu).max(1) as f32;
            }
        }
        (gx, gy)
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as i32;
    let mut k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with edge replication.
fn blur_slice(data: &[f32], w: usize, h: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                let xx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += k * data[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                acc += k * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn gaussian_blur(p: &Plane, sigma: f32) -> Plane {
    Plane {
        w: p.w,
        h: p.h,
        data: blur_slice(&p.data, p.w, p.h, &gaussian_kernel(sigma)),
    }
}

/// Luma of both frames, normalised with the first frame's statistics so a
/// common gain cancels.
fn normalised_pair(a: &Frame, b: &Frame) -> (Plane, Plane) {
    let (w, h) = a.dims();
    let la = a.luma();
    let lb = b.luma();
    let n = la.len() as f64;
    let mean = la.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = la.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / var.sqrt().max(1e-4);
    let norm = |l: Vec<f32>| Plane {
        w,
        h,
        data: l.into_iter().map(|v| ((v as f64 - mean) * scale) as f32).collect(),
    };
    (norm(la), norm(lb))
}

/// Integer-then-subpixel global translation between two small planes.
fn global_translation(a: &Plane, b: &Plane) -> (f32, f32) {
    let r = (a.w.min(a.h) / 4).max(2) as isize;
    let mut best = (0isize, 0isize);
    let mut best_err = f64::INFINITY;
    let mut candidates: Vec<(isize, isize)> = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    candidates.push((0, 0));
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx, dy) != (0, 0) {
                candidates.push((dx, dy));
            }
        }
    }
    for (dx, dy) in candidates {
        let (mut err, mut cnt) = (0.0f64, 0usize);
        for y in 0..a.h as isize {
            let yb = y + dy;
            if yb < 0 || yb >= b.h as isize {
                continue;
            }
            for x in 0..a.w as isize {
                let xb = x + dx;
                if xb < 0 || xb >= b.w as isize {
                    continue;
                }
                let d = (a.at(x as usize, y as usize) - b.at(xb as usize, yb as usize)) as f64;
                // truncated so that occluded or cropped areas cannot dominate
                err += (d * d).min(1.0);
                cnt += 1;
            }
        }
        // require a reasonable overlap
        if cnt * 4 < a.w * a.h {
            continue;
        }
        let err = err / cnt as f64;
        if err < best_err {
            best_err = err;
            best = (dx, dy);
        }
    }
    let (mut tx, mut ty) = (best.0 as f32, best.1 as f32);
    // global Lucas-Kanade refinement
    let (gax, gay) = a.gradients();
    for _ in 0..5 {
        let (mut sxx, mut sxy, mut syy, mut sxr, mut syr) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
        for y in 0..a.h {
            for x in 0..a.w {
                let (bx, by) = (x as f32 + tx, y as f32 + ty);
                if bx < 0.0 || by < 0.0 || bx > (b.w - 1) as f32 || by > (b.h - 1) as f32 {
                    continue;
                }
                let i = y * a.w + x;
                let r = (b.sample(bx, by) - a.data[i]) as f64;
                let (gx, gy) = (gax[i] as f64, gay[i] as f64);
                sxx += gx * gx;
                sxy += gx * gy;
                syy += gy * gy;
                sxr += gx * r;
                syr += gy * r;
            }
        }
        let det = sxx * syy - sxy * sxy;
        if det.abs() < 1e-9 {
            break;
        }
        let du = -(syy * sxr - sxy * syr) / det;
        let dv = -(sxx * syr - sxy * sxr) / det;
        tx += du.clamp(-1.0, 1.0) as f32;
        ty += dv.clamp(-1.0, 1.0) as f32;
        if du.abs() < 1e-4 && dv.abs() < 1e-4 {
            break;
        }
    }
    (tx, ty)
}

/// One level of iterative Lucas-Kanade; refines `(u, v)` in place and
/// returns per-pixel confidence.
fn refine_level(a: &Plane, b: &Plane, u: &mut [f32], v: &mut [f32], cfg: &FlowConfig, want_confidence: bool) -> Vec<f32> {
    let (w, h) = (a.w, a.h);
    let n = w * h;
    let kernel = gaussian_kernel(cfg.window_sigma);
    let (gax, gay) = a.gradients();
    let mut warped = Plane { w, h, data: vec![0.0; n] };
    let mut last = None;
    for it in 0..=cfg.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                warped.data[i] = b.sample(x as f32 + u[i], y as f32 + v[i]);
            }
        }
        let (gbx, gby) = warped.gradients();
        let mut prods = vec![vec![0.0f32; n]; 6];
        for i in 0..n {
            let gx = 0.5 * (gax[i] + gbx[i]);
            let gy = 0.5 * (gay[i] + gby[i]);
            let r = warped.data[i] - a.data[i];
            // Cauchy weight keeps occluded or blanked pixels from biasing the window
            let rw = 1.0 / (1.0 + r * r / (cfg.residual_scale * cfg.residual_scale));
            prods[0][i] = rw * gx * gx;
            prods[1][i] = rw * gx * gy;
            prods[2][i] = rw * gy * gy;
            prods[3][i] = rw * gx * r;
            prods[4][i] = rw * gy * r;
            prods[5][i] = r * r;
        }
        let mut s: Vec<Vec<f32>> = prods.iter().map(|p| blur_slice(p, w, h, &kernel)).collect();
        if it == cfg.iterations {
            if want_confidence {
                // texture of the warped target alone, so matches into flat or
                // blanked regions of `b` are distrusted
                for (g1, g2) in [(&gbx, &gbx), (&gbx, &gby), (&gby, &gby)] {
                    let p: Vec<f32> = g1.iter().zip(g2.iter()).map(|(x, y)| x * y).collect();
                    s.push(blur_slice(&p, w, h, &kernel));
                }
            }
            last = Some(s);
            break;
        }
        for i in 0..n {
            let (sxx, sxy, syy) = (s[0][i] as f64, s[1][i] as f64, s[2][i] as f64);
            let (sxr, syr) = (s[3][i] as f64, s[4][i] as f64);
            let reg = 1e-6;
            let (axx, ayy) = (sxx + reg, syy + reg);
            let det = axx * ayy - sxy * sxy;
            let du = -(ayy * sxr - sxy * syr) / det;
            let dv = -(axx * syr - sxy * sxr) / det;
            u[i] += du.clamp(-2.0, 2.0) as f32;
            v[i] += dv.clamp(-2.0, 2.0) as f32;
        }
    }
    if !want_confidence {
        return Vec::new();
    }
    let s = last.expect("final iteration stores moments");
    (0..n)
        .map(|i| {
            let texture = |sxx: f32, sxy: f32, syy: f32| {
                let tr = sxx + syy;
                let disc = ((sxx - syy) * (sxx - syy) * 0.25 + sxy * sxy).sqrt();
                let lmin = (tr * 0.5 - disc).max(0.0);
                lmin / (lmin + cfg.texture_scale)
            };
            let texture = texture(s[0][i], s[1][i], s[2][i]) * texture(s[6][i], s[7][i], s[8][i]);
            let resid = (-s[5][i] / (cfg.residual_scale * cfg.residual_scale)).exp();
            let (x, y) = ((i % w) as f32 + u[i], (i / w) as f32 + v[i]);
            let inside = x >= 0.0 && y >= 0.0 && x <= (w - 1) as f32 && y <= (h - 1) as f32;
            if inside {
                (texture * resid).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Dense flow with `a(p) ≈ b(p + F(p))`, default settings.
pub fn dense_flow(a: &Frame, b: &Frame) -> Result<FlowField> {
    dense_flow_with(a, b, &FlowConfig::default())
}

pub fn dense_flow_with(a: &Frame, b: &Frame, cfg: &FlowConfig) -> Result<FlowField> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            op: "dense_flow",
            lhs: vec![a.height(), a.width()],
            rhs: vec![b.height(), b.width()],
        });
    }
    let (w, h) = a.dims();
    let (pa, pb) = normalised_pair(a, b);
    let levels = pyramid_levels(w.min(h));
    let mut pyr = vec![(pa, pb)];
    for _ in 1..levels {
        let (la, lb) = pyr.last().expect("non-empty");
        let next = (la.half(), lb.half());
        pyr.push(next);
    }
    let (ca, cb) = pyr.last().expect("non-empty");
    let (tx, ty) = global_translation(ca, cb);
    let mut u = vec![tx; ca.w * ca.h];
    let mut v = vec![ty; ca.w * ca.h];
    let mut confidence = Vec::new();
    for lvl in (0..levels).rev() {
        let (la, lb) = &pyr[lvl];
        if u.len() != la.w * la.h {
            // upsample the coarser estimate
            let (cw, chh) = (pyr[lvl + 1].0.w, pyr[lvl + 1].0.h);
            let cu = Plane { w: cw, h: chh, data: core::mem::take(&mut u) };
            let cv = Plane { w: cw, h: chh, data: core::mem::take(&mut v) };
            let sx = cw as f32 / la.w as f32;
            let sy = chh as f32 / la.h as f32;
            u = vec![0.0; la.w * la.h];
            v = vec![0.0; la.w * la.h];
            for y in 0..la.h {
                for x in 0..la.w {
                    let (xs, ys) = ((x as f32 + 0.5) * sx - 0.5, (y as f32 + 0.5) * sy - 0.5);
                    u[y * la.w + x] = cu.sample(xs, ys) / sx;
                    v[y * la.w + x] = cv.sample(xs, ys) / sy;
                }
            }
        }
        confidence = refine_level(la, lb, &mut u, &mut v, cfg, lvl == 0);
    }
    FlowField::new(w, h, u, v, confidence)
}

/// Camera-motion flow together with the rigid fit it was filled from.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalFlow {
    pub flow: FlowField,
    pub rigid: RigidTransform,
    pub inlier_fraction: f64,
}

pub fn global_flow(a: &Frame, b: &Frame) -> Result<FlowField> {
    Ok(global_flow_with(a, b, &GlobalFlowConfig::default())?.flow)
}

/// Dense flow with dynamic-object and low-confidence pixels replaced by a
/// Huber-IRLS rigid fit.
pub fn global_flow_with(a: &Frame, b: &Frame, cfg: &GlobalFlowConfig) -> Result<GlobalFlow> {
    let dense = dense_flow_with(a, b, &cfg.flow)?;
    robust_rigid_fill(&dense, cfg)
}

/// Robust rigid fit of an existing dense flow and outlier replacement.
pub fn robust_rigid_fill(dense: &FlowField, cfg: &GlobalFlowConfig) -> Result<GlobalFlow> {
    let (w, h) = dense.dims();
    let n = w * h;
    let conf = dense.confidence();
    let mut weights: Vec<f32> = conf.to_vec();
    let mut rigid = fit_rigid_procrustes(dense, &weights)?;
    let mut pred = rigid.to_flow(w, h);
    for _ in 0..cfg.irls_iterations {
        for i in 0..n {
            let r = (dense.u[i] - pred.u[i]).hypot(dense.v[i] - pred.v[i]);
            let hub = if r <= cfg.huber_delta { 1.0 } else { cfg.huber_delta / r };
            weights[i] = conf[i] * hub;
        }
        rigid = fit_rigid_procrustes(dense, &weights)?;
        pred = rigid.to_flow(w, h);
    }
    let classify = |pred: &FlowField| -> Vec<bool> {
        (0..n)
            .map(|i| {
                let r = (dense.u[i] - pred.u[i]).hypot(dense.v[i] - pred.v[i]);
                r <= cfg.tau_out && conf[i] >= cfg.c_min
            })
            .collect()
    };
    let mut inlier = classify(&pred);
    // final least-squares polish on the inlier set
    if inlier.iter().filter(|&&b| b).count() * 10 >= n {
        for i in 0..n {
            weights[i] = if inlier[i] { conf[i] } else { 0.0 };
        }
        if let Ok(polished) = fit_rigid_procrustes(dense, &weights) {
            rigid = polished;
            pred = rigid.to_flow(w, h);
            inlier = classify(&pred);
        }
    }
    let inlier_fraction = inlier.iter().filter(|&&b| b).count() as f64 / n as f64;
    if inlier_fraction < cfg.min_inliers {
        return Err(Error::NoDominantMotion { inlier_fraction });
    }
    let mut u = dense.u.clone();
    let mut v = dense.v.clone();
    let mut c = vec![1.0; n];
    for i in 0..n {
        if !inlier[i] {
            u[i] = pred.u[i];
            v[i] = pred.v[i];
            c[i] = conf[i].max(cfg.c_min);
        }
    }
    Ok(GlobalFlow {
        flow: FlowField::new(w, h, u, v, c)?,
        rigid,
        inlier_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid::warp;

    fn scene(w: usize, h: usize, shift: f32) -> Frame {
        Frame::from_fn(w, h, 0, |x, y| {
            let (xf, yf) = (x as f32 - shift, y as f32);
            let t = 0.5 + 0.15 * (0.37 * xf).sin() * (0.23 * yf).cos() + 0.1 * (0.13 * xf + 0.31 * yf).sin();
            [t, 0.8 * t + 0.1, 0.6 * t + 0.2]
        })
        .unwrap()
    }

    #[test]
    fn level_count() {
        assert_eq!(pyramid_levels(256), 4);
        assert_eq!(pyramid_levels(64), 2);
        assert_eq!(pyramid_levels(32), 1);
        assert_eq!(pyramid_levels(63), 1);
    }

    #[test]
    fn identical_frames_have_zero_flow() {
        let a = scene(64, 64, 0.0);
        let f = dense_flow(&a, &a).unwrap();
        assert!(f.mean_magnitude() < 0.05);
        let g = global_flow(&a, &a).unwrap();
        assert!(g.mean_magnitude() < 0.05);
    }

    #[test]
    fn known_shift_is_recovered() {
        let a = scene(96, 96, 0.0);
        let b = scene(96, 96, 3.0);
        let f = dense_flow(&a, &b).unwrap();
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for i in 0..96 * 96 {
            if f.confidence()[i] > 0.5 {
                su += f.u()[i] as f64;
                sv += (f.v()[i] as f64).abs();
                n += 1.0;
            }
        }
        assert!(n > 1000.0);
        let (mu, mv) = (su / n, sv / n);
        assert!((2.7..=3.3).contains(&mu) && mv < 0.3, "u {mu} v {mv}");
    }

    #[test]
    fn rigid_warp_global_flow_matches_truth() {
        let a = scene(128, 96, 0.0);
        let t = RigidTransform::for_frame(0.03, 4.0, -2.5, 128, 96);
        let b = warp(&a, &t);
        let g = global_flow_with(&a, &b, &GlobalFlowConfig::default()).unwrap();
        let epe = g.flow.endpoint_error(&t.to_flow(128, 96));
        assert!(epe < 0.5, "epe {epe}");
        assert!((g.rigid.theta - 0.03).abs() < 2e-3, "{:?}", g.rigid);
    }

    #[test]
    fn mismatched_sizes_error() {
        let a = scene(64, 64, 0.0);
        let b = scene(64, 48, 0.0);
        assert!(matches!(dense_flow(&a, &b), Err(Error::ShapeMismatch { op: "dense_flow", .. })));
    }

    #[test]
    fn resize_averages() {
        let f = FlowField::new(64, 64, vec![2.0; 4096], vec![-1.0; 4096], vec![1.0; 4096]).unwrap();
        let r = f.resized(32);
        assert!(r[..1024].iter().all(|&x| x == 2.0) && r[1024..].iter().all(|&x| x == -1.0));
    }
}
