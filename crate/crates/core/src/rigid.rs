//! Rigid (rotation + translation) transforms, closed-form fitting and warping.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::Frame;
use crate::real::Real;
use crate::tensor::{kernels, Tape, Var};

/// Rotation by `theta` about `center` followed by translation `(tx, ty)`:
/// `p -> R(p - c) + c + t`. Pixel centres sit on integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    pub center: (f64, f64),
}

/// Centre of a `width x height` image in pixel coordinates.
pub fn image_center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) * 0.5, (height as f64 - 1.0) * 0.5)
}

impl RigidTransform {
    pub fn new(theta: f64, tx: f64, ty: f64, center: (f64, f64)) -> Self {
        Self { theta, tx, ty, center }
    }

    pub fn identity(center: (f64, f64)) -> Self {
        Self::new(0.0, 0.0, 0.0, center)
    }

    /// About the centre of a `width x height` frame.
    pub fn for_frame(theta: f64, tx: f64, ty: f64, width: usize, height: usize) -> Self {
        Self::new(theta, tx, ty, image_center(width, height))
    }

    pub fn is_identity(&self) -> bool {
        self.theta == 0.0 && self.tx == 0.0 && self.ty == 0.0
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        (
            c * dx - s * dy + self.center.0 + self.tx,
            s * dx + c * dy + self.center.1 + self.ty,
        )
    }

    /// Displacement `T(p) - p`.
    pub fn displacement(&self, x: f64, y: f64) -> (f64, f64) {
        let (qx, qy) = self.apply(x, y);
        (qx - x, qy - y)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        // R^-1 t
        let (ix, iy) = (c * self.tx + s * self.ty, -s * self.tx + c * self.ty);
        Self::new(-self.theta, -ix, -iy, self.center)
    }

    /// `self ∘ other` (apply `other` first). Both must share the pivot.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let (s, c) = self.theta.sin_cos();
        Self::new(
            self.theta + other.theta,
            c * other.tx - s * other.ty + self.tx,
            s * other.tx + c * other.ty + self.ty,
            self.center,
        )
    }

    /// Dense flow field of this transform on a `width x height` grid.
    pub fn to_flow(&self, width: usize, height: usize) -> FlowField {
        let mut u = vec![0.0; width * height];
        let mut v = vec![0.0; width * height];
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = self.displacement(x as f64, y as f64);
                u[y * width + x] = dx as f32;
                v[y * width + x] = dy as f32;
            }
        }
        FlowField::new(width, height, u, v, vec![1.0; width * height]).expect("sizes match")
    }

    /// Sampling coordinates (`2 x H x W`, x plane then y plane) that realise
    /// the inverse mapping used by [`warp`].
    pub fn sampling_grid<R: Real>(&self, width: usize, height: usize) -> Vec<R> {
        let inv = self.inverse();
        let n = width * height;
        let mut out = vec![R::zero(); 2 * n];
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = if self.is_identity() {
                    (x as f64, y as f64)
                } else {
                    inv.apply(x as f64, y as f64)
                };
                out[y * width + x] = R::lit(sx);
                out[n + y * width + x] = R::lit(sy);
            }
        }
        out
    }
}

/// Moves frame content by `t`: `out(q) = frame(t^-1(q))`, bilinear, with
/// edge replication outside the frame.
pub fn warp(frame: &Frame, t: &RigidTransform) -> Frame {
    let (w, h) = frame.dims();
    let grid = t.sampling_grid::<f32>(w, h);
    let out = kernels::grid_sample(frame.data(), &grid, (1, 3, h, w), (h, w));
    Frame::from_planes_clamped(w, h, out, frame.index).expect("same dims as input")
}

/// Differentiable warp of a batch `N x C x H x W`; one transform per image.
pub fn warp_var<R: Real>(tape: &mut Tape<R>, images: Var, transforms: &[RigidTransform]) -> Result<Var> {
    let s = tape.shape(images).to_vec();
    if s.len() != 4 || s[0] != transforms.len() {
        return Err(Error::ShapeMismatch {
            op: "warp_var",
            lhs: s,
            rhs: vec![transforms.len()],
        });
    }
    let (h, w) = (s[2], s[3]);
    let mut grid = Vec::with_capacity(transforms.len() * 2 * h * w);
    for t in transforms {
        grid.extend(t.sampling_grid::<R>(w, h));
    }
    let coords = tape.constant(&[s[0], 2, h, w], grid)?;
    tape.grid_sample(images, coords)
}

/// Weighted least-squares rigid fit to a flow field: minimises
/// `sum w_p |R(p - c) + c + t - (p + F(p))|^2` with `c` the image centre.
pub fn fit_rigid_procrustes(flow: &FlowField, weights: &[f32]) -> Result<RigidTransform> {
    let (w, h) = flow.dims();
    if weights.len() != w * h {
        return Err(Error::LengthMismatch {
            op: "fit_rigid_procrustes",
            left: weights.len(),
            right: w * h,
        });
    }
    let center = image_center(w, h);
    let (mut sw, mut sax, mut say, mut sfx, mut sfy) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let wt = weights[i] as f64;
            if wt <= 0.0 {
                continue;
            }
            sw += wt;
            sax += wt * (x as f64 - center.0);
            say += wt * (y as f64 - center.1);
            sfx += wt * flow.u()[i] as f64;
            sfy += wt * flow.v()[i] as f64;
        }
    }
    if sw <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    let (ax, ay, fx, fy) = (sax / sw, say / sw, sfx / sw, sfy / sw);
    // centred second moments of the positions, and the cross/dot moments
    // between centred positions and centred targets (targets = a + dF)
    let (mut cxx, mut cxy, mut cyy, mut cross, mut dot_extra) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let wt = weights[i] as f64;
            if wt <= 0.0 {
                continue;
            }
            let px = x as f64 - center.0 - ax;
            let py = y as f64 - center.1 - ay;
            let dfx = flow.u()[i] as f64 - fx;
            let dfy = flow.v()[i] as f64 - fy;
            cxx += wt * px * px;
            cxy += wt * px * py;
            cyy += wt * py * py;
            cross += wt * (px * dfy - py * dfx);
            dot_extra += wt * (px * dfx + py * dfy);
        }
    }
    // smallest eigenvalue of the position covariance: zero when collinear
    let tr = cxx + cyy;
    let det = cxx * cyy - cxy * cxy;
    let disc = (tr * tr * 0.25 - det).max(0.0).sqrt();
    let lambda_min = tr * 0.5 - disc;
    if lambda_min <= 1e-9 * sw {
        return Err(Error::DegenerateFit);
    }
    let dot = tr + dot_extra;
    let theta = cross.atan2(dot);
    if theta.abs() >= core::f64::consts::FRAC_PI_2 {
        return Err(Error::DegenerateFit);
    }
    let (s, c) = theta.sin_cos();
    // t = mean(a + F) - R mean(a)
    let tx = ax + fx - (c * ax - s * ay);
    let ty = ay + fy - (s * ax + c * ay);
    Ok(RigidTransform::new(theta, tx, ty, center))
}
