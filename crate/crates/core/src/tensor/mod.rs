//! Minimal reverse-mode differentiation over dense `N x C x H x W` tensors.
//!
//! A [`Tape`] owns every value produced during a forward pass. Operations
//! append nodes in evaluation order, so the node list is already a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! There is no implicit broadcasting: per-channel bias lives inside
//! [`Tape::conv2d`], and row/column broadcasts are spelled out with
//! [`Tape::per_row`] and [`Tape::per_col`].

mod backward;
pub(crate) mod kernels;
mod params;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use kernels::ConvGeom;

pub use params::{Adam, Param, ParamSet};

/// A dense array with optional gradient storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
    requires_grad: bool,
    grad: Option<Vec<R>>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: &[usize], data: Vec<R>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![R::zero(); numel],
            requires_grad: false,
            grad: None,
        }
    }

    /// A trainable tensor.
    pub fn param(shape: &[usize], data: Vec<R>) -> Result<Self> {
        let mut t = Self::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[R]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut Vec<R>> {
        self.grad.as_mut()
    }

    pub fn take_grad(&mut self) -> Option<Vec<R>> {
        self.grad.take()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer. Ignored unless `requires_grad`.
    pub fn accumulate_grad(&mut self, g: &[R]) -> Result<()> {
        if !self.requires_grad {
            return Ok(());
        }
        if g.len() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "accumulate_grad",
                lhs: self.shape.clone(),
                rhs: vec![g.len()],
            });
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(a, b)| *a += *b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op<R> {
    Leaf,
    Binary(BinOp, Var, Var),
    Scale(Var, R),
    Offset(Var),
    Relu(Var),
    LeakyRelu(Var, R),
    Abs(Var),
    Square(Var),
    Sqrt(Var),
    Exp(Var),
    Ln(Var),
    Clamp(Var, R, R),
    Sum(Var),
    Mean(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Upsample2x(Var),
    AvgPool2x(Var),
    Concat(Vec<Var>),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    GridSample {
        img: Var,
        coords: Var,
    },
    SpatialMean(Var),
    /// Reduction of a matrix along `axis`; `arg` holds the selected index
    /// for max/min.
    Reduce {
        x: Var,
        axis: usize,
        kind: Reduce,
        arg: Vec<usize>,
    },
    PerRow(BinOp, Var, Var),
    PerCol(BinOp, Var, Var),
}

struct Node<R> {
    shape: Vec<usize>,
    value: Vec<R>,
    op: Op<R>,
    needs_grad: bool,
}

/// Ordered record of primitive evaluations.
pub struct Tape<R> {
    nodes: Vec<Node<R>>,
    grads: Vec<Option<Vec<R>>>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn dims4(op: &'static str, s: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *s {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::ShapeMismatch {
            op,
            lhs: s.to_vec(),
            rhs: vec![0, 0, 0, 0],
        }),
    }
}

fn dims2(op: &'static str, s: &[usize]) -> Result<(usize, usize)> {
    match *s {
        [r, c] => Ok((r, c)),
        _ => Err(Error::ShapeMismatch {
            op,
            lhs: s.to_vec(),
            rhs: vec![0, 0],
        }),
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<R>, op: Op<R>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let op = if needs_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a tensor as a leaf; it is differentiated iff `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor<R>) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, t.requires_grad)
    }

    /// Records a leaf that receives gradients.
    pub fn variable(&mut self, shape: &[usize], data: Vec<R>) -> Result<Var> {
        let t = Tensor::param(shape, data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, true))
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, shape: &[usize], data: Vec<R>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[R] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// First element of a node's value; intended for scalar losses.
    pub fn scalar(&self, v: Var) -> R {
        self.nodes[v.0].value[0]
    }

    /// Copies a node out as a standalone tensor (without gradient tracking).
    pub fn to_tensor(&self, v: Var) -> Tensor<R> {
        let n = &self.nodes[v.0];
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
            requires_grad: false,
            grad: None,
        }
    }

    /// Gradient of the last [`backward`](Self::backward) root w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<&[R]> {
        self.grads[v.0].as_deref()
    }

    fn unary(&mut self, x: Var, op: Op<R>, f: impl Fn(R) -> R) -> Var {
        let n = &self.nodes[x.0];
        let value = n.value.iter().map(|&a| f(a)).collect();
        let shape = n.shape.clone();
        let ng = n.needs_grad;
        self.push(shape, value, op, ng)
    }

    pub fn binary(&mut self, kind: BinOp, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if na.shape != nb.shape {
            let name = match kind {
                BinOp::Add => "add",
                BinOp::Sub => "sub",
                BinOp::Mul => "mul",
                BinOp::Div => "div",
            };
            return Err(mismatch(name, &na.shape, &nb.shape));
        }
        let value = na
            .value
            .iter()
            .zip(&nb.value)
            .map(|(&x, &y)| match kind {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            })
            .collect();
        let shape = na.shape.clone();
        let ng = na.needs_grad || nb.needs_grad;
        Ok(self.push(shape, value, Op::Binary(kind, a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Div, a, b)
    }

    pub fn scale(&mut self, x: Var, c: R) -> Var {
        self.unary(x, Op::Scale(x, c), |a| a * c)
    }

    pub fn offset(&mut self, x: Var, c: R) -> Var {
        self.unary(x, Op::Offset(x), |a| a + c)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |a| if a > R::zero() { a } else { R::zero() })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: R) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |a| if a > R::zero() { a } else { a * slope })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), |a| a.abs())
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |a| a * a)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x), |a| a.sqrt())
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), |a| a.exp())
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Op::Ln(x), |a| a.ln())
    }

    /// Clamps into `[lo, hi]`; the gradient passes where the input lies in
    /// the closed interval.
    pub fn clamp(&mut self, x: Var, lo: R, hi: R) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |a| a.max(lo).min(hi))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let n = &self.nodes[x.0];
        let s: R = n.value.iter().copied().sum();
        let ng = n.needs_grad;
        self.push(vec![1], vec![s], Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = &self.nodes[x.0];
        let s: R = n.value.iter().copied().sum();
        let m = s / R::lit(n.value.len().max(1) as f64);
        let ng = n.needs_grad;
        self.push(vec![1], vec![m], Op::Mean(x), ng)
    }

    /// Sum of several scalars.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let mut it = terms.iter();
        let first = *it.next().ok_or_else(|| Error::InvalidArgument("add_all of nothing".into()))?;
        let mut acc = first;
        for &t in it {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul", &self.nodes[a.0].shape)?;
        let (k2, n) = dims2("matmul", &self.nodes[b.0].shape)?;
        if k != k2 {
            return Err(mismatch("matmul", &self.nodes[a.0].shape, &self.nodes[b.0].shape));
        }
        let mut out = vec![R::zero(); m * n];
        R::gemm(
            m,
            k,
            n,
            R::one(),
            (&self.nodes[a.0].value, k as isize, 1),
            (&self.nodes[b.0].value, n as isize, 1),
            R::zero(),
            (&mut out, n as isize, 1),
        );
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2("transpose", &self.nodes[x.0].shape)?;
        let src = &self.nodes[x.0].value;
        let mut out = vec![R::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.ng(x);
        Ok(self.push(vec![c, r], out, Op::Transpose(x), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = &self.nodes[x.0];
        if shape.iter().product::<usize>() != n.value.len() {
            return Err(mismatch("reshape", &n.shape, shape));
        }
        let value = n.value.clone();
        let ng = n.needs_grad;
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), ng))
    }

    /// 2-D cross-correlation with zero padding. `x`: `N x C x H x W`,
    /// `w`: `O x C x kh x kw`, optional per-channel bias `b`: `O`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, wd) = dims4("conv2d", &self.nodes[x.0].shape)?;
        let (o, c2, kh, kw) = dims4("conv2d", &self.nodes[w.0].shape)?;
        if c != c2 || stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(mismatch("conv2d", &self.nodes[x.0].shape, &self.nodes[w.0].shape));
        }
        if let Some(b) = b {
            if self.nodes[b.0].shape != [o] {
                return Err(mismatch("conv2d bias", &self.nodes[b.0].shape, &[o]));
            }
        }
        let geom = ConvGeom {
            n,
            c,
            h,
            w: wd,
            o,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        };
        let out = kernels::conv_forward(
            &geom,
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            b.map(|b| self.nodes[b.0].value.as_slice()),
        );
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(vec![n, o, geom.ho, geom.wo], out, Op::Conv2d { x, w, b, geom }, ng))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4("upsample2x", &self.nodes[x.0].shape)?;
        let src = &self.nodes[x.0].value;
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![R::zero(); n * c * h2 * w2];
        for p in 0..n * c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    out[p * h2 * w2 + y * w2 + xx] = src[p * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(vec![n, c, h2, w2], out, Op::Upsample2x(x), ng))
    }

    /// 2x2 average pooling; a trailing odd row/column is dropped.
    pub fn avg_pool2x(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4("avg_pool2x", &self.nodes[x.0].shape)?;
        let (h2, w2) = (h / 2, w / 2);
        if h2 == 0 || w2 == 0 {
            return Err(mismatch("avg_pool2x", &self.nodes[x.0].shape, &[n, c, 2, 2]));
        }
        let src = &self.nodes[x.0].value;
        let q = R::lit(0.25);
        let mut out = vec![R::zero(); n * c * h2 * w2];
        for p in 0..n * c {
            let s = &src[p * h * w..(p + 1) * h * w];
            for y in 0..h2 {
                for xx in 0..w2 {
                    let i = 2 * y * w + 2 * xx;
                    out[p * h2 * w2 + y * w2 + xx] = (s[i] + s[i + 1] + s[i + w] + s[i + w + 1]) * q;
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(vec![n, c, h2, w2], out, Op::AvgPool2x(x), ng))
    }

    /// Concatenation along axis 1 (channels for `N x C x ...` tensors).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let s0 = self.nodes[first.0].shape.clone();
        if s0.len() < 2 {
            return Err(mismatch("concat", &s0, &[0, 0]));
        }
        let outer = s0[0];
        let inner: usize = s0[2..].iter().product();
        let mut mid = 0;
        for &p in parts {
            let s = &self.nodes[p.0].shape;
            if s.len() != s0.len() || s[0] != outer || s[2..] != s0[2..] {
                return Err(mismatch("concat", &s0, s));
            }
            mid += s[1];
        }
        let mut out = Vec::with_capacity(outer * mid * inner);
        for o in 0..outer {
            for &p in parts {
                let n = &self.nodes[p.0];
                let m = n.shape[1];
                out.extend_from_slice(&n.value[o * m * inner..(o + 1) * m * inner]);
            }
        }
        let mut shape = s0;
        shape[1] = mid;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(shape, out, Op::Concat(parts.to_vec()), ng))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.nodes[x.0].shape.clone();
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            let mut want = s.clone();
            if axis < want.len() {
                want[axis] = start + len;
            }
            return Err(mismatch("narrow", &s, &want));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let src = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let ng = self.ng(x);
        Ok(self.push(shape, out, Op::Narrow { x, axis, start }, ng))
    }

    /// Bilinear sampling of `img` (`N x C x H x W`) at continuous pixel
    /// coordinates `coords` (`N x 2 x Ho x Wo`, channel 0 = x, 1 = y).
    /// Out-of-range coordinates are clamped, which replicates edge pixels.
    pub fn grid_sample(&mut self, img: Var, coords: Var) -> Result<Var> {
        let (n, c, h, w) = dims4("grid_sample", &self.nodes[img.0].shape)?;
        let (n2, two, ho, wo) = dims4("grid_sample", &self.nodes[coords.0].shape)?;
        if n != n2 || two != 2 {
            return Err(mismatch("grid_sample", &self.nodes[img.0].shape, &self.nodes[coords.0].shape));
        }
        let out = kernels::grid_sample(&self.nodes[img.0].value, &self.nodes[coords.0].value, (n, c, h, w), (ho, wo));
        let ng = self.ng(img) || self.ng(coords);
        Ok(self.push(vec![n, c, ho, wo], out, Op::GridSample { img, coords }, ng))
    }

    /// Mean over the spatial dims: `N x C x H x W -> N x C`.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4("spatial_mean", &self.nodes[x.0].shape)?;
        let hw = h * w;
        let inv = R::one() / R::lit(hw as f64);
        let out = self.nodes[x.0]
            .value
            .chunks(hw)
            .map(|p| p.iter().copied().sum::<R>() * inv)
            .collect();
        let ng = self.ng(x);
        Ok(self.push(vec![n, c], out, Op::SpatialMean(x), ng))
    }

    /// Reduces a matrix along `axis` (0: over rows, giving one value per
    /// column; 1: over columns, giving one value per row).
    pub fn reduce(&mut self, x: Var, axis: usize, kind: Reduce) -> Result<Var> {
        let (r, c) = dims2("reduce", &self.nodes[x.0].shape)?;
        if axis > 1 || r == 0 || c == 0 {
            return Err(Error::InvalidArgument(format!("reduce axis {axis} of {r}x{c}")));
        }
        let src = &self.nodes[x.0].value;
        let (outer, len) = if axis == 1 { (r, c) } else { (c, r) };
        let at = |o: usize, i: usize| if axis == 1 { src[o * c + i] } else { src[i * c + o] };
        let mut out = Vec::with_capacity(outer);
        let mut arg = Vec::new();
        for o in 0..outer {
            match kind {
                Reduce::Sum => out.push((0..len).map(|i| at(o, i)).sum()),
                Reduce::Max | Reduce::Min => {
                    let mut best = 0;
                    for i in 1..len {
                        let better = match kind {
                            Reduce::Max => at(o, i) > at(o, best),
                            _ => at(o, i) < at(o, best),
                        };
                        if better {
                            best = i;
                        }
                    }
                    out.push(at(o, best));
                    arg.push(best);
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(vec![outer], out, Op::Reduce { x, axis, kind, arg }, ng))
    }

    fn broadcast(&mut self, kind: BinOp, a: Var, v: Var, per_row: bool) -> Result<Var> {
        let (r, c) = dims2("broadcast", &self.nodes[a.0].shape)?;
        let want = if per_row { r } else { c };
        if self.nodes[v.0].shape != [want] {
            return Err(mismatch(
                if per_row { "per_row" } else { "per_col" },
                &self.nodes[a.0].shape,
                &self.nodes[v.0].shape,
            ));
        }
        let (av, vv) = (&self.nodes[a.0].value, &self.nodes[v.0].value);
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                let s = if per_row { vv[i] } else { vv[j] };
                let x = av[i * c + j];
                out.push(match kind {
                    BinOp::Add => x + s,
                    BinOp::Sub => x - s,
                    BinOp::Mul => x * s,
                    BinOp::Div => x / s,
                });
            }
        }
        let ng = self.ng(a) || self.ng(v);
        let op = if per_row {
            Op::PerRow(kind, a, v)
        } else {
            Op::PerCol(kind, a, v)
        };
        Ok(self.push(vec![r, c], out, op, ng))
    }

    /// `out[i, j] = a[i, j] (op) v[i]`.
    pub fn per_row(&mut self, kind: BinOp, a: Var, v: Var) -> Result<Var> {
        self.broadcast(kind, a, v, true)
    }

    /// `out[i, j] = a[i, j] (op) v[j]`.
    pub fn per_col(&mut self, kind: BinOp, a: Var, v: Var) -> Result<Var> {
        self.broadcast(kind, a, v, false)
    }
}

#[cfg(test)]
mod tests;
