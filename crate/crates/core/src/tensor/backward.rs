use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::{BinOp, Node, Op, Reduce, Tape, Var};
use crate::error::{Error, Result};
use crate::real::Real;

fn slot<'a, R: Real>(grads: &'a mut [Option<Vec<R>>], nodes: &[Node<R>], v: Var) -> Option<&'a mut [R]> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![R::zero(); len]).as_mut_slice())
}

impl<R: Real> Tape<R> {
    /// Reverse sweep from a scalar `root`. Gradients of every node that
    /// depends on a differentiable leaf become available via [`Tape::grad`];
    /// previous gradients are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = &self.nodes[root.0].shape;
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarRoot(shape.clone()));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.nodes[root.0].needs_grad {
            return Ok(());
        }
        self.grads[root.0] = Some(vec![R::one()]);
        for i in (0..=root.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            // interior gradients are kept so callers can inspect them
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[R]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(da) = slot(grads, nodes, *a) {
                    for k in 0..g.len() {
                        da[k] += match kind {
                            BinOp::Add | BinOp::Sub => g[k],
                            BinOp::Mul => g[k] * bv[k],
                            BinOp::Div => g[k] / bv[k],
                        };
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    for k in 0..g.len() {
                        db[k] += match kind {
                            BinOp::Add => g[k],
                            BinOp::Sub => -g[k],
                            BinOp::Mul => g[k] * av[k],
                            BinOp::Div => -g[k] * out[k] / bv[k],
                        };
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(dx) = slot(grads, nodes, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, &gk)| *d += gk * *c);
                }
            }
            Op::Offset(x) | Op::Reshape(x) => {
                if let Some(dx) = slot(grads, nodes, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, &gk)| *d += gk);
                }
            }
            Op::Relu(x) | Op::LeakyRelu(x, _) | Op::Abs(x) | Op::Square(x) | Op::Ln(x) | Op::Clamp(x, _, _) => {
                let xv = &nodes[x.0].value;
                let zero = R::zero();
                let local = |v: R| -> R {
                    match &node.op {
                        Op::Relu(_) => {
                            if v > zero {
                                R::one()
                            } else {
                                zero
                            }
                        }
                        Op::LeakyRelu(_, s) => {
                            if v > zero {
                                R::one()
                            } else {
                                *s
                            }
                        }
                        Op::Abs(_) => {
                            if v > zero {
                                R::one()
                            } else if v < zero {
                                -R::one()
                            } else {
                                zero
                            }
                        }
                        Op::Square(_) => v + v,
                        Op::Ln(_) => R::one() / v,
                        Op::Clamp(_, lo, hi) => {
                            if v >= *lo && v <= *hi {
                                R::one()
                            } else {
                                zero
                            }
                        }
                        _ => unreachable!(),
                    }
                };
                if let Some(dx) = slot(grads, nodes, *x) {
                    for k in 0..g.len() {
                        dx[k] += g[k] * local(xv[k]);
                    }
                }
            }
            Op::Sqrt(x) => {
                if let Some(dx) = slot(grads, nodes, *x) {
                    let half = R::lit(0.5);
                    for k in 0..g.len() {
                        dx[k] += g[k] * half / out[k];
                    }
                }
            }
            Op::Exp(x) => {
                if let Some(dx) = slot(grads, nodes, *x) {
                    for k in 0..g.len() {
                        dx[k] += g[k] * out[k];
                    }
                }
            }
            Op::Sum(x) | Op::Mean(x) => {
                if let Some(dx) = slot(grads, nodes, *x) {
                    let s = if matches!(node.op, Op::Mean(_)) {
                        g[0] / R::lit(dx.len() as f64)
                    } else {
                        g[0]
                    };
                    dx.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                let n = nodes[b.0].shape[1];
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(da) = slot(grads, nodes, *a) {
                    // dA (m x k) += G (m x n) * B^T (n x k)
                    R::gemm(m, n, k, R::one(), (g, n as isize, 1), (bv, 1, n as isize), R::one(), (da, k as isize, 1));
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    // dB (k x n) += A^T (k x m) * G (m x n)
                    R::gemm(k, m, n, R::one(), (av, 1, k as isize), (g, n as isize, 1), R::one(), (db, n as isize, 1));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
                if let Some(dx) = slot(grads, nodes, *x) {
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                // three disjoint gradient slots; take them out to satisfy the borrow checker
                let mut dx = if nodes[x.0].needs_grad { Some(take_slot(grads, nodes, *x)) } else { None };
                let mut dw = if nodes[w.0].needs_grad { Some(take_slot(grads, nodes, *w)) } else { None };
                let mut db = match b {
                    Some(b) if nodes[b.0].needs_grad => Some(take_slot(grads, nodes, *b)),
                    _ => None,
                };
                kernels::conv_backward(
                    geom,
                    xv,
                    wv,
                    g,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(d) = dx {
                    grads[x.0] = Some(d);
                }
                if let Some(d) = dw {
                    grads[w.0] = Some(d);
                }
                if let (Some(d), Some(b)) = (db, b) {
                    grads[b.0] = Some(d);
                }
            }
            Op::Upsample2x(x) => {
                let s = &nodes[x.0].shape;
                let (h, w) = (s[2], s[3]);
                let (h2, w2) = (2 * h, 2 * w);
                if let Some(dx) = slot(grads, nodes, *x) {
                    for p in 0..s[0] * s[1] {
                        for y in 0..h2 {
                            for xx in 0..w2 {
                                dx[p * h * w + (y / 2) * w + xx / 2] += g[p * h2 * w2 + y * w2 + xx];
                            }
                        }
                    }
                }
            }
            Op::AvgPool2x(x) => {
                let s = &nodes[x.0].shape;
                let (h, w) = (s[2], s[3]);
                let (h2, w2) = (h / 2, w / 2);
                let q = R::lit(0.25);
                if let Some(dx) = slot(grads, nodes, *x) {
                    for p in 0..s[0] * s[1] {
                        for y in 0..h2 {
                            for xx in 0..w2 {
                                let gv = g[p * h2 * w2 + y * w2 + xx] * q;
                                let i = p * h * w + 2 * y * w + 2 * xx;
                                dx[i] += gv;
                                dx[i + 1] += gv;
                                dx[i + w] += gv;
                                dx[i + w + 1] += gv;
                            }
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let outer = node.shape[0];
                let inner: usize = node.shape[2..].iter().product();
                let total = node.shape[1];
                let mut off = 0;
                for p in parts {
                    let m = nodes[p.0].shape[1];
                    if let Some(dp) = slot(grads, nodes, *p) {
                        for o in 0..outer {
                            let src = &g[(o * total + off) * inner..(o * total + off + m) * inner];
                            dp[o * m * inner..(o + 1) * m * inner]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, &s)| *d += s);
                        }
                    }
                    off += m;
                }
            }
            Op::Narrow { x, axis, start } => {
                let s = &nodes[x.0].shape;
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let len = node.shape[*axis];
                if let Some(dx) = slot(grads, nodes, *x) {
                    for o in 0..outer {
                        let base = (o * s[*axis] + start) * inner;
                        dx[base..base + len * inner]
                            .iter_mut()
                            .zip(&g[o * len * inner..(o + 1) * len * inner])
                            .for_each(|(d, &v)| *d += v);
                    }
                }
            }
            Op::GridSample { img, coords } => {
                let s = &nodes[img.0].shape;
                let dims = (s[0], s[1], s[2], s[3]);
                let out_hw = (node.shape[2], node.shape[3]);
                let mut di = if nodes[img.0].needs_grad { Some(take_slot(grads, nodes, *img)) } else { None };
                let mut dc = if nodes[coords.0].needs_grad { Some(take_slot(grads, nodes, *coords)) } else { None };
                kernels::grid_sample_backward(
                    &nodes[img.0].value,
                    &nodes[coords.0].value,
                    g,
                    dims,
                    out_hw,
                    di.as_deref_mut(),
                    dc.as_deref_mut(),
                );
                if let Some(d) = di {
                    grads[img.0] = Some(d);
                }
                if let Some(d) = dc {
                    grads[coords.0] = Some(d);
                }
            }
            Op::SpatialMean(x) => {
                let s = &nodes[x.0].shape;
                let hw = s[2] * s[3];
                let inv = R::one() / R::lit(hw as f64);
                if let Some(dx) = slot(grads, nodes, *x) {
                    for (p, chunk) in dx.chunks_mut(hw).enumerate() {
                        let v = g[p] * inv;
                        chunk.iter_mut().for_each(|d| *d += v);
                    }
                }
            }
            Op::Reduce { x, axis, kind, arg } => {
                let (r, c) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
                let idx = |o: usize, i: usize| if *axis == 1 { o * c + i } else { i * c + o };
                let len = if *axis == 1 { c } else { r };
                if let Some(dx) = slot(grads, nodes, *x) {
                    for (o, &go) in g.iter().enumerate() {
                        match kind {
                            Reduce::Sum => (0..len).for_each(|i| dx[idx(o, i)] += go),
                            Reduce::Max | Reduce::Min => dx[idx(o, arg[o])] += go,
                        }
                    }
                }
            }
            Op::PerRow(kind, a, v) | Op::PerCol(kind, a, v) => {
                let per_row = matches!(node.op, Op::PerRow(..));
                let c = node.shape[1];
                let (av, vv) = (&nodes[a.0].value, &nodes[v.0].value);
                let vi = |k: usize| if per_row { k / c } else { k % c };
                if let Some(da) = slot(grads, nodes, *a) {
                    for k in 0..g.len() {
                        da[k] += match kind {
                            BinOp::Add | BinOp::Sub => g[k],
                            BinOp::Mul => g[k] * vv[vi(k)],
                            BinOp::Div => g[k] / vv[vi(k)],
                        };
                    }
                }
                if let Some(dv) = slot(grads, nodes, *v) {
                    for k in 0..g.len() {
                        let s = vv[vi(k)];
                        dv[vi(k)] += match kind {
                            BinOp::Add => g[k],
                            BinOp::Sub => -g[k],
                            BinOp::Mul => g[k] * av[k],
                            BinOp::Div => -g[k] * av[k] / (s * s),
                        };
                    }
                }
            }
        }
    }
}

fn take_slot<R: Real>(grads: &mut [Option<Vec<R>>], nodes: &[Node<R>], v: Var) -> Vec<R> {
    let len = nodes[v.0].value.len();
    grads[v.0].take().unwrap_or_else(|| vec![R::zero(); len])
}
