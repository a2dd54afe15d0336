//! Layer helpers shared by the networks: seeded initialisation and the
//! conv/dense building blocks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::real::Real;
use crate::tensor::{BinOp, ParamSet, Tape, Tensor, Var};

/// Negative slope of the leaky ReLU used throughout.
pub const LEAK: f64 = 0.1;

/// He-normal conv weight `out x in x k x k` plus zero bias, appended to `ps`
/// as `{name}.w` / `{name}.b`.
pub fn push_conv<R: Real>(ps: &mut ParamSet<R>, name: &str, out: usize, inp: usize, k: usize, gain: f64, rng: &mut impl Rng) {
    let fan_in = (inp * k * k) as f64;
    let std = gain * (2.0 / fan_in).sqrt();
    let w = (0..out * inp * k * k)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            R::lit(std * z)
        })
        .collect();
    ps.push(key(name, "w"), Tensor::param(&[out, inp, k, k], w).expect("sized"));
    ps.push(key(name, "b"), Tensor::param(&[out], vec![R::zero(); out]).expect("sized"));
}

/// Dense `inp -> out` layer stored as an `inp x out` matrix plus bias.
pub fn push_dense<R: Real>(ps: &mut ParamSet<R>, name: &str, inp: usize, out: usize, gain: f64, rng: &mut impl Rng) {
    let std = gain * (1.0 / inp as f64).sqrt();
    let w = (0..inp * out)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            R::lit(std * z)
        })
        .collect();
    ps.push(key(name, "w"), Tensor::param(&[inp, out], w).expect("sized"));
    ps.push(key(name, "b"), Tensor::param(&[out], vec![R::zero(); out]).expect("sized"));
}

/// Orthogonal rows (Gram-Schmidt on Gaussian draws, falling back to scaled
/// Gaussians when there are more rows than columns) for a conv weight.
pub fn orthogonal_conv<R: Real>(out: usize, inp: usize, k: usize, gain: f64, rng: &mut impl Rng) -> Vec<R> {
    let cols = inp * k * k;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(out);
    for _ in 0..out {
        let mut v: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(rng)).collect();
        if rows.len() < cols {
            for r in &rows {
                let d: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= n);
        rows.push(v);
    }
    rows.into_iter().flatten().map(|x| R::lit(gain * x)).collect()
}

fn key(name: &str, suffix: &str) -> String {
    let mut s = String::from(name);
    s.push('.');
    s.push_str(suffix);
    s
}

/// Bound parameters by name for one forward pass.
pub struct Bound<'a, R> {
    pub params: &'a ParamSet<R>,
    pub vars: &'a [Var],
}

impl<R: Real> Bound<'_, R> {
    pub fn var(&self, name: &str) -> Var {
        let i = self
            .params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    pub fn conv(&self, tape: &mut Tape<R>, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let w = self.var(&key(name, "w"));
        let b = self.var(&key(name, "b"));
        tape.conv2d(x, w, Some(b), stride, pad)
    }

    pub fn dense(&self, tape: &mut Tape<R>, name: &str, x: Var) -> Result<Var> {
        let w = self.var(&key(name, "w"));
        let b = self.var(&key(name, "b"));
        let y = tape.matmul(x, w)?;
        tape.per_col(BinOp::Add, y, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = orthogonal_conv(8, 3, 3, 1.0, &mut rng);
        for i in 0..8 {
            for j in 0..8 {
                let d: f64 = (0..27).map(|k| w[i * 27 + k] * w[j * 27 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }
}
