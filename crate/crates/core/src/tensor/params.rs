use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<R> {
    pub name: String,
    pub tensor: Tensor<R>,
}

/// Named, ordered set of learnable tensors with gradient buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<R> {
    params: Vec<Param<R>>,
}

impl<R: Real> ParamSet<R> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<R>) {
        self.params.push(Param {
            name: name.into(),
            tensor,
        });
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<R>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<R>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<R>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.tensor)
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Records every parameter as a leaf; the returned handles are in the
    /// same order as the set.
    pub fn bind(&self, tape: &mut Tape<R>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(&p.tensor)).collect()
    }

    /// Accumulates the tape's gradients for `vars` (from [`bind`](Self::bind))
    /// into the parameter gradient buffers.
    pub fn absorb_grads(&mut self, tape: &Tape<R>, vars: &[Var]) -> Result<()> {
        if vars.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                op: "absorb_grads",
                left: vars.len(),
                right: self.params.len(),
            });
        }
        for (p, &v) in self.params.iter_mut().zip(vars) {
            match tape.grad(v) {
                Some(g) => p.tensor.accumulate_grad(g)?,
                None if p.tensor.requires_grad() => {
                    let zeros = vec![R::zero(); p.tensor.numel()];
                    p.tensor.accumulate_grad(&zeros)?;
                }
                None => {}
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Plain gradient descent, `p <- p - lr * g`; gradients are cleared.
    pub fn sgd_step(&mut self, lr: R) -> Result<()> {
        if let Some(p) = self
            .params
            .iter()
            .find(|p| p.tensor.requires_grad() && p.tensor.grad().is_none())
        {
            return Err(Error::MissingGradient(p.name.clone()));
        }
        for p in self.params.iter_mut().filter(|p| p.tensor.requires_grad()) {
            let g = p.tensor.take_grad().expect("checked above");
            p.tensor
                .data_mut()
                .iter_mut()
                .zip(&g)
                .for_each(|(w, &gv)| *w -= lr * gv);
        }
        Ok(())
    }

    /// All parameter values concatenated in set order.
    pub fn flat_values(&self) -> Vec<R> {
        self.params
            .iter()
            .flat_map(|p| p.tensor.data().iter().copied())
            .collect()
    }

    /// All gradients concatenated in set order (zeros where absent).
    pub fn flat_grads(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.numel());
        for p in &self.params {
            match p.tensor.grad() {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(core::iter::repeat_n(R::zero(), p.tensor.numel())),
            }
        }
        out
    }

    pub fn set_flat_values(&mut self, values: &[R]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(Error::LengthMismatch {
                op: "set_flat_values",
                left: values.len(),
                right: self.numel(),
            });
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.tensor.numel();
            p.tensor.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Replaces gradient buffers with slices of `grads`.
    pub fn set_flat_grads(&mut self, grads: &[R]) -> Result<()> {
        if grads.len() != self.numel() {
            return Err(Error::LengthMismatch {
                op: "set_flat_grads",
                left: grads.len(),
                right: self.numel(),
            });
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.tensor.numel();
            p.tensor.zero_grad();
            p.tensor.accumulate_grad(&grads[off..off + n])?;
            off += n;
        }
        Ok(())
    }
}

/// Adam optimizer state for one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam<R> {
    pub lr: R,
    pub beta1: R,
    pub beta2: R,
    pub eps: R,
    step: i32,
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(lr: R) -> Self {
        Self {
            lr,
            beta1: R::lit(0.9),
            beta2: R::lit(0.999),
            eps: R::lit(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet<R>) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![R::zero(); p.tensor.numel()]).collect();
            self.v = self.m.clone();
        }
        if let Some(p) = params
            .iter()
            .find(|p| p.tensor.requires_grad() && p.tensor.grad().is_none())
        {
            return Err(Error::MissingGradient(p.name.clone()));
        }
        self.step += 1;
        let bc1 = R::one() - self.beta1.powi(self.step);
        let bc2 = R::one() - self.beta2.powi(self.step);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.tensor.take_grad() else { continue };
            for (((w, &gk), mk), vk) in p.tensor.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mk = self.beta1 * *mk + (R::one() - self.beta1) * gk;
                *vk = self.beta2 * *vk + (R::one() - self.beta2) * gk * gk;
                let mh = *mk / bc1;
                let vh = *vk / bc2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        let mut t = Tensor::param(&[1], vec![value]).unwrap();
        t.accumulate_grad(&[grad]).unwrap();
        ps.push("p", t);
        ps
    }

    #[test]
    fn sgd_step_applies_update_and_clears_grad() {
        let mut ps = single(1.0, 0.5);
        ps.sgd_step(0.1).unwrap();
        assert!((ps.get("p").unwrap().data()[0] - 0.95).abs() < 1e-15);
        assert!(ps.get("p").unwrap().grad().is_none());
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut ps = single(0.123456789, 7.0);
        ps.sgd_step(0.0).unwrap();
        assert_eq!(ps.get("p").unwrap().data()[0], 0.123456789);
    }

    #[test]
    fn sgd_without_gradient_errors() {
        let mut ps = ParamSet::<f32>::new();
        ps.push("w", Tensor::param(&[2], vec![1.0, 2.0]).unwrap());
        assert_eq!(ps.sgd_step(0.1), Err(Error::MissingGradient("w".into())));
    }

    #[test]
    fn two_steps_equal_one_step_of_summed_deltas() {
        let (p0, g, lr) = (0.7f64, 0.3, 0.05);
        let mut twice = single(p0, g);
        twice.sgd_step(lr).unwrap();
        twice.get_mut("p").unwrap().accumulate_grad(&[g]).unwrap();
        twice.sgd_step(lr).unwrap();
        let mut once = single(p0, 2.0 * g);
        once.sgd_step(lr).unwrap();
        let (a, b) = (twice.get("p").unwrap().data()[0], once.get("p").unwrap().data()[0]);
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    #[test]
    fn frozen_tensor_never_accumulates() {
        let mut t = Tensor::<f32>::new(&[2], vec![0.0, 0.0]).unwrap();
        t.accumulate_grad(&[1.0, 1.0]).unwrap();
        assert!(t.grad().is_none());
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut ps = single(1.0, 2.0);
        let mut opt = Adam::new(0.01);
        opt.step(&mut ps).unwrap();
        let v = ps.get("p").unwrap().data()[0];
        assert!((v - 0.99).abs() < 1e-9, "{v}");
    }
}
