use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;

use super::Tensor;

/// Reverse-mode gradients of a scalar objective.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// One gradient per parameter tensor, same order and shapes.
    pub params: Vec<Tensor>,
    /// Gradient with respect to the input, when the objective provides one.
    pub input: Option<Tensor>,
}

/// A scalar objective of `(params, input)` with a hand-written backward pass.
pub trait Differentiable {
    /// Must return a single-element tensor.
    fn loss(&self, params: &[Tensor], input: &Tensor) -> Result<Tensor>;
    fn gradients(&self, params: &[Tensor], input: &Tensor) -> Result<Gradients>;
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index over all parameter tensors in order, then the input.
    pub worst_parameter_index: usize,
    pub checked: usize,
    pub passed: bool,
}

fn scalar_loss(f: &impl Differentiable, params: &[Tensor], input: &Tensor) -> Result<f64> {
    let loss = f.loss(params, input)?;
    if loss.numel() != 1 {
        return Err(Error::contract(format!(
            "grad_check: loss must be scalar, got shape {:?}",
            loss.shape()
        )));
    }
    Ok(loss.data()[0])
}

fn relative_error(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-8)
}

/// Compares reverse-mode gradients against central differences
/// `(f(theta + eps) - f(theta - eps)) / (2 eps)` for every parameter entry,
/// and for every input entry when the objective reports an input gradient.
pub fn grad_check<F>(f: &F, params: &[Tensor], input: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Differentiable + Sync,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::contract("grad_check: eps must be positive"));
    }
    scalar_loss(f, params, input)?;
    let grads = f.gradients(params, input)?;
    if grads.params.len() != params.len() || grads.params.iter().zip(params).any(|(g, p)| g.shape() != p.shape()) {
        return Err(Error::contract("grad_check: gradient shapes do not match parameters"));
    }

    // (tensor slot, element) pairs; slot == params.len() addresses the input.
    let mut slots: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(s, p)| (0..p.numel()).map(move |e| (s, e)))
        .collect();
    if let Some(gi) = &grads.input {
        if gi.shape() != input.shape() {
            return Err(Error::contract("grad_check: input gradient shape mismatch"));
        }
        slots.extend((0..input.numel()).map(|e| (params.len(), e)));
    }

    let errors = Exec::default().map_slice(&slots, |&(slot, elem)| -> Result<f64> {
        let eval = |delta: f64| -> Result<f64> {
            if slot < params.len() {
                let mut p = params.to_vec();
                p[slot].data_mut()[elem] += delta;
                scalar_loss(f, &p, input)
            } else {
                let mut x = input.clone();
                x.data_mut()[elem] += delta;
                scalar_loss(f, params, &x)
            }
        };
        let fd = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
        let ad = if slot < params.len() {
            grads.params[slot].data()[elem]
        } else {
            grads.input.as_ref().expect("input slot without gradient").data()[elem]
        };
        Ok(relative_error(ad, fd))
    });

    let mut worst = (0.0_f64, 0usize);
    for (i, e) in errors.into_iter().enumerate() {
        let e = e?;
        if e > worst.0 || e.is_nan() {
            worst = (e, i);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_parameter_index: worst.1,
        checked: slots.len(),
        passed: worst.0 < tol,
    })
}
