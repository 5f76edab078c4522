//! Reverse-mode automatic differentiation over scalars.
//!
//! Every operation on a [`Scalar`] that depends on a tape variable appends a
//! record (operation, inputs, local partials) to that variable's [`Tape`].
//! [`gradient`] runs one reverse sweep. [`gradient_scalars`] is the nestable
//! form: called on scalars that are themselves tape values, it returns
//! gradients that are again differentiable, which is what differentiating
//! through an entire optimisation loop needs.

mod scalar;
mod tape;

pub use scalar::{Scalar, Tags};
pub use tape::{Gradients, Tape};

use crate::error::{Error, Result};

/// Numeric types programs can be evaluated with: plain `f64`, or
/// [`Scalar`] when derivatives are wanted.
pub trait Real:
    Clone
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sigmoid(&self) -> Self;
    fn softplus(&self) -> Self;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sigmoid(&self) -> Self {
        crate::special::sigmoid(*self)
    }
    fn softplus(&self) -> Self {
        crate::special::softplus(*self)
    }
}

impl Real for Scalar {
    fn from_f64(v: f64) -> Self {
        Scalar::constant(v)
    }
    fn to_f64(&self) -> f64 {
        self.value()
    }
    fn exp(&self) -> Self {
        Scalar::exp(self)
    }
    fn ln(&self) -> Self {
        Scalar::ln(self)
    }
    fn sqrt(&self) -> Self {
        Scalar::sqrt(self)
    }
    fn sigmoid(&self) -> Self {
        Scalar::sigmoid(self)
    }
    fn softplus(&self) -> Self {
        Scalar::softplus(self)
    }
}

/// ∇f(at) from a single reverse sweep.
pub fn gradient<F>(f: F, at: &[f64]) -> Result<Vec<f64>>
where
    F: FnOnce(&[Scalar]) -> Scalar,
{
    try_value_and_gradient(|xs| Ok(f(xs)), at).map(|(_, g)| g)
}

pub fn value_and_gradient<F>(f: F, at: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Scalar]) -> Scalar,
{
    try_value_and_gradient(|xs| Ok(f(xs)), at)
}

/// Like [`value_and_gradient`] for functions that can fail. Domain
/// violations recorded while evaluating `f` surface as
/// [`Error::NonFinite`].
pub fn try_value_and_gradient<F>(f: F, at: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[Scalar]) -> Result<Scalar>,
{
    let tape = Tape::new();
    let xs: Vec<Scalar> = at.iter().map(|&x| tape.variable(x)).collect();
    let y = f(&xs)?;
    if let Some(err) = tape.fault() {
        return Err(err);
    }
    let grads = match y.index_on(&tape) {
        None => vec![0.0; at.len()],
        Some(out) => {
            let adj = tape.sweep_values(out, 0, tape.generation());
            (0..at.len())
                .map(|i| adj.get(i).copied().unwrap_or(0.0))
                .collect()
        }
    };
    Ok((y.value(), grads))
}

/// Nestable gradient: returns ∂f/∂xᵢ as scalars that stay differentiable
/// with respect to whatever `at` was computed from.
pub fn gradient_scalars<F>(f: F, at: &[Scalar]) -> Result<Vec<Scalar>>
where
    F: FnOnce(&[Scalar]) -> Scalar,
{
    try_value_and_gradient_scalars(|xs| Ok(f(xs)), at).map(|(_, g)| g)
}

pub fn try_value_and_gradient_scalars<F>(f: F, at: &[Scalar]) -> Result<(Scalar, Vec<Scalar>)>
where
    F: FnOnce(&[Scalar]) -> Result<Scalar>,
{
    let Some(tape) = at.iter().find_map(|s| s.tape()).cloned() else {
        // Nothing upstream is being differentiated: a plain sweep suffices.
        let tape = Tape::new();
        let xs: Vec<Scalar> = at
            .iter()
            .map(|x| tape.variable(x.value()).with_tags(x.tags().clone()))
            .collect();
        let y = f(&xs)?;
        if let Some(err) = tape.fault() {
            return Err(err);
        }
        let grads = match y.index_on(&tape) {
            None => vec![0.0; at.len()],
            Some(out) => {
                let adj = tape.sweep_values(out, 0, tape.generation());
                (0..at.len()).map(|i| adj[i]).collect()
            }
        };
        return Ok((y.detach(), grads.into_iter().map(Scalar::constant).collect()));
    };

    let _guard = tape.enter();
    let level = tape.generation();
    let xs: Vec<Scalar> = at
        .iter()
        .map(|x| match x.tape() {
            Some(_) => x.identity(),
            None => tape.variable(x.value()).with_tags(x.tags().clone()),
        })
        .collect();
    let lo = xs
        .iter()
        .filter_map(Scalar::index)
        .min()
        .expect("at least one input is on the tape");
    let y = f(&xs)?;
    if let Some(err) = tape.fault() {
        return Err(err);
    }
    let grads = match y.index_on(&tape) {
        None => vec![Scalar::constant(0.0); at.len()],
        Some(out) if out < lo => vec![Scalar::constant(0.0); at.len()],
        Some(out) => {
            let adj = tape.sweep_scalars(out, lo, level);
            xs.iter()
                .map(|x| {
                    let i = x.index().expect("inputs are on the tape");
                    adj[(i - lo) as usize]
                        .clone()
                        .unwrap_or_else(|| Scalar::constant(0.0))
                })
                .collect()
        }
    };
    Ok((y, grads))
}

/// Central differences (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h.
pub fn finite_difference<F>(f: F, at: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Config(format!("step h must be positive, got {h}")));
    }
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        x[i] = at[i] + h;
        let up = f(&x);
        x[i] = at[i] - h;
        let down = f(&x);
        x[i] = at[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}
