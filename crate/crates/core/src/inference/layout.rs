//! Flattening named latents into one unconstrained vector.

use crate::autodiff::{try_value_and_gradient, Scalar};
use crate::error::{Error, Result};
use crate::models::{Latent, Support, ZooEntry};
use crate::transforms::{make_log_joint, Bindings};

use super::hmc::Potential;

/// Latents laid end to end, each mapped to ℝ by its support's bijection:
/// identity, exp, or logistic.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentLayout {
    latents: Vec<Latent>,
}

fn to_constrained(support: Support, t: &Scalar) -> (Scalar, Option<Scalar>) {
    match support {
        Support::Real => (t.clone(), None),
        Support::Positive => (t.exp(), Some(t.clone())),
        // log σ(t) + log(1 − σ(t))
        Support::UnitInterval => (t.sigmoid(), Some(-(-t).softplus() - t.softplus())),
    }
}

fn to_unconstrained(support: Support, x: f64) -> f64 {
    match support {
        Support::Real => x,
        Support::Positive => x.ln(),
        Support::UnitInterval => (x / (1.0 - x)).ln(),
    }
}

impl LatentLayout {
    pub fn new(latents: &[Latent]) -> Self {
        LatentLayout {
            latents: latents.to_vec(),
        }
    }

    pub fn latents(&self) -> &[Latent] {
        &self.latents
    }

    pub fn dim(&self) -> usize {
        self.latents.iter().map(|l| l.size).sum()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::Dimension(format!(
                "layout has {} coordinates, got {n}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Constrained bindings and the log-Jacobian of the map, `None` when
    /// every latent is real-valued.
    pub fn constrain(&self, theta: &[Scalar]) -> Result<(Bindings, Option<Scalar>)> {
        self.check(theta.len())?;
        let mut out = Bindings::new();
        let mut log_jac: Option<Scalar> = None;
        let mut k = 0;
        for l in &self.latents {
            let mut vals = Vec::with_capacity(l.size);
            for t in &theta[k..k + l.size] {
                let (x, j) = to_constrained(l.support, t);
                vals.push(x);
                if let Some(j) = j {
                    log_jac = Some(match log_jac {
                        None => j,
                        Some(acc) => acc + j,
                    });
                }
            }
            k += l.size;
            out.insert(l.name.clone(), vals);
        }
        Ok((out, log_jac))
    }

    pub fn constrain_values(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let xs: Vec<Scalar> = theta.iter().copied().map(Scalar::constant).collect();
        let (b, _) = self.constrain(&xs)?;
        Ok(self.flatten(&b)?.iter().map(Scalar::value).collect())
    }

    /// Constrained values in layout order.
    pub fn flatten(&self, b: &Bindings) -> Result<Vec<Scalar>> {
        let mut out = Vec::with_capacity(self.dim());
        for l in &self.latents {
            let v = b
                .get(&l.name)
                .ok_or_else(|| Error::MissingBinding(vec![l.name.clone()]))?;
            if v.len() != l.size {
                return Err(Error::Dimension(format!(
                    "{}: expected {} values, got {}",
                    l.name,
                    l.size,
                    v.len()
                )));
            }
            out.extend(v.iter().cloned());
        }
        Ok(out)
    }

    /// Inverse of [`LatentLayout::constrain`] on plain values in layout order.
    pub fn unconstrain(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        let mut out = Vec::with_capacity(x.len());
        let mut k = 0;
        for l in &self.latents {
            out.extend(x[k..k + l.size].iter().map(|&v| to_unconstrained(l.support, v)));
            k += l.size;
        }
        Ok(out)
    }
}

/// A log joint pulled back to unconstrained space, with observed values
/// held fixed.
pub struct LogDensity<F> {
    layout: LatentLayout,
    data: Bindings,
    f: F,
}

impl<F> LogDensity<F>
where
    F: Fn(&Bindings) -> Result<Scalar>,
{
    pub fn new(layout: LatentLayout, data: Bindings, f: F) -> Self {
        LogDensity { layout, data, f }
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    /// log p(T(θ), data) + log|det J_T(θ)|.
    pub fn eval(&self, theta: &[Scalar]) -> Result<Scalar> {
        let (mut b, log_jac) = self.layout.constrain(theta)?;
        for (k, v) in &self.data {
            b.insert(k.clone(), v.clone());
        }
        let lp = (self.f)(&b)?;
        Ok(match log_jac {
            None => lp,
            Some(j) => lp + j,
        })
    }
}

impl<F> Potential for LogDensity<F>
where
    F: Fn(&Bindings) -> Result<Scalar>,
{
    fn dim(&self) -> usize {
        self.layout.dim()
    }
    fn log_density_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        try_value_and_gradient(|x| self.eval(x), theta)
    }
}

pub type BoxedLogJoint = Box<dyn Fn(&Bindings) -> Result<Scalar>>;

/// The zoo entry's program scored through [`make_log_joint`].
pub fn traced_density(entry: &ZooEntry) -> LogDensity<BoxedLogJoint> {
    let lj = make_log_joint(entry.program.clone());
    LogDensity::new(
        LatentLayout::new(&entry.latents),
        entry.data.clone(),
        Box::new(move |b: &Bindings| lj.eval(b)),
    )
}

/// The zoo entry's handwritten log joint.
pub fn handwritten_density(entry: &ZooEntry) -> LogDensity<BoxedLogJoint> {
    let h = entry.handwritten.clone();
    LogDensity::new(
        LatentLayout::new(&entry.latents),
        entry.data.clone(),
        Box::new(move |b: &Bindings| h(b)),
    )
}
