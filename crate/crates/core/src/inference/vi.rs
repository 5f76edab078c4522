//! Variational inference by preconditioned gradient descent on the negative
//! ELBO, and learning the preconditioner through the unrolled optimizer.

use crate::autodiff::{try_value_and_gradient, try_value_and_gradient_scalars, Scalar};
use crate::error::{Error, Result};
use crate::execution::{capture, capture_trace};
use crate::program::{Backend, Ctx, Program};
use crate::transforms::{align_bindings, make_log_joint, Alignment, Bindings, LogJoint};

use super::derive_seed;

/// A stochastic loss over variational parameters φ. The same seed must give
/// the same noise.
pub trait Objective {
    fn dim(&self) -> usize;

    fn loss(&self, phi: &[Scalar], seed: u64) -> Result<Scalar>;

    /// What inner optimization steps differentiate. Same value as
    /// [`Objective::loss`]; only the gradient may differ.
    fn surrogate(&self, phi: &[Scalar], seed: u64) -> Result<Scalar> {
        self.loss(phi, seed)
    }
}

/// How the score of q enters the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Differentiate log q through both the sample and the parameters.
    Full,
    /// Drop the parameter score of log q, keeping only the path through the
    /// sample. Zero variance once q matches the posterior.
    #[default]
    PathDerivative,
}

/// Negative ELBO, −E_q[log p(x, z) − log q(z)], estimated with `n_mc` draws.
///
/// The variational program takes φ as its input and must draw every latent
/// named in the alignment.
pub struct Elbo<M, Q> {
    model: LogJoint<M>,
    variational: LogJoint<Q>,
    alignment: Alignment,
    data: Bindings,
    model_names: Vec<String>,
    dim: usize,
    n_mc: usize,
    estimator: Estimator,
}

impl<M, Q> Elbo<M, Q>
where
    M: Program<()>,
    Q: Program<[Scalar]>,
{
    pub fn new(
        model: M,
        variational: Q,
        alignment: Alignment,
        data: Bindings,
        dim: usize,
        n_mc: usize,
    ) -> Result<Self> {
        if n_mc == 0 {
            return Err(Error::Config("n_mc must be at least 1".into()));
        }
        let names = capture_trace(&model, &(), 0, Backend::Plain)?
            .names()
            .into_iter()
            .map(str::to_owned)
            .collect();
        Ok(Elbo {
            model: make_log_joint(model),
            variational: make_log_joint(variational),
            alignment,
            data,
            model_names: names,
            dim,
            n_mc,
            estimator: Estimator::default(),
        })
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    /// log p(x, z) − log q(z) at one draw z ~ q_φ.
    pub fn log_weight(&self, phi: &[Scalar], seed: u64, estimator: Estimator) -> Result<Scalar> {
        if phi.len() != self.dim {
            return Err(Error::Dimension(format!(
                "expected {} variational parameters, got {}",
                self.dim,
                phi.len()
            )));
        }
        let mut ctx = Ctx::new(seed);
        let q = capture(&mut ctx, self.variational.model(), phi)?;
        let drawn: Bindings = q
            .nodes
            .iter()
            .map(|n| (n.name().to_owned(), n.rv.value().to_vec()))
            .collect();
        let log_q = match estimator {
            Estimator::Full => q.nodes.iter().map(|n| n.log_prob.clone()).sum(),
            Estimator::PathDerivative => {
                let frozen: Vec<Scalar> = phi.iter().map(Scalar::stop_gradient).collect();
                self.variational.eval_with(&frozen[..], &drawn)?
            }
        };
        let b = align_bindings(&self.model_names, &self.alignment, &drawn, &self.data)?;
        let log_p = self.model.eval(&b)?;
        Ok(log_p - log_q)
    }

    fn estimate(&self, phi: &[Scalar], seed: u64, estimator: Estimator) -> Result<Scalar> {
        let total: Scalar = (0..self.n_mc)
            .map(|s| self.log_weight(phi, derive_seed(seed, s as u64), estimator))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(-(total / self.n_mc as f64))
    }
}

impl<M, Q> Objective for Elbo<M, Q>
where
    M: Program<()>,
    Q: Program<[Scalar]>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn loss(&self, phi: &[Scalar], seed: u64) -> Result<Scalar> {
        self.estimate(phi, seed, Estimator::Full)
    }
    fn surrogate(&self, phi: &[Scalar], seed: u64) -> Result<Scalar> {
        self.estimate(phi, seed, self.estimator)
    }
}

/// The negative ELBO at φ with the full estimator.
pub fn elbo_loss<M, Q>(
    model: M,
    variational: Q,
    alignment: Alignment,
    data: Bindings,
    phi: &[Scalar],
    seed: u64,
    n_mc: usize,
) -> Result<Scalar>
where
    M: Program<()>,
    Q: Program<[Scalar]>,
{
    Elbo::new(model, variational, alignment, data, phi.len(), n_mc)?.loss(phi, seed)
}

fn constants(v: &[f64]) -> Vec<Scalar> {
    v.iter().copied().map(Scalar::constant).collect()
}

/// Seed of the noise behind the loss reported after training.
pub fn final_loss_seed(seed: u64) -> u64 {
    derive_seed(seed, u64::MAX)
}

/// The optimizer run with every step kept differentiable.
#[derive(Clone, Debug)]
pub struct Unrolled {
    pub phi: Vec<Scalar>,
    /// Loss estimate at each step, before the update.
    pub losses: Vec<f64>,
    pub final_loss: Scalar,
}

fn check_preconditioner(p: &[f64], dim: usize, lr: f64) -> Result<()> {
    if p.len() != dim {
        return Err(Error::Dimension(format!(
            "preconditioner has {} entries, φ has {dim}",
            p.len()
        )));
    }
    if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Config(format!(
            "preconditioner entries must be finite and non-negative, got {bad}"
        )));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    Ok(())
}

fn as_divergence(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Divergence { step },
        e => e,
    }
}

/// φₜ₊₁ = φₜ − lr · P ⊙ ∇φ L̃(φₜ; seedₜ), for `steps` steps, then the loss at
/// the result. Differentiable in both φ₀ and P.
pub fn unrolled<O: Objective + ?Sized>(
    objective: &O,
    phi0: &[Scalar],
    preconditioner: &[Scalar],
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Unrolled> {
    let p_values: Vec<f64> = preconditioner.iter().map(Scalar::value).collect();
    check_preconditioner(&p_values, objective.dim(), lr)?;
    if phi0.len() != objective.dim() {
        return Err(Error::Dimension(format!(
            "φ has {} entries, objective expects {}",
            phi0.len(),
            objective.dim()
        )));
    }
    if steps == 0 {
        return Err(Error::Config("at least one optimization step is required".into()));
    }
    let mut phi = phi0.to_vec();
    let mut losses = Vec::with_capacity(steps);
    for t in 0..steps {
        let (l, g) = try_value_and_gradient_scalars(
            |x| objective.surrogate(x, derive_seed(seed, t as u64)),
            &phi,
        )
        .map_err(as_divergence(t))?;
        if !l.value().is_finite() || g.iter().any(|g| !g.value().is_finite()) {
            return Err(Error::Divergence { step: t });
        }
        losses.push(l.value());
        phi = phi
            .iter()
            .zip(preconditioner)
            .zip(&g)
            .map(|((x, p), g)| x - p * g * lr)
            .collect();
    }
    let final_loss = objective
        .loss(&phi, final_loss_seed(seed))
        .map_err(as_divergence(steps))?;
    if !final_loss.value().is_finite() {
        return Err(Error::Divergence { step: steps });
    }
    Ok(Unrolled {
        phi,
        losses,
        final_loss,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Variational parameters after training. Scales live unconstrained in φ.
#[derive(Clone, Debug, PartialEq)]
pub struct ViState {
    pub phi: Vec<f64>,
    pub preconditioner: Vec<f64>,
    pub learning_rate: f64,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViOutcome {
    pub state: ViState,
    pub losses: Vec<f64>,
    pub final_loss: f64,
}

/// Preconditioned gradient descent from `phi0`.
pub fn vi_train<O: Objective + ?Sized>(
    objective: &O,
    phi0: &[f64],
    preconditioner: &[f64],
    cfg: &ViConfig,
) -> Result<ViOutcome> {
    let u = unrolled(
        objective,
        &constants(phi0),
        &constants(preconditioner),
        cfg.steps,
        cfg.lr,
        cfg.seed,
    )?;
    Ok(ViOutcome {
        state: ViState {
            phi: u.phi.iter().map(Scalar::value).collect(),
            preconditioner: preconditioner.to_vec(),
            learning_rate: cfg.lr,
            step: cfg.steps,
        },
        losses: u.losses,
        final_loss: u.final_loss.value(),
    })
}

/// Final loss of an inner run and its gradient with respect to P.
pub fn preconditioner_gradient<O: Objective + ?Sized>(
    objective: &O,
    phi0: &[f64],
    preconditioner: &[f64],
    cfg: &ViConfig,
) -> Result<(f64, Vec<f64>)> {
    try_value_and_gradient(
        |p| {
            unrolled(objective, &constants(phi0), p, cfg.steps, cfg.lr, cfg.seed)
                .map(|u| u.final_loss)
        },
        preconditioner,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub inner: ViConfig,
    pub outer_steps: usize,
    pub outer_lr: f64,
    /// Entries of P never drop below this.
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Learned {
    pub preconditioner: Vec<f64>,
    /// Final inner loss at the start of each outer step.
    pub outer_losses: Vec<f64>,
}

/// Outer gradient descent on P starting from all ones. Every outer step
/// replays the inner run with the same noise.
pub fn learn_preconditioner<O: Objective + ?Sized>(
    objective: &O,
    phi0: &[f64],
    cfg: &LearnConfig,
) -> Result<Learned> {
    if !(cfg.outer_lr > 0.0 && cfg.floor >= 0.0) {
        return Err(Error::Config(
            "outer learning rate must be positive and the floor non-negative".into(),
        ));
    }
    let mut p = vec![1.0; objective.dim()];
    let mut outer_losses = Vec::with_capacity(cfg.outer_steps);
    for _ in 0..cfg.outer_steps {
        let (loss, g) = preconditioner_gradient(objective, phi0, &p, &cfg.inner)?;
        outer_losses.push(loss);
        for (p, g) in p.iter_mut().zip(&g) {
            *p = (*p - cfg.outer_lr * g).max(cfg.floor);
        }
    }
    Ok(Learned {
        preconditioner: p,
        outer_losses,
    })
}
