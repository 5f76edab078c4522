//! Leapfrog integration and the slice-variable No-U-Turn Sampler.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::adapt::{find_reasonable_epsilon, DualAveraging};
use crate::autodiff::{try_value_and_gradient, Scalar};
use crate::error::{Error, Result};

/// An unnormalized log density over unconstrained parameters.
pub trait Potential {
    fn dim(&self) -> usize;
    fn log_density_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<P: Potential + ?Sized> Potential for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).log_density_and_gradient(theta)
    }
}

/// A [`Potential`] from a differentiable function of scalars.
pub struct FnPotential<F> {
    dim: usize,
    f: F,
}

impl<F> FnPotential<F>
where
    F: Fn(&[Scalar]) -> Result<Scalar>,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnPotential { dim, f }
    }
}

impl<F> Potential for FnPotential<F>
where
    F: Fn(&[Scalar]) -> Result<Scalar>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        try_value_and_gradient(|x| (self.f)(x), theta)
    }
}

/// Evaluate, turning numerical failures into an impossible point.
fn evaluate<P: Potential + ?Sized>(p: &P, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    match p.log_density_and_gradient(theta) {
        Ok((l, g)) if l.is_nan() => Ok((f64::NEG_INFINITY, g)),
        Ok(v) => Ok(v),
        Err(Error::NonFinite { .. } | Error::Parameter { .. }) => {
            Ok((f64::NEG_INFINITY, vec![f64::NAN; theta.len()]))
        }
        Err(e) => Err(e),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Position, momentum, and the cached log density and gradient at the position.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub theta: Vec<f64>,
    pub r: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

impl PhasePoint {
    pub fn new<P: Potential + ?Sized>(p: &P, theta: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let (logp, grad) = evaluate(p, &theta)?;
        Ok(PhasePoint {
            theta,
            r,
            logp,
            grad,
        })
    }

    /// log p(θ) − ½ r·r; NaN collapses to −∞.
    pub fn joint(&self) -> f64 {
        let h = self.logp - 0.5 * dot(&self.r, &self.r);
        if h.is_nan() {
            f64::NEG_INFINITY
        } else {
            h
        }
    }

    fn is_finite(&self) -> bool {
        self.logp.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.theta.iter().all(|t| t.is_finite())
    }
}

/// Result of one leapfrog step.
#[derive(Clone, Debug, PartialEq)]
pub struct Leapfrog {
    pub theta: Vec<f64>,
    pub r: Vec<f64>,
    /// A gradient or position went non-finite.
    pub divergent: bool,
}

/// r½ = r + (ε/2)∇, θ' = θ + ε·r½, r' = r½ + (ε/2)∇(θ').
pub fn leapfrog<G>(mut grad_logp: G, theta: &[f64], r: &[f64], eps: f64) -> Leapfrog
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let g0 = grad_logp(theta);
    let r_half: Vec<f64> = r.iter().zip(&g0).map(|(r, g)| r + 0.5 * eps * g).collect();
    let theta1: Vec<f64> = theta.iter().zip(&r_half).map(|(t, r)| t + eps * r).collect();
    let g1 = grad_logp(&theta1);
    let r1: Vec<f64> = r_half.iter().zip(&g1).map(|(r, g)| r + 0.5 * eps * g).collect();
    let divergent = !(g0.iter().chain(&g1).chain(&theta1).chain(&r1)).all(|v| v.is_finite());
    Leapfrog {
        theta: theta1,
        r: r1,
        divergent,
    }
}

/// One leapfrog step reusing the cached gradient: one new evaluation.
pub(crate) fn step<P: Potential + ?Sized>(p: &P, z: &PhasePoint, eps: f64) -> Result<PhasePoint> {
    let r_half: Vec<f64> = z.r.iter().zip(&z.grad).map(|(r, g)| r + 0.5 * eps * g).collect();
    let theta: Vec<f64> = z.theta.iter().zip(&r_half).map(|(t, r)| t + eps * r).collect();
    let (logp, grad) = evaluate(p, &theta)?;
    let r = r_half.iter().zip(&grad).map(|(r, g)| r + 0.5 * eps * g).collect();
    Ok(PhasePoint {
        theta,
        r,
        logp,
        grad,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Backward => -1.0,
            Direction::Forward => 1.0,
        }
    }
}

/// Summary of a subtree built by [`build_tree`].
#[derive(Clone, Debug)]
pub struct Tree {
    pub minus: PhasePoint,
    pub plus: PhasePoint,
    pub proposal: PhasePoint,
    /// Points inside the slice.
    pub n_valid: usize,
    /// False once a U-turn or divergence was found.
    pub keep_going: bool,
    pub alpha_sum: f64,
    pub n_alpha: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
}

fn no_u_turn(minus: &PhasePoint, plus: &PhasePoint) -> bool {
    let span: Vec<f64> = plus.theta.iter().zip(&minus.theta).map(|(a, b)| a - b).collect();
    dot(&span, &minus.r) >= 0.0 && dot(&span, &plus.r) >= 0.0
}

/// Doubling step of the slice-variable sampler: `2^j` leapfrog steps from
/// `z` in direction `v`, unless a sub-tree stops early.
#[allow(clippy::too_many_arguments)]
pub fn build_tree<P, R>(
    p: &P,
    z: &PhasePoint,
    log_u: f64,
    v: Direction,
    j: u32,
    eps: f64,
    joint0: f64,
    delta_max: f64,
    rng: &mut R,
) -> Result<Tree>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    if j == 0 {
        let z1 = step(p, z, v.sign() * eps)?;
        let joint = z1.joint();
        let keep_going = z1.is_finite() && joint > log_u - delta_max;
        let alpha = (joint - joint0).exp().min(1.0);
        return Ok(Tree {
            minus: z1.clone(),
            plus: z1.clone(),
            proposal: z1,
            n_valid: usize::from(log_u <= joint),
            keep_going,
            alpha_sum: if alpha.is_nan() { 0.0 } else { alpha },
            n_alpha: 1,
            n_leapfrog: 1,
            divergent: !keep_going,
        });
    }
    let mut tree = build_tree(p, z, log_u, v, j - 1, eps, joint0, delta_max, rng)?;
    if !tree.keep_going {
        return Ok(tree);
    }
    let edge = match v {
        Direction::Backward => &tree.minus,
        Direction::Forward => &tree.plus,
    };
    let other = build_tree(p, edge, log_u, v, j - 1, eps, joint0, delta_max, rng)?;
    match v {
        Direction::Backward => tree.minus = other.minus,
        Direction::Forward => tree.plus = other.plus,
    }
    let total = tree.n_valid + other.n_valid;
    if total > 0 && rng.random::<f64>() < other.n_valid as f64 / total as f64 {
        tree.proposal = other.proposal;
    }
    tree.alpha_sum += other.alpha_sum;
    tree.n_alpha += other.n_alpha;
    tree.n_leapfrog += other.n_leapfrog;
    tree.divergent |= other.divergent;
    tree.keep_going = other.keep_going && no_u_turn(&tree.minus, &tree.plus);
    tree.n_valid = total;
    Ok(tree)
}

/// One NUTS iteration.
#[derive(Clone, Debug)]
pub struct Transition {
    pub point: PhasePoint,
    pub n_leapfrog: usize,
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: u32,
}

pub(crate) fn sample_momentum<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draw a momentum and a slice, then double the trajectory until it turns
/// back on itself, diverges, or reaches `max_depth`.
pub fn nuts_transition<P, R>(
    p: &P,
    current: &PhasePoint,
    eps: f64,
    max_depth: u32,
    delta_max: f64,
    rng: &mut R,
) -> Result<Transition>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    let mut z0 = current.clone();
    z0.r = sample_momentum(z0.theta.len(), rng);
    let joint0 = z0.joint();
    // u ~ Uniform(0, exp(joint0)), kept on the log scale.
    let log_u = joint0 + (1.0 - rng.random::<f64>()).ln();
    let mut minus = z0.clone();
    let mut plus = z0.clone();
    let mut out = Transition {
        point: z0,
        n_leapfrog: 0,
        accept_stat: 0.0,
        divergent: false,
        depth: 0,
    };
    let mut n = 1usize;
    let mut j = 0u32;
    loop {
        let v = if rng.random::<bool>() {
            Direction::Forward
        } else {
            Direction::Backward
        };
        let edge = match v {
            Direction::Backward => &minus,
            Direction::Forward => &plus,
        };
        let tree = build_tree(p, edge, log_u, v, j, eps, joint0, delta_max, rng)?;
        out.n_leapfrog += tree.n_leapfrog;
        out.divergent |= tree.divergent;
        out.accept_stat = tree.alpha_sum / tree.n_alpha as f64;
        match v {
            Direction::Backward => minus = tree.minus,
            Direction::Forward => plus = tree.plus,
        }
        if tree.keep_going && rng.random::<f64>() < tree.n_valid as f64 / n as f64 {
            out.point = tree.proposal;
        }
        n += tree.n_valid;
        j += 1;
        out.depth = j;
        if !(tree.keep_going && no_u_turn(&minus, &plus)) || j >= max_depth {
            break;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NutsConfig {
    /// Initial step size; found heuristically when absent.
    pub step_size: Option<f64>,
    pub max_tree_depth: u32,
    pub delta_max: f64,
    pub target_accept: f64,
    pub adapt: bool,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    pub num_warmup: usize,
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        NutsConfig {
            step_size: None,
            max_tree_depth: 10,
            delta_max: 1000.0,
            target_accept: 0.8,
            adapt: true,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            num_warmup: 500,
            num_samples: 1000,
            seed: 0,
        }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth < 1 {
            return Err(Error::Config("max_tree_depth must be at least 1".into()));
        }
        if let Some(e) = self.step_size {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("step size must be positive, got {e}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainStats {
    pub samples: Vec<Vec<f64>>,
    pub leapfrog_counts: Vec<usize>,
    pub tree_depths: Vec<u32>,
    pub accept_stats: Vec<f64>,
    /// Post-warmup divergent iterations.
    pub divergences: usize,
    pub warmup_divergences: usize,
    /// Step size used at each warmup iteration.
    pub step_size_trace: Vec<f64>,
    /// The frozen post-warmup step size.
    pub step_size: f64,
    /// Wall time of each post-warmup iteration.
    pub iteration_seconds: Vec<f64>,
    /// Wall time of the post-warmup loop only.
    pub sampling_seconds: f64,
    pub wall_time_per_leapfrog: f64,
}

impl ChainStats {
    pub fn total_leapfrog_steps(&self) -> usize {
        self.leapfrog_counts.iter().sum()
    }

    /// Draws of coordinate `i`.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }
}

/// Run warmup (with dual-averaging step-size adaptation when enabled) and
/// then `num_samples` NUTS iterations from `init`.
pub fn nuts_sample<P: Potential + ?Sized>(p: &P, init: &[f64], cfg: &NutsConfig) -> Result<ChainStats> {
    cfg.validate()?;
    if init.len() != p.dim() {
        return Err(Error::Dimension(format!(
            "initial point has {} coordinates, target has {}",
            init.len(),
            p.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = PhasePoint::new(p, init.to_vec(), vec![0.0; init.len()])?;
    if !z.is_finite() {
        return Err(Error::Initialization(z.logp));
    }
    let eps0 = match cfg.step_size {
        Some(e) => e,
        None => find_reasonable_epsilon(p, &z, &mut rng)?,
    };
    let mut stats = ChainStats::default();
    let mut eps = eps0;
    let mut da = DualAveraging::new(eps0, cfg.target_accept, cfg.gamma, cfg.t0, cfg.kappa);
    for _ in 0..cfg.num_warmup {
        stats.step_size_trace.push(eps);
        let t = nuts_transition(p, &z, eps, cfg.max_tree_depth, cfg.delta_max, &mut rng)?;
        stats.warmup_divergences += usize::from(t.divergent);
        z = t.point;
        if cfg.adapt {
            eps = da.update(t.accept_stat);
        }
    }
    if cfg.num_warmup > 0 && stats.warmup_divergences == cfg.num_warmup {
        return Err(Error::Adaptation(format!(
            "all {} warmup iterations diverged; initial step size {eps0:.3e}, last {eps:.3e}, log density at last point {:.3e}",
            cfg.num_warmup, z.logp
        )));
    }
    if cfg.adapt && cfg.num_warmup > 0 {
        eps = da.final_step_size();
    }
    stats.step_size = eps;
    let start = Instant::now();
    for _ in 0..cfg.num_samples {
        let tick = Instant::now();
        let t = nuts_transition(p, &z, eps, cfg.max_tree_depth, cfg.delta_max, &mut rng)?;
        stats.iteration_seconds.push(tick.elapsed().as_secs_f64());
        z = t.point;
        stats.samples.push(z.theta.clone());
        stats.leapfrog_counts.push(t.n_leapfrog);
        stats.tree_depths.push(t.depth);
        stats.accept_stats.push(t.accept_stat);
        stats.divergences += usize::from(t.divergent);
    }
    stats.sampling_seconds = start.elapsed().as_secs_f64();
    let total = stats.total_leapfrog_steps();
    stats.wall_time_per_leapfrog = if total > 0 {
        stats.sampling_seconds / total as f64
    } else {
        0.0
    };
    Ok(stats)
}
