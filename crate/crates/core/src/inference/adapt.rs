//! Step-size selection: an initial heuristic and dual averaging.

use rand::Rng;

use super::hmc::{sample_momentum, step, PhasePoint, Potential};
use crate::error::Result;

/// Double or halve ε from 1 until one leapfrog step's acceptance
/// probability crosses ½.
pub fn find_reasonable_epsilon<P, R>(p: &P, z: &PhasePoint, rng: &mut R) -> Result<f64>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    let mut z0 = z.clone();
    z0.r = sample_momentum(z0.theta.len(), rng);
    let joint0 = z0.joint();
    let log_ratio = |eps: f64| -> Result<f64> {
        let h = step(p, &z0, eps)?.joint() - joint0;
        Ok(if h.is_nan() { f64::NEG_INFINITY } else { h })
    };
    let mut eps = 1.0;
    let mut lr = log_ratio(eps)?;
    let a = if lr > 0.5f64.ln() { 1.0 } else { -1.0 };
    // (p'/p)^a > 2^-a
    for _ in 0..100 {
        if a * lr <= -a * std::f64::consts::LN_2 {
            break;
        }
        let next = eps * 2f64.powf(a);
        if !(1e-10..=1e7).contains(&next) {
            break;
        }
        eps = next;
        lr = log_ratio(eps)?;
    }
    Ok(eps)
}

/// Nesterov dual averaging of log ε toward a target acceptance rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DualAveraging {
    pub mu: f64,
    pub target: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    pub h_bar: f64,
    pub log_eps: f64,
    pub log_eps_bar: f64,
    pub iteration: usize,
}

impl DualAveraging {
    /// Anchored at μ = ln(10·ε₀).
    pub fn new(eps0: f64, target: f64, gamma: f64, t0: f64, kappa: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            target,
            gamma,
            t0,
            kappa,
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            iteration: 0,
        }
    }

    /// Fold in one acceptance statistic and return the next ε.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.iteration += 1;
        let m = self.iteration as f64;
        let w = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let eta = m.powf(-self.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        self.log_eps.exp()
    }

    /// The averaged iterate used once warmup ends.
    pub fn final_step_size(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}
