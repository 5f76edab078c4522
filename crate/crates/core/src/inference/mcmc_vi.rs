//! Refining variational draws with a few NUTS transitions.

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::execution::capture;
use crate::program::{Ctx, Program};
use crate::transforms::{Alignment, Bindings, Target};

use super::hmc::{nuts_transition, PhasePoint};
use super::layout::LogDensity;

/// Draw z ~ q_φ, then run `k` NUTS transitions at a fixed step size on the
/// model's posterior starting from z. Output is the final draw, constrained,
/// in layout order.
pub struct McmcWithinVi<Q, F> {
    pub variational: Q,
    pub phi: Vec<f64>,
    pub alignment: Alignment,
    pub density: LogDensity<F>,
    pub k: usize,
    pub step_size: f64,
    pub max_tree_depth: u32,
}

pub fn mcmc_within_vi<Q, F>(
    variational: Q,
    phi: Vec<f64>,
    alignment: Alignment,
    density: LogDensity<F>,
    k: usize,
    step_size: f64,
) -> McmcWithinVi<Q, F> {
    McmcWithinVi {
        variational,
        phi,
        alignment,
        density,
        k,
        step_size,
        max_tree_depth: 10,
    }
}

impl<Q, F> Program<()> for McmcWithinVi<Q, F>
where
    Q: Program<[Scalar]>,
    F: Fn(&Bindings) -> Result<Scalar>,
{
    type Output = Vec<f64>;

    fn run(&self, ctx: &mut Ctx, _: &()) -> Result<Vec<f64>> {
        let phi: Vec<Scalar> = self.phi.iter().copied().map(Scalar::constant).collect();
        let q = capture(ctx, &self.variational, &phi[..])?;
        let layout = self.density.layout();
        let mut x = Vec::with_capacity(layout.dim());
        for l in layout.latents() {
            let node = match self.alignment.get(&l.name) {
                Some(Target::Variational(name)) => q.get(name),
                _ => None,
            };
            let node = node.ok_or_else(|| Error::AlignmentGap(vec![l.name.clone()]))?;
            x.extend(node.rv.values());
        }
        if self.k == 0 {
            return Ok(x);
        }
        let mut rng = ctx.rng("mcmc_within_vi");
        let theta = layout.unconstrain(&x)?;
        let mut z = PhasePoint::new(&self.density, theta, vec![0.0; x.len()])?;
        if !z.logp.is_finite() {
            return Err(Error::Initialization(z.logp));
        }
        for _ in 0..self.k {
            z = nuts_transition(&self.density, &z, self.step_size, self.max_tree_depth, 1000.0, &mut rng)?
                .point;
        }
        layout.constrain_values(&z.theta)
    }
}
