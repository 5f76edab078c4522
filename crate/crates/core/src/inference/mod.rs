//! Sampling and variational inference over a model's log joint.

pub mod adapt;
pub mod diagnostics;
pub mod hmc;
pub mod layout;
pub mod mcmc_vi;
pub mod vi;

pub use adapt::{find_reasonable_epsilon, DualAveraging};
pub use hmc::{
    build_tree, leapfrog, nuts_sample, nuts_transition, ChainStats, Direction, FnPotential,
    Leapfrog, NutsConfig, PhasePoint, Potential, Transition, Tree,
};
pub use layout::{handwritten_density, traced_density, LatentLayout, LogDensity};
pub use mcmc_vi::{mcmc_within_vi, McmcWithinVi};
pub use vi::final_loss_seed;
pub use vi::{
    elbo_loss, learn_preconditioner, preconditioner_gradient, unrolled, vi_train, Elbo,
    Estimator, LearnConfig, Learned, Objective, Unrolled, ViConfig, ViOutcome, ViState,
};

/// Mix a base seed with a counter (splitmix64 finalizer).
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
