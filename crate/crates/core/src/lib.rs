pub mod autodiff;
pub mod distributions;
pub mod error;
pub mod execution;
pub mod inference;
pub mod models;
pub mod program;
pub mod special;
pub mod transforms;

pub use autodiff::{Real, Scalar, Tape};
pub use distributions::{Distribution, Family};
pub use error::{Error, Result};
pub use execution::{capture, capture_trace, ExecutionTrace, TraceNode};
pub use program::{sample, traceable, Backend, Ctx, Next, Program, RandomVariable, Site, Tracer};
pub use transforms::{
    align_bindings, bindings, intervene, make_log_joint, Alignment, Bindings, LogJoint, Target,
};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/random-variables.md")]
mod book_random_variables {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/traces.md")]
mod book_traces {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/log-joint.md")]
mod book_log_joint {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/interventions.md")]
mod book_interventions {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/autodiff.md")]
mod book_autodiff {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/nuts.md")]
mod book_nuts {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/variational.md")]
mod book_variational {}

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}
