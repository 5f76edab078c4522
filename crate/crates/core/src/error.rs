use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while building, tracing, transforming or
/// fitting a probabilistic program.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A recorded operation left its mathematical domain.
    #[error("`{op}` is undefined at argument {arg}")]
    NonFinite { op: &'static str, arg: f64 },

    #[error("invalid `{field}` for {family}: {reason}")]
    Parameter {
        family: &'static str,
        field: &'static str,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    Dimension(String),

    #[error("random variable `{0}` was constructed twice in one execution")]
    DuplicateName(String),

    #[error("tracer returned `{found}` for site `{expected}`; tracers may not rename variables")]
    Renamed { expected: String, found: String },

    #[error("no random variable named `{0}` in trace")]
    MissingVariable(String),

    #[error("no binding for random variable(s) {0:?}")]
    MissingBinding(Vec<String>),

    #[error("alignment does not cover model variable(s) {0:?}")]
    AlignmentGap(Vec<String>),

    #[error("alignment target(s) {0:?} have no value")]
    DanglingAlignment(Vec<String>),

    #[error("alignment key `{0}` given twice")]
    DuplicateAlignmentKey(String),

    #[error("tracer failed: {0}")]
    Tracer(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("log density is not finite at the initial point ({0})")]
    Initialization(f64),

    #[error("step size adaptation failed: {0}")]
    Adaptation(String),

    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}
