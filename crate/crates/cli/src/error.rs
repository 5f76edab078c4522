use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("data error: {0}")]
    Data(String),
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 when sampling fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) | CliError::Usage(_) => 2,
            CliError::Sampler(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ranvar::Error> for CliError {
    fn from(e: ranvar::Error) -> Self {
        use ranvar::Error as E;
        match e {
            E::Data(_) | E::Dimension(_) | E::MissingBinding(_) => CliError::Data(e.to_string()),
            E::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Sampler(e.to_string()),
        }
    }
}
