use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] rpde::Error),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical divergence, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        use rpde::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::Divergence { .. } | E::NonConvergentGerm { .. } | E::FitUndetermined(_) => 3,
                E::InvalidInput(_)
                | E::InvalidExponent(_)
                | E::UnsupportedOrder { .. }
                | E::InvalidExponentPair { .. }
                | E::StabilityViolation { .. }
                | E::Unsupported(_) => 2,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
