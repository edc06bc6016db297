use quadtomo::Error;

/// Failure classes, each with a stable process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter { .. } => CliError::Config(msg),
            Error::Parse { .. } | Error::Io(_) | Error::InsufficientData(_) | Error::Degenerate(_) => {
                CliError::Data(msg)
            }
            Error::SingularCovariance { .. }
            | Error::BelowUncertaintyBound { .. }
            | Error::Resolution(_)
            | Error::Inconsistent(_)
            | Error::Indeterminate { .. }
            | Error::NoSqueezing { .. }
            | Error::Unphysical(_)
            | Error::FitFailure(_) => CliError::Numerical(msg),
        }
    }
}
