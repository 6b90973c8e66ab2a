use std::path::PathBuf;

use lyapgauge::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("acceptance criteria failed: {0:?}")]
    SuiteFailed(Vec<u8>),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse { .. } | CliError::Invalid(_) => 2,
            CliError::Core(e) => match e {
                CoreError::NoConvergence { .. } => 3,
                CoreError::WeightNotAdmissible { .. } => 4,
                CoreError::PredictionViolated { .. } => 5,
                _ => 2,
            },
            CliError::Io { .. } => 6,
            CliError::SuiteFailed(_) => 7,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

/// Adds a location prefix to core validation errors.
pub(crate) fn context(field: &str) -> impl FnOnce(CoreError) -> CliError + '_ {
    move |e| match e {
        CoreError::NoConvergence { .. } | CoreError::WeightNotAdmissible { .. } | CoreError::PredictionViolated { .. } => {
            CliError::Core(e)
        }
        other => CliError::Invalid(format!("{field}: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_kind() {
        let nc = CliError::Core(CoreError::NoConvergence {
            max_iter: 1,
            last_residual: 1.0,
            history: vec![1.0],
        });
        assert_eq!(nc.exit_code(), 3);
        let pv = CliError::Core(CoreError::PredictionViolated {
            point: 0,
            root: 1,
            detail: "gap".into(),
        });
        assert_eq!(pv.exit_code(), 5);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Invalid("x".into()).exit_code(), 2);
        assert_eq!(CliError::io("a", "b").exit_code(), 6);
        assert_eq!(CliError::SuiteFailed(vec![3]).exit_code(), 7);
        // context() keeps the numerical failures distinguishable
        let e = context("theta")(CoreError::IndexError("bad".into()));
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("theta"));
    }
}
