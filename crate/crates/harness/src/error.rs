use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
    #[error("{experiment}: {source}")]
    Solver {
        experiment: String,
        #[source]
        source: berknash_core::Error,
    },
    #[error("{0}")]
    Audit(String),
}

impl HarnessError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }

    /// Short diagnostic category printed by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Parse { .. } | HarnessError::Invalid { .. } => "config",
            HarnessError::Io { .. } | HarnessError::Csv { .. } => "io",
            HarnessError::Solver { .. } => "solver",
            HarnessError::Audit(_) => "audit",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "solver" => 4,
            _ => 5,
        }
    }
}

/// Attaches an experiment name to core errors.
pub(crate) trait SolverContext<T> {
    fn during(self, experiment: &str) -> Result<T>;
}

impl<T> SolverContext<T> for berknash_core::Result<T> {
    fn during(self, experiment: &str) -> Result<T> {
        self.map_err(|source| HarnessError::Solver {
            experiment: experiment.to_string(),
            source,
        })
    }
}
