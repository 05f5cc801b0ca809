use std::path::PathBuf;

use modemux::model::{ModelError, Violations};
use modemux::pipeline::PipelineError;
use modemux::powerflow::PowerFlowError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{} scenario file(s) missing", .0.len())]
    Missing(Vec<PathBuf>),
    #[error("{}: scenario is invalid", path.display())]
    Invalid {
        path: PathBuf,
        violations: Violations,
    },
    #[error("{0}")]
    Domain(String),
    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Missing(_) => 2,
            _ => 1,
        }
    }

    /// Diagnostic lines for stderr: `error: <kind>: <message>` followed by
    /// one `violation: <path>: <message>` line per scenario violation.
    pub fn report(&self) -> String {
        match self {
            Self::Io { .. } => format!("error: io: {self}"),
            Self::Missing(paths) => {
                let mut s = format!("error: io: {self}");
                for p in paths {
                    s.push_str(&format!("\nmissing: {}", p.display()));
                }
                s
            }
            Self::Invalid { violations, .. } => {
                let mut s = format!("error: invalid: {self}");
                for v in &violations.0 {
                    s.push_str(&format!("\nviolation: {}: {}", v.path, v.message));
                }
                s
            }
            Self::Domain(_) => format!("error: domain: {self}"),
            Self::ChecksFailed { .. } => format!("error: check: {self}"),
        }
    }

    pub fn from_model(path: &std::path::Path, e: ModelError) -> Self {
        match e {
            ModelError::Invalid(violations) => Self::Invalid {
                path: path.to_path_buf(),
                violations,
            },
            other => Self::Domain(format!("{}: {other}", path.display())),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io { path, source } => Self::Io { path, source },
            PipelineError::MissingScenarios(paths) => Self::Missing(paths),
            PipelineError::Model(ModelError::Invalid(violations)) => Self::Invalid {
                path: PathBuf::from("<scenario>"),
                violations,
            },
            other => Self::Domain(other.to_string()),
        }
    }
}

impl From<PowerFlowError> for CliError {
    fn from(e: PowerFlowError) -> Self {
        Self::Domain(e.to_string())
    }
}
