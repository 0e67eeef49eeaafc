use std::path::PathBuf;
use std::process::ExitCode;

use rapref_core::augment::AugmentError;
use rapref_core::corpus::CorpusError;
use rapref_core::implicit::ImplicitError;
use rapref_core::toylab::ToyError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Bad input data or a failed validation.
    #[error("{0}")]
    Invalid(String),
    /// An experiment ran but one of its checks failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Invalid(_) | CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
        })
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { path, source } => CliError::Io { path, source },
            CorpusError::InvalidScale { .. } => CliError::Usage(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ImplicitError> for CliError {
    fn from(e: ImplicitError) -> Self {
        match e {
            ImplicitError::Io { path, source } => CliError::Io {
                path: path.into(),
                source,
            },
            ImplicitError::NonPositiveBeta(_) | ImplicitError::InvalidClip { .. } => CliError::Usage(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::Placeholder { .. } => CliError::Usage(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ToyError> for CliError {
    fn from(e: ToyError) -> Self {
        match e {
            ToyError::InvalidConfig(_) | ToyError::TooFewSizes { .. } | ToyError::EmptySelection { .. } => {
                CliError::Usage(e.to_string())
            }
            ToyError::InvalidWorld(_) => CliError::Invalid(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}
