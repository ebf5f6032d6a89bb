use honam::data::DataError;
use honam::train::TrainError;
use honam::ModelError;
use thiserror::Error;

/// Error carrying the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration. Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Input files that do not satisfy the data contract. Exit code 2.
    #[error("{0}")]
    Data(String),
    /// Non-finite values during training or evaluation. Exit code 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Autodiff(_) => CliError::Numeric(e.to_string()),
            ModelError::Corrupt(_) | ModelError::Version { .. } | ModelError::Schema(_) | ModelError::Io(_) => {
                CliError::Data(e.to_string())
            }
            ModelError::ColumnCount { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => m.into(),
        }
    }
}
