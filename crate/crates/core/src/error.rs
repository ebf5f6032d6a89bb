use thiserror::Error;

use crate::autodiff::AutodiffError;

/// Errors raised while building, running, or persisting a model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("feature index {index} out of range for {count} features")]
    FeatureIndex { index: usize, count: usize },
    #[error("input has {found} feature columns, model expects {expected}")]
    ColumnCount { expected: usize, found: usize },
    #[error("requested interaction order {requested} exceeds model order {max}")]
    Order { requested: usize, max: usize },
    #[error("operation needs interaction order >= {needed}, model has order {order}")]
    UnsupportedOrder { needed: usize, order: usize },
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
    #[error("unsupported model file version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("model schema mismatch: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
