//! CSV ingestion, preprocessing, splitting and synthetic data.

mod preprocess;
mod schema;
mod synth;
mod table;

pub use preprocess::{ColumnTransform, Preprocessor, QuantileMap, TargetScaler, MISSING_CATEGORY};
pub use schema::{ColumnKind, ColumnSpec, Schema};
pub use synth::{
    gen_interaction_regression, gen_synth_biased, gen_synth_classification, gen_synth_regression,
    SynthClassification, BIASED_RACES,
};
pub use table::{load_csv, read_csv, RawColumn, RawTable};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matrix::Matrix;

pub const MIN_ROWS: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse { row: usize, column: String, value: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("{0}")]
    Config(String),
    #[error("need at least {needed} rows to split, found {found}")]
    TooFewRows { found: usize, needed: usize },
}

/// Row indices of the three partitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`, then a contiguous 60/20/20 cut.
pub fn split_indices(n: usize, seed: u64) -> Result<SplitIndices, DataError> {
    if n < MIN_ROWS {
        return Err(DataError::TooFewRows {
            found: n,
            needed: MIN_ROWS,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (0.6 * n as f64).round() as usize;
    let n_valid = (0.2 * n as f64).round() as usize;
    let test = idx.split_off(n_train + n_valid);
    let valid = idx.split_off(n_train);
    Ok(SplitIndices {
        train: idx,
        valid,
        test,
    })
}

/// One transformed partition. `rows` are indices into the source table.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub rows: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub schema: Schema,
    pub preprocessor: Preprocessor,
    pub seed: u64,
}

impl DatasetBundle {
    /// Splits with `seed`, fits the preprocessor on the training rows only
    /// (using `seed` for the fit noise), and transforms every partition.
    pub fn prepare(table: &RawTable, schema: &Schema, seed: u64) -> Result<Self, DataError> {
        let split = split_indices(table.n_rows(), seed)?;
        let train_raw = table.select_rows(&split.train);
        let preprocessor = Preprocessor::fit(&train_raw, schema, seed);
        let make = |rows: Vec<usize>| {
            let raw = table.select_rows(&rows);
            Dataset {
                x: preprocessor.transform(&raw),
                y: preprocessor.transform_target(&raw.target),
                rows,
            }
        };
        Ok(Self {
            train: make(split.train),
            valid: make(split.valid),
            test: make(split.test),
            schema: schema.clone(),
            preprocessor,
            seed,
        })
    }

    /// Transforms a whole table with the fitted preprocessor.
    pub fn transform_all(&self, table: &RawTable) -> Dataset {
        Dataset {
            x: self.preprocessor.transform(table),
            y: self.preprocessor.transform_target(&table.target),
            rows: (0..table.n_rows()).collect(),
        }
    }

    pub fn partition(&self, name: &str) -> Option<&Dataset> {
        match name {
            "train" => Some(&self.train),
            "valid" => Some(&self.valid),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}
