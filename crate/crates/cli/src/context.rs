use std::path::Path;

use honam::data::{load_csv, split_indices, Dataset, Preprocessor, RawTable, Schema};
use honam::model::HonamModel;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything needed to turn raw CSV rows into model inputs, stored inside
/// each model file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunContext {
    pub schema: Schema,
    pub preprocessor: Preprocessor,
    pub split_seed: u64,
}

impl RunContext {
    pub fn attach(&self, model: &mut HonamModel) {
        model.meta.schema_hash = Some(self.schema.hash());
        model.meta.context = Some(serde_json::to_value(self).expect("context serializes"));
    }
}

pub struct LoadedModel {
    pub model: HonamModel,
    pub context: RunContext,
}

pub fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let model = HonamModel::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let value = model
        .meta
        .context
        .clone()
        .ok_or_else(|| CliError::Data(format!("{}: model file has no preprocessing context", path.display())))?;
    let context: RunContext = serde_json::from_value(value)
        .map_err(|e| CliError::Data(format!("{}: unreadable preprocessing context: {e}", path.display())))?;
    if model.meta.schema_hash.as_deref() != Some(context.schema.hash().as_str()) {
        return Err(CliError::Data(format!(
            "{}: stored schema hash does not match the stored schema",
            path.display()
        )));
    }
    if context.preprocessor.n_features() != model.n_features() {
        return Err(CliError::Data(format!(
            "{}: preprocessor has {} columns, model has {} features",
            path.display(),
            context.preprocessor.n_features(),
            model.n_features()
        )));
    }
    Ok(LoadedModel { model, context })
}

/// Compares a user-supplied schema against the model's: task first, then
/// the full hash with a readable diff.
pub fn check_schema(model_schema: &Schema, supplied: &Schema) -> Result<(), CliError> {
    if model_schema.task != supplied.task {
        return Err(CliError::Data(format!(
            "task mismatch: model is {}, data schema is {}",
            model_schema.task, supplied.task
        )));
    }
    if model_schema.hash() != supplied.hash() {
        let diff = model_schema.diff(supplied);
        return Err(CliError::Data(format!(
            "schema does not match the model (model vs supplied):\n  {}",
            diff.join("\n  ")
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Partition {
    Train,
    Valid,
    Test,
    All,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Valid => "valid",
            Partition::Test => "test",
            Partition::All => "all",
        }
    }
}

/// Loads `data` with the model's schema and returns the raw rows of the
/// requested partition together with their transformed form.
pub fn load_partition(
    ctx: &RunContext,
    data: &Path,
    partition: Partition,
) -> Result<(RawTable, Dataset), CliError> {
    let table = load_csv(data, &ctx.schema)?;
    let rows: Vec<usize> = match partition {
        Partition::All => (0..table.n_rows()).collect(),
        p => {
            let split = split_indices(table.n_rows(), ctx.split_seed)?;
            match p {
                Partition::Train => split.train,
                Partition::Valid => split.valid,
                _ => split.test,
            }
        }
    };
    let raw = table.select_rows(&rows);
    let dataset = Dataset {
        x: ctx.preprocessor.transform(&raw),
        y: ctx.preprocessor.transform_target(&raw.target),
        rows,
    };
    Ok((raw, dataset))
}

pub fn feature_index(schema: &Schema, name: &str) -> Result<usize, CliError> {
    schema.feature_index(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown feature `{name}`; features are: {}",
            schema.feature_names().join(", ")
        ))
    })
}
