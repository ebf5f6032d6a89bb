use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;
use crate::model::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Target,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub kind: ColumnKind,
    #[serde(default)]
    pub protected: bool,
}

impl ColumnSpec {
    pub fn continuous() -> Self {
        Self {
            kind: ColumnKind::Continuous,
            protected: false,
        }
    }

    pub fn categorical(protected: bool) -> Self {
        Self {
            kind: ColumnKind::Categorical,
            protected,
        }
    }

    pub fn target() -> Self {
        Self {
            kind: ColumnKind::Target,
            protected: false,
        }
    }
}

/// Column roles for a CSV file, in feature order.
///
/// ```json
/// {
///   "task": "binary-classification",
///   "columns": {
///     "age":    {"kind": "continuous"},
///     "race":   {"kind": "categorical", "protected": true},
///     "label":  {"kind": "target"}
///   },
///   "positive_labels": ["yes"],
///   "favorable_class": 0
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub task: Task,
    pub columns: IndexMap<String, ColumnSpec>,
    /// Target cells counted as class 1. When empty, targets must be `0` or `1`.
    #[serde(default)]
    pub positive_labels: Vec<String>,
    /// Predicted class treated as the favorable outcome in fairness reports.
    #[serde(default)]
    pub favorable_class: u8,
}

impl Schema {
    pub fn new(task: Task, columns: impl IntoIterator<Item = (String, ColumnSpec)>) -> Result<Self, DataError> {
        let schema = Self {
            task,
            columns: columns.into_iter().collect(),
            positive_labels: Vec::new(),
            favorable_class: 0,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: Schema = serde_json::from_str(text).map_err(|e| DataError::Schema(format!("invalid schema JSON: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let targets = self.columns.values().filter(|c| c.kind == ColumnKind::Target).count();
        if targets != 1 {
            return Err(DataError::Schema(format!("schema needs exactly one target column, found {targets}")));
        }
        if let Some((name, _)) = self
            .columns
            .iter()
            .find(|(_, c)| c.protected && c.kind != ColumnKind::Categorical)
        {
            return Err(DataError::Schema(format!(
                "column `{name}` is protected but not categorical"
            )));
        }
        if self.feature_names().is_empty() {
            return Err(DataError::Schema("schema has no feature columns".into()));
        }
        if self.favorable_class > 1 {
            return Err(DataError::Schema("favorable_class must be 0 or 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|(_, c)| c.kind != ColumnKind::Target)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn feature_specs(&self) -> impl Iterator<Item = (&str, &ColumnSpec)> {
        self.columns
            .iter()
            .filter(|(_, c)| c.kind != ColumnKind::Target)
            .map(|(n, c)| (n.as_str(), c))
    }

    pub fn target_name(&self) -> &str {
        self.columns
            .iter()
            .find(|(_, c)| c.kind == ColumnKind::Target)
            .map(|(n, _)| n.as_str())
            .expect("validated schema has a target")
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names().iter().position(|&n| n == name)
    }

    pub fn protected_features(&self) -> Vec<usize> {
        self.feature_specs()
            .enumerate()
            .filter(|(_, (_, c))| c.protected)
            .map(|(i, _)| i)
            .collect()
    }

    /// Human-readable differences, empty when the schemas agree.
    pub fn diff(&self, other: &Schema) -> Vec<String> {
        let mut out = Vec::new();
        if self.task != other.task {
            out.push(format!("task: {} vs {}", self.task, other.task));
        }
        for (name, spec) in &self.columns {
            match other.columns.get(name) {
                None => out.push(format!("- {name} ({:?})", spec.kind)),
                Some(o) if o != spec => out.push(format!("~ {name}: {spec:?} vs {o:?}")),
                _ => {}
            }
        }
        for (name, spec) in &other.columns {
            if !self.columns.contains_key(name) {
                out.push(format!("+ {name} ({:?})", spec.kind));
            }
        }
        let order_a: Vec<&String> = self.columns.keys().filter(|k| other.columns.contains_key(*k)).collect();
        let order_b: Vec<&String> = other.columns.keys().filter(|k| self.columns.contains_key(*k)).collect();
        if order_a != order_b {
            out.push("column order differs".into());
        }
        if self.positive_labels != other.positive_labels {
            out.push(format!("positive_labels: {:?} vs {:?}", self.positive_labels, other.positive_labels));
        }
        if self.favorable_class != other.favorable_class {
            out.push(format!("favorable_class: {} vs {}", self.favorable_class, other.favorable_class));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "task": "binary-classification",
        "columns": {
            "age": {"kind": "continuous"},
            "race": {"kind": "categorical", "protected": true},
            "y": {"kind": "target"}
        }
    }"#;

    #[test]
    fn parses_and_orders_columns() {
        let s = Schema::from_json(SAMPLE).unwrap();
        assert_eq!(s.feature_names(), ["age", "race"]);
        assert_eq!(s.target_name(), "y");
        assert_eq!(s.protected_features(), [1]);
        assert_eq!(s.feature_index("race"), Some(1));
        assert_eq!(s.favorable_class, 0);
    }

    #[test]
    fn rejects_bad_schemas() {
        let no_target = r#"{"task":"regression","columns":{"a":{"kind":"continuous"}}}"#;
        assert!(Schema::from_json(no_target).is_err());
        let two = r#"{"task":"regression","columns":{"a":{"kind":"target"},"b":{"kind":"target"},"c":{"kind":"continuous"}}}"#;
        assert!(Schema::from_json(two).is_err());
        let prot = r#"{"task":"regression","columns":{"a":{"kind":"continuous","protected":true},"y":{"kind":"target"}}}"#;
        assert!(Schema::from_json(prot).is_err());
        assert!(Schema::from_json("{").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Schema::from_json(SAMPLE).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert!(a.diff(&b).is_empty());
        b.columns.get_mut("race").unwrap().protected = false;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.diff(&b).len(), 1);
    }
}
