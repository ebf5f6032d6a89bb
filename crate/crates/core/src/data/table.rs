use std::io::{Read, Write};
use std::path::Path;

use super::{ColumnKind, DataError, Schema};
use crate::model::Task;

const MISSING_TOKENS: [&str; 5] = ["", "NA", "nan", "NaN", "?"];

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.contains(&cell)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RawColumn {
    Continuous(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl RawColumn {
    pub fn len(&self) -> usize {
        match self {
            RawColumn::Continuous(v) => v.len(),
            RawColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            RawColumn::Continuous(v) => RawColumn::Continuous(rows.iter().map(|&r| v[r]).collect()),
            RawColumn::Categorical(v) => RawColumn::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }

    /// Cell rendered as text; missing cells render empty.
    pub fn cell(&self, row: usize) -> String {
        match self {
            RawColumn::Continuous(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            RawColumn::Categorical(v) => v[row].clone().unwrap_or_default(),
        }
    }
}

/// Typed feature columns plus a numeric target, in schema order.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<RawColumn>,
    pub target_name: String,
    pub target: Vec<f64>,
    /// Rows dropped because their target cell was missing.
    pub rejected_rows: usize,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            target_name: self.target_name.clone(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            rejected_rows: 0,
        }
    }

    /// Writes the table as CSV with the features first and the target last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header).map_err(csv_error)?;
        for r in 0..self.n_rows() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c.cell(r)).collect();
            rec.push(self.target[r].to_string());
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush().map_err(|e| DataError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_error(e: csv::Error) -> DataError {
    DataError::Csv(e.to_string())
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(file, schema)
}

/// Reads a headered CSV into typed columns.
///
/// Cells equal to `""`, `NA`, `nan`, `NaN` or `?` are missing. Rows with a
/// missing target are dropped and counted. Header columns absent from the
/// schema are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<RawTable, DataError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let position = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Config(format!("schema column `{name}` is not in the CSV header")))
    };
    let mut names = Vec::new();
    let mut positions = Vec::new();
    let mut columns = Vec::new();
    for (name, spec) in schema.feature_specs() {
        names.push(name.to_string());
        positions.push(position(name)?);
        columns.push(match spec.kind {
            ColumnKind::Categorical => RawColumn::Categorical(Vec::new()),
            _ => RawColumn::Continuous(Vec::new()),
        });
    }
    let target_name = schema.target_name().to_string();
    let target_pos = position(&target_name)?;

    let mut target = Vec::new();
    let mut rejected = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = row + 1;
        let cell = |pos: usize| record.get(pos).unwrap_or("");
        let raw_target = cell(target_pos);
        if is_missing(raw_target) {
            rejected += 1;
            continue;
        }
        target.push(parse_target(raw_target, schema, row, &target_name)?);
        for ((col, &pos), name) in columns.iter_mut().zip(&positions).zip(&names) {
            let text = cell(pos);
            match col {
                RawColumn::Continuous(v) => v.push(if is_missing(text) {
                    None
                } else {
                    Some(parse_number(text, row, name)?)
                }),
                RawColumn::Categorical(v) => v.push((!is_missing(text)).then(|| text.to_string())),
            }
        }
    }
    if rejected > 0 {
        log::warn!("dropped {rejected} row(s) with a missing `{target_name}` value");
    }
    Ok(RawTable {
        names,
        columns,
        target_name,
        target,
        rejected_rows: rejected,
    })
}

fn parse_number(text: &str, row: usize, column: &str) -> Result<f64, DataError> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::Parse {
            row,
            column: column.to_string(),
            value: text.to_string(),
        }),
    }
}

fn parse_target(text: &str, schema: &Schema, row: usize, column: &str) -> Result<f64, DataError> {
    match schema.task {
        Task::Regression => parse_number(text, row, column),
        Task::BinaryClassification if !schema.positive_labels.is_empty() => {
            Ok(if schema.positive_labels.iter().any(|p| p == text) { 1.0 } else { 0.0 })
        }
        Task::BinaryClassification => match parse_number(text, row, column)? {
            v if v == 0.0 || v == 1.0 => Ok(v),
            _ => Err(DataError::Parse {
                row,
                column: column.to_string(),
                value: text.to_string(),
            }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSpec;

    fn schema(task: Task) -> Schema {
        Schema::new(
            task,
            [
                ("a".to_string(), ColumnSpec::continuous()),
                ("c".to_string(), ColumnSpec::categorical(true)),
                ("y".to_string(), ColumnSpec::target()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn reads_typed_rows() {
        let text = "y,a,c,extra\n1.5,0.5,x,9\n2,NA,y,9\n-3,2,,9\n";
        let t = read_csv(text.as_bytes(), &schema(Task::Regression)).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.target, [1.5, 2.0, -3.0]);
        assert_eq!(t.columns[0], RawColumn::Continuous(vec![Some(0.5), None, Some(2.0)]));
        assert_eq!(
            t.columns[1],
            RawColumn::Categorical(vec![Some("x".into()), Some("y".into()), None])
        );
    }

    #[test]
    fn missing_target_rows_are_rejected() {
        let text = "a,c,y\n1,x,1\n2,x,\n3,y,0\n";
        let t = read_csv(text.as_bytes(), &schema(Task::BinaryClassification)).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.rejected_rows, 1);
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let text = "a,c,y\n1,x,1\nabc,x,0\n";
        match read_csv(text.as_bytes(), &schema(Task::Regression)) {
            Err(DataError::Parse { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "a", "abc"));
            }
            other => panic!("{other:?}"),
        }
        let text = "a,c,y\n1,x,3\n";
        assert!(read_csv(text.as_bytes(), &schema(Task::BinaryClassification)).is_err());
    }

    #[test]
    fn unknown_schema_column_is_a_config_error() {
        let text = "a,y\n1,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &schema(Task::Regression)),
            Err(DataError::Config(_))
        ));
    }

    #[test]
    fn positive_labels_map_targets() {
        let mut s = schema(Task::BinaryClassification);
        s.positive_labels = vec!["yes".into()];
        let t = read_csv("a,c,y\n1,x,yes\n2,x,no\n".as_bytes(), &s).unwrap();
        assert_eq!(t.target, [1.0, 0.0]);
    }

    #[test]
    fn csv_round_trip() {
        let text = "a,c,y\n0.25,x,1\n,y,0\n";
        let s = schema(Task::BinaryClassification);
        let t = read_csv(text.as_bytes(), &s).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice(), &s).unwrap(), t);
    }
}
