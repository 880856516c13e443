//! Raw tabular ingestion: column schema and CSV parsing.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    /// Present in the file but dropped on ingestion (e.g. NSL-KDD's difficulty score).
    Ignore,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Label => "label",
            ColumnKind::Ignore => "ignore",
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "num" => Ok(ColumnKind::Numeric),
            "categorical" | "cat" => Ok(ColumnKind::Categorical),
            "label" => Ok(ColumnKind::Label),
            "ignore" | "skip" => Ok(ColumnKind::Ignore),
            other => Err(Error::parse("schema", format!("unknown column kind `{other}`"))),
        }
    }
}

/// Per-column kinds with exactly one label column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<ColumnKind>,
    label_index: usize,
}

impl Schema {
    pub fn new(columns: Vec<ColumnKind>) -> Result<Self> {
        let labels: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == ColumnKind::Label)
            .map(|(i, _)| i)
            .collect();
        match labels.as_slice() {
            [idx] => Ok(Self {
                label_index: *idx,
                columns,
            }),
            [] => Err(Error::Config("schema has no label column".into())),
            _ => Err(Error::Config(format!(
                "schema has {} label columns, expected one",
                labels.len()
            ))),
        }
    }

    /// Parses one kind per line; blank lines and `#` comments are skipped.
    /// A line may carry a column name before the kind (`protocol_type categorical`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let kind = line.split_whitespace().last().unwrap_or(line);
            columns.push(kind.parse()?);
        }
        Self::new(columns)
    }

    pub fn to_text(&self) -> String {
        self.columns.iter().map(|k| format!("{k}\n")).collect()
    }

    pub fn columns(&self) -> &[ColumnKind] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn label_index(&self) -> usize {
        self.label_index
    }

    /// Kinds of the feature columns (numeric or categorical), in file order.
    pub fn feature_kinds(&self) -> Vec<ColumnKind> {
        self.columns
            .iter()
            .copied()
            .filter(|k| matches!(k, ColumnKind::Numeric | ColumnKind::Categorical))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Numeric(f64),
    Categorical(String),
}

/// One ingested record: feature values in schema order plus the label string.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub features: Vec<Value>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: Schema,
    pub rows: Vec<RawRecord>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.schema.feature_kinds().len()
    }

    /// Keeps only rows whose label is in `labels`.
    pub fn retain_labels(&mut self, labels: &[String]) {
        self.rows.retain(|r| labels.contains(&r.label));
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub has_header: bool,
}

/// Parses comma-separated records against `schema`.
///
/// Row indices in errors count data rows only, starting at 0.
pub fn load_dataset(csv_text: &str, schema: &Schema, options: CsvOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());

    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingestion {
            row,
            message: e.to_string(),
        })?;
        if record.len() != schema.len() {
            return Err(Error::Ingestion {
                row,
                message: format!("expected {} columns, found {}", schema.len(), record.len()),
            });
        }
        let mut features = Vec::with_capacity(schema.len());
        let mut label = String::new();
        for (col, (field, kind)) in record.iter().zip(schema.columns()).enumerate() {
            match kind {
                ColumnKind::Numeric => {
                    let v: f64 = field.parse().map_err(|_| Error::Ingestion {
                        row,
                        message: format!("column {col}: `{field}` is not numeric"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Ingestion {
                            row,
                            message: format!("column {col}: non-finite value"),
                        });
                    }
                    features.push(Value::Numeric(v));
                }
                ColumnKind::Categorical => features.push(Value::Categorical(field.to_string())),
                ColumnKind::Label => {
                    if field.is_empty() {
                        return Err(Error::Ingestion {
                            row,
                            message: "empty label".into(),
                        });
                    }
                    label = field.to_string();
                }
                ColumnKind::Ignore => {}
            }
        }
        rows.push(RawRecord { features, label });
    }
    Ok(RawTable {
        schema: schema.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ColumnKind::*;

    fn schema4() -> Schema {
        Schema::new(vec![Numeric, Categorical, Categorical, Label]).unwrap()
    }

    #[test]
    fn parses_table_one_row() {
        let t = load_dataset("0,tcp,http,normal\n", &schema4(), CsvOptions::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.rows[0].features[0], Value::Numeric(0.0));
        assert_eq!(t.rows[0].features[1], Value::Categorical("tcp".into()));
        assert_eq!(t.rows[0].label, "normal");
    }

    #[test]
    fn empty_text_is_empty_table() {
        let t = load_dataset("", &schema4(), CsvOptions::default()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn arity_violation_names_row() {
        let err = load_dataset("0,tcp,normal\n", &schema4(), CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ingestion { row: 0, .. }), "{err}");
        let err = load_dataset("0,tcp,http,normal\n1,udp,dns\n", &schema4(), CsvOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Ingestion { row: 1, .. }), "{err}");
    }

    #[test]
    fn unparseable_numeric_is_rejected() {
        let err = load_dataset("abc,tcp,http,normal\n", &schema4(), CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ingestion { row: 0, .. }));
    }

    #[test]
    fn header_is_skipped_when_requested() {
        let text = "duration,proto,service,label\n0,tcp,http,normal\n";
        let t = load_dataset(text, &schema4(), CsvOptions { has_header: true }).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn schema_file_round_trip() {
        let s = Schema::parse("duration numeric\n# comment\nprotocol categorical\nservice categorical\nlabel\nignore\n")
            .unwrap();
        assert_eq!(s.columns(), &[Numeric, Categorical, Categorical, Label, Ignore]);
        assert_eq!(s.label_index(), 3);
        assert_eq!(Schema::parse(&s.to_text()).unwrap(), s);
        assert!(Schema::parse("numeric\n").is_err());
        assert!(Schema::parse("label\nlabel\n").is_err());
    }

    #[test]
    fn ignored_columns_are_dropped() {
        let s = Schema::new(vec![Numeric, Label, Ignore]).unwrap();
        let t = load_dataset("1.5,smurf,21\n", &s, CsvOptions::default()).unwrap();
        assert_eq!(t.rows[0].features, vec![Value::Numeric(1.5)]);
        assert_eq!(t.feature_count(), 1);
    }
}
