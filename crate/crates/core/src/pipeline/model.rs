//! Fitted preprocessing chain: label encoding, z-score scaling, PCA.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};

use super::pca::Pca;
use super::table::{ColumnKind, RawTable, Schema, Value};
use crate::data::LabeledMatrix;
use crate::error::{Error, Result};
use crate::textfmt::{self, write_row};

const MAGIC: &str = "gids-pipeline v1";

/// Maps the distinct categories of one column to codes `0..n` in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryEncoder {
    categories: Vec<String>,
}

impl CategoryEncoder {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = values.into_iter().collect();
        Self {
            categories: set.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn code(&self, category: &str) -> Option<usize> {
        self.categories
            .binary_search_by(|c| c.as_str().cmp(category))
            .ok()
    }

    pub fn category(&self, code: usize) -> Option<&str> {
        self.categories.get(code).map(String::as_str)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Scaler {
    pub fn fit(data: &Array2<f64>) -> Self {
        let n = data.nrows().max(1) as f64;
        let mean = data.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(data.ncols()));
        let var = data
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, m)| col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
            .collect::<Array1<f64>>();
        Self {
            mean,
            std: var.mapv(f64::sqrt),
        }
    }

    /// `(x - mean) / std`, with zero-variance features mapped to 0.
    pub fn apply(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data - &self.mean;
        for (mut col, &s) in out.axis_iter_mut(Axis(1)).zip(self.std.iter()) {
            if s > 0.0 {
                col.mapv_inplace(|x| x / s);
            } else {
                col.fill(0.0);
            }
        }
        out
    }
}

/// What to do with a categorical value that was not seen during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnseenPolicy {
    /// Map to the reserved code `n` (number of known categories) and report it.
    #[default]
    Reserve,
    Strict,
}

/// Unseen categories encountered by [`PipelineModel::transform`], keyed by feature position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformReport {
    pub unseen: BTreeMap<usize, BTreeMap<String, usize>>,
}

impl TransformReport {
    pub fn unseen_total(&self) -> usize {
        self.unseen.values().flat_map(|m| m.values()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub schema: Schema,
    /// One entry per feature column; `Some` for categorical features.
    pub encoders: Vec<Option<CategoryEncoder>>,
    pub label_encoder: CategoryEncoder,
    pub scaler: Scaler,
    pub pca: Pca,
    pub warnings: Vec<String>,
}

/// Fits encoders, scaler and PCA on `table`, keeping `target_dims` components.
///
/// A cumulative explained variance below `variance_floor` is recorded as a warning.
pub fn fit_pipeline(table: &RawTable, target_dims: usize, variance_floor: f64) -> Result<PipelineModel> {
    if table.is_empty() {
        return Err(Error::Data("cannot fit a pipeline on an empty table".into()));
    }
    if !(variance_floor > 0.0 && variance_floor <= 1.0) {
        return Err(Error::Config(format!("variance floor {variance_floor} outside (0, 1]")));
    }
    let kinds = table.schema.feature_kinds();
    if target_dims == 0 || target_dims > kinds.len() {
        return Err(Error::Config(format!(
            "target_dims {target_dims} exceeds the {} encoded features",
            kinds.len()
        )));
    }

    let encoders = kinds
        .iter()
        .enumerate()
        .map(|(j, kind)| match kind {
            ColumnKind::Categorical => Some(CategoryEncoder::fit(table.rows.iter().filter_map(|r| {
                match &r.features[j] {
                    Value::Categorical(s) => Some(s.as_str()),
                    Value::Numeric(_) => None,
                }
            }))),
            _ => None,
        })
        .collect::<Vec<_>>();
    let label_encoder = CategoryEncoder::fit(table.rows.iter().map(|r| r.label.as_str()));

    let mut model = PipelineModel {
        schema: table.schema.clone(),
        encoders,
        label_encoder,
        scaler: Scaler {
            mean: Array1::zeros(0),
            std: Array1::zeros(0),
        },
        pca: Pca {
            mean: Array1::zeros(0),
            components: Array2::zeros((0, 0)),
            eigenvalues: Vec::new(),
        },
        warnings: Vec::new(),
    };
    let (encoded, _) = model.encode(table, UnseenPolicy::Strict)?;
    model.scaler = Scaler::fit(&encoded);
    let scaled = model.scaler.apply(&encoded);
    model.pca = Pca::fit(scaled.view(), target_dims)?;

    let cumulative = model.pca.cumulative_explained_variance();
    if cumulative < variance_floor {
        model.warnings.push(format!(
            "cumulative explained variance {cumulative:.6} below floor {variance_floor}"
        ));
    }
    Ok(model)
}

impl PipelineModel {
    pub fn d_in(&self) -> usize {
        self.pca.d_in()
    }

    pub fn d_out(&self) -> usize {
        self.pca.d_out()
    }

    pub fn class_count(&self) -> usize {
        self.label_encoder.len()
    }

    pub fn explained_variance_ratios(&self) -> Vec<f64> {
        self.pca.explained_variance_ratios()
    }

    pub fn cumulative_explained_variance(&self) -> f64 {
        self.pca.cumulative_explained_variance()
    }

    /// Label-encoded (unscaled) feature matrix.
    pub fn encode(&self, table: &RawTable, policy: UnseenPolicy) -> Result<(Array2<f64>, TransformReport)> {
        if table.schema != self.schema {
            return Err(Error::Shape("table schema does not match the fitted model".into()));
        }
        let d = self.encoders.len();
        let mut out = Array2::zeros((table.len(), d));
        let mut report = TransformReport::default();
        for (i, row) in table.rows.iter().enumerate() {
            for (j, (value, encoder)) in row.features.iter().zip(&self.encoders).enumerate() {
                out[[i, j]] = match (value, encoder) {
                    (Value::Numeric(v), _) => *v,
                    (Value::Categorical(s), Some(enc)) => match enc.code(s) {
                        Some(code) => code as f64,
                        None if policy == UnseenPolicy::Strict => {
                            return Err(Error::Ingestion {
                                row: i,
                                message: format!("feature {j}: unseen category `{s}`"),
                            })
                        }
                        None => {
                            *report.unseen.entry(j).or_default().entry(s.clone()).or_default() += 1;
                            enc.len() as f64
                        }
                    },
                    (Value::Categorical(_), None) => {
                        return Err(Error::Ingestion {
                            row: i,
                            message: format!("feature {j}: categorical value in numeric column"),
                        })
                    }
                };
            }
        }
        Ok((out, report))
    }

    pub fn encode_labels(&self, table: &RawTable) -> Result<Vec<usize>> {
        table
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                self.label_encoder.code(&r.label).ok_or_else(|| Error::Ingestion {
                    row: i,
                    message: format!("label `{}` unknown to the fitted model", r.label),
                })
            })
            .collect()
    }

    /// Encodes, scales and projects `table`.
    pub fn transform(&self, table: &RawTable, policy: UnseenPolicy) -> Result<(LabeledMatrix, TransformReport)> {
        let (encoded, report) = self.encode(table, policy)?;
        let scaled = self.scaler.apply(&encoded);
        let projected = self.pca.project(scaled.view())?;
        let labels = self.encode_labels(table)?;
        Ok((LabeledMatrix::new(projected, labels, self.class_count())?, report))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "# sections: schema, encoder <feature>, labels, scaler (mean std per feature),");
        let _ = writeln!(out, "# pca <d_in> <d_out>, pca.mean, pca.components (row-major d_in x d_out), pca.eigenvalues, warnings");
        out.push_str("[schema]\n");
        out.push_str(&self.schema.to_text());
        for (j, enc) in self.encoders.iter().enumerate() {
            if let Some(enc) = enc {
                let _ = writeln!(out, "[encoder {j}]");
                for c in enc.categories() {
                    let _ = writeln!(out, "{}", quote(c));
                }
            }
        }
        out.push_str("[labels]\n");
        for c in self.label_encoder.categories() {
            let _ = writeln!(out, "{}", quote(c));
        }
        out.push_str("[scaler]\n");
        for (m, s) in self.scaler.mean.iter().zip(self.scaler.std.iter()) {
            write_row(&mut out, [*m, *s]);
        }
        let _ = writeln!(out, "[pca {} {}]", self.d_in(), self.d_out());
        out.push_str("[pca.mean]\n");
        write_row(&mut out, self.pca.mean.iter().copied());
        out.push_str("[pca.components]\n");
        for row in self.pca.components.rows() {
            write_row(&mut out, row.iter().copied());
        }
        out.push_str("[pca.eigenvalues]\n");
        write_row(&mut out, self.pca.eigenvalues.iter().copied());
        out.push_str("[warnings]\n");
        for w in &self.warnings {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let sections = textfmt::read_sections(text, MAGIC)?;
        let schema = Schema::parse(&textfmt::find(&sections, "schema")?.lines.join("\n"))?;
        let kinds = schema.feature_kinds();
        let mut encoders: Vec<Option<CategoryEncoder>> = vec![None; kinds.len()];
        for s in sections.iter().filter(|s| s.name == "encoder") {
            let j: usize = s.arg(0)?;
            if j >= kinds.len() || kinds[j] != ColumnKind::Categorical {
                return Err(Error::parse("encoder", format!("feature {j} is not categorical")));
            }
            encoders[j] = Some(CategoryEncoder {
                categories: s.lines.iter().map(|l| unquote(l)).collect::<Result<_>>()?,
            });
        }
        if let Some(j) = (0..kinds.len()).find(|&j| kinds[j] == ColumnKind::Categorical && encoders[j].is_none()) {
            return Err(Error::parse("encoder", format!("no encoder for feature {j}")));
        }
        let label_encoder = CategoryEncoder {
            categories: textfmt::find(&sections, "labels")?
                .lines
                .iter()
                .map(|l| unquote(l))
                .collect::<Result<_>>()?,
        };
        let scaler_rows = textfmt::find(&sections, "scaler")?.numbers()?;
        if scaler_rows.len() != kinds.len() || scaler_rows.iter().any(|r| r.len() != 2) {
            return Err(Error::parse("scaler", "expected one `mean std` row per feature"));
        }
        let scaler = Scaler {
            mean: scaler_rows.iter().map(|r| r[0]).collect(),
            std: scaler_rows.iter().map(|r| r[1]).collect(),
        };
        let header = textfmt::find(&sections, "pca")?;
        let (d_in, d_out): (usize, usize) = (header.arg(0)?, header.arg(1)?);
        let mean = Array1::from(textfmt::find(&sections, "pca.mean")?.single_row()?);
        let rows = textfmt::find(&sections, "pca.components")?.numbers()?;
        if d_in != kinds.len() || mean.len() != d_in || rows.len() != d_in || rows.iter().any(|r| r.len() != d_out) {
            return Err(Error::parse("pca", format!("expected a {d_in}x{d_out} projection")));
        }
        let components = Array2::from_shape_vec((d_in, d_out), rows.concat())
            .map_err(|e| Error::parse("pca.components", e.to_string()))?;
        let eigenvalues = textfmt::find(&sections, "pca.eigenvalues")?.single_row()?;
        let warnings = sections
            .iter()
            .find(|s| s.name == "warnings")
            .map(|s| s.lines.clone())
            .unwrap_or_default();
        Ok(Self {
            schema,
            encoders,
            label_encoder,
            scaler,
            pca: Pca {
                mean,
                components,
                eigenvalues,
            },
            warnings,
        })
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_default()
}

fn unquote(s: &str) -> Result<String> {
    serde_json::from_str(s).map_err(|e| Error::parse("category", e.to_string()))
}
