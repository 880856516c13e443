//! Ingestion and preprocessing: CSV loading, label encoding, z-scores, PCA,
//! stratified splitting and sparsity diagnostics.

mod model;
pub mod pca;
mod split;
mod table;

use ndarray::ArrayView2;

pub use model::{fit_pipeline, CategoryEncoder, PipelineModel, Scaler, TransformReport, UnseenPolicy};
pub use split::{class_quotas, stratified_split, Split};
pub use table::{load_dataset, ColumnKind, CsvOptions, RawRecord, RawTable, Schema, Value};

use crate::error::{Error, Result};

/// Fraction of entries that are exactly zero: `1 - nonzero / total`.
pub fn sparsity(matrix: ArrayView2<'_, f64>) -> Result<f64> {
    let total = matrix.len();
    if total == 0 {
        return Err(Error::Data("sparsity of an empty matrix is undefined".into()));
    }
    let nonzero = matrix.iter().filter(|v| **v != 0.0).count();
    Ok(1.0 - nonzero as f64 / total as f64)
}
