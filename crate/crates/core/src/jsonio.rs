//! Conversions between nalgebra types and the row-major nested-list JSON
//! encodings used by every serializable artifact (models, distributions,
//! estimators).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Converts a row-major nested list into a dense matrix, rejecting empty or
/// ragged input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse(
            "matrix must have at least one row and one column".into(),
        ));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("matrix rows have inconsistent lengths".into()));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Row-major nested-list encoding of a dense matrix.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Converts a flat list into a vector, rejecting empty input.
pub fn vector_from_list(list: &[f64]) -> Result<DVector<f64>> {
    if list.is_empty() {
        return Err(Error::Parse("vector must be non-empty".into()));
    }
    Ok(DVector::from_column_slice(list))
}

/// Flat-list encoding of a vector.
pub fn vector_to_list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Scientific notation with 17 significant digits — enough to round-trip any
/// f64 bit pattern exactly, so emitted tables are reproducible byte for byte.
pub fn format_float_17(v: f64) -> String {
    format!("{v:.16e}")
}
