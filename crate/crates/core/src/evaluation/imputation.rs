//! Error of imputed values on the cells that were originally missing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::missingness::MaskMatrix;
use crate::tabular::{Cell, Kind, Schema, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    /// RMSE on the min-max normalised scale over missing continuous cells.
    pub continuous_rmse: Option<f64>,
    /// Mismatch rate over missing categorical cells.
    pub categorical_error: Option<f64>,
    pub continuous_cells: usize,
    pub categorical_cells: usize,
    /// No cell had `m = 0` with known ground truth.
    pub empty: bool,
}

/// Scores `imputed` against `truth` on cells where `mask` is 0.
///
/// Continuous cells are normalised with the schema's fitted range when
/// present, otherwise with the ground-truth column's min and max.
pub fn imputation_error(imputed: &Table, truth: &Table, mask: &MaskMatrix, schema: &Schema) -> Result<ImputationReport> {
    if !imputed.schema().same_layout(schema) || !truth.schema().same_layout(schema) {
        return Err(Error::Schema("imputation tables must share one schema".into()));
    }
    let dims = (truth.n_rows(), truth.n_cols());
    if (imputed.n_rows(), imputed.n_cols()) != dims || (mask.rows(), mask.cols()) != dims {
        return Err(Error::shape("imputation_error", &[imputed.n_rows(), imputed.n_cols()], &[dims.0, dims.1]));
    }
    let (mut sq, mut n_cont, mut wrong, mut n_cat) = (0.0, 0usize, 0usize, 0usize);
    for (j, col) in schema.columns.iter().enumerate() {
        let range = match (col.kind, col.range) {
            (Kind::Continuous, Some(r)) => r,
            (Kind::Continuous, None) => {
                let v = truth.numbers(j);
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            _ => (0.0, 0.0),
        };
        let scale = if range.1 > range.0 { range.1 - range.0 } else { 1.0 };
        for i in 0..dims.0 {
            if mask.is_observed(i, j) {
                continue;
            }
            match (truth.cell(i, j), imputed.cell(i, j)) {
                (Cell::Na, _) => {}
                (Cell::Number(t), Cell::Number(p)) => {
                    sq += ((p - t) / scale).powi(2);
                    n_cont += 1;
                }
                (Cell::Category(t), Cell::Category(p)) => {
                    wrong += (t != p) as usize;
                    n_cat += 1;
                }
                (_, Cell::Na) => return Err(Error::Evaluation(format!("imputed cell ({i}, {j}) is still NA"))),
                _ => return Err(Error::Evaluation(format!("cell ({i}, {j}) kind mismatch"))),
            }
        }
    }
    Ok(ImputationReport {
        continuous_rmse: (n_cont > 0).then(|| (sq / n_cont as f64).sqrt()),
        categorical_error: (n_cat > 0).then(|| wrong as f64 / n_cat as f64),
        continuous_cells: n_cont,
        categorical_cells: n_cat,
        empty: n_cont + n_cat == 0,
    })
}
