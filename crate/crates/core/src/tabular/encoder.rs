//! Min-max / one-hot encoding between [`Table`]s and dense matrices.
//!
//! Continuous NA cells encode as `0.0`; categorical NA cells set the
//! reserved NA slot at the end of their one-hot block. The expanded mask
//! copies each raw cell's observedness across the cell's encoded span.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::missingness::MaskMatrix;
use crate::numerics::{softmax_in_place, Tensor};
use crate::tabular::schema::{Kind, Schema};
use crate::tabular::table::{Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub matrix: Tensor,
    pub spans: Vec<Range<usize>>,
}

/// Fits min/max over observed cells and vocabularies in first-appearance
/// order. Categories already declared on the schema are kept as given.
pub fn fit_encoder(table: &Table, schema: &Schema) -> Result<Schema> {
    if table.n_rows() == 0 {
        return Err(Error::Schema("cannot fit an encoder on an empty table".into()));
    }
    if !table.schema().same_layout(schema) {
        return Err(Error::Schema("table does not match schema layout".into()));
    }
    let mut fitted = schema.clone();
    for (j, col) in fitted.columns.iter_mut().enumerate() {
        match col.kind {
            Kind::Continuous => {
                let values = table.numbers(j);
                if values.is_empty() {
                    return Err(Error::Schema(format!("continuous column {:?} has no observed cells", col.name)));
                }
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                col.range = Some((lo, hi));
            }
            Kind::Categorical => {
                if col.categories.is_empty() {
                    for c in table.categories(j) {
                        if !col.categories.iter().any(|k| k == c) {
                            col.categories.push(c.to_string());
                        }
                    }
                }
            }
        }
    }
    Schema::new(fitted.columns)
}

pub(crate) fn normalize(value: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub(crate) fn denormalize(value: f64, (lo, hi): (f64, f64)) -> f64 {
    value.clamp(0.0, 1.0) * (hi - lo) + lo
}

fn fitted_range(col: &crate::tabular::ColumnSpec) -> Result<(f64, f64)> {
    col.range
        .ok_or_else(|| Error::Schema(format!("column {:?} is not fitted", col.name)))
}

/// Encodes `table` and returns the per-cell observedness expanded to the
/// encoded width. A cell is observed iff it is not NA.
pub fn encode(table: &Table, schema: &Schema) -> Result<(EncodedBatch, Tensor)> {
    if !table.schema().same_layout(schema) {
        return Err(Error::Schema("table does not match schema layout".into()));
    }
    let width = schema.encoded_width();
    let spans = schema.spans();
    let n = table.n_rows();
    let mut data = vec![0.0f32; n * width];
    let mut mask = vec![0.0f32; n * width];

    for (i, row) in table.rows().iter().enumerate() {
        let out = &mut data[i * width..(i + 1) * width];
        let m = &mut mask[i * width..(i + 1) * width];
        for ((cell, col), span) in row.iter().zip(&schema.columns).zip(&spans) {
            let observed = !cell.is_na();
            match (col.kind, cell) {
                (Kind::Continuous, Cell::Number(v)) => {
                    out[span.start] = normalize(*v, fitted_range(col)?) as f32;
                }
                (Kind::Continuous, _) => {
                    out[span.start] = 0.0;
                }
                (Kind::Categorical, Cell::Category(c)) => {
                    let k = col.category_index(c).ok_or_else(|| Error::UnseenCategory {
                        column: col.name.clone(),
                        value: c.clone(),
                    })?;
                    out[span.start + k] = 1.0;
                }
                (Kind::Categorical, _) => {
                    out[span.end - 1] = 1.0;
                }
            }
            if observed {
                m[span.clone()].fill(1.0);
            }
        }
    }
    let matrix = Tensor::new(vec![n, width], data)?;
    let mask = Tensor::new(vec![n, width], mask)?;
    Ok((EncodedBatch { matrix, spans }, mask))
}

/// Expands a raw `[n, d]` mask to the encoded width of `schema`.
pub fn expand_mask(mask: &MaskMatrix, schema: &Schema) -> Result<Tensor> {
    if mask.cols() != schema.len() {
        return Err(Error::shape("expand_mask", &[mask.rows(), mask.cols()], &[mask.rows(), schema.len()]));
    }
    let width = schema.encoded_width();
    let spans = schema.spans();
    let mut out = vec![0.0f32; mask.rows() * width];
    for i in 0..mask.rows() {
        for (j, span) in spans.iter().enumerate() {
            if mask.is_observed(i, j) {
                out[i * width + span.start..i * width + span.end].fill(1.0);
            }
        }
    }
    Tensor::new(vec![mask.rows(), width], out)
}

/// Decodes a matrix into a complete table.
///
/// Continuous entries are clipped to `[0, 1]` and rescaled. Categorical
/// blocks go through softmax then argmax; when the NA slot wins the best
/// real category is taken instead.
pub fn decode(matrix: &Tensor, schema: &Schema) -> Result<Table> {
    let width = schema.encoded_width();
    if matrix.shape().len() != 2 || matrix.cols() != width {
        return Err(Error::shape("decode", matrix.shape(), &[matrix.rows(), width]));
    }
    let spans = schema.spans();
    let mut rows = Vec::with_capacity(matrix.rows());
    for i in 0..matrix.rows() {
        let encoded = matrix.row(i);
        let row = schema
            .columns
            .iter()
            .zip(&spans)
            .map(|(col, span)| match col.kind {
                Kind::Continuous => Ok(Cell::Number(denormalize(encoded[span.start] as f64, fitted_range(col)?))),
                Kind::Categorical => {
                    if col.categories.is_empty() {
                        return Err(Error::Schema(format!("column {:?} is not fitted", col.name)));
                    }
                    let mut probs = encoded[span.clone()].to_vec();
                    softmax_in_place(&mut probs);
                    let real = &probs[..col.categories.len()];
                    let best = argmax(real);
                    Ok(Cell::Category(col.categories[best].clone()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Table::new(schema.clone(), rows)
}

/// First index of the maximum.
fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::ColumnSpec;

    fn schema() -> Schema {
        Schema::new(vec![
            ColumnSpec::continuous("x"),
            ColumnSpec::categorical("c", Vec::new()),
        ])
        .unwrap()
    }

    fn table(rows: Vec<Vec<Cell>>) -> Table {
        Table::new(schema(), rows).unwrap()
    }

    fn num(v: f64) -> Cell {
        Cell::Number(v)
    }

    fn cat(s: &str) -> Cell {
        Cell::Category(s.into())
    }

    #[test]
    fn fit_over_observed_cells() {
        let t = table(vec![
            vec![num(2.0), cat("B")],
            vec![num(4.0), cat("A")],
            vec![Cell::Na, cat("B")],
        ]);
        let fitted = fit_encoder(&t, &schema()).unwrap();
        assert_eq!(fitted.columns[0].range, Some((2.0, 4.0)));
        assert_eq!(fitted.columns[1].categories, vec!["B", "A"]);
    }

    #[test]
    fn fit_requires_observed_continuous() {
        let t = table(vec![vec![Cell::Na, cat("A")]]);
        assert!(fit_encoder(&t, &schema()).is_err());
    }

    #[test]
    fn constant_column_encodes_to_zero() {
        let t = table(vec![vec![num(5.0), cat("A")], vec![num(5.0), cat("A")]]);
        let fitted = fit_encoder(&t, &schema()).unwrap();
        assert_eq!(fitted.columns[0].range, Some((5.0, 5.0)));
        let (enc, _) = encode(&t, &fitted).unwrap();
        assert_eq!(enc.matrix.row(0)[0], 0.0);
    }

    #[test]
    fn encode_values_and_na_conventions() {
        let mut fitted = schema();
        fitted.columns[0].range = Some((0.0, 10.0));
        fitted.columns[1].categories = vec!["A".into(), "B".into()];
        let t = table(vec![vec![num(5.0), Cell::Na], vec![Cell::Na, cat("B")]]);
        let (enc, mask) = encode(&t, &fitted).unwrap();
        assert_eq!(enc.matrix.row(0), &[0.5, 0.0, 0.0, 1.0]);
        assert_eq!(mask.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(enc.matrix.row(1), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(mask.row(1), &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(enc.spans, vec![0..1, 1..4]);
    }

    #[test]
    fn unseen_category_is_an_error() {
        let mut fitted = schema();
        fitted.columns[0].range = Some((0.0, 1.0));
        fitted.columns[1].categories = vec!["A".into()];
        let t = table(vec![vec![num(0.5), cat("Z")]]);
        assert!(matches!(encode(&t, &fitted), Err(Error::UnseenCategory { .. })));
    }

    #[test]
    fn decode_rules() {
        let mut fitted = schema();
        fitted.columns[0].range = Some((0.0, 10.0));
        fitted.columns[1].categories = vec!["A".into(), "B".into()];
        let m = Tensor::from_rows(&[
            vec![0.5, 2.0, 0.1, -1.0],
            vec![1.7, 0.1, 0.2, 5.0],
            vec![-0.3, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let t = decode(&m, &fitted).unwrap();
        assert_eq!(t.cell(0, 0), &num(5.0));
        assert_eq!(t.cell(0, 1), &cat("A"));
        assert_eq!(t.cell(1, 0), &num(10.0));
        assert_eq!(t.cell(1, 1), &cat("B"));
        assert_eq!(t.cell(2, 0), &num(0.0));
        assert!(t.is_complete());
        assert!(decode(&Tensor::zeros(&[1, 3]), &fitted).is_err());
    }

    #[test]
    fn expand_mask_matches_encode_mask() {
        let t = table(vec![vec![num(2.0), Cell::Na], vec![Cell::Na, cat("A")]]);
        let fitted = fit_encoder(&table(vec![vec![num(1.0), cat("A")], vec![num(3.0), cat("B")]]), &schema()).unwrap();
        let (_, mask) = encode(&t, &fitted).unwrap();
        let raw = MaskMatrix::from_table(&t);
        assert_eq!(expand_mask(&raw, &fitted).unwrap(), mask);
    }
}
