//! Observedness masks and the mechanisms that generate them.
//!
//! Masks use `true`/1 for observed and `false`/0 for missing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tabular::{Cell, Table};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    observed: Vec<bool>,
}

impl MaskMatrix {
    pub fn all_observed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            observed: vec![true; rows * cols],
        }
    }

    pub fn from_bools(rows: usize, cols: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != rows * cols {
            return Err(Error::shape("mask", &[rows, cols], &[observed.len()]));
        }
        Ok(Self { rows, cols, observed })
    }

    /// Observed wherever the table has a non-NA cell.
    pub fn from_table(table: &Table) -> Self {
        let observed = table.rows().iter().flatten().map(|c| !c.is_na()).collect();
        Self {
            rows: table.n_rows(),
            cols: table.n_cols(),
            observed,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, observed: bool) {
        self.observed[row * self.cols + col] = observed;
    }

    pub fn row_complete(&self, row: usize) -> bool {
        self.observed[row * self.cols..(row + 1) * self.cols].iter().all(|&o| o)
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.observed.len().max(1) as f64
    }

    /// Element-wise AND of observedness.
    pub fn intersect(&self, other: &MaskMatrix) -> Result<Self> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::shape("mask intersect", &[self.rows, self.cols], &[other.rows, other.cols]));
        }
        let observed = self.observed.iter().zip(&other.observed).map(|(a, b)| *a && *b).collect();
        Ok(Self { observed, ..*self })
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut observed = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            observed.extend_from_slice(&self.observed[i * self.cols..(i + 1) * self.cols]);
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            observed,
        }
    }

    /// CSV of 0/1 integers under the data file's header.
    pub fn to_csv(&self, header: &[&str]) -> Result<Vec<u8>> {
        if header.len() != self.cols {
            return Err(Error::shape("mask csv header", &[header.len()], &[self.cols]));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for i in 0..self.rows {
            w.write_record((0..self.cols).map(|j| if self.is_observed(i, j) { "1" } else { "0" }))?;
        }
        w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let cols = r.headers()?.len();
        let mut observed = Vec::new();
        let mut rows = 0;
        for record in r.records() {
            let record = record?;
            for field in record.iter() {
                observed.push(match field.trim() {
                    "1" => true,
                    "0" => false,
                    other => return Err(Error::Malformed(format!("mask entry {other:?} is not 0 or 1"))),
                });
            }
            rows += 1;
        }
        Self::from_bools(rows, cols, observed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    McarRow,
    McarColumn,
    McarIndependent,
    Mar,
    Nmar,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::McarRow,
        Mechanism::McarColumn,
        Mechanism::McarIndependent,
        Mechanism::Mar,
        Mechanism::Nmar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::McarRow => "mcar_row",
            Mechanism::McarColumn => "mcar_column",
            Mechanism::McarIndependent => "mcar_independent",
            Mechanism::Mar => "mar",
            Mechanism::Nmar => "nmar",
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown missingness mechanism {s:?}")))
    }
}

pub const DEFAULT_ALWAYS_OBSERVED: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: Mechanism,
    pub ratio: f64,
    #[serde(default = "default_always_observed")]
    pub always_observed_fraction: f64,
}

fn default_always_observed() -> f64 {
    DEFAULT_ALWAYS_OBSERVED
}

fn check_ratio(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "missing ratio",
            value: alpha.to_string(),
            range: "(0, 1)".into(),
        })
    }
}

impl MechanismConfig {
    pub fn new(kind: Mechanism, ratio: f64) -> Self {
        Self {
            kind,
            ratio,
            always_observed_fraction: DEFAULT_ALWAYS_OBSERVED,
        }
    }

    pub fn generate(&self, table: &Table, rng: &mut Rng) -> Result<MaskMatrix> {
        let (n, d) = (table.n_rows(), table.n_cols());
        match self.kind {
            Mechanism::McarRow => mask_mcar_row(n, d, self.ratio, rng),
            Mechanism::McarColumn => mask_mcar_column(n, d, self.ratio, rng),
            Mechanism::McarIndependent => mask_mcar_independent(n, d, self.ratio, rng),
            Mechanism::Mar => mask_mar(table, self.ratio, self.always_observed_fraction, rng),
            Mechanism::Nmar => mask_nmar(table, self.ratio, self.always_observed_fraction, rng),
        }
    }
}

/// `⌊count · α⌋`, tolerant of products like `100 · 0.29 = 28.999999999999996`
/// and `100 · 0.57 = 56.99999999999999`.
fn floor_count(count: usize, alpha: f64) -> usize {
    (count as f64 * alpha + 1e-9).floor() as usize
}

/// Exactly `⌊dα⌋` missing cells per row at uniformly chosen positions.
pub fn mask_mcar_row(n: usize, d: usize, alpha: f64, rng: &mut Rng) -> Result<MaskMatrix> {
    check_ratio(alpha)?;
    let k = floor_count(d, alpha);
    if k >= d {
        return Err(Error::InvalidConfig(format!("row missing count {k} leaves no observed cell in {d} columns")));
    }
    let mut mask = MaskMatrix::all_observed(n, d);
    for i in 0..n {
        for j in rng.choose_distinct(d, k) {
            mask.set(i, j, false);
        }
    }
    Ok(mask)
}

/// Exactly `⌊nα⌋` missing cells per column at uniformly chosen rows.
pub fn mask_mcar_column(n: usize, d: usize, alpha: f64, rng: &mut Rng) -> Result<MaskMatrix> {
    check_ratio(alpha)?;
    let k = floor_count(n, alpha);
    if k >= n {
        return Err(Error::InvalidConfig(format!("column missing count {k} leaves no observed cell in {n} rows")));
    }
    let mut mask = MaskMatrix::all_observed(n, d);
    for j in 0..d {
        for i in rng.choose_distinct(n, k) {
            mask.set(i, j, false);
        }
    }
    Ok(mask)
}

/// Each cell missing independently with probability `α`.
pub fn mask_mcar_independent(n: usize, d: usize, alpha: f64, rng: &mut Rng) -> Result<MaskMatrix> {
    check_ratio(alpha)?;
    let observed = (0..n * d).map(|_| !rng.bernoulli(alpha)).collect();
    MaskMatrix::from_bools(n, d, observed)
}

/// Standardized numeric view of a complete column. Categorical cells use
/// their index in first-appearance order.
fn standardized_column(table: &Table, col: usize) -> Result<Vec<f64>> {
    let mut levels: Vec<&str> = Vec::new();
    let values = table
        .column(col)
        .map(|cell| match cell {
            Cell::Number(v) => Ok(*v),
            Cell::Category(c) => Ok(match levels.iter().position(|l| l == c) {
                Some(k) => k as f64,
                None => {
                    levels.push(c);
                    (levels.len() - 1) as f64
                }
            }),
            Cell::Na => Err(Error::InvalidConfig("MAR/NMAR masks require a complete table".into())),
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(values
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect())
}

/// Intercept `b` with `mean(sigmoid(logit + b)) == target`, by bisection.
fn calibrate_intercept(logits: &[f64], target: f64) -> f64 {
    let mean_p = |b: f64| logits.iter().map(|l| sigmoid_f64(l + b)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic masking driven by a fixed always-observed subset of columns.
///
/// The `corruption` ratio blanks logistic inputs by independent MCAR
/// (replacing them with the column mean, i.e. 0 after standardization);
/// `0.0` gives MAR and `α` gives NMAR. Corruption draws come from a separate
/// sub-stream so the rest of `rng` is consumed identically in both cases.
pub fn mask_logistic(
    table: &Table,
    alpha: f64,
    always_observed_fraction: f64,
    corruption: f64,
    rng: &mut Rng,
) -> Result<MaskMatrix> {
    check_ratio(alpha)?;
    let (n, d) = (table.n_rows(), table.n_cols());
    if n == 0 || d < 2 {
        return Err(Error::InvalidConfig("logistic masks need at least one row and two columns".into()));
    }
    if !table.is_complete() {
        return Err(Error::InvalidConfig("MAR/NMAR masks require a complete table".into()));
    }
    let n_fixed = ((always_observed_fraction * d as f64).ceil() as usize).max(1);
    if n_fixed >= d {
        return Err(Error::InvalidConfig(format!("{n_fixed} always-observed columns leave nothing to mask")));
    }
    let target = alpha * d as f64 / (d - n_fixed) as f64;
    if target >= 1.0 {
        return Err(Error::Calibration(format!(
            "ratio {alpha} needs per-cell missing probability {target:.4} >= 1 on {} maskable columns",
            d - n_fixed
        )));
    }

    let mut fixed = rng.choose_distinct(d, n_fixed);
    fixed.sort_unstable();
    let maskable: Vec<usize> = (0..d).filter(|j| !fixed.contains(j)).collect();

    let mut inputs: Vec<Vec<f64>> = fixed
        .iter()
        .map(|&j| standardized_column(table, j))
        .collect::<Result<_>>()?;
    if corruption > 0.0 {
        let mut blank = rng.split_named("logistic-input-corruption");
        for col in inputs.iter_mut() {
            for v in col.iter_mut() {
                if blank.bernoulli(corruption) {
                    *v = 0.0;
                }
            }
        }
    }

    let weights: Vec<Vec<f64>> = maskable
        .iter()
        .map(|_| (0..n_fixed).map(|_| rng.normal()).collect())
        .collect();
    let mut logits = Vec::with_capacity(n * maskable.len());
    for i in 0..n {
        for w in &weights {
            logits.push(w.iter().zip(&inputs).map(|(wk, xk)| wk * xk[i]).sum::<f64>());
        }
    }
    let intercept = calibrate_intercept(&logits, target);

    let mut mask = MaskMatrix::all_observed(n, d);
    for i in 0..n {
        for (k, &j) in maskable.iter().enumerate() {
            let p = sigmoid_f64(logits[i * maskable.len() + k] + intercept);
            if rng.bernoulli(p) {
                mask.set(i, j, false);
            }
        }
    }
    Ok(mask)
}

pub fn mask_mar(table: &Table, alpha: f64, always_observed_fraction: f64, rng: &mut Rng) -> Result<MaskMatrix> {
    mask_logistic(table, alpha, always_observed_fraction, 0.0, rng)
}

pub fn mask_nmar(table: &Table, alpha: f64, always_observed_fraction: f64, rng: &mut Rng) -> Result<MaskMatrix> {
    mask_logistic(table, alpha, always_observed_fraction, alpha, rng)
}

/// Replaces cells with `m = 0` by NA.
pub fn apply_mask(table: &Table, mask: &MaskMatrix) -> Result<Table> {
    if (table.n_rows(), table.n_cols()) != (mask.rows(), mask.cols()) {
        return Err(Error::shape(
            "apply_mask",
            &[table.n_rows(), table.n_cols()],
            &[mask.rows(), mask.cols()],
        ));
    }
    let rows = table
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, c)| if mask.is_observed(i, j) { c.clone() } else { Cell::Na })
                .collect()
        })
        .collect();
    Table::new(table.schema().clone(), rows)
}

/// `max{ max(0, (αd−1)/d)ⁿ·d, α, αⁿ·d }`, clamped to `[0, 1]`.
pub fn remark2_delta(alpha: f64, n: usize, d: usize) -> f64 {
    let (nf, df) = (n as f64, d as f64);
    let base = ((alpha * df - 1.0) / df).max(0.0);
    let raw = (base.powf(nf) * df).max(alpha).max(alpha.powf(nf) * df);
    raw.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoStats {
    pub per_column: Vec<f64>,
    pub max: f64,
    /// Every column has at least one observed cell.
    pub condition_holds: bool,
}

pub fn rho_stats(mask: &MaskMatrix) -> RhoStats {
    let per_column: Vec<f64> = (0..mask.cols())
        .map(|j| {
            let missing = (0..mask.rows()).filter(|&i| !mask.is_observed(i, j)).count();
            missing as f64 / mask.rows().max(1) as f64
        })
        .collect();
    let max = per_column.iter().copied().fold(0.0, f64::max);
    RhoStats {
        per_column,
        max,
        condition_holds: max < 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::generate_bayesian_network;

    fn missing_per_row(mask: &MaskMatrix, i: usize) -> usize {
        (0..mask.cols()).filter(|&j| !mask.is_observed(i, j)).count()
    }

    #[test]
    fn row_mcar_counts() {
        let mut rng = Rng::new(1);
        let m = mask_mcar_row(50, 5, 0.2, &mut rng).unwrap();
        assert!((0..50).all(|i| missing_per_row(&m, i) == 1));
        let m = mask_mcar_row(50, 4, 0.2, &mut rng).unwrap();
        assert_eq!(m.missing_count(), 0);
        assert!(mask_mcar_row(5, 2, 0.5, &mut rng).is_ok());
        assert!(mask_mcar_row(5, 1, 0.99, &mut rng).is_ok());
        assert!(mask_mcar_row(5, 3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn row_mcar_positions_uniform() {
        let m = mask_mcar_row(10_000, 5, 0.4, &mut Rng::new(2)).unwrap();
        for rho in rho_stats(&m).per_column {
            assert!((rho - 0.4).abs() < 0.02, "{rho}");
        }
    }

    #[test]
    fn column_mcar_counts() {
        let mut rng = Rng::new(3);
        let m = mask_mcar_column(10, 3, 0.2, &mut rng).unwrap();
        assert!(rho_stats(&m).per_column.iter().all(|&r| r == 0.2));
        let m = mask_mcar_column(3, 3, 0.2, &mut rng).unwrap();
        assert_eq!(m.missing_count(), 0);
        let m = mask_mcar_column(1000, 5, 0.3, &mut rng).unwrap();
        assert!((m.missing_fraction() - 0.3).abs() <= 1e-3);
    }

    #[test]
    fn independent_mcar_fraction_and_independence() {
        let m = mask_mcar_independent(20_000, 5, 0.2, &mut Rng::new(4)).unwrap();
        assert!((m.missing_fraction() - 0.2).abs() < 0.01);
        let tiny = mask_mcar_independent(10, 10, 1e-9, &mut Rng::new(4)).unwrap();
        assert_eq!(tiny.missing_count(), 0);

        let n = 10_000;
        let m = mask_mcar_independent(n, 2, 0.3, &mut Rng::new(5)).unwrap();
        let a: Vec<f64> = (0..n).map(|i| m.is_observed(i, 0) as u8 as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| m.is_observed(i, 1) as u8 as f64).collect();
        assert!(crate::evaluation::pearson(&a, &b).abs() < 0.05);
    }

    #[test]
    fn mar_keeps_fixed_columns_and_calibrates() {
        let table = generate_bayesian_network(10_000, &mut Rng::new(6)).unwrap();
        let m = mask_mar(&table, 0.2, 0.3, &mut Rng::new(7)).unwrap();
        let rho = rho_stats(&m);
        let fully_observed = rho.per_column.iter().filter(|&&r| r == 0.0).count();
        assert_eq!(fully_observed, 2);
        assert!((m.missing_fraction() - 0.2).abs() < 0.02, "{}", m.missing_fraction());
    }

    #[test]
    fn mar_on_constant_features_is_uniform() {
        use crate::tabular::{ColumnSpec, Schema};
        let schema = Schema::new((0..4).map(|j| ColumnSpec::continuous(format!("c{j}"))).collect()).unwrap();
        let rows = (0..20_000).map(|_| vec![Cell::Number(1.0); 4]).collect();
        let table = Table::new(schema, rows).unwrap();
        let m = mask_mar(&table, 0.3, 0.25, &mut Rng::new(8)).unwrap();
        // one fixed column, target 0.4 on each of the other three
        let rho = rho_stats(&m);
        for r in rho.per_column.iter().filter(|&&r| r > 0.0) {
            assert!((r - 0.4).abs() < 0.02, "{r}");
        }
    }

    #[test]
    fn calibration_infeasible() {
        let table = generate_bayesian_network(100, &mut Rng::new(9)).unwrap();
        assert!(matches!(mask_mar(&table, 0.7, 0.3, &mut Rng::new(1)), Err(Error::Calibration(_))));
    }

    #[test]
    fn mar_rejects_incomplete_table() {
        let table = generate_bayesian_network(100, &mut Rng::new(9)).unwrap();
        let holes = mask_mcar_independent(100, 5, 0.1, &mut Rng::new(2)).unwrap();
        let observed = apply_mask(&table, &holes).unwrap();
        assert!(mask_mar(&observed, 0.2, 0.3, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn nmar_limits() {
        let table = generate_bayesian_network(10_000, &mut Rng::new(10)).unwrap();
        let mar = mask_mar(&table, 0.2, 0.3, &mut Rng::new(11)).unwrap();
        let no_corruption = mask_logistic(&table, 0.2, 0.3, 0.0, &mut Rng::new(11)).unwrap();
        assert_eq!(mar, no_corruption);

        let nmar = mask_nmar(&table, 0.2, 0.3, &mut Rng::new(11)).unwrap();
        assert!((nmar.missing_fraction() - 0.2).abs() < 0.02);

        // every input blanked: constant logits, uniform per-cell probability 1/3
        let blank = mask_logistic(&table, 0.2, 0.3, 1.0, &mut Rng::new(12)).unwrap();
        for r in rho_stats(&blank).per_column.iter().filter(|&&r| r > 0.0) {
            assert!((r - 0.2 * 5.0 / 3.0).abs() < 0.02, "{r}");
        }
    }

    #[test]
    fn apply_mask_pointwise() {
        let table = generate_bayesian_network(4, &mut Rng::new(1)).unwrap();
        assert_eq!(apply_mask(&table, &MaskMatrix::all_observed(4, 5)).unwrap(), table);
        let none = MaskMatrix::from_bools(4, 5, vec![false; 20]).unwrap();
        assert_eq!(apply_mask(&table, &none).unwrap().na_count(), 20);
        let mut one = MaskMatrix::all_observed(4, 5);
        one.set(2, 1, false);
        let masked = apply_mask(&table, &one).unwrap();
        assert_eq!(masked.na_count(), 1);
        assert!(masked.cell(2, 1).is_na());
        assert!(apply_mask(&table, &MaskMatrix::all_observed(3, 5)).is_err());
    }

    #[test]
    fn delta_values() {
        assert_eq!(remark2_delta(0.2, 10, 5), 0.2);
        assert_eq!(remark2_delta(0.5, 1, 1), 0.5);
        assert_eq!(remark2_delta(0.9, 2, 10), 1.0);
        let sweep: Vec<f64> = (1..10).map(|k| remark2_delta(k as f64 / 10.0, 10, 5)).collect();
        assert!(sweep.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rho_values() {
        let r = rho_stats(&MaskMatrix::all_observed(3, 2));
        assert_eq!((r.max, r.condition_holds), (0.0, true));
        let m = MaskMatrix::from_bools(3, 2, vec![false, true, false, true, true, true]).unwrap();
        let r = rho_stats(&m);
        assert_eq!(r.per_column, vec![2.0 / 3.0, 0.0]);
        assert_eq!(r.max, 2.0 / 3.0);
        let full = MaskMatrix::from_bools(2, 2, vec![false, true, false, true]).unwrap();
        let r = rho_stats(&full);
        assert_eq!((r.max, r.condition_holds), (1.0, false));
    }

    #[test]
    fn mask_csv_round_trip() {
        let m = mask_mcar_independent(7, 3, 0.4, &mut Rng::new(3)).unwrap();
        let bytes = m.to_csv(&["a", "b", "c"]).unwrap();
        assert_eq!(MaskMatrix::from_csv(&bytes).unwrap(), m);
        assert!(MaskMatrix::from_csv(b"a\n2\n").is_err());
    }
}
