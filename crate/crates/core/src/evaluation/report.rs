//! Plain-text rendering of evaluation reports.

use std::fmt::Write;

use crate::evaluation::{FidelityReport, ImputationReport, UtilityReport};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Left-aligned two-column table.
pub fn aligned(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

pub fn fidelity_text(r: &FidelityReport) -> String {
    let mut rows = vec![("composite".to_string(), format!("{:.2}%", r.composite))];
    rows.push(("mean shape".into(), format!("{:.4}", r.mean_shape)));
    rows.push(("mean trend".into(), opt(r.mean_trend)));
    for c in &r.column_shapes {
        rows.push((format!("shape {}", c.column), format!("{:.4}", c.score)));
    }
    for p in &r.pair_trends {
        rows.push((format!("trend {}~{}", p.left, p.right), format!("{:.4}", p.score)));
    }
    aligned(&rows)
}

pub fn utility_text(r: &UtilityReport) -> String {
    let task = serde_json::to_value(r.task).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    aligned(&[
        ("task".into(), task),
        ("target".into(), r.target.clone()),
        ("accuracy".into(), opt(r.accuracy)),
        ("binary_f1".into(), opt(r.binary_f1)),
        ("macro_f1".into(), opt(r.macro_f1)),
        ("weighted_f1".into(), opt(r.weighted_f1)),
        ("auroc".into(), opt(r.auroc)),
        ("rmse".into(), opt(r.rmse)),
        ("r2".into(), opt(r.r2)),
    ])
}

pub fn imputation_text(r: &ImputationReport) -> String {
    aligned(&[
        ("continuous_rmse".into(), opt(r.continuous_rmse)),
        ("categorical_error".into(), opt(r.categorical_error)),
        ("continuous_cells".into(), r.continuous_cells.to_string()),
        ("categorical_cells".into(), r.categorical_cells.to_string()),
    ])
}
