//! Column-shape and pairwise-trend similarity between two tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{Cell, Kind, Schema, Table};

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Evaluation("KS statistic needs two nonempty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

fn frequencies<'a>(values: &[&'a str]) -> BTreeMap<&'a str, f64> {
    let mut out = BTreeMap::new();
    for &v in values {
        *out.entry(v).or_insert(0.0) += 1.0;
    }
    let n = values.len() as f64;
    out.values_mut().for_each(|c| *c /= n);
    out
}

/// Total variation distance between two empirical category distributions.
pub fn tv_distance(a: &[&str], b: &[&str]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Evaluation("TV distance needs two nonempty samples".into()));
    }
    let (pa, pb) = (frequencies(a), frequencies(b));
    let mut total = 0.0;
    for (k, p) in &pa {
        total += (p - pb.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, p) in &pb {
        if !pa.contains_key(k) {
            total += p;
        }
    }
    Ok((0.5 * total).min(1.0))
}

/// Sample Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Cramér's V of two categorical samples, in `[0, 1]`.
pub fn cramers_v(a: &[&str], b: &[&str]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let mut joint: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut ra: BTreeMap<&str, f64> = BTreeMap::new();
    let mut rb: BTreeMap<&str, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *ra.entry(x).or_insert(0.0) += 1.0;
        *rb.entry(y).or_insert(0.0) += 1.0;
    }
    let k = ra.len().min(rb.len());
    if k < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mut chi2 = 0.0;
    for (x, cx) in &ra {
        for (y, cy) in &rb {
            let expected = cx * cy / nf;
            let observed = joint.get(&(*x, *y)).copied().unwrap_or(0.0);
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    (chi2 / (nf * (k - 1) as f64)).sqrt().clamp(0.0, 1.0)
}

/// Correlation ratio η of a numeric sample grouped by a categorical one.
pub fn correlation_ratio(groups: &[&str], values: &[f64]) -> f64 {
    let n = groups.len().min(values.len());
    if n == 0 {
        return 0.0;
    }
    let mean = values[..n].iter().sum::<f64>() / n as f64;
    let mut by: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (&g, &v) in groups.iter().zip(values) {
        let e = by.entry(g).or_insert((0.0, 0.0));
        e.0 += v;
        e.1 += 1.0;
    }
    let total: f64 = values[..n].iter().map(|v| (v - mean).powi(2)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let between: f64 = by.values().map(|(s, c)| c * (s / c - mean).powi(2)).sum();
    (between / total).sqrt().clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnShape {
    pub column: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTrend {
    pub left: String,
    pub right: String,
    pub real: f64,
    pub synthetic: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub column_shapes: Vec<ColumnShape>,
    pub pair_trends: Vec<PairTrend>,
    pub mean_shape: f64,
    /// `None` for single-column tables.
    pub mean_trend: Option<f64>,
    /// Percentage in `[0, 100]`.
    pub composite: f64,
}

fn association(table: &Table, schema: &Schema, i: usize, j: usize) -> f64 {
    let both: Vec<(&Cell, &Cell)> = table
        .rows()
        .iter()
        .map(|r| (&r[i], &r[j]))
        .filter(|(a, b)| !a.is_na() && !b.is_na())
        .collect();
    fn num(c: &Cell) -> f64 {
        c.as_number().unwrap_or(0.0)
    }
    fn cat(c: &Cell) -> &str {
        c.as_category().unwrap_or("")
    }
    match (schema.columns[i].kind, schema.columns[j].kind) {
        (Kind::Continuous, Kind::Continuous) => {
            let x: Vec<f64> = both.iter().map(|(a, _)| num(a)).collect();
            let y: Vec<f64> = both.iter().map(|(_, b)| num(b)).collect();
            pearson(&x, &y)
        }
        (Kind::Categorical, Kind::Categorical) => {
            let x: Vec<&str> = both.iter().map(|(a, _)| cat(a)).collect();
            let y: Vec<&str> = both.iter().map(|(_, b)| cat(b)).collect();
            cramers_v(&x, &y)
        }
        (Kind::Categorical, Kind::Continuous) => {
            let g: Vec<&str> = both.iter().map(|(a, _)| cat(a)).collect();
            let v: Vec<f64> = both.iter().map(|(_, b)| num(b)).collect();
            correlation_ratio(&g, &v)
        }
        (Kind::Continuous, Kind::Categorical) => {
            let g: Vec<&str> = both.iter().map(|(_, b)| cat(b)).collect();
            let v: Vec<f64> = both.iter().map(|(a, _)| num(a)).collect();
            correlation_ratio(&g, &v)
        }
    }
}

fn shape_score(real: &Table, synth: &Table, j: usize, kind: Kind) -> Result<f64> {
    let d = match kind {
        Kind::Continuous => ks_statistic(&real.numbers(j), &synth.numbers(j))?,
        Kind::Categorical => tv_distance(&real.categories(j), &synth.categories(j))?,
    };
    Ok(1.0 - d)
}

/// Shape score `1 − KS` or `1 − TV` per column; trend score
/// `1 − |assoc_real − assoc_synth| / 2` per unordered column pair.
pub fn fidelity_score(real: &Table, synth: &Table, schema: &Schema) -> Result<FidelityReport> {
    if !real.schema().same_layout(schema) || !synth.schema().same_layout(schema) {
        return Err(Error::Schema("fidelity tables must share one schema".into()));
    }
    let d = schema.len();
    let column_shapes = (0..d)
        .map(|j| {
            Ok(ColumnShape {
                column: schema.columns[j].name.clone(),
                score: shape_score(real, synth, j, schema.columns[j].kind)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pair_trends = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let r = association(real, schema, i, j);
            let s = association(synth, schema, i, j);
            pair_trends.push(PairTrend {
                left: schema.columns[i].name.clone(),
                right: schema.columns[j].name.clone(),
                real: r,
                synthetic: s,
                score: 1.0 - (r - s).abs() / 2.0,
            });
        }
    }
    let mean_shape = column_shapes.iter().map(|c| c.score).sum::<f64>() / d as f64;
    let mean_trend = (!pair_trends.is_empty())
        .then(|| pair_trends.iter().map(|p| p.score).sum::<f64>() / pair_trends.len() as f64);
    let composite = 100.0
        * match mean_trend {
            Some(t) => (mean_shape + t) / 2.0,
            None => mean_shape,
        };
    Ok(FidelityReport {
        column_shapes,
        pair_trends,
        mean_shape,
        mean_trend,
        composite: composite.clamp(0.0, 100.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::tabular::generate_bayesian_network;

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[10.0, 11.0]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 8.0]).unwrap(), 0.25);
        assert!(ks_statistic(&[], &[1.0]).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&["a", "b"], &["b", "a"]).unwrap(), 0.0);
        assert_eq!(tv_distance(&["a", "a"], &["b"]).unwrap(), 1.0);
        let b = ["x", "x", "x", "x", "x", "x", "x", "x", "y", "y"];
        let got = tv_distance(&["x", "y"], &b).unwrap();
        assert!((got - 0.3).abs() < 1e-12);
    }

    #[test]
    fn association_measures() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 3.0]), 0.0);
        assert!((cramers_v(&["a", "b", "a", "b"], &["x", "y", "x", "y"]) - 1.0).abs() < 1e-12);
        assert_eq!(cramers_v(&["a", "a"], &["x", "y"]), 0.0);
        assert!((correlation_ratio(&["a", "a", "b", "b"], &[1.0, 1.0, 5.0, 5.0]) - 1.0).abs() < 1e-12);
        assert_eq!(correlation_ratio(&["a", "b", "a", "b"], &[1.0, 1.0, 3.0, 3.0]), 0.0);
    }

    #[test]
    fn identical_tables_score_100() {
        let t = generate_bayesian_network(300, &mut Rng::new(1)).unwrap();
        let r = fidelity_score(&t, &t, t.schema()).unwrap();
        assert_eq!(r.composite, 100.0);
        assert_eq!(r.pair_trends.len(), 10);
    }

    #[test]
    fn shifted_column_loses_its_shape_score() {
        let t = generate_bayesian_network(300, &mut Rng::new(1)).unwrap();
        let c1 = t.numbers(0);
        let range = c1.iter().copied().fold(f64::NEG_INFINITY, f64::max) - c1.iter().copied().fold(f64::INFINITY, f64::min);
        let rows = t
            .rows()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[0] = Cell::Number(r[0].as_number().unwrap() + 10.0 * range);
                r
            })
            .collect();
        let shifted = Table::new(t.schema().clone(), rows).unwrap();
        let r = fidelity_score(&t, &shifted, t.schema()).unwrap();
        assert!(r.column_shapes[0].score < 1e-9);
        assert!(r.composite < 100.0);
    }

    #[test]
    fn resamples_are_similar_order_free_and_symmetric() {
        let a = generate_bayesian_network(2000, &mut Rng::new(1)).unwrap();
        let b = generate_bayesian_network(2000, &mut Rng::new(2)).unwrap();
        let ab = fidelity_score(&a, &b, a.schema()).unwrap();
        assert!(ab.composite > 95.0, "{}", ab.composite);
        let ba = fidelity_score(&b, &a, a.schema()).unwrap();
        assert!((ab.composite - ba.composite).abs() < 1e-9);
        let rev: Vec<usize> = (0..2000).rev().collect();
        let ar = a.select_rows(&rev);
        let r = fidelity_score(&ar, &b, a.schema()).unwrap();
        assert!((r.composite - ab.composite).abs() < 1e-9);
    }
}
