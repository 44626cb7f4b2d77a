//! Train-on-synthetic, test-on-real with logistic or ridge regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{encode, fit_encoder, Cell, Kind, Schema, Table};

pub const LOGISTIC_ITERATIONS: usize = 500;
pub const LOGISTIC_LR: f64 = 0.1;
pub const L2_PENALTY: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryClassification,
    MulticlassClassification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Class indices in `0..num_classes`.
    Classes { labels: Vec<usize>, num_classes: usize },
    Values(Vec<f64>),
}

/// Fitted downstream model. Coefficient vectors carry the intercept last.
#[derive(Debug, Clone, PartialEq)]
pub enum Downstream {
    /// One weight vector for binary tasks, one per class otherwise.
    Logistic { weights: Vec<Vec<f64>> },
    Ridge { coefficients: Vec<f64> },
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot_with_intercept(w: &[f64], x: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[x.len()]
}

fn fit_binary_logistic(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x.first().map_or(0, |r| r.len());
    let n = x.len() as f64;
    let mut w = vec![0.0; p + 1];
    let mut grad = vec![0.0; p + 1];
    for _ in 0..LOGISTIC_ITERATIONS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (row, &target) in x.iter().zip(y) {
            let r = sigmoid(dot_with_intercept(&w, row)) - target;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += r * v;
            }
            grad[p] += r;
        }
        for k in 0..=p {
            let penalty = if k < p { 2.0 * L2_PENALTY * w[k] } else { 0.0 };
            w[k] -= LOGISTIC_LR * (grad[k] / n + penalty);
        }
    }
    w
}

fn fit_ridge(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = x.first().map_or(0, |r| r.len());
    let design = DMatrix::from_fn(x.len(), p + 1, |i, j| if j < p { x[i][j] } else { 1.0 });
    let target = DVector::from_column_slice(y);
    let mut gram = design.transpose() * &design;
    for k in 0..p {
        gram[(k, k)] += L2_PENALTY;
    }
    let rhs = design.transpose() * target;
    let solution = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::Evaluation("ridge normal equations are singular".into()))?;
    Ok(solution.iter().copied().collect())
}

/// Logistic regression (gradient descent, one-vs-rest beyond two classes)
/// or ridge regression via the normal equations.
pub fn fit_downstream(features: &[Vec<f64>], targets: &Targets) -> Result<Downstream> {
    if features.is_empty() {
        return Err(Error::Evaluation("no training rows for the downstream model".into()));
    }
    match targets {
        Targets::Classes { labels, num_classes } => {
            if labels.len() != features.len() {
                return Err(Error::Evaluation("feature and label counts differ".into()));
            }
            let mut seen = vec![false; *num_classes];
            for &l in labels {
                seen[l] = true;
            }
            if seen.iter().filter(|&&s| s).count() < 2 {
                return Err(Error::Evaluation("classification needs at least two classes".into()));
            }
            let ovr = |c: usize| -> Vec<f64> { labels.iter().map(|&l| (l == c) as u8 as f64).collect() };
            let weights = if *num_classes == 2 {
                vec![fit_binary_logistic(features, &ovr(1))]
            } else {
                (0..*num_classes).map(|c| fit_binary_logistic(features, &ovr(c))).collect()
            };
            Ok(Downstream::Logistic { weights })
        }
        Targets::Values(y) => {
            if y.len() != features.len() {
                return Err(Error::Evaluation("feature and target counts differ".into()));
            }
            Ok(Downstream::Ridge {
                coefficients: fit_ridge(features, y)?,
            })
        }
    }
}

impl Downstream {
    /// Per-class scores for classifiers (positive-class probability for the
    /// binary model), or a single prediction for regression.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Downstream::Logistic { weights } if weights.len() == 1 => {
                let p = sigmoid(dot_with_intercept(&weights[0], x));
                vec![1.0 - p, p]
            }
            Downstream::Logistic { weights } => weights.iter().map(|w| sigmoid(dot_with_intercept(w, x))).collect(),
            Downstream::Ridge { coefficients } => vec![dot_with_intercept(coefficients, x)],
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for (i, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub task: Task,
    pub target: String,
    pub accuracy: Option<f64>,
    /// F1 of the positive class (binary tasks).
    pub binary_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub weighted_f1: Option<f64>,
    pub auroc: Option<f64>,
    pub rmse: Option<f64>,
    pub r2: Option<f64>,
}

/// Per-class F1 in a one-vs-rest sense.
pub fn f1_per_class(truth: &[usize], pred: &[usize], num_classes: usize) -> Vec<f64> {
    (0..num_classes)
        .map(|c| {
            let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
            for (&t, &p) in truth.iter().zip(pred) {
                match (t == c, p == c) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fneg += 1.0,
                    _ => {}
                }
            }
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fneg)
            }
        })
        .collect()
}

/// `Σ w_i F1_i` with `w_i = (1 − p_i)/(K − 1)` and `p_i` the class share in `truth`.
pub fn weighted_f1(truth: &[usize], pred: &[usize], num_classes: usize) -> f64 {
    let f1 = f1_per_class(truth, pred, num_classes);
    let n = truth.len() as f64;
    let k = num_classes as f64;
    (0..num_classes)
        .map(|c| {
            let p = truth.iter().filter(|&&t| t == c).count() as f64 / n;
            (1.0 - p) / (k - 1.0) * f1[c]
        })
        .sum()
}

/// Area under the ROC curve from the Mann–Whitney statistic with midranks.
/// `None` when either class is empty.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

fn features(table: &Table, feature_schema: &Schema, cols: &[usize]) -> Result<Vec<Vec<f64>>> {
    let rows = table
        .rows()
        .iter()
        .map(|r| cols.iter().map(|&j| r[j].clone()).collect())
        .collect();
    let sub = Table::new(feature_schema.clone(), rows)?;
    let (enc, _) = encode(&sub, feature_schema)?;
    Ok((0..enc.matrix.rows())
        .map(|i| enc.matrix.row(i).iter().map(|&v| v as f64).collect())
        .collect())
}

fn class_labels(table: &Table, target: usize, classes: &[String]) -> Result<Vec<usize>> {
    table
        .rows()
        .iter()
        .map(|r| match &r[target] {
            Cell::Category(c) => classes
                .iter()
                .position(|k| k == c)
                .ok_or_else(|| Error::Evaluation(format!("target class {c:?} unseen in training data"))),
            _ => Err(Error::Evaluation("target cell is NA".into())),
        })
        .collect()
}

fn values(table: &Table, target: usize) -> Result<Vec<f64>> {
    table
        .rows()
        .iter()
        .map(|r| r[target].as_number().ok_or_else(|| Error::Evaluation("target cell is NA".into())))
        .collect()
}

/// Fits on `synth` and scores on `real_test`. Features are every column but
/// the target, encoded with a schema fitted on `real_train`.
///
/// Binary tasks treat the last class in sorted label order as positive.
pub fn tstr(real_train: &Table, real_test: &Table, synth: &Table, target: &str) -> Result<UtilityReport> {
    let schema = real_train.schema();
    if !real_test.schema().same_layout(schema) || !synth.schema().same_layout(schema) {
        return Err(Error::Schema("utility tables must share one schema".into()));
    }
    let t = schema
        .index_of(target)
        .ok_or_else(|| Error::Evaluation(format!("target column {target:?} not in schema")))?;
    let cols: Vec<usize> = (0..schema.len()).filter(|&j| j != t).collect();
    let train_features = Table::new(
        Schema::new(cols.iter().map(|&j| schema.columns[j].clone()).collect())?,
        real_train.rows().iter().map(|r| cols.iter().map(|&j| r[j].clone()).collect()).collect(),
    )?;
    let feature_schema = fit_encoder(&train_features, train_features.schema())?;
    let x_synth = features(synth, &feature_schema, &cols)?;
    let x_test = features(real_test, &feature_schema, &cols)?;

    let empty = |task| UtilityReport {
        task,
        target: target.to_string(),
        accuracy: None,
        binary_f1: None,
        macro_f1: None,
        weighted_f1: None,
        auroc: None,
        rmse: None,
        r2: None,
    };

    match schema.columns[t].kind {
        Kind::Continuous => {
            let y_synth = values(synth, t)?;
            let y_test = values(real_test, t)?;
            let model = fit_downstream(&x_synth, &Targets::Values(y_synth))?;
            let pred: Vec<f64> = x_test.iter().map(|x| model.scores(x)[0]).collect();
            let n = y_test.len() as f64;
            let sse: f64 = pred.iter().zip(&y_test).map(|(p, y)| (p - y).powi(2)).sum();
            let mean = y_test.iter().sum::<f64>() / n;
            let sst: f64 = y_test.iter().map(|y| (y - mean).powi(2)).sum();
            Ok(UtilityReport {
                rmse: Some((sse / n).sqrt()),
                r2: Some(if sst > 0.0 { 1.0 - sse / sst } else { 0.0 }),
                ..empty(Task::Regression)
            })
        }
        Kind::Categorical => {
            let mut classes: Vec<String> = real_train.categories(t).iter().map(|c| c.to_string()).collect();
            classes.sort();
            classes.dedup();
            let synth_classes = synth.categories(t);
            if let Some(missing) = classes.iter().find(|c| !synth_classes.contains(&c.as_str())) {
                return Err(Error::Evaluation(format!("class {missing:?} absent from synthetic data")));
            }
            let k = classes.len();
            let y_synth = class_labels(synth, t, &classes)?;
            let y_test = class_labels(real_test, t, &classes)?;
            let model = fit_downstream(&x_synth, &Targets::Classes { labels: y_synth, num_classes: k })?;
            let pred: Vec<usize> = x_test.iter().map(|x| model.predict_class(x)).collect();
            let accuracy = pred.iter().zip(&y_test).filter(|(p, y)| p == y).count() as f64 / y_test.len() as f64;
            let f1 = f1_per_class(&y_test, &pred, k);
            let macro_f1 = f1.iter().sum::<f64>() / k as f64;
            let weighted = weighted_f1(&y_test, &pred, k);
            if k == 2 {
                let scores: Vec<f64> = x_test.iter().map(|x| model.scores(x)[1]).collect();
                let positive: Vec<bool> = y_test.iter().map(|&y| y == 1).collect();
                Ok(UtilityReport {
                    accuracy: Some(accuracy),
                    binary_f1: Some(f1[1]),
                    macro_f1: Some(macro_f1),
                    weighted_f1: Some(weighted),
                    auroc: auroc(&scores, &positive),
                    ..empty(Task::BinaryClassification)
                })
            } else {
                let per_class: Vec<f64> = (0..k)
                    .filter_map(|c| {
                        let scores: Vec<f64> = x_test.iter().map(|x| model.scores(x)[c]).collect();
                        let positive: Vec<bool> = y_test.iter().map(|&y| y == c).collect();
                        auroc(&scores, &positive)
                    })
                    .collect();
                Ok(UtilityReport {
                    accuracy: Some(accuracy),
                    macro_f1: Some(macro_f1),
                    weighted_f1: Some(weighted),
                    auroc: (!per_class.is_empty()).then(|| per_class.iter().sum::<f64>() / per_class.len() as f64),
                    ..empty(Task::MulticlassClassification)
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::tabular::generate_bayesian_network;

    #[test]
    fn separable_logistic_is_perfect() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let side = if i >= 20 { 1.0 } else { -1.0 };
                vec![side * (0.5 + (i % 20) as f64 / 40.0), (i % 7) as f64 / 7.0]
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| (i >= 20) as usize).collect();
        let m = fit_downstream(&x, &Targets::Classes { labels: labels.clone(), num_classes: 2 }).unwrap();
        let acc = x.iter().zip(&labels).filter(|(x, &l)| m.predict_class(x) == l).count();
        assert_eq!(acc, 40);
    }

    #[test]
    fn ridge_recovers_line_and_constant() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        match fit_downstream(&x, &Targets::Values(y)).unwrap() {
            Downstream::Ridge { coefficients } => {
                assert!((coefficients[0] - 2.0).abs() < 1e-3);
                assert!((coefficients[1] - 1.0).abs() < 1e-3);
            }
            _ => unreachable!(),
        }
        match fit_downstream(&x, &Targets::Values(vec![3.5; 50])).unwrap() {
            Downstream::Ridge { coefficients } => {
                assert!(coefficients[0].abs() < 1e-9);
                assert!((coefficients[1] - 3.5).abs() < 1e-9);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(fit_downstream(&x, &Targets::Classes { labels: vec![0, 0], num_classes: 2 }).is_err());
    }

    #[test]
    fn metric_definitions() {
        assert_eq!(f1_per_class(&[1, 0, 1], &[0, 0, 0], 2)[1], 0.0);
        assert_eq!(weighted_f1(&[0, 1, 2], &[0, 1, 2], 3), 1.0);
        assert_eq!(auroc(&[0.1, 0.9, 0.2, 0.8], &[false, true, false, true]), Some(1.0));
        assert_eq!(auroc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(auroc(&[0.5], &[true]), None);
        // 3 positives, 2 negatives; one inversion out of six pairs.
        let a = auroc(&[0.9, 0.4, 0.7, 0.5, 0.1], &[true, true, true, false, false]).unwrap();
        assert!((a - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn synth_equal_to_train_matches_train_on_real() {
        let train = generate_bayesian_network(500, &mut Rng::new(1)).unwrap();
        let test = generate_bayesian_network(300, &mut Rng::new(2)).unwrap();
        let a = tstr(&train, &test, &train, "D2").unwrap();
        let b = tstr(&train, &test, &train.clone(), "D2").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.task, Task::MulticlassClassification);
        assert!(a.accuracy.unwrap() > 0.5);
        let bin = tstr(&train, &test, &train, "D3").unwrap();
        assert!(bin.auroc.unwrap() > 0.5);
        let reg = tstr(&train, &test, &train, "C2").unwrap();
        assert!(reg.rmse.unwrap() > 0.0);
        assert!(tstr(&train, &test, &train, "nope").is_err());
    }

    #[test]
    fn shuffled_labels_give_roughly_majority_accuracy() {
        let train = generate_bayesian_network(1000, &mut Rng::new(1)).unwrap();
        let test = generate_bayesian_network(1000, &mut Rng::new(2)).unwrap();
        // Shuffling the target breaks any feature link but keeps the prior.
        let mut labels: Vec<Cell> = train.rows().iter().map(|r| r[4].clone()).collect();
        Rng::new(3).shuffle(&mut labels);
        let rows = train
            .rows()
            .iter()
            .zip(labels)
            .map(|(r, l)| {
                let mut r = r.clone();
                r[4] = l;
                r
            })
            .collect();
        let noisy = Table::new(train.schema().clone(), rows).unwrap();
        let report = tstr(&train, &test, &noisy, "D3").unwrap();
        let majority = {
            let ones = test.categories(4).iter().filter(|&&c| c == "1").count() as f64 / 1000.0;
            ones.max(1.0 - ones)
        };
        assert!((report.accuracy.unwrap() - majority).abs() < 0.05, "{report:?} vs {majority}");
    }
}
