//! Grid runner over mechanisms × missing ratios × methods × seeds.
//!
//! Within one `(mechanism, ratio, seed)` cell every method sees the same
//! data, mask, and network initialisation, so differences between methods
//! come from preprocessing alone.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{impute, mean_impute, sample, PreprocessMode, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    fidelity_score, imputation_error, tstr, FidelityReport, ImputationReport, UtilityReport,
};
use crate::missingness::{apply_mask, Mechanism, MechanismConfig, DEFAULT_ALWAYS_OBSERVED};
use crate::numerics::Rng;
use crate::tabular::{fit_encoder, generate_bayesian_network, load_table, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Missdiff,
    DiffMean,
    DiffDelete,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Missdiff, Method::DiffMean, Method::DiffDelete];

    pub fn mode(self) -> PreprocessMode {
        match self {
            Method::Missdiff => PreprocessMode::Missdiff,
            Method::DiffMean => PreprocessMode::MeanImpute,
            Method::DiffDelete => PreprocessMode::RowDelete,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Missdiff => "missdiff",
            Method::DiffMean => "diff_mean",
            Method::DiffDelete => "diff_delete",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Where the data for each seed comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    /// Fresh Bayesian-network draws of this many training rows per seed.
    BayesNet(usize),
    Csv(PathBuf),
}

impl std::str::FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("bn:") {
            Some(n) => n
                .parse()
                .map(Dataset::BayesNet)
                .map_err(|_| Error::InvalidConfig(format!("bad row count in dataset {s:?}"))),
            None => Ok(Dataset::Csv(PathBuf::from(s))),
        }
    }
}

impl std::fmt::Display for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dataset::BayesNet(n) => write!(f, "bn:{n}"),
            Dataset::Csv(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `bn:<rows>` or a CSV path.
    pub dataset: String,
    /// Held-out rows for utility scoring. Bayesian-network data draws them
    /// fresh; CSV data splits them off the input.
    pub test_rows: usize,
    pub mechanisms: Vec<Mechanism>,
    pub ratios: Vec<f64>,
    pub always_observed_fraction: f64,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Rows sampled per run; defaults to the training-set size.
    pub sample_rows: Option<usize>,
    /// Column for train-synthetic-test-real scoring; skipped when unset.
    pub target: Option<String>,
    pub impute: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "bn:2000".into(),
            test_rows: 1000,
            mechanisms: vec![Mechanism::McarIndependent],
            ratios: (1..=9).map(|i| i as f64 / 10.0).collect(),
            always_observed_fraction: DEFAULT_ALWAYS_OBSERVED,
            methods: Method::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
            sample_rows: None,
            target: Some("D2".into()),
            impute: true,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Dataset> {
        if self.mechanisms.is_empty() || self.ratios.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("experiment grids must be nonempty".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("experiment seeds must be distinct".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::InvalidConfig(format!("missing ratio {r} outside (0, 1)")));
        }
        self.train.validate()?;
        let dataset: Dataset = self.dataset.parse()?;
        if dataset == Dataset::BayesNet(0) {
            return Err(Error::InvalidConfig("dataset needs at least one row".into()));
        }
        Ok(dataset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// The method cannot run on this mask (row deletion leaves nothing).
    NotApplicable(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// SHA-256 of the canonical JSON of everything that determines the run.
    pub config_hash: String,
    pub mechanism: Mechanism,
    pub ratio: f64,
    pub method: Method,
    pub seed: u64,
    pub status: RunStatus,
    pub observed_missing_fraction: Option<f64>,
    pub rho_max: Option<f64>,
    pub final_loss: Option<f32>,
    pub fidelity: Option<FidelityReport>,
    pub utility: Option<UtilityReport>,
    pub utility_error: Option<String>,
    pub imputation: Option<ImputationReport>,
    pub imputation_failure: Option<String>,
    /// Column mean / mode fill scored on the same cells, for reference.
    pub mean_fill_imputation: Option<ImputationReport>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Sample standard deviation (`n − 1` denominator; 0 for one value).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mechanism: Mechanism,
    pub ratio: f64,
    pub method: Method,
    pub runs: usize,
    pub not_applicable: usize,
    pub failed: usize,
    pub fidelity: Option<MeanStd>,
    /// Accuracy for classification targets, RMSE for regression.
    pub utility: Option<MeanStd>,
    pub imputation_rmse: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

/// SHA-256 hex digest of `value`'s JSON with object keys sorted.
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap.
    let canonical = serde_json::to_vec(&serde_json::to_value(value)?)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

#[derive(Serialize)]
struct RunKey<'a> {
    dataset: &'a str,
    test_rows: usize,
    mechanism: MechanismConfig,
    method: Method,
    seed: u64,
    train: &'a TrainConfig,
    sample_rows: Option<usize>,
    target: &'a Option<String>,
    impute: bool,
}

struct CellData {
    truth: Table,
    test: Table,
}

fn load_cell_data(dataset: &Dataset, test_rows: usize, rng: &Rng) -> Result<CellData> {
    match dataset {
        Dataset::BayesNet(n) => Ok(CellData {
            truth: generate_bayesian_network(*n, &mut rng.split_named("train-data"))?,
            test: generate_bayesian_network(test_rows.max(1), &mut rng.split_named("test-data"))?,
        }),
        Dataset::Csv(path) => {
            let table = load_table(&std::fs::read(path)?, None)?;
            let n = table.n_rows();
            if test_rows >= n {
                return Err(Error::InvalidConfig(format!("test_rows {test_rows} leaves no training rows out of {n}")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            rng.split_named("split").shuffle(&mut order);
            let (test, train) = order.split_at(test_rows.max(1));
            Ok(CellData {
                truth: table.select_rows(train),
                test: table.select_rows(test),
            })
        }
    }
}

fn run_method(
    config: &ExperimentConfig,
    data: &CellData,
    observed: &Table,
    mask: &crate::missingness::MaskMatrix,
    method: Method,
    train_seed: u64,
    rng: &Rng,
    record: &mut RunRecord,
) -> Result<()> {
    let train_config = TrainConfig {
        mode: method.mode(),
        seed: train_seed,
        ..config.train.clone()
    };
    let ckpt = crate::diffusion::train(&data.truth, mask, &train_config)?;
    record.rho_max = Some(ckpt.rho.max);
    record.final_loss = ckpt.loss_trace.last().copied();

    let n = config.sample_rows.unwrap_or(data.truth.n_rows());
    let synth = sample(&ckpt, n, &rng.split_named("sample"))?;
    record.fidelity = Some(fidelity_score(&data.truth, &synth, data.truth.schema())?);

    if let Some(target) = &config.target {
        match tstr(&data.truth, &data.test, &synth, target) {
            Ok(u) => record.utility = Some(u),
            Err(e) => record.utility_error = Some(e.to_string()),
        }
    }
    if config.impute {
        let scoring = fit_encoder(&data.truth, data.truth.schema())?;
        // A model trained on deleted rows may not know every category.
        match impute(&ckpt, observed, 1, &rng.split_named("impute")) {
            Ok(completed) => record.imputation = Some(imputation_error(&completed[0], &data.truth, mask, &scoring)?),
            Err(e) => record.imputation_failure = Some(e.to_string()),
        }
        let filled = mean_impute(observed)?;
        record.mean_fill_imputation = Some(imputation_error(&filled, &data.truth, mask, &scoring)?);
    }
    Ok(())
}

/// Runs every `(mechanism, ratio, seed)` cell and every method within it.
/// A failing run is recorded and the grid continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let dataset = config.validate()?;
    let mut records = Vec::new();
    for &mechanism in &config.mechanisms {
        for &ratio in &config.ratios {
            for &seed in &config.seeds {
                let root = Rng::new(seed);
                let mech = MechanismConfig {
                    kind: mechanism,
                    ratio,
                    always_observed_fraction: config.always_observed_fraction,
                };
                let prepared = load_cell_data(&dataset, config.test_rows, &root).and_then(|data| {
                    let mask = mech.generate(&data.truth, &mut root.split_named(mechanism.name()).split(ratio.to_bits()))?;
                    let observed = apply_mask(&data.truth, &mask)?;
                    Ok((data, mask, observed))
                });
                let train_seed = root.split_named("train").seed();
                for &method in &config.methods {
                    let started = Instant::now();
                    let key = RunKey {
                        dataset: &config.dataset,
                        test_rows: config.test_rows,
                        mechanism: mech,
                        method,
                        seed,
                        train: &config.train,
                        sample_rows: config.sample_rows,
                        target: &config.target,
                        impute: config.impute,
                    };
                    let mut record = RunRecord {
                        config_hash: canonical_hash(&key)?,
                        mechanism,
                        ratio,
                        method,
                        seed,
                        status: RunStatus::Ok,
                        observed_missing_fraction: None,
                        rho_max: None,
                        final_loss: None,
                        fidelity: None,
                        utility: None,
                        utility_error: None,
                        imputation: None,
                        imputation_failure: None,
                        mean_fill_imputation: None,
                        wall_clock_secs: 0.0,
                    };
                    let outcome = match &prepared {
                        Ok((data, mask, observed)) => {
                            record.observed_missing_fraction = Some(mask.missing_fraction());
                            run_method(config, data, observed, mask, method, train_seed, &root.split_named(method.name()), &mut record)
                        }
                        Err(e) => Err(Error::Evaluation(format!("data preparation failed: {e}"))),
                    };
                    record.status = match outcome {
                        Ok(()) => RunStatus::Ok,
                        Err(Error::NoCompleteRows) => RunStatus::NotApplicable("no complete rows left after deletion".into()),
                        Err(e) => RunStatus::Failed(e.to_string()),
                    };
                    record.wall_clock_secs = started.elapsed().as_secs_f64();
                    records.push(record);
                }
            }
        }
    }
    let summary = summarize(&records, config);
    Ok(ExperimentOutput { records, summary })
}

pub fn summarize(records: &[RunRecord], config: &ExperimentConfig) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &mechanism in &config.mechanisms {
        for &ratio in &config.ratios {
            for &method in &config.methods {
                let cell: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.mechanism == mechanism && r.ratio == ratio && r.method == method)
                    .collect();
                let ok: Vec<&RunRecord> = cell.iter().copied().filter(|r| r.status == RunStatus::Ok).collect();
                let collect = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
                rows.push(SummaryRow {
                    mechanism,
                    ratio,
                    method,
                    runs: cell.len(),
                    not_applicable: cell.iter().filter(|r| matches!(r.status, RunStatus::NotApplicable(_))).count(),
                    failed: cell.iter().filter(|r| matches!(r.status, RunStatus::Failed(_))).count(),
                    fidelity: MeanStd::of(&collect(&|r| r.fidelity.as_ref().map(|f| f.composite))),
                    utility: MeanStd::of(&collect(&|r| r.utility.as_ref().and_then(|u| u.accuracy.or(u.rmse)))),
                    imputation_rmse: MeanStd::of(&collect(&|r| r.imputation.as_ref().and_then(|i| i.continuous_rmse))),
                });
            }
        }
    }
    rows
}

fn fmt_opt(v: Option<MeanStd>, pick: fn(&MeanStd) -> f64) -> String {
    v.map(|m| pick(&m).to_string()).unwrap_or_default()
}

pub fn summary_csv(summary: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mechanism",
        "missing_ratio",
        "method",
        "runs",
        "not_applicable",
        "failed",
        "fidelity_mean",
        "fidelity_std",
        "utility_mean",
        "utility_std",
        "imputation_rmse_mean",
        "imputation_rmse_std",
    ])?;
    for r in summary {
        w.write_record([
            r.mechanism.name().to_string(),
            r.ratio.to_string(),
            r.method.name().to_string(),
            r.runs.to_string(),
            r.not_applicable.to_string(),
            r.failed.to_string(),
            fmt_opt(r.fidelity, |m| m.mean),
            fmt_opt(r.fidelity, |m| m.std),
            fmt_opt(r.utility, |m| m.mean),
            fmt_opt(r.utility, |m| m.std),
            fmt_opt(r.imputation_rmse, |m| m.mean),
            fmt_opt(r.imputation_rmse, |m| m.std),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Fidelity-versus-ratio curve for one mechanism: `missing_ratio,method,mean,std`.
pub fn curve_csv(summary: &[SummaryRow], mechanism: Mechanism) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["missing_ratio", "method", "mean", "std"])?;
    for r in summary.iter().filter(|r| r.mechanism == mechanism) {
        w.write_record([
            r.ratio.to_string(),
            r.method.name().to_string(),
            fmt_opt(r.fidelity, |m| m.mean),
            fmt_opt(r.fidelity, |m| m.std),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Writes `records.json`, `summary.json`, `summary.csv` and one
/// `curve_<mechanism>.csv` per mechanism into `dir`.
pub fn write_outputs(output: &ExperimentOutput, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("records.json"), serde_json::to_vec_pretty(&output.records)?)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&output.summary)?)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(&output.summary)?)?;
    for &m in &config.mechanisms {
        std::fs::write(dir.join(format!("curve_{}.csv", m.name())), curve_csv(&output.summary, m)?)?;
    }
    Ok(())
}
