//! Fidelity, downstream utility and imputation metrics.

mod fidelity;
mod imputation;
mod report;
mod utility;

pub use fidelity::{
    correlation_ratio, cramers_v, fidelity_score, ks_statistic, pearson, tv_distance, ColumnShape, FidelityReport,
    PairTrend,
};
pub use imputation::{imputation_error, ImputationReport};
pub use report::{aligned, fidelity_text, imputation_text, utility_text};
pub use utility::{
    auroc, f1_per_class, fit_downstream, tstr, weighted_f1, Downstream, Targets, Task, UtilityReport, L2_PENALTY,
    LOGISTIC_ITERATIONS, LOGISTIC_LR,
};
