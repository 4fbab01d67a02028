//! Diagnostics computed from score sets: histograms, summary tables,
//! logistic attribution, and Spearman association with compositional data.

mod composition;
mod histogram;
mod logistic;
mod spearman;
mod summary;

pub use composition::{
    aggregate_groups, association_scan, clr_transform, CompositionTable, GroupAssociation,
    GroupMapping, LevelAssociation, DEFAULT_PSEUDOCOUNT, ROW_SUM_TOLERANCE,
};
pub use histogram::{histogram, Histogram, HistogramSeries};
pub use logistic::{
    fit_logistic, logistic_attribution, negative_log_likelihood, AttributionReport,
    CoefficientRow, LogisticFit, COEF_CLAMP, INTERCEPT, MAX_ITERATIONS, RIDGE,
};
pub use spearman::{average_ranks, spearman, spearman_permutation, SpearmanResult};
pub use summary::{quantile_sorted, stratified_summary, summarize, summarize_values, SummaryStats};
