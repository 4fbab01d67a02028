use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::ScoreSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub length: usize,
    pub mean: f64,
    /// Sample standard deviation (n−1 denominator); 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Type-7 quantile of already sorted values: `h = (n−1)p`, linear in between.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Works on a sorted copy, so the result does not depend on input order.
pub fn summarize_values(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Empty("summary of no scores"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("score {i} is {}", values[i])));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = sorted.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    // keep quantiles ordered even when interpolation rounds
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5).max(q1);
    let q3 = quantile_sorted(&sorted, 0.75).max(median);
    Ok(SummaryStats {
        length: n,
        mean,
        std,
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[n - 1],
    })
}

pub fn summarize(scores: &ScoreSet) -> Result<SummaryStats> {
    summarize_values(&scores.scores)
}

/// One summary per distinct label, in lexicographic label order.
pub fn stratified_summary(
    scores: &ScoreSet,
    labels: &[String],
) -> Result<BTreeMap<String, SummaryStats>> {
    if labels.len() != scores.len() {
        return Err(Error::shape("stratified_summary", scores.len(), labels.len()));
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, &s) in labels.iter().zip(&scores.scores) {
        groups.entry(label.clone()).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(label, values)| summarize_values(&values).map(|s| (label, s)))
        .collect()
}
