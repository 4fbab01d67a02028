use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::ScoreSet;

/// Counts for one input score set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramSeries {
    pub source_label: String,
    pub counts: Vec<u64>,
    /// `count / (n · width)`, with `n` the full series size including overflow.
    pub density: Vec<f64>,
    pub below: u64,
    pub above: u64,
    /// NaN scores; kept separate so nothing is dropped silently.
    pub non_finite: u64,
}

impl HistogramSeries {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above + self.non_finite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub series: Vec<HistogramSeries>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }
}

fn bin_index(x: f64, edges: &[f64]) -> Option<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    if x < lo || x > hi {
        return None;
    }
    let mut k = (((x - lo) / (hi - lo)) * bins as f64) as usize;
    k = k.min(bins - 1);
    // the arithmetic guess can be off by one near an edge
    while k > 0 && x < edges[k] {
        k -= 1;
    }
    while k + 1 < bins && x >= edges[k + 1] {
        k += 1;
    }
    Some(k)
}

/// Bins every score set on `[lo, hi]`; bins are half-open except the last.
pub fn histogram(scores: &[ScoreSet], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("invalid histogram range [{lo}, {hi}]")));
    }
    let edges: Vec<f64> = (0..=bins)
        .map(|k| {
            if k == bins {
                hi
            } else {
                lo + (hi - lo) * (k as f64 / bins as f64)
            }
        })
        .collect();
    let width = (hi - lo) / bins as f64;

    let series = scores
        .iter()
        .map(|set| {
            let mut counts = vec![0u64; bins];
            let (mut below, mut above, mut non_finite) = (0, 0, 0);
            for &x in &set.scores {
                if x.is_nan() {
                    non_finite += 1;
                } else if let Some(k) = bin_index(x, &edges) {
                    counts[k] += 1;
                } else if x < lo {
                    below += 1;
                } else {
                    above += 1;
                }
            }
            let n = set.scores.len() as f64;
            let density = counts
                .iter()
                .map(|&c| if n > 0.0 { c as f64 / (n * width) } else { 0.0 })
                .collect();
            HistogramSeries {
                source_label: set.source_label.as_str().to_string(),
                counts,
                density,
                below,
                above,
                non_finite,
            }
        })
        .collect();
    Ok(Histogram { edges, series })
}
