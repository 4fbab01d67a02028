use std::collections::BTreeMap;

use serde::Serialize;

use super::spearman::spearman;
use crate::error::{Error, Result};
use crate::estimator::ScoreSet;
use crate::numerics::{Matrix, SampleMatrix};

pub const ROW_SUM_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_PSEUDOCOUNT: f64 = 1e-6;

/// Column name → group name for one aggregation level.
pub type GroupMapping = BTreeMap<String, String>;

/// Relative abundances: nonnegative rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionTable {
    values: SampleMatrix,
}

impl CompositionTable {
    pub fn new(values: SampleMatrix) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::Empty("composition table without columns"));
        }
        for i in 0..values.rows() {
            let row = values.row(i);
            if let Some(j) = row.iter().position(|&v| v < 0.0) {
                return Err(Error::Domain(format!(
                    "negative abundance {} at row {i}, column {}",
                    row[j],
                    values.column_name(j)
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Domain(format!("row {i} sums to {s}, expected 1")));
            }
        }
        Ok(CompositionTable { values })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn taxa(&self) -> Vec<String> {
        (0..self.values.cols()).map(|j| self.values.column_name(j)).collect()
    }

    pub fn values(&self) -> &SampleMatrix {
        &self.values
    }
}

/// Sums member columns into groups; groups appear in order of their first
/// member column.
pub fn aggregate_groups(table: &CompositionTable, mapping: &GroupMapping) -> Result<CompositionTable> {
    let taxa = table.taxa();
    let mut groups: Vec<String> = Vec::new();
    let mut target = Vec::with_capacity(taxa.len());
    for name in &taxa {
        let g = mapping
            .get(name)
            .ok_or_else(|| Error::Config(format!("column {name} has no group")))?;
        let k = match groups.iter().position(|x| x == g) {
            Some(k) => k,
            None => {
                groups.push(g.clone());
                groups.len() - 1
            }
        };
        target.push(k);
    }
    let n = table.rows();
    let mut out = Matrix::zeros(n, groups.len());
    for i in 0..n {
        let src = table.values.row(i);
        let dst = out.row_mut(i);
        for (v, &k) in src.iter().zip(&target) {
            dst[k] += v;
        }
    }
    Ok(CompositionTable {
        values: SampleMatrix::new(out, Some(groups))?,
    })
}

/// Centred log-ratio of `x + pseudocount`, renormalized per row.
pub fn clr_transform(table: &CompositionTable, pseudocount: f64) -> Result<SampleMatrix> {
    if !(pseudocount.is_finite() && pseudocount >= 0.0) {
        return Err(Error::Domain(format!("pseudocount must be >= 0, got {pseudocount}")));
    }
    let (n, k) = table.values.shape();
    let mut out = Matrix::zeros(n, k);
    for i in 0..n {
        let row = table.values.row(i);
        if let Some(j) = row.iter().position(|&v| v < 0.0) {
            return Err(Error::Domain(format!("negative abundance at row {i}, column {j}")));
        }
        let total: f64 = row.iter().map(|v| v + pseudocount).sum();
        let logs: Vec<f64> = row.iter().map(|v| ((v + pseudocount) / total).ln()).collect();
        if logs.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain(format!(
                "zero abundance at row {i} needs a positive pseudocount"
            )));
        }
        let centre = logs.iter().sum::<f64>() / k as f64;
        for (o, l) in out.row_mut(i).iter_mut().zip(&logs) {
            *o = l - centre;
        }
    }
    SampleMatrix::new(out, Some(table.taxa()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAssociation {
    pub group: String,
    /// `None` when the group's CLR column is constant.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelAssociation {
    pub level: String,
    /// Sorted by |rho| descending; undefined groups last.
    pub groups: Vec<GroupAssociation>,
}

/// For each level: aggregate, CLR-transform, then Spearman of the stacked
/// scores against every group column.
pub fn association_scan(
    scores: &[ScoreSet],
    table: &CompositionTable,
    levels: &[(String, GroupMapping)],
    pseudocount: f64,
) -> Result<Vec<LevelAssociation>> {
    let stacked: Vec<f64> = scores.iter().flat_map(|s| s.scores.iter().copied()).collect();
    if stacked.len() != table.rows() {
        return Err(Error::shape("association scan rows", stacked.len(), table.rows()));
    }
    let mut out = Vec::with_capacity(levels.len());
    for (level, mapping) in levels {
        let aggregated = aggregate_groups(table, mapping)?;
        let clr = clr_transform(&aggregated, pseudocount)?;
        let mut groups = Vec::with_capacity(clr.cols());
        for j in 0..clr.cols() {
            let (rho, p_value) = match spearman(&stacked, &clr.column(j)) {
                Ok(r) => (Some(r.rho), Some(r.p_value)),
                Err(Error::Undefined(_)) => (None, None),
                Err(e) => return Err(e),
            };
            groups.push(GroupAssociation {
                group: clr.column_name(j),
                rho,
                p_value,
            });
        }
        groups.sort_by(|a, b| match (a.rho, b.rho) {
            (Some(x), Some(y)) => y.abs().total_cmp(&x.abs()),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        out.push(LevelAssociation {
            level: level.clone(),
            groups,
        });
    }
    Ok(out)
}
