use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimator::ScoreSet;
use crate::numerics::{invert, logistic, solve_square, stable_softplus, DenseSquareSystem, Matrix, SampleMatrix};

/// Penalty `½·RIDGE·‖β‖²`, which puts `RIDGE` on the Hessian diagonal.
pub const RIDGE: f64 = 1e-8;
pub const COEF_CLAMP: f64 = 30.0;
pub const MAX_ITERATIONS: usize = 100;
pub const STEP_TOLERANCE: f64 = 1e-8;
pub const INTERCEPT: &str = "(intercept)";
const COLLINEAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coef: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionReport {
    /// Sorted by ascending p-value; the intercept is one of the rows.
    pub rows: Vec<CoefficientRow>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    pub threshold: f64,
    pub n: usize,
    pub positives: usize,
}

impl AttributionReport {
    pub fn row(&self, name: &str) -> Option<&CoefficientRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Raw output of the penalized Newton fit, in design-column order.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub std_error: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
}

/// `Σ softplus(η) − yη + ½·RIDGE·‖β‖²`.
pub fn negative_log_likelihood(design: &Matrix, y: &[f64], coef: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let eta = dot(design.row(i), coef);
        total += stable_softplus(eta) - yi * eta;
    }
    total + 0.5 * RIDGE * coef.iter().map(|c| c * c).sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column indices that are (numerically) linear combinations of others,
/// together with the columns they depend on.
fn collinear_columns(design: &Matrix) -> Vec<usize> {
    let (n, k) = design.shape();
    let cols: Vec<Vec<f64>> = (0..k).map(|j| design.column(j)).collect();
    // orthonormal basis, and each basis vector written in original columns
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut basis_in_cols: Vec<Vec<f64>> = Vec::new();
    let mut involved = vec![false; k];
    for j in 0..k {
        let norm0 = dot(&cols[j], &cols[j]).sqrt();
        let mut v = cols[j].clone();
        let mut proj = vec![0.0; basis.len()];
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (q, c) in basis.iter().zip(proj.iter_mut()) {
                let d = dot(q, &v);
                *c += d;
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm0 == 0.0 || norm <= COLLINEAR_TOLERANCE * norm0 {
            involved[j] = true;
            let mut combo = vec![0.0; k];
            for (c, t) in proj.iter().zip(&basis_in_cols) {
                for (o, ti) in combo.iter_mut().zip(t) {
                    *o += c * ti;
                }
            }
            let scale = combo.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            for (l, c) in combo.iter().enumerate() {
                if scale > 0.0 && c.abs() > 1e-8 * scale {
                    involved[l] = true;
                }
            }
            continue;
        }
        let mut t = vec![0.0; k];
        t[j] = 1.0;
        for (c, tb) in proj.iter().zip(&basis_in_cols) {
            for (o, ti) in t.iter_mut().zip(tb) {
                *o -= c * ti;
            }
        }
        for o in t.iter_mut() {
            *o /= norm;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
        basis_in_cols.push(t);
    }
    debug_assert!(n > 0 || k == 0);
    (0..k).filter(|&j| involved[j]).collect()
}

/// Newton/IRLS fit of a logistic regression on a full design matrix
/// (intercept column included by the caller).
pub fn fit_logistic(design: &Matrix, y: &[f64], names: &[String]) -> Result<LogisticFit> {
    let (n, k) = design.shape();
    if y.len() != n {
        return Err(Error::shape("logistic design rows", n, y.len()));
    }
    if names.len() != k {
        return Err(Error::shape("logistic column names", k, names.len()));
    }
    if n == 0 {
        return Err(Error::Empty("logistic regression on no rows"));
    }
    if design.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariate entry".into()));
    }
    let collinear = collinear_columns(design);
    if !collinear.is_empty() {
        return Err(Error::RankDeficient {
            columns: collinear.into_iter().map(|j| names[j].clone()).collect(),
        });
    }

    let mut coef = vec![0.0; k];
    let mut converged = false;
    let mut clamped = false;
    let mut iterations = 0;
    let mut hessian = Matrix::zeros(k, k);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (grad, h) = gradient_and_hessian(design, y, &coef);
        hessian = h;
        let step = solve_square(&DenseSquareSystem::new(hessian.clone(), grad)?)?;
        let mut max_change = 0.0f64;
        for (c, s) in coef.iter_mut().zip(&step) {
            let mut next = *c - s;
            if next.abs() > COEF_CLAMP {
                next = next.clamp(-COEF_CLAMP, COEF_CLAMP);
                clamped = true;
            }
            max_change = max_change.max((next - *c).abs());
            *c = next;
        }
        if max_change <= STEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    // information at the reported coefficients
    if !converged || clamped {
        hessian = gradient_and_hessian(design, y, &coef).1;
    }
    let cov = invert(&hessian)?;
    let std_error = (0..k).map(|j| cov.get(j, j).max(0.0).sqrt()).collect();

    let separation = clamped || separates(design, y, &coef);
    Ok(LogisticFit {
        coef,
        std_error,
        converged,
        iterations,
        separation,
    })
}

fn gradient_and_hessian(design: &Matrix, y: &[f64], coef: &[f64]) -> (Vec<f64>, Matrix) {
    let k = coef.len();
    let mut grad: Vec<f64> = coef.iter().map(|c| RIDGE * c).collect();
    let mut h = Matrix::zeros(k, k);
    for (i, &yi) in y.iter().enumerate() {
        let row = design.row(i);
        let mu = logistic(dot(row, coef));
        let w = mu * (1.0 - mu);
        for a in 0..k {
            grad[a] += (mu - yi) * row[a];
            let wa = w * row[a];
            for b in a..k {
                let v = h.get(a, b) + wa * row[b];
                h.set(a, b, v);
            }
        }
    }
    for a in 0..k {
        h.set(a, a, h.get(a, a) + RIDGE);
        for b in 0..a {
            h.set(a, b, h.get(b, a));
        }
    }
    (grad, h)
}

/// True when the fitted linear predictor splits the two classes perfectly,
/// or when only one class is present.
fn separates(design: &Matrix, y: &[f64], coef: &[f64]) -> bool {
    let mut max_neg = f64::NEG_INFINITY;
    let mut min_pos = f64::INFINITY;
    for (i, &yi) in y.iter().enumerate() {
        let eta = dot(design.row(i), coef);
        if yi > 0.5 {
            min_pos = min_pos.min(eta);
        } else {
            max_neg = max_neg.max(eta);
        }
    }
    min_pos.is_infinite() || max_neg.is_infinite() || min_pos > max_neg
}

/// Joint logistic regression of `1{score > threshold}` on all covariates.
///
/// Rows are put in a canonical order before fitting, so the report does not
/// depend on the order of the input rows.
pub fn logistic_attribution(
    scores: &ScoreSet,
    covariates: &SampleMatrix,
    threshold: f64,
) -> Result<AttributionReport> {
    let n = scores.len();
    if covariates.rows() != n {
        return Err(Error::shape("attribution rows", n, covariates.rows()));
    }
    if !threshold.is_finite() {
        return Err(Error::Domain(format!("threshold must be finite, got {threshold}")));
    }
    if let Some(i) = scores.scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {i} is NaN")));
    }
    let p = covariates.cols();
    let mut names = vec![INTERCEPT.to_string()];
    names.extend((0..p).map(|j| covariates.column_name(j)));

    let labels: Vec<f64> = scores
        .scores
        .iter()
        .map(|&s| if s > threshold { 1.0 } else { 0.0 })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        labels[a].total_cmp(&labels[b]).then_with(|| {
            covariates
                .row(a)
                .iter()
                .zip(covariates.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut data = Vec::with_capacity(n * (p + 1));
    let mut y = Vec::with_capacity(n);
    for &i in &order {
        data.push(1.0);
        data.extend_from_slice(covariates.row(i));
        y.push(labels[i]);
    }
    let design = Matrix::from_vec(n, p + 1, data)?;
    let fit = fit_logistic(&design, &y, &names)?;

    let mut rows: Vec<CoefficientRow> = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let coef = fit.coef[j];
            let se = fit.std_error[j];
            let z = if se > 0.0 { coef / se } else { 0.0 };
            let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
            CoefficientRow {
                name,
                coef,
                std_error: se,
                z,
                p_value,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.p_value.total_cmp(&b.p_value));
    Ok(AttributionReport {
        rows,
        converged: fit.converged,
        iterations: fit.iterations,
        separation: fit.separation,
        threshold,
        n,
        positives: y.iter().filter(|&&v| v > 0.5).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SourceLabel;
    use crate::numerics::RngState;

    fn named(rows: &[Vec<f64>], names: &[&str]) -> SampleMatrix {
        SampleMatrix::new(
            Matrix::from_rows(rows).unwrap(),
            Some(names.iter().map(|s| s.to_string()).collect()),
        )
        .unwrap()
    }

    #[test]
    fn balanced_null_covariate() {
        // y alternates and x is symmetric within each class
        let xs = [-1.0, 1.0, -2.0, 2.0];
        let mut rows = Vec::new();
        let mut scores = Vec::new();
        for i in 0..40 {
            rows.push(vec![xs[i % 4]]);
            scores.push(if (i / 4) % 2 == 0 { 1.5 } else { 0.5 });
        }
        let rep = logistic_attribution(
            &ScoreSet::new(scores, SourceLabel::Real),
            &named(&rows, &["x"]),
            1.0,
        )
        .unwrap();
        assert!(rep.converged);
        assert!(!rep.separation);
        assert!(rep.row(INTERCEPT).unwrap().coef.abs() < 1e-10);
        assert!(rep.row("x").unwrap().coef.abs() < 1e-10);
        assert!(rep.rows.iter().all(|r| (0.0..=1.0).contains(&r.p_value)));
    }

    #[test]
    fn recovers_generating_coefficient() {
        let mut rng = RngState::new(5);
        let n = 10_000;
        let mut rows = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.normal();
            let y = rng.uniform() < logistic(0.5 + 1.2 * x);
            rows.push(vec![x]);
            scores.push(if y { 1.5 } else { 0.5 });
        }
        let rep = logistic_attribution(
            &ScoreSet::new(scores, SourceLabel::Real),
            &named(&rows, &["x"]),
            1.0,
        )
        .unwrap();
        let x = rep.row("x").unwrap();
        assert!((x.coef - 1.2).abs() <= 3.0 * x.std_error, "{x:?}");
        let b = rep.row(INTERCEPT).unwrap();
        assert!((b.coef - 0.5).abs() <= 3.0 * b.std_error, "{b:?}");
        assert_eq!(rep.rows[0].name, "x");
    }

    #[test]
    fn separation_is_flagged_and_clamped() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let scores: Vec<f64> = (0..20).map(|i| if i >= 10 { 1.8 } else { 0.2 }).collect();
        let rep = logistic_attribution(
            &ScoreSet::new(scores, SourceLabel::Real),
            &named(&rows, &["x"]),
            1.0,
        )
        .unwrap();
        assert!(rep.separation);
        assert!(rep.rows.iter().all(|r| r.coef.abs() <= COEF_CLAMP));
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![i as f64, (i % 3) as f64, 2.0 * i as f64])
            .collect();
        let scores: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 1.5 } else { 0.5 }).collect();
        let err = logistic_attribution(
            &ScoreSet::new(scores.clone(), SourceLabel::Real),
            &named(&rows, &["a", "b", "c"]),
            1.0,
        )
        .unwrap_err();
        assert_eq!(err, Error::RankDeficient { columns: vec!["a".into(), "c".into()] });

        let zero: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, 0.0]).collect();
        let err = logistic_attribution(
            &ScoreSet::new(scores, SourceLabel::Real),
            &named(&zero, &["a", "z"]),
            1.0,
        )
        .unwrap_err();
        assert_eq!(err, Error::RankDeficient { columns: vec!["z".into()] });
    }

    #[test]
    fn constant_column_collides_with_intercept() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![3.0, i as f64]).collect();
        let scores: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 1.5 } else { 0.5 }).collect();
        let err = logistic_attribution(
            &ScoreSet::new(scores, SourceLabel::Real),
            &named(&rows, &["k", "x"]),
            1.0,
        )
        .unwrap_err();
        assert_eq!(err, Error::RankDeficient { columns: vec![INTERCEPT.into(), "k".into()] });
    }

    #[test]
    fn mismatched_rows() {
        let err = logistic_attribution(
            &ScoreSet::new(vec![1.0; 3], SourceLabel::Real),
            &named(&[vec![1.0], vec![2.0]], &["x"]),
            1.0,
        );
        assert!(matches!(err, Err(Error::Shape { .. })));
    }
}
