use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::numerics::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Ranks starting at 1; tied values share the average of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape("spearman", x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::Domain(format!("spearman needs at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    Ok(())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn rank_rho(rx: &[f64], ry: &[f64]) -> Result<f64> {
    pearson(rx, ry).ok_or_else(|| Error::Undefined("spearman rho of a constant vector".into()))
}

/// Two-sided p-value of `t = rho·√((n−2)/(1−rho²))` under Student t with n−2 df.
fn t_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t2 = rho * rho * df / (1.0 - rho * rho);
    beta_reg(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0)
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    check(x, y)?;
    let rho = rank_rho(&average_ranks(x), &average_ranks(y))?;
    Ok(SpearmanResult {
        rho,
        p_value: t_p_value(rho, x.len()),
        n: x.len(),
    })
}

/// Like [`spearman`] but with a Monte Carlo permutation p-value
/// `(1 + #{|rho_π| ≥ |rho|}) / (1 + permutations)`; for n ≤ 30.
pub fn spearman_permutation(
    x: &[f64],
    y: &[f64],
    permutations: usize,
    rng: &mut RngState,
) -> Result<SpearmanResult> {
    check(x, y)?;
    if x.len() > 30 {
        return Err(Error::Config(format!(
            "permutation p-values are limited to n <= 30, got {}",
            x.len()
        )));
    }
    if permutations == 0 {
        return Err(Error::Config("need at least one permutation".into()));
    }
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let rho = rank_rho(&rx, &ry)?;
    let mut hits = 0usize;
    for _ in 0..permutations {
        rng.shuffle(&mut ry);
        let r = rank_rho(&rx, &ry)?;
        // small slack so exact ties with the observed statistic count
        if r.abs() >= rho.abs() - 1e-12 {
            hits += 1;
        }
    }
    Ok(SpearmanResult {
        rho,
        p_value: (1 + hits) as f64 / (1 + permutations) as f64,
        n: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_pairs() {
        let r = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.p_value, 0.0);
        let r = spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap();
        assert_eq!(r.rho, -1.0);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn constant_input_is_undefined() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Undefined(_))
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn t_p_value_known_point() {
        // rho = 0.5, n = 12: t = 0.5·√(10/0.75) = 1.825742, two-sided p ≈ 0.09785
        let p = t_p_value(0.5, 12);
        assert!((p - 0.097_8).abs() < 1e-3, "{p}");
        assert!((t_p_value(0.0, 20) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_mode() {
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let r = spearman_permutation(&x, &y, 999, &mut RngState::new(3)).unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(r.p_value <= 0.002);
        let long: Vec<f64> = (0..31).map(|i| i as f64).collect();
        assert!(spearman_permutation(&long, &long, 10, &mut RngState::new(3)).is_err());
    }
}
