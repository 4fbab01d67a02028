//! Variational φ-divergence objectives and the balancing loss.
//!
//! The balancing loss for a candidate ratio `g` against the mixture
//! `Q̃ = αP + (1-α)Q` is
//!
//! ```text
//! L(g) = ½·E_P[g^{-1/2}] + ½·E_Q̃[g^{1/2}]
//! ```
//!
//! Its minimizer is `g* = dP/dQ̃` and `1 - L(g*)` is the squared Hellinger
//! distance `H²(P, Q̃)`. With `α = 0` this is the plain density ratio, with
//! `α = ½` the relative density ratio bounded in `[0, 2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to density-ratio outputs before the loss.
pub const DR_CLAMP_MIN: f64 = 1e-4;
/// Upper clamp applied to density-ratio outputs before the loss.
pub const DR_CLAMP_MAX: f64 = 1e4;
/// Floor applied to relative-ratio outputs before the loss; `r = 0` would make
/// `r^{-1/2}` infinite.
pub const RDR_FLOOR: f64 = 1e-6;
/// Largest exponent argument accepted by the KL objective before clamping.
pub const KL_EXP_LIMIT: f64 = 700.0;

/// Squared Hellinger distance between `P` and `(P+Q)/2` never exceeds this.
pub fn rdr_hellinger_cap() -> f64 {
    1.0 - std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    HellingerSq,
    Kl,
    ChiSq,
}

/// Weight of `P` in the denominator mixture `αP + (1-α)Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MixtureWeight(f64);

impl MixtureWeight {
    /// Plain density ratio `p/q`.
    pub const DENSITY_RATIO: MixtureWeight = MixtureWeight(0.0);
    /// Relative density ratio `p / ((p+q)/2)`.
    pub const RELATIVE: MixtureWeight = MixtureWeight(0.5);

    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Domain(format!(
                "mixture weight must lie in [0, 1), got {alpha}"
            )));
        }
        Ok(MixtureWeight(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// Supremum of `H²(P, αP + (1-α)Q)`, reached at disjoint supports.
    pub fn hellinger_cap(self) -> f64 {
        1.0 - self.0.sqrt()
    }
}

impl TryFrom<f64> for MixtureWeight {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        MixtureWeight::new(v)
    }
}

impl From<MixtureWeight> for f64 {
    fn from(w: MixtureWeight) -> f64 {
        w.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub h2_raw: f64,
    pub h2_clipped: f64,
    pub n_p: usize,
    pub n_q: usize,
}

impl LossReport {
    /// Builds a report from a loss value; `cap` bounds the clipped estimate.
    pub fn from_loss(loss: f64, cap: f64, n_p: usize, n_q: usize) -> Self {
        let h2_raw = 1.0 - loss;
        LossReport {
            loss,
            h2_raw,
            h2_clipped: h2_raw.clamp(0.0, cap),
            n_p,
            n_q,
        }
    }
}

fn check_positive(values: &[f64], which: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain(format!("{which} is empty")));
    }
    match values.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
        Some(i) => Err(Error::Domain(format!(
            "{which}[{i}] = {} is not a strictly positive finite ratio",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn mean_of(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    values.iter().map(|&v| f(v)).sum::<f64>() / values.len() as f64
}

/// Balancing loss of a numerator sample against a weighted mixture of samples.
///
/// `samples[numerator]` plays the role of `P`; the denominator is
/// `Σ_k weights[k]·samples[k]`. The two-sample losses below are the special
/// case `samples = [g_at_p, g_at_q]`, `weights = [α, 1-α]`.
pub fn mixture_balancing_loss(samples: &[&[f64]], numerator: usize, weights: &[f64]) -> Result<f64> {
    validate_mixture(samples, numerator, weights)?;
    let num_term = mean_of(samples[numerator], |g| 1.0 / g.sqrt());
    let mut den_term = 0.0;
    for (g, &w) in samples.iter().zip(weights) {
        den_term += w * mean_of(g, f64::sqrt);
    }
    Ok(0.5 * num_term + 0.5 * den_term)
}

/// Analytic gradient of [`mixture_balancing_loss`] with respect to every entry.
pub fn mixture_balancing_loss_grad(
    samples: &[&[f64]],
    numerator: usize,
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    validate_mixture(samples, numerator, weights)?;
    Ok(samples
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(k, (g, &w))| {
            let scale = 1.0 / g.len() as f64;
            g.iter()
                .map(|&v| {
                    let rs = 1.0 / v.sqrt();
                    if k == numerator {
                        scale * (-0.25 * rs / v + w * 0.25 * rs)
                    } else {
                        scale * (w * 0.25 * rs)
                    }
                })
                .collect()
        })
        .collect())
}

fn validate_mixture(samples: &[&[f64]], numerator: usize, weights: &[f64]) -> Result<()> {
    if samples.len() != weights.len() {
        return Err(Error::shape(
            "mixture weights",
            format!("{} samples", samples.len()),
            format!("{} weights", weights.len()),
        ));
    }
    if numerator >= samples.len() {
        return Err(Error::Domain(format!(
            "numerator index {numerator} out of range for {} samples",
            samples.len()
        )));
    }
    for (k, g) in samples.iter().enumerate() {
        check_positive(g, &format!("sample {k} ratio"))?;
    }
    Ok(())
}

/// Empirical balancing loss for `P` against `αP + (1-α)Q`.
///
/// The clipping cap is `1 - √α`: 1 for the plain ratio and `1 - 1/√2` for the
/// relative ratio.
pub fn balancing_loss(g_at_p: &[f64], g_at_q: &[f64], weight: MixtureWeight) -> Result<LossReport> {
    check_positive(g_at_p, "g_at_p")?;
    check_positive(g_at_q, "g_at_q")?;
    let a = weight.alpha();
    let loss = mixture_balancing_loss(&[g_at_p, g_at_q], 0, &[a, 1.0 - a])?;
    Ok(LossReport::from_loss(
        loss,
        weight.hellinger_cap(),
        g_at_p.len(),
        g_at_q.len(),
    ))
}

/// Gradient of [`balancing_loss`] with respect to each `g` value.
pub fn balancing_loss_grad(
    g_at_p: &[f64],
    g_at_q: &[f64],
    weight: MixtureWeight,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive(g_at_p, "g_at_p")?;
    check_positive(g_at_q, "g_at_q")?;
    let a = weight.alpha();
    let mut grads = mixture_balancing_loss_grad(&[g_at_p, g_at_q], 0, &[a, 1.0 - a])?;
    let gq = grads.pop().unwrap_or_default();
    let gp = grads.pop().unwrap_or_default();
    Ok((gp, gq))
}

/// `r = 2g / (g + 1)`.
pub fn rdr_from_dr(g: f64) -> f64 {
    2.0 * g / (g + 1.0)
}

/// `g = r / (2 - r)`, the inverse of [`rdr_from_dr`] on `[0, 2)`.
pub fn dr_from_rdr(r: f64) -> Result<f64> {
    if !(0.0..2.0).contains(&r) {
        return Err(Error::Domain(format!(
            "relative ratio {r} outside [0, 2) has no density-ratio preimage"
        )));
    }
    Ok(r / (2.0 - r))
}

/// Value of a KL variational loss; `clamped` is set when any `f - 1` exceeded
/// the exponent limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalLoss {
    pub loss: f64,
    pub clamped: bool,
}

fn kl_exp(f: f64) -> (f64, bool) {
    if f > KL_EXP_LIMIT {
        ((KL_EXP_LIMIT - 1.0).exp(), true)
    } else {
        ((f - 1.0).exp(), false)
    }
}

/// `-(E_P[f] - E_Q[e^{f-1}])`; minimized at `f* = 1 + log(p/q)`.
pub fn kl_variational_loss(f_at_p: &[f64], f_at_q: &[f64]) -> Result<VariationalLoss> {
    check_finite(f_at_p, "f_at_p")?;
    check_finite(f_at_q, "f_at_q")?;
    let mut clamped = false;
    let mut q_sum = 0.0;
    for &f in f_at_q {
        let (e, c) = kl_exp(f);
        clamped |= c;
        q_sum += e;
    }
    let loss = -(mean_of(f_at_p, |f| f) - q_sum / f_at_q.len() as f64);
    Ok(VariationalLoss { loss, clamped })
}

/// `-(E_P[f] - E_Q[f²/4 + f])`; minimized at `f* = 2(p/q - 1)`.
pub fn chisq_variational_loss(f_at_p: &[f64], f_at_q: &[f64]) -> Result<f64> {
    check_finite(f_at_p, "f_at_p")?;
    check_finite(f_at_q, "f_at_q")?;
    Ok(-(mean_of(f_at_p, |f| f) - mean_of(f_at_q, |f| f * f / 4.0 + f)))
}

/// Density ratio recovered from the KL critic: `g = e^{f-1}`.
pub fn kl_ratio(f: f64) -> f64 {
    kl_exp(f).0
}

/// Density ratio recovered from the χ² critic: `g = f/2 + 1`.
pub fn chisq_ratio(f: f64) -> f64 {
    f / 2.0 + 1.0
}

fn check_finite(values: &[f64], which: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain(format!("{which} is empty")));
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{which}[{i}]"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_densities_give_unit_loss() {
        let ones = vec![1.0; 7];
        let r = balancing_loss(&ones, &ones, MixtureWeight::RELATIVE).unwrap();
        assert_eq!(r.loss, 1.0);
        assert_eq!(r.h2_raw, 0.0);
        assert_eq!(r.h2_clipped, 0.0);
    }

    #[test]
    fn forced_arithmetic_density_ratio_mode() {
        let r = balancing_loss(&[4.0], &[4.0], MixtureWeight::DENSITY_RATIO).unwrap();
        assert_eq!(r.loss, 1.25);
        assert_eq!(r.h2_raw, -0.25);
        assert_eq!(r.h2_clipped, 0.0);
    }

    #[test]
    fn caps_follow_mixture_weight() {
        assert_eq!(MixtureWeight::DENSITY_RATIO.hellinger_cap(), 1.0);
        assert!((MixtureWeight::RELATIVE.hellinger_cap() - rdr_hellinger_cap()).abs() < 1e-15);
        assert!(MixtureWeight::new(1.0).is_err());
        assert!(MixtureWeight::new(-0.1).is_err());
    }

    #[test]
    fn nonpositive_ratio_names_index() {
        let err = balancing_loss(&[1.0, 0.0], &[1.0], MixtureWeight::RELATIVE).unwrap_err();
        assert!(err.to_string().contains("g_at_p[1]"), "{err}");
        let err = balancing_loss_grad(&[1.0], &[1.0, -2.0, 1.0], MixtureWeight::RELATIVE).unwrap_err();
        assert!(err.to_string().contains("g_at_q[1]"), "{err}");
    }

    #[test]
    fn gradient_plug_in_values() {
        let n = 4;
        let m = 5;
        let (gp, gq) = balancing_loss_grad(&vec![1.0; n], &vec![1.0; m], MixtureWeight::DENSITY_RATIO).unwrap();
        assert!(gp.iter().all(|&v| (v + 0.25 / n as f64).abs() < 1e-15));
        assert!(gq.iter().all(|&v| (v - 0.25 / m as f64).abs() < 1e-15));
        let (gp, _) = balancing_loss_grad(&vec![1.0; n], &vec![1.0; m], MixtureWeight::RELATIVE).unwrap();
        assert!(gp.iter().all(|&v| (v + 0.125 / n as f64).abs() < 1e-15));
    }

    #[test]
    fn rdr_dr_maps() {
        assert_eq!(rdr_from_dr(1.0), 1.0);
        assert_eq!(rdr_from_dr(0.0), 0.0);
        assert_eq!(rdr_from_dr(3.0), 1.5);
        assert_eq!(dr_from_rdr(1.5).unwrap(), 3.0);
        assert!(dr_from_rdr(2.0).is_err());
        assert!(dr_from_rdr(-0.1).is_err());
    }

    #[test]
    fn variational_losses_at_equal_densities() {
        let ones = vec![1.0; 5];
        let kl = kl_variational_loss(&ones, &ones).unwrap();
        assert_eq!(kl.loss, 0.0);
        assert!(!kl.clamped);
        assert_eq!(kl_ratio(1.0), 1.0);

        let zeros = vec![0.0; 5];
        assert_eq!(chisq_variational_loss(&zeros, &zeros).unwrap(), 0.0);
        assert_eq!(chisq_ratio(0.0), 1.0);
    }

    #[test]
    fn kl_overflow_is_flagged() {
        let r = kl_variational_loss(&[0.0], &[800.0]).unwrap();
        assert!(r.clamped);
        assert!(r.loss.is_finite());
    }
}
