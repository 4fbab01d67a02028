//! Closed-form 1D benchmark scenarios: samplers, densities, ratio oracles and
//! trapezoid-rule divergence oracles.
//!
//! `gauss_shift(Δ)` compares `N(0, 1)` with `N(Δ, 1)`. The Beta-mixture cases
//! reproduce three coverage/fidelity regimes on `[0, 1]`:
//!
//! - `partial_precision`: `p = ⅓[B(5,45) + B(25,25) + B(45,5)]`,
//!   `q = ½[B(5,45) + B(25,25)]` (q misses one of p's modes)
//! - `partial_recall`: the same pair with `p` and `q` swapped
//! - `mode_reweight`: `p` as above, `q = 0.6·B(2,48) + 0.3·B(25,25) + 0.1·B(48,2)`

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::estimator::{Mode, TrainedRatio};
use crate::numerics::{Matrix, RngState, SampleMatrix};

/// Default number of trapezoid nodes.
pub const QUADRATURE_POINTS: usize = 100_000;
/// Beta mixtures with `B(2, ·)` components have steep endpoint slopes; the
/// denser grid keeps the trapezoid error below 1e-8.
pub const BETA_QUADRATURE_POINTS: usize = 200_001;
/// Beta densities are evaluated no closer than this to 0 or 1.
pub const BETA_EDGE: f64 = 1e-9;
/// Margin added around the Gaussian means for the quadrature grid.
const GAUSS_MARGIN: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaCase {
    PartialPrecision,
    PartialRecall,
    ModeReweight,
}

impl BetaCase {
    pub const ALL: [BetaCase; 3] = [
        BetaCase::PartialPrecision,
        BetaCase::PartialRecall,
        BetaCase::ModeReweight,
    ];
}

impl std::str::FromStr for BetaCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "partial_precision" => Ok(BetaCase::PartialPrecision),
            "partial_recall" => Ok(BetaCase::PartialRecall),
            "mode_reweight" => Ok(BetaCase::ModeReweight),
            _ => Err(Error::Config(format!("unknown beta-mixture case {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BetaComponent {
    weight: f64,
    a: f64,
    b: f64,
}

const fn comp(weight: f64, a: f64, b: f64) -> BetaComponent {
    BetaComponent { weight, a, b }
}

const THREE_MODES: [BetaComponent; 3] = [
    comp(1.0 / 3.0, 5.0, 45.0),
    comp(1.0 / 3.0, 25.0, 25.0),
    comp(1.0 / 3.0, 45.0, 5.0),
];
const TWO_MODES: [BetaComponent; 2] = [comp(0.5, 5.0, 45.0), comp(0.5, 25.0, 25.0)];
const SHIFTED: [BetaComponent; 3] = [
    comp(0.6, 2.0, 48.0),
    comp(0.3, 25.0, 25.0),
    comp(0.1, 48.0, 2.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    GaussShift { delta: f64 },
    BetaMixture { case: BetaCase },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    Q,
    /// `(p + q) / 2`.
    Mixture,
}

/// Trapezoid rule on evenly spaced nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl QuadratureGrid {
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.points).map(move |k| self.lo + k as f64 * h)
    }

    /// `∫ f` over the grid.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.step();
        let mut acc = 0.0;
        for (k, x) in self.nodes().enumerate() {
            let w = if k == 0 || k + 1 == self.points { 0.5 } else { 1.0 };
            acc += w * f(x);
        }
        acc * h
    }
}

fn normal_pdf(x: f64, mean: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let x = x.clamp(BETA_EDGE, 1.0 - BETA_EDGE);
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

fn mixture_pdf(components: &[BetaComponent], x: f64) -> f64 {
    components.iter().map(|c| c.weight * beta_pdf(x, c.a, c.b)).sum()
}

/// Marsaglia–Tsang gamma draw for shape `a ≥ 1`.
fn gamma_draw(a: f64, rng: &mut RngState) -> f64 {
    let d = a - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform();
        if u > 0.0 && u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

fn beta_draw(a: f64, b: f64, rng: &mut RngState) -> f64 {
    let x = gamma_draw(a, rng);
    let y = gamma_draw(b, rng);
    x / (x + y)
}

fn mixture_draw(components: &[BetaComponent], rng: &mut RngState) -> f64 {
    let u = rng.uniform();
    let mut acc = 0.0;
    for c in components {
        acc += c.weight;
        if u < acc {
            return beta_draw(c.a, c.b, rng);
        }
    }
    let last = components[components.len() - 1];
    beta_draw(last.a, last.b, rng)
}

impl Scenario {
    pub fn gauss_shift(delta: f64) -> Self {
        Scenario::GaussShift { delta }
    }

    pub fn beta_mixture(case: BetaCase) -> Self {
        Scenario::BetaMixture { case }
    }

    fn components(&self, side: Side) -> &'static [BetaComponent] {
        let case = match self {
            Scenario::BetaMixture { case } => *case,
            Scenario::GaussShift { .. } => unreachable!("Gaussian scenarios have no Beta components"),
        };
        match (case, side) {
            (BetaCase::PartialPrecision, Side::P) | (BetaCase::PartialRecall, Side::Q) => &THREE_MODES,
            (BetaCase::PartialPrecision, Side::Q) | (BetaCase::PartialRecall, Side::P) => &TWO_MODES,
            (BetaCase::ModeReweight, Side::P) => &THREE_MODES,
            (BetaCase::ModeReweight, Side::Q) => &SHIFTED,
        }
    }

    /// Trapezoid grid covering both densities.
    pub fn grid(&self) -> QuadratureGrid {
        match self {
            Scenario::GaussShift { delta } => QuadratureGrid {
                lo: delta.min(0.0) - GAUSS_MARGIN,
                hi: delta.max(0.0) + GAUSS_MARGIN,
                points: QUADRATURE_POINTS,
            },
            Scenario::BetaMixture { .. } => QuadratureGrid {
                lo: 0.0,
                hi: 1.0,
                points: BETA_QUADRATURE_POINTS,
            },
        }
    }

    /// Range used for plotting tables.
    pub fn plot_range(&self) -> (f64, f64) {
        match self {
            Scenario::GaussShift { delta } => (delta.min(0.0) - 6.0, delta.max(0.0) + 6.0),
            Scenario::BetaMixture { .. } => (0.0, 1.0),
        }
    }

    pub fn density(&self, side: Side, x: f64) -> f64 {
        match (self, side) {
            (Scenario::GaussShift { .. }, Side::P) => normal_pdf(x, 0.0),
            (Scenario::GaussShift { delta }, Side::Q) => normal_pdf(x, *delta),
            (Scenario::BetaMixture { .. }, _) => mixture_pdf(self.components(side), x),
        }
    }

    fn draw(&self, side: Side, rng: &mut RngState) -> f64 {
        match (self, side) {
            (Scenario::GaussShift { .. }, Side::P) => rng.normal(),
            (Scenario::GaussShift { delta }, Side::Q) => delta + rng.normal(),
            (Scenario::BetaMixture { .. }, _) => mixture_draw(self.components(side), rng),
        }
    }
}

pub fn density_p(scenario: &Scenario, x: f64) -> f64 {
    scenario.density(Side::P, x)
}

pub fn density_q(scenario: &Scenario, x: f64) -> f64 {
    scenario.density(Side::Q, x)
}

/// Independent draws: `n_p` from `P`, then `n_q` from `Q`.
pub fn sample(scenario: &Scenario, n_p: usize, n_q: usize, rng: &mut RngState) -> Result<(SampleMatrix, SampleMatrix)> {
    if n_p == 0 || n_q == 0 {
        return Err(Error::Config("sample counts must be at least 1".into()));
    }
    let xp: Vec<f64> = (0..n_p).map(|_| scenario.draw(Side::P, rng)).collect();
    let xq: Vec<f64> = (0..n_q).map(|_| scenario.draw(Side::Q, rng)).collect();
    Ok((SampleMatrix::from_column(&xp)?, SampleMatrix::from_column(&xq)?))
}

/// Draws from the equal-weight mixture `(P + Q) / 2`.
pub fn sample_mixture(scenario: &Scenario, n: usize, rng: &mut RngState) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let side = if rng.uniform() < 0.5 { Side::P } else { Side::Q };
            scenario.draw(side, rng)
        })
        .collect()
}

/// `r(x) = 2p / (p + q)`.
pub fn analytic_rdr(scenario: &Scenario, x: f64) -> Result<f64> {
    if let Scenario::GaussShift { delta } = scenario {
        // q/p = exp(Δx - Δ²/2)
        return Ok(2.0 / (1.0 + (delta * x - delta * delta / 2.0).exp()));
    }
    let p = density_p(scenario, x);
    let q = density_q(scenario, x);
    if p + q <= 0.0 {
        return Err(Error::Domain(format!("p + q vanishes at x = {x}")));
    }
    Ok(2.0 * p / (p + q))
}

/// `g(x) = p / q`.
pub fn analytic_dr(scenario: &Scenario, x: f64) -> Result<f64> {
    if let Scenario::GaussShift { delta } = scenario {
        return Ok((delta * delta / 2.0 - delta * x).exp());
    }
    let q = density_q(scenario, x);
    if q <= 0.0 {
        return Err(Error::Domain(format!("q vanishes at x = {x}")));
    }
    Ok(density_p(scenario, x) / q)
}

fn denominator_density(scenario: &Scenario, den: Denominator, x: f64) -> f64 {
    match den {
        Denominator::Q => density_q(scenario, x),
        Denominator::Mixture => 0.5 * (density_p(scenario, x) + density_q(scenario, x)),
    }
}

/// `H² = 1 - ∫ √(p · den)` by the trapezoid rule.
pub fn quadrature_h2(scenario: &Scenario, den: Denominator) -> f64 {
    let grid = scenario.grid();
    1.0 - grid.integrate(|x| (density_p(scenario, x) * denominator_density(scenario, den, x)).sqrt())
}

/// Population balancing loss `½∫p·g^{-1/2} + ½∫den·g^{1/2}` of a candidate
/// ratio, with zero-density terms contributing nothing.
pub fn population_balancing_loss(scenario: &Scenario, den: Denominator, ratio: impl Fn(f64) -> f64) -> f64 {
    let grid = scenario.grid();
    grid.integrate(|x| {
        let p = density_p(scenario, x);
        let d = denominator_density(scenario, den, x);
        let g = ratio(x);
        let num = if p > 0.0 { 0.5 * p / g.sqrt() } else { 0.0 };
        let dn = if d > 0.0 { 0.5 * d * g.sqrt() } else { 0.0 };
        num + dn
    })
}

/// Discrete squared Hellinger distance between two normalized histograms.
pub fn histogram_h2(a: &[u64], b: &[u64]) -> f64 {
    let sa: u64 = a.iter().sum();
    let sb: u64 = b.iter().sum();
    let bc: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| ((x as f64 / sa as f64) * (y as f64 / sb as f64)).sqrt())
        .sum();
    (1.0 - bc).max(0.0)
}

fn bin_scores(scores: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &s in scores {
        let k = ((s / 2.0) * bins as f64).floor();
        let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
        counts[k] += 1;
    }
    counts
}

/// `H²` between the score distributions of `r̂(X)`, `X ~ P`, and `r̂(Y)`,
/// `Y ~ (P+Q)/2`, from `bins`-bin histograms on `[0, 2]`.
pub fn pushforward_h2(
    scenario: &Scenario,
    model: &TrainedRatio,
    n_mc: usize,
    bins: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if model.spec.input_dim != 1 {
        return Err(Error::shape(
            "pushforward",
            "1D scenario",
            format!("model input_dim {}", model.spec.input_dim),
        ));
    }
    if model.mode == Mode::Dr {
        return Err(Error::Config("pushforward needs a relative-ratio model".into()));
    }
    if n_mc == 0 || bins == 0 {
        return Err(Error::Config("n_mc and bins must be at least 1".into()));
    }
    let xp: Vec<f64> = (0..n_mc).map(|_| scenario.draw(Side::P, rng)).collect();
    let xm = sample_mixture(scenario, n_mc, rng);
    let sp = model.scores(&Matrix::column_vector(&xp))?;
    let sm = model.scores(&Matrix::column_vector(&xm))?;
    Ok(pushforward_h2_from_scores(&sp, &sm, bins))
}

/// Histogram `H²` of two score samples on `[0, 2]`.
pub fn pushforward_h2_from_scores(scores_p: &[f64], scores_mix: &[f64], bins: usize) -> f64 {
    histogram_h2(&bin_scores(scores_p, bins), &bin_scores(scores_mix, bins))
}

/// One row of the plotting oracle: `(x, p, q, g, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub x: f64,
    pub p: f64,
    pub q: f64,
    pub g: f64,
    pub r: f64,
}

/// Densities and ratios on `points` nodes over the plotting range. `g` is
/// infinite where `q` vanishes.
pub fn oracle_table(scenario: &Scenario, points: usize) -> Vec<OracleRow> {
    let (lo, hi) = scenario.plot_range();
    let grid = QuadratureGrid { lo, hi, points };
    grid.nodes()
        .map(|x| {
            let x = match scenario {
                Scenario::BetaMixture { .. } => x.clamp(BETA_EDGE, 1.0 - BETA_EDGE),
                Scenario::GaussShift { .. } => x,
            };
            let p = density_p(scenario, x);
            let q = density_q(scenario, x);
            let g = analytic_dr(scenario, x).unwrap_or(f64::INFINITY);
            let r = analytic_rdr(scenario, x).unwrap_or(f64::NAN);
            OracleRow { x, p, q, g, r }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_scenarios() -> Vec<Scenario> {
        let mut v: Vec<Scenario> = [0.0, 1.0, 2.0, 4.0, 8.0].iter().map(|&d| Scenario::gauss_shift(d)).collect();
        v.extend(BetaCase::ALL.iter().map(|&c| Scenario::beta_mixture(c)));
        v
    }

    #[test]
    fn densities_integrate_to_one() {
        for s in all_scenarios() {
            let g = s.grid();
            let ip = g.integrate(|x| density_p(&s, x));
            let iq = g.integrate(|x| density_q(&s, x));
            assert!((ip - 1.0).abs() < 1e-8, "{s:?} p integrates to {ip}");
            assert!((iq - 1.0).abs() < 1e-8, "{s:?} q integrates to {iq}");
        }
    }

    #[test]
    fn closed_form_values() {
        let s = Scenario::gauss_shift(3.0);
        assert!((density_p(&s, 0.0) - 0.398_942_3).abs() < 1e-7);
        assert_eq!(analytic_rdr(&s, 1.5).unwrap(), 1.0);
        let s0 = Scenario::gauss_shift(0.0);
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(analytic_rdr(&s0, x).unwrap(), 1.0);
        }
        let s2 = Scenario::gauss_shift(2.0);
        let r = analytic_rdr(&s2, 0.0).unwrap();
        assert!((r - 2.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((r - 1.76159).abs() < 1e-5);
    }

    #[test]
    fn beta_support_and_domain_errors() {
        for c in BetaCase::ALL {
            let s = Scenario::beta_mixture(c);
            assert_eq!(density_p(&s, -0.1), 0.0);
            assert_eq!(density_q(&s, 1.2), 0.0);
            assert!(analytic_rdr(&s, 1.5).is_err());
            assert!(analytic_dr(&s, -1.0).is_err());
        }
    }

    #[test]
    fn ratio_ranges() {
        for s in all_scenarios() {
            let (lo, hi) = s.plot_range();
            for k in 0..=400 {
                let x = lo + (hi - lo) * k as f64 / 400.0;
                if let Ok(r) = analytic_rdr(&s, x) {
                    assert!((0.0..=2.0).contains(&r));
                }
                if let Ok(g) = analytic_dr(&s, x) {
                    assert!(g >= 0.0);
                }
            }
        }
    }

    #[test]
    fn hellinger_reference_values() {
        assert!(quadrature_h2(&Scenario::gauss_shift(0.0), Denominator::Mixture).abs() < 1e-10);
        // Adaptive-quadrature reference for N(0,1) against ½N(0,1) + ½N(8,1).
        let h8 = quadrature_h2(&Scenario::gauss_shift(8.0), Denominator::Mixture);
        assert!((h8 - 0.292_781_322_623_625).abs() < 1e-9, "{h8}");
        assert!(quadrature_h2(&Scenario::gauss_shift(8.0), Denominator::Q) >= 0.999);
        for s in all_scenarios() {
            assert!(quadrature_h2(&s, Denominator::Mixture) <= 1.0 - 0.5f64.sqrt() + 1e-9);
        }
    }

    #[test]
    fn samples_are_reproducible_and_in_support() {
        let s = Scenario::beta_mixture(BetaCase::ModeReweight);
        let (a, b) = sample(&s, 500, 400, &mut RngState::new(3)).unwrap();
        let (a2, b2) = sample(&s, 500, 400, &mut RngState::new(3)).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert_eq!(a.rows(), 500);
        assert_eq!(b.rows(), 400);
        assert!(a.as_slice().iter().chain(b.as_slice()).all(|v| (0.0..=1.0).contains(v)));
        assert!(sample(&s, 0, 1, &mut RngState::new(3)).is_err());
    }

    #[test]
    fn beta_sampler_matches_component_moments() {
        let mut rng = RngState::new(17);
        let draws: Vec<f64> = (0..50_000).map(|_| beta_draw(5.0, 45.0, &mut rng)).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let v = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (draws.len() - 1) as f64;
        // Beta(5,45): mean 0.1, variance ab/((a+b)²(a+b+1)) = 225/127500.
        assert!((m - 0.1).abs() < 1e-3, "mean {m}");
        assert!((v - 225.0 / 127_500.0).abs() < 1e-4, "var {v}");
    }

    #[test]
    fn partial_precision_oracle_hits_two() {
        let rows = oracle_table(&Scenario::beta_mixture(BetaCase::PartialPrecision), 500);
        assert!(rows.iter().any(|r| r.r == 2.0));
        assert!(rows.iter().all(|r| r.r <= 2.0));
    }

    #[test]
    fn pushforward_histogram_properties() {
        let a: Vec<f64> = (0..1000).map(|k| k as f64 / 500.0).collect();
        assert_eq!(pushforward_h2_from_scores(&a, &a, 200), 0.0);
        let mut rev = a.clone();
        rev.reverse();
        assert_eq!(
            pushforward_h2_from_scores(&a, &a[..500], 50),
            pushforward_h2_from_scores(&rev, &a[..500], 50)
        );
        let c = vec![0.7; 10];
        assert_eq!(pushforward_h2_from_scores(&c, &c, 200), 0.0);
    }
}
