//! Minibatch training of ratio networks against the balancing loss, and
//! evaluation of trained models.
//!
//! Three modes share one training loop. A model always has one numerator
//! sample and a denominator mixture `Σ_k w_k·P_k` over all samples:
//!
//! | mode      | head               | denominator weights           |
//! |-----------|--------------------|-------------------------------|
//! | `dr`      | `softplus_floor`   | `[0, 1]`                      |
//! | `rdr`     | `bounded_softplus` | `[α, 1-α]` (α = ½ by default) |
//! | `ksample` | `bounded_softplus` | `[1/K; K]`                    |
//!
//! In the mixture modes the network output is the ratio against the mixture
//! itself, so it is fed to the loss directly (after a small floor).

use serde::{Deserialize, Serialize};

use crate::divergence::{
    mixture_balancing_loss, mixture_balancing_loss_grad, LossReport, MixtureWeight, DR_CLAMP_MAX,
    DR_CLAMP_MIN, RDR_FLOOR,
};
use crate::error::{Error, Result};
use crate::network::{
    adam_step, backward, forward, init_params, json_error, predict, AdamConfig, AdamState, Head,
    ModelDocument, NetworkParams, NetworkSpec,
};
use crate::numerics::{Matrix, RngState, SampleMatrix};

/// Fewest rows accepted per sample.
pub const MIN_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dr,
    Rdr,
    Ksample,
}

impl Mode {
    pub fn head(self) -> Head {
        match self {
            Mode::Dr => Head::SoftplusFloor,
            Mode::Rdr | Mode::Ksample => Head::BoundedSoftplus,
        }
    }

    /// Clamp range applied to scores before they enter the loss.
    pub fn clamps(self) -> (f64, f64) {
        match self {
            Mode::Dr => (DR_CLAMP_MIN, DR_CLAMP_MAX),
            Mode::Rdr | Mode::Ksample => (RDR_FLOOR, 2.0),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Dr => "dr",
            Mode::Rdr => "rdr",
            Mode::Ksample => "ksample",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dr" => Ok(Mode::Dr),
            "rdr" => Ok(Mode::Rdr),
            "ksample" => Ok(Mode::Ksample),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Weight of the numerator sample in the denominator mixture; ignored
    /// (forced to 0) in `dr` mode.
    pub alpha: f64,
    pub epochs: usize,
    /// Rows drawn from each sample per step.
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    pub optimizer: AdamConfig,
    pub holdout_fraction: f64,
    /// Z-score every column with training-split statistics.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Rdr,
            alpha: 0.5,
            epochs: 200,
            batch_size: 128,
            seed: 0,
            hidden_widths: vec![64; 4],
            optimizer: AdamConfig::default(),
            holdout_fraction: 0.2,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn mixture_weight(&self) -> Result<MixtureWeight> {
        match self.mode {
            Mode::Dr => Ok(MixtureWeight::DENSITY_RATIO),
            _ => MixtureWeight::new(self.alpha),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=0.5).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie in [0, 0.5], got {}",
                self.holdout_fraction
            )));
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.mixture_weight()?;
        Ok(())
    }
}

/// Per-column affine preprocessing stored alongside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    fn fit(parts: &[Matrix]) -> Self {
        let d = parts[0].cols();
        let n: usize = parts.iter().map(Matrix::rows).sum();
        let mut mean = vec![0.0; d];
        for m in parts {
            for i in 0..m.rows() {
                for (acc, v) in mean.iter_mut().zip(m.row(i)) {
                    *acc += v;
                }
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut var = vec![0.0; d];
        for m in parts {
            for i in 0..m.rows() {
                for ((acc, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / (n.max(2) - 1) as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, mu), sd) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        out
    }
}

/// A fitted ratio network with everything needed to score new data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRatio {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    pub mode: Mode,
    /// Weight of the numerator sample in its denominator mixture.
    pub alpha: f64,
    /// Full denominator weights; `[α, 1-α]` for two samples.
    pub mixture_weights: Vec<f64>,
    /// Index of the numerator sample among the training samples.
    pub numerator: usize,
    pub clamps: (f64, f64),
    pub seed: u64,
    pub standardizer: Option<Standardizer>,
    pub holdout: LossReport,
    /// Content hashes of the training inputs, when known.
    pub train_inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clamps {
    pub lo: f64,
    pub hi: f64,
}

/// `meta` section of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub mode: Mode,
    pub alpha: f64,
    pub seed: u64,
    pub clamps: Clamps,
    pub mixture_weights: Vec<f64>,
    pub numerator: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<Standardizer>,
    pub holdout: LossReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_inputs: Vec<String>,
}

impl TrainedRatio {
    /// Hex FNV-1a digest of the parameter bits and mode; stable across runs.
    pub fn model_id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.mode.to_string().as_bytes());
        feed(&(self.numerator as u64).to_le_bytes());
        for v in self.params.flatten() {
            feed(&v.to_bits().to_le_bytes());
        }
        format!("{h:016x}")
    }

    pub fn to_json(&self) -> String {
        let meta = ModelMeta {
            mode: self.mode,
            alpha: self.alpha,
            seed: self.seed,
            clamps: Clamps {
                lo: self.clamps.0,
                hi: self.clamps.1,
            },
            mixture_weights: self.mixture_weights.clone(),
            numerator: self.numerator,
            standardize: self.standardizer.clone(),
            holdout: self.holdout,
            train_inputs: self.train_inputs.clone(),
        };
        let doc = ModelDocument::new(&self.params, &self.spec, Some(meta));
        serde_json::to_string_pretty(&doc).expect("model document is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument<ModelMeta> =
            serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        let params = doc.params()?;
        let meta = doc
            .meta
            .ok_or_else(|| Error::ModelShape("model file has no meta section".into()))?;
        if doc.spec.head != meta.mode.head() {
            return Err(Error::ModelShape(format!(
                "mode {} requires head {}, found {}",
                meta.mode,
                meta.mode.head().name(),
                doc.spec.head.name()
            )));
        }
        if let Some(st) = &meta.standardize {
            if st.mean.len() != doc.spec.input_dim || st.std.len() != doc.spec.input_dim {
                return Err(Error::ModelShape(
                    "standardization length differs from input_dim".into(),
                ));
            }
        }
        Ok(TrainedRatio {
            spec: doc.spec,
            params,
            mode: meta.mode,
            alpha: meta.alpha,
            mixture_weights: meta.mixture_weights,
            numerator: meta.numerator,
            clamps: (meta.clamps.lo, meta.clamps.hi),
            seed: meta.seed,
            standardizer: meta.standardize,
            holdout: meta.holdout,
            train_inputs: meta.train_inputs,
        })
    }

    fn prepare(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::shape(
                "model input",
                format!("input_dim {}", self.spec.input_dim),
                format!("data {}", x.shape_string()),
            ));
        }
        Ok(match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.clone(),
        })
    }

    /// Raw network scores for every row.
    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.rows() == 0 {
            self.prepare(x)?;
            return Ok(Vec::new());
        }
        let x = self.prepare(x)?;
        predict(&self.params, &self.spec, &x)
    }
}

/// Clamps a network score into the range the loss accepts. Returns the value
/// and whether it passed through unclamped.
fn to_loss_space(score: f64, clamps: (f64, f64)) -> (f64, bool) {
    if score < clamps.0 {
        (clamps.0, false)
    } else if score > clamps.1 {
        (clamps.1, false)
    } else {
        (score, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLabel {
    Real,
    Generated,
    Other,
}

impl SourceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceLabel::Real => "real",
            SourceLabel::Generated => "generated",
            SourceLabel::Other => "other",
        }
    }
}

impl std::str::FromStr for SourceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(SourceLabel::Real),
            "generated" => Ok(SourceLabel::Generated),
            "other" => Ok(SourceLabel::Other),
            other => Err(Error::Config(format!("unknown source label {other:?}"))),
        }
    }
}

/// Ratio evaluations of one sample under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub source_label: SourceLabel,
    pub model_id: String,
    pub ids: Option<Vec<String>>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, source_label: SourceLabel) -> Self {
        ScoreSet {
            scores,
            source_label,
            model_id: String::new(),
            ids: None,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
    /// Held-out row indices of each training sample, ascending.
    pub holdout_rows: Vec<Vec<usize>>,
}

struct Split {
    train: Vec<usize>,
    holdout: Vec<usize>,
}

fn split_rows(n: usize, fraction: f64, rng: &mut RngState) -> Split {
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let n_hold = (n as f64 * fraction).floor() as usize;
    let mut holdout = perm[..n_hold].to_vec();
    holdout.sort_unstable();
    Split {
        train: perm[n_hold..].to_vec(),
        holdout,
    }
}

/// Cycles through a sample in reshuffled passes.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new(rows: usize, rng: &mut RngState) -> Self {
        let mut order: Vec<usize> = (0..rows).collect();
        rng.shuffle(&mut order);
        BatchCursor { order, pos: 0 }
    }

    fn next_into(&mut self, size: usize, rng: &mut RngState, out: &mut Vec<usize>) {
        for _ in 0..size {
            if self.pos == self.order.len() {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
    }
}

fn stack(parts: &[Matrix], d: usize) -> Matrix {
    let rows: usize = parts.iter().map(Matrix::rows).sum();
    let mut data = Vec::with_capacity(rows * d);
    for p in parts {
        data.extend_from_slice(p.as_slice());
    }
    Matrix::from_vec(rows, d, data).expect("stacked parts share a column count")
}

/// Loss-space values of scores under a model's clamps.
fn clamp_all(scores: &[f64], clamps: (f64, f64)) -> Vec<f64> {
    scores.iter().map(|&s| to_loss_space(s, clamps).0).collect()
}

fn mixture_loss_on(
    params: &NetworkParams,
    spec: &NetworkSpec,
    parts: &[Matrix],
    numerator: usize,
    weights: &[f64],
    clamps: (f64, f64),
) -> Result<f64> {
    let g: Vec<Vec<f64>> = parts
        .iter()
        .map(|m| predict(params, spec, m).map(|s| clamp_all(&s, clamps)))
        .collect::<Result<_>>()?;
    if g.iter().flatten().any(|v| !v.is_finite()) {
        return Ok(f64::NAN);
    }
    let refs: Vec<&[f64]> = g.iter().map(Vec::as_slice).collect();
    mixture_balancing_loss(&refs, numerator, weights)
}

fn validate_samples(samples: &[&SampleMatrix], config: &TrainConfig) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::Config("at least two samples are required".into()));
    }
    let d = samples[0].cols();
    for (k, s) in samples.iter().enumerate() {
        if s.cols() != d {
            return Err(Error::shape(
                "sample columns",
                format!("sample 0 has {d} columns"),
                format!("sample {k} has {}", s.cols()),
            ));
        }
        if s.rows() < MIN_ROWS {
            return Err(Error::Config(format!(
                "sample {k} has {} rows; at least {MIN_ROWS} are required",
                s.rows()
            )));
        }
    }
    let min_rows = samples.iter().map(|s| s.rows()).min().unwrap_or(0);
    if config.batch_size > min_rows {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the smallest sample ({min_rows} rows)",
            config.batch_size
        )));
    }
    config.validate()
}

/// Shared training loop: one numerator sample against a weighted mixture of
/// all samples.
fn fit(
    samples: &[&SampleMatrix],
    numerator: usize,
    weights: &[f64],
    mode: Mode,
    config: &TrainConfig,
) -> Result<(TrainedRatio, TrainTrace)> {
    validate_samples(samples, config)?;
    let d = samples[0].cols();
    let clamps = mode.clamps();
    let spec = NetworkSpec::new(d, config.hidden_widths.clone(), mode.head())?;

    let mut rng = RngState::new(config.seed);
    let mut split_rng = rng.fork();
    let mut init_rng = rng.fork();
    let mut batch_rng = rng.fork();

    let splits: Vec<Split> = samples
        .iter()
        .map(|s| split_rows(s.rows(), config.holdout_fraction, &mut split_rng))
        .collect();
    let mut train_parts: Vec<Matrix> = samples
        .iter()
        .zip(&splits)
        .map(|(s, sp)| s.matrix().select_rows(&sp.train))
        .collect();
    let standardizer = config.standardize.then(|| Standardizer::fit(&train_parts));
    if let Some(st) = &standardizer {
        train_parts = train_parts.iter().map(|m| st.apply(m)).collect();
    }
    let holdout_parts: Vec<Matrix> = samples
        .iter()
        .zip(&splits)
        .enumerate()
        .map(|(k, (s, sp))| {
            // Without a holdout split, selection falls back to training rows.
            if sp.holdout.is_empty() {
                train_parts[k].clone()
            } else {
                let m = s.matrix().select_rows(&sp.holdout);
                match &standardizer {
                    Some(st) => st.apply(&m),
                    None => m,
                }
            }
        })
        .collect();

    let batch = config.batch_size.min(train_parts.iter().map(Matrix::rows).min().unwrap_or(1));
    let steps_per_epoch = train_parts
        .iter()
        .map(Matrix::rows)
        .max()
        .unwrap_or(1)
        .div_ceil(batch);

    let mut params = init_params(&spec, &mut init_rng)?;
    let mut adam = AdamState::new(&params, config.optimizer);
    let mut cursors: Vec<BatchCursor> = train_parts
        .iter()
        .map(|m| BatchCursor::new(m.rows(), &mut batch_rng))
        .collect();

    let k = samples.len();
    let mut trace = TrainTrace {
        holdout_rows: splits.iter().map(|s| s.holdout.clone()).collect(),
        ..TrainTrace::default()
    };
    let mut best: Option<(f64, NetworkParams)> = None;
    let mut last_finite: Option<usize> = None;
    let mut idx = Vec::with_capacity(batch);

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let mut parts = Vec::with_capacity(k);
            for (cursor, m) in cursors.iter_mut().zip(&train_parts) {
                idx.clear();
                cursor.next_into(batch, &mut batch_rng, &mut idx);
                parts.push(m.select_rows(&idx));
            }
            let x = stack(&parts, d);
            let (scores, cache) = forward(&params, &spec, &x)?;
            let mut g = Vec::with_capacity(scores.len());
            let mut pass = Vec::with_capacity(scores.len());
            for &s in &scores {
                let (v, p) = to_loss_space(s, clamps);
                g.push(v);
                pass.push(p);
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    last_finite_epoch: last_finite,
                });
            }
            let refs: Vec<&[f64]> = g.chunks(batch).collect();
            let loss = mixture_balancing_loss(&refs, numerator, weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    last_finite_epoch: last_finite,
                });
            }
            epoch_loss += loss;
            let grads = mixture_balancing_loss_grad(&refs, numerator, weights)?;
            let dscore: Vec<f64> = grads
                .into_iter()
                .flatten()
                .zip(&pass)
                .map(|(gr, &p)| if p { gr } else { 0.0 })
                .collect();
            let grad_params = backward(&params, &spec, cache, &dscore)?;
            adam_step(&mut params, &grad_params, &mut adam)?;
        }
        let train_loss = epoch_loss / steps_per_epoch as f64;
        let holdout_loss = mixture_loss_on(&params, &spec, &holdout_parts, numerator, weights, clamps)?;
        if !(train_loss.is_finite() && holdout_loss.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                last_finite_epoch: last_finite,
            });
        }
        last_finite = Some(epoch);
        trace.train_loss.push(train_loss);
        trace.holdout_loss.push(holdout_loss);
        if best.as_ref().is_none_or(|(b, _)| holdout_loss < *b) {
            best = Some((holdout_loss, params.clone()));
            trace.best_epoch = epoch;
        }
    }

    let (best_loss, best_params) = best.expect("at least one epoch ran");
    let alpha = weights[numerator];
    let holdout = LossReport::from_loss(
        best_loss,
        1.0 - alpha.sqrt(),
        holdout_parts[numerator].rows(),
        holdout_parts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != numerator)
            .map(|(_, m)| m.rows())
            .sum(),
    );
    let model = TrainedRatio {
        spec,
        params: best_params,
        mode,
        alpha,
        mixture_weights: weights.to_vec(),
        numerator,
        clamps,
        seed: config.seed,
        standardizer,
        holdout,
        train_inputs: Vec::new(),
    };
    Ok((model, trace))
}

/// Fits `p/q` (`dr`) or `p / (αp + (1-α)q)` (`rdr`) on two samples.
pub fn train(xp: &SampleMatrix, xq: &SampleMatrix, config: &TrainConfig) -> Result<(TrainedRatio, TrainTrace)> {
    let weights = match config.mode {
        Mode::Dr => vec![0.0, 1.0],
        Mode::Rdr => {
            let a = config.mixture_weight()?.alpha();
            vec![a, 1.0 - a]
        }
        Mode::Ksample => {
            return ksample_train(&[xp.clone(), xq.clone()], config)
                .map(|mut v| v.swap_remove(0));
        }
    };
    fit(&[xp, xq], 0, &weights, config.mode, config)
}

/// One model per sample, each against the uniform mixture of all `K` samples.
///
/// Every model uses the same seed, so splits and batch schedules coincide; with
/// `K = 2` the first model is the `rdr` model with `α = ½`.
pub fn ksample_train(samples: &[SampleMatrix], config: &TrainConfig) -> Result<Vec<(TrainedRatio, TrainTrace)>> {
    if samples.len() < 2 {
        return Err(Error::Config("K-sample training needs K >= 2".into()));
    }
    let refs: Vec<&SampleMatrix> = samples.iter().collect();
    let weights = vec![1.0 / samples.len() as f64; samples.len()];
    (0..samples.len())
        .map(|k| fit(&refs, k, &weights, Mode::Ksample, config))
        .collect()
}

/// Scores every row of `x`.
pub fn evaluate(model: &TrainedRatio, x: &SampleMatrix, label: SourceLabel) -> Result<ScoreSet> {
    let scores = model.scores(x.matrix())?;
    Ok(ScoreSet {
        scores,
        source_label: label,
        model_id: model.model_id(),
        ids: None,
    })
}

/// Scores on `points` evenly spaced values over `[lo, hi]` for 1D models.
pub fn evaluate_grid(model: &TrainedRatio, lo: f64, hi: f64, points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if model.spec.input_dim != 1 {
        return Err(Error::shape(
            "grid evaluation",
            "input_dim 1",
            format!("input_dim {}", model.spec.input_dim),
        ));
    }
    if points < 2 {
        return Err(Error::Config("grid needs at least 2 points".into()));
    }
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|k| lo + k as f64 * step).collect();
    let scores = model.scores(&Matrix::column_vector(&grid))?;
    Ok((grid, scores))
}

/// Held-out balancing loss and Ĥ² on fresh samples from `P` and `Q`, using
/// the model's own mixture weight.
pub fn estimate_h2(model: &TrainedRatio, xp_test: &SampleMatrix, xq_test: &SampleMatrix) -> Result<LossReport> {
    let gp = clamp_all(&model.scores(xp_test.matrix())?, model.clamps);
    let gq = clamp_all(&model.scores(xq_test.matrix())?, model.clamps);
    let weight = match model.mode {
        Mode::Dr => MixtureWeight::DENSITY_RATIO,
        _ => MixtureWeight::new(model.alpha)?,
    };
    crate::divergence::balancing_loss(&gp, &gq, weight)
}

/// Held-out Ĥ² of a K-sample model against all `K` test samples.
pub fn estimate_h2_mixture(model: &TrainedRatio, tests: &[SampleMatrix]) -> Result<LossReport> {
    if tests.len() != model.mixture_weights.len() {
        return Err(Error::shape(
            "mixture test samples",
            format!("{} weights", model.mixture_weights.len()),
            format!("{} samples", tests.len()),
        ));
    }
    let g: Vec<Vec<f64>> = tests
        .iter()
        .map(|t| model.scores(t.matrix()).map(|s| clamp_all(&s, model.clamps)))
        .collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = g.iter().map(Vec::as_slice).collect();
    let loss = mixture_balancing_loss(&refs, model.numerator, &model.mixture_weights)?;
    let n_p = g[model.numerator].len();
    let n_q = g.iter().map(Vec::len).sum::<usize>() - n_p;
    Ok(LossReport::from_loss(loss, 1.0 - model.alpha.sqrt(), n_p, n_q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_normal;

    fn gaussian(n: usize, shift: f64, rng: &mut RngState) -> SampleMatrix {
        let v: Vec<f64> = rng_normal(rng, n).into_iter().map(|z| z + shift).collect();
        SampleMatrix::from_column(&v).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            hidden_widths: vec![8, 8],
            seed: 4,
            ..TrainConfig::default()
        }
    }

    fn zero_model(mode: Mode) -> TrainedRatio {
        let spec = NetworkSpec::new(2, vec![3], mode.head()).unwrap();
        TrainedRatio {
            params: NetworkParams::zeros(&spec),
            spec,
            mode,
            alpha: 0.5,
            mixture_weights: vec![0.5, 0.5],
            numerator: 0,
            clamps: mode.clamps(),
            seed: 0,
            standardizer: None,
            holdout: LossReport::from_loss(1.0, 0.3, 1, 1),
            train_inputs: vec![],
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = RngState::new(1);
        let a = gaussian(50, 0.0, &mut rng);
        let tiny = gaussian(5, 0.0, &mut rng);
        assert!(train(&a, &tiny, &small_config()).is_err());
        let two_col = SampleMatrix::from_rows(&vec![[0.0, 1.0]; 50]).unwrap();
        assert!(matches!(train(&a, &two_col, &small_config()), Err(Error::Shape { .. })));
        let big_batch = TrainConfig {
            batch_size: 51,
            ..small_config()
        };
        assert!(train(&a, &a, &big_batch).is_err());
        let zero_epochs = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        assert!(train(&a, &a, &zero_epochs).is_err());
    }

    #[test]
    fn training_is_deterministic_and_trace_has_epoch_length() {
        let mut rng = RngState::new(2);
        let a = gaussian(80, 0.0, &mut rng);
        let b = gaussian(60, 1.0, &mut rng);
        let (m1, t1) = train(&a, &b, &small_config()).unwrap();
        let (m2, t2) = train(&a, &b, &small_config()).unwrap();
        assert_eq!(m1.to_json(), m2.to_json());
        assert_eq!(t1, t2);
        assert_eq!(t1.train_loss.len(), 3);
        assert_eq!(t1.holdout_loss.len(), 3);
        let min = t1.holdout_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(m1.holdout.loss, min);
        assert!(m1.holdout.loss <= *t1.holdout_loss.last().unwrap());
    }

    #[test]
    fn dr_mode_uses_softplus_floor() {
        let mut rng = RngState::new(3);
        let a = gaussian(40, 0.0, &mut rng);
        let b = gaussian(40, 0.5, &mut rng);
        let cfg = TrainConfig {
            mode: Mode::Dr,
            ..small_config()
        };
        let (m, _) = train(&a, &b, &cfg).unwrap();
        assert_eq!(m.spec.head, Head::SoftplusFloor);
        assert_eq!(m.alpha, 0.0);
        let s = evaluate(&m, &a, SourceLabel::Real).unwrap();
        assert!(s.scores.iter().all(|&v| v >= 1e-6));
    }

    #[test]
    fn zero_model_scores_constant() {
        let m = zero_model(Mode::Rdr);
        let x = SampleMatrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let s = evaluate(&m, &x, SourceLabel::Other).unwrap();
        for v in &s.scores {
            assert!((v - 0.818_767_781_700_717_4).abs() < 1e-12);
        }
        assert_eq!(evaluate(&m, &x, SourceLabel::Other).unwrap(), s);
        let empty = evaluate(&m, &SampleMatrix::empty(2), SourceLabel::Real).unwrap();
        assert!(empty.is_empty());
        assert!(evaluate(&m, &SampleMatrix::empty(3), SourceLabel::Real).is_err());
    }

    #[test]
    fn grid_layout() {
        let spec = NetworkSpec::new(1, vec![2], Head::BoundedSoftplus).unwrap();
        let mut m = zero_model(Mode::Rdr);
        m.params = NetworkParams::zeros(&spec);
        m.spec = spec;
        let (g, s) = evaluate_grid(&m, -6.0, 6.0, 500).unwrap();
        assert_eq!(g.len(), 500);
        assert_eq!(s.len(), 500);
        assert!((g[1] - g[0] - 12.0 / 499.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let (g, _) = evaluate_grid(&m, 0.0, 1.0, 2).unwrap();
        assert_eq!(g, vec![0.0, 1.0]);
        assert!(evaluate_grid(&zero_model(Mode::Rdr), 0.0, 1.0, 5).is_err());
        assert!(evaluate_grid(&m, 1.0, 0.0, 5).is_err());
    }

    #[test]
    fn estimate_h2_is_asymmetric() {
        let mut rng = RngState::new(6);
        let a = gaussian(200, 0.0, &mut rng);
        let b = gaussian(200, 2.0, &mut rng);
        let (m, _) = train(&a, &b, &small_config()).unwrap();
        let ab = estimate_h2(&m, &a, &b).unwrap();
        let ba = estimate_h2(&m, &b, &a).unwrap();
        assert_ne!(ab.loss, ba.loss);
    }

    #[test]
    fn model_json_round_trip() {
        let mut rng = RngState::new(8);
        let a = gaussian(60, 0.0, &mut rng);
        let b = gaussian(60, 1.0, &mut rng);
        let cfg = TrainConfig {
            standardize: true,
            ..small_config()
        };
        let (m, _) = train(&a, &b, &cfg).unwrap();
        let text = m.to_json();
        let back = TrainedRatio::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
        let probe = evaluate(&m, &a, SourceLabel::Real).unwrap();
        assert_eq!(evaluate(&back, &a, SourceLabel::Real).unwrap(), probe);
    }

    #[test]
    fn model_json_checks_mode_head_pairing() {
        let m = zero_model(Mode::Rdr);
        let text = m.to_json().replace("\"mode\": \"rdr\"", "\"mode\": \"dr\"");
        assert!(matches!(TrainedRatio::from_json(&text), Err(Error::ModelShape(_))));
    }
}
