//! Dense ReLU feedforward network with a selectable output head, reverse-mode
//! gradients, Adam, and a JSON model document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{affine, logistic, rng_normal, stable_softplus, Matrix, RngState};

/// Output floor of the softplus head in density-ratio mode.
pub const SOFTPLUS_FLOOR: f64 = 1e-6;

/// Largest `f64` strictly below 2.
const BELOW_TWO: f64 = 1.9999999999999998;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// `2s/(s+1)` with `s = softplus(z)`, mapping onto `(0, 2)`.
    BoundedSoftplus,
    /// `max(softplus(z), 1e-6)`.
    SoftplusFloor,
    Linear,
}

impl Head {
    pub fn name(self) -> &'static str {
        match self {
            Head::BoundedSoftplus => "bounded_softplus",
            Head::SoftplusFloor => "softplus_floor",
            Head::Linear => "linear",
        }
    }

    /// Output value and its derivative with respect to the pre-activation.
    pub fn apply(self, z: f64) -> (f64, f64) {
        match self {
            Head::BoundedSoftplus => {
                let s = stable_softplus(z);
                let out = 2.0 * s / (s + 1.0);
                // Saturated ends are clamped into the open interval with a
                // zero subgradient.
                if out <= 0.0 {
                    (f64::MIN_POSITIVE, 0.0)
                } else if out >= 2.0 {
                    (BELOW_TWO, 0.0)
                } else {
                    (out, 2.0 * logistic(z) / ((s + 1.0) * (s + 1.0)))
                }
            }
            Head::SoftplusFloor => {
                let s = stable_softplus(z);
                if s > SOFTPLUS_FLOOR {
                    (s, logistic(z))
                } else {
                    (SOFTPLUS_FLOOR, 0.0)
                }
            }
            Head::Linear => (z, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub head: Head,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, head: Head) -> Result<Self> {
        let spec = NetworkSpec {
            input_dim,
            hidden_widths,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Four hidden layers of 64 ReLU units.
    pub fn default_mlp(input_dim: usize, head: Head) -> Self {
        NetworkSpec {
            input_dim,
            hidden_widths: vec![64; 4],
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("network input_dim must be at least 1".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::Config("network needs at least one hidden layer".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden layer widths must be at least 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, output layer included.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, 1));
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Weights and biases of every layer. Gradients and Adam moments use the same
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkParams {
            layers: spec
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Layer {
                    weights: Matrix::zeros(o, i),
                    bias: vec![0.0; o],
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`NetworkParams::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(
                "flat parameters",
                self.num_params(),
                flat.len(),
            ));
        }
        let mut pos = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&flat[pos..pos + w.len()]);
            pos += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
        Ok(())
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let dims = spec.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::shape(
                "network layers",
                format!("{} layers in spec", dims.len()),
                format!("{} layers in params", self.layers.len()),
            ));
        }
        for (l, (layer, &(i, o))) in self.layers.iter().zip(&dims).enumerate() {
            if layer.weights.shape() != (o, i) || layer.bias.len() != o {
                return Err(Error::shape(
                    "network layer",
                    format!("layer {l} expects {o}x{i}"),
                    format!(
                        "{} with bias {}",
                        layer.weights.shape_string(),
                        layer.bias.len()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// He initialization: weights `N(0, 2/fan_in)`, zero biases.
pub fn init_params(spec: &NetworkSpec, rng: &mut RngState) -> Result<NetworkParams> {
    spec.validate()?;
    let mut params = NetworkParams::zeros(spec);
    for layer in &mut params.layers {
        let fan_in = layer.weights.cols();
        let scale = (2.0 / fan_in as f64).sqrt();
        let draws = rng_normal(rng, layer.weights.as_slice().len());
        for (w, z) in layer.weights.as_mut_slice().iter_mut().zip(draws) {
            *w = scale * z;
        }
    }
    Ok(params)
}

/// Intermediate values of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the batch itself, then each hidden activation).
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

fn check_input(params: &NetworkParams, spec: &NetworkSpec, x: &Matrix) -> Result<()> {
    params.check_against(spec)?;
    if x.cols() != spec.input_dim {
        return Err(Error::shape(
            "network input",
            format!("input_dim {}", spec.input_dim),
            format!("batch {}", x.shape_string()),
        ));
    }
    Ok(())
}

/// Scores for every row of `x`, plus the cache needed for backpropagation.
pub fn forward(params: &NetworkParams, spec: &NetworkSpec, x: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
    check_input(params, spec, x)?;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut current = x.clone();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let z = affine(&current, &layer.weights, &layer.bias)?;
        inputs.push(current);
        if l < last {
            let mut a = z.clone();
            relu_in_place(&mut a);
            pre.push(z);
            current = a;
        } else {
            pre.push(z);
            current = Matrix::zeros(0, 0);
        }
    }
    let scores = pre[last]
        .as_slice()
        .iter()
        .map(|&z| spec.head.apply(z).0)
        .collect();
    Ok((scores, ForwardCache { inputs, pre }))
}

/// Forward pass without keeping intermediates.
pub fn predict(params: &NetworkParams, spec: &NetworkSpec, x: &Matrix) -> Result<Vec<f64>> {
    check_input(params, spec, x)?;
    let mut current = affine(x, &params.layers[0].weights, &params.layers[0].bias)?;
    for layer in &params.layers[1..] {
        relu_in_place(&mut current);
        current = affine(&current, &layer.weights, &layer.bias)?;
    }
    Ok(current
        .as_slice()
        .iter()
        .map(|&z| spec.head.apply(z).0)
        .collect())
}

/// Reverse-mode gradient of `Σ_i dloss_dscore[i] · score_i` with respect to
/// every parameter. The ReLU subgradient at 0 is 0.
pub fn backward(
    params: &NetworkParams,
    spec: &NetworkSpec,
    cache: ForwardCache,
    dloss_dscore: &[f64],
) -> Result<NetworkParams> {
    params.check_against(spec)?;
    let n = cache.batch_size();
    if dloss_dscore.len() != n || cache.pre.len() != params.layers.len() {
        return Err(Error::shape(
            "backward",
            format!("cache for batch of {n}"),
            format!("{} score gradients", dloss_dscore.len()),
        ));
    }
    let mut grads = params.zeros_like();
    let last = params.layers.len() - 1;

    let mut delta = Matrix::zeros(n, 1);
    for (i, (&d, &z)) in dloss_dscore
        .iter()
        .zip(cache.pre[last].as_slice())
        .enumerate()
    {
        delta.set(i, 0, d * spec.head.apply(z).1);
    }

    for l in (0..=last).rev() {
        let input = &cache.inputs[l];
        let weights = &params.layers[l].weights;
        let (out_dim, in_dim) = weights.shape();
        let g = &mut grads.layers[l];
        {
            let gw = g.weights.as_mut_slice();
            for i in 0..n {
                let a = input.row(i);
                for (j, &d) in delta.row(i).iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[j] += d;
                    for (gv, &av) in gw[j * in_dim..(j + 1) * in_dim].iter_mut().zip(a) {
                        *gv += d * av;
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        let mut prev = Matrix::zeros(n, in_dim);
        let below = &cache.pre[l - 1];
        for i in 0..n {
            let p = prev.row_mut(i);
            for j in 0..out_dim {
                let d = delta.get(i, j);
                if d == 0.0 {
                    continue;
                }
                for (pv, &wv) in p.iter_mut().zip(weights.row(j)) {
                    *pv += d * wv;
                }
            }
            for (pv, &z) in p.iter_mut().zip(below.row(i)) {
                if z <= 0.0 {
                    *pv = 0.0;
                }
            }
        }
        delta = prev;
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            config,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut NetworkParams, grads: &NetworkParams, state: &mut AdamState) -> Result<()> {
    if params.num_params() != grads.num_params() || grads.num_params() != state.m.num_params() {
        return Err(Error::shape(
            "adam_step",
            params.num_params(),
            grads.num_params(),
        ));
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .slices_mut()
        .zip(grads.slices())
        .zip(state.m.slices_mut())
        .zip(state.v.slices_mut())
    {
        for (((pv, &gv), mv), vv) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One layer as stored in a model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// `{spec, layers, meta?}`; `meta` is owned by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument<M> {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<M>,
}

impl<M> ModelDocument<M> {
    pub fn new(params: &NetworkParams, spec: &NetworkSpec, meta: Option<M>) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerDoc {
                w: (0..l.weights.rows()).map(|r| l.weights.row(r).to_vec()).collect(),
                b: l.bias.clone(),
            })
            .collect();
        ModelDocument {
            spec: spec.clone(),
            layers,
            meta,
        }
    }

    /// Rebuilds validated parameters from the stored layers.
    pub fn params(&self) -> Result<NetworkParams> {
        self.spec
            .validate()
            .map_err(|e| Error::ModelShape(e.to_string()))?;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let weights =
                    Matrix::from_rows(&l.w).map_err(|e| Error::ModelShape(format!("layer {i}: {e}")))?;
                Ok(Layer {
                    weights,
                    bias: l.b.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = NetworkParams { layers };
        params
            .check_against(&self.spec)
            .map_err(|e| Error::ModelShape(e.to_string()))?;
        Ok(params)
    }
}

/// Byte offset of a serde_json error position within `text`.
pub(crate) fn json_error(text: &str, err: &serde_json::Error) -> Error {
    let line = err.line().max(1);
    let offset = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum::<usize>()
        + err.column().saturating_sub(1);
    Error::ModelParse {
        offset: offset.min(text.len()),
        message: err.to_string(),
    }
}

/// Encodes a network as a JSON model document with shortest round-trip floats.
pub fn serialize(params: &NetworkParams, spec: &NetworkSpec) -> String {
    let doc: ModelDocument<serde_json::Value> = ModelDocument::new(params, spec, None);
    serde_json::to_string(&doc).expect("model document is always serializable")
}

pub fn deserialize(text: &str) -> Result<(NetworkParams, NetworkSpec)> {
    let doc: ModelDocument<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
    let params = doc.params()?;
    Ok((params, doc.spec))
}
