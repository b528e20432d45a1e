//! The model under measurement: a small fully connected network with exact
//! per-sample gradients.
//!
//! Everything here is 64-bit floating point and deterministic. Per-sample
//! gradients are computed by one backward pass per sample (desk scale, no
//! batched outer-product tricks), and the column mean of the resulting
//! matrix is by construction the gradient of the full-batch loss.

use std::io::{Read as _, Write as _};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::synthdata::{Dataset, SampleTarget};

/// Hidden-layer activation. The output layer is always linear (logits for
/// cross-entropy, raw value for mse).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

/// Architecture of the network: layer widths, hidden activation, loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation, loss: LossKind) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidSpec(
                "layer_dims needs at least an input and an output dimension".into(),
            ));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidSpec("layer dimensions must be positive".into()));
        }
        Ok(Self { layer_dims, activation, loss })
    }

    /// Number of weight layers.
    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Total number of scalar parameters P.
    pub fn param_count(&self) -> usize {
        (0..self.num_layers())
            .map(|l| self.layer_dims[l] * self.layer_dims[l + 1] + self.layer_dims[l + 1])
            .sum()
    }

    /// Flat range of layer `l`'s weight entries (row-major, fan_out x fan_in).
    pub fn weight_range(&self, l: usize) -> Range<usize> {
        let start = self.layer_offset(l);
        start..start + self.layer_dims[l] * self.layer_dims[l + 1]
    }

    /// Flat range of layer `l`'s bias entries.
    pub fn bias_range(&self, l: usize) -> Range<usize> {
        let w = self.weight_range(l);
        w.end..w.end + self.layer_dims[l + 1]
    }

    /// Flat range covering all of layer `l` (weights then biases).
    pub fn layer_range(&self, l: usize) -> Range<usize> {
        self.weight_range(l).start..self.bias_range(l).end
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|k| self.layer_dims[k] * self.layer_dims[k + 1] + self.layer_dims[k + 1])
            .sum()
    }
}

/// Per-parameter freeze flags in flat order; frozen scalars are skipped by
/// the GD update but still receive their true gradient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeMask {
    frozen: Vec<bool>,
}

impl FreezeMask {
    pub fn none(param_count: usize) -> Self {
        Self { frozen: vec![false; param_count] }
    }

    pub fn all(param_count: usize) -> Self {
        Self { frozen: vec![true; param_count] }
    }

    /// Mask freezing every parameter (weights and biases) of layer `l`.
    pub fn freeze_layer(spec: &MlpSpec, l: usize) -> Self {
        let mut frozen = vec![false; spec.param_count()];
        for j in spec.layer_range(l) {
            frozen[j] = true;
        }
        Self { frozen }
    }

    pub fn is_frozen(&self, j: usize) -> bool {
        self.frozen[j]
    }

    pub fn len(&self) -> usize {
        self.frozen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frozen.is_empty()
    }

    /// Indices of unfrozen parameters.
    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.frozen.len()).filter(|&j| !self.frozen[j]).collect()
    }
}

/// Model parameters. The flat layout (per layer: weights row-major, then
/// biases) is fixed for the lifetime of the program and shared by every
/// gradient vector in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    spec: MlpSpec,
    /// weights[l] is fan_out x fan_in, row-major (row = output unit).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    /// Parameters in flat order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in 0..self.spec.num_layers() {
            flat.extend_from_slice(&self.weights[l]);
            flat.extend_from_slice(&self.biases[l]);
        }
        flat
    }

    /// Rebuild parameters from a flat vector in the canonical layout.
    pub fn unflatten(spec: &MlpSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat vector has {} entries, spec needs {}",
                flat.len(),
                spec.param_count()
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..spec.num_layers() {
            weights.push(flat[spec.weight_range(l)].to_vec());
            biases.push(flat[spec.bias_range(l)].to_vec());
        }
        Ok(Self { spec: spec.clone(), weights, biases })
    }
}

/// Glorot-style uniform init: weights ~ U[-sqrt(6/(fan_in+fan_out)), +...],
/// biases exactly zero.
pub fn init_params(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = rng_from_seed(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..spec.num_layers() {
        let fan_in = spec.layer_dims[l];
        let fan_out = spec.layer_dims[l + 1];
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    MlpParams { spec: spec.clone(), weights, biases }
}

/// Activations and matrix-multiplication outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// layer_inputs[l] = a^(l): the vector fed into layer l's weight matrix
    /// (layer_inputs[0] is the raw input).
    pub layer_inputs: Vec<Vec<f64>>,
    /// matmul_out[l] = o^(l) = W^(l) a^(l), before the bias is added.
    pub matmul_out: Vec<Vec<f64>>,
    /// Last layer's o + b: raw value for mse, logits for cross-entropy.
    pub prediction: Vec<f64>,
}

impl ForwardTrace {
    fn new(spec: &MlpSpec) -> Self {
        let layers = spec.num_layers();
        Self {
            layer_inputs: (0..layers).map(|l| vec![0.0; spec.layer_dims[l]]).collect(),
            matmul_out: (0..layers).map(|l| vec![0.0; spec.layer_dims[l + 1]]).collect(),
            prediction: vec![0.0; spec.output_dim()],
        }
    }
}

fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => {
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::Identity => z,
    }
}

/// Relu subgradient at 0 is defined as 0.
fn activate_deriv(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Identity => 1.0,
    }
}

fn forward_into(params: &MlpParams, x: &[f64], trace: &mut ForwardTrace) {
    let spec = &params.spec;
    let layers = spec.num_layers();
    trace.layer_inputs[0].copy_from_slice(x);
    for l in 0..layers {
        let fan_in = spec.layer_dims[l];
        let fan_out = spec.layer_dims[l + 1];
        // split borrow: input slice vs output slice
        let a = std::mem::take(&mut trace.layer_inputs[l]);
        let w = &params.weights[l];
        for c in 0..fan_out {
            let row = &w[c * fan_in..(c + 1) * fan_in];
            let mut acc = 0.0;
            for s in 0..fan_in {
                acc += row[s] * a[s];
            }
            trace.matmul_out[l][c] = acc;
        }
        trace.layer_inputs[l] = a;
        let b = &params.biases[l];
        if l + 1 == layers {
            for c in 0..fan_out {
                trace.prediction[c] = trace.matmul_out[l][c] + b[c];
            }
        } else {
            let o = std::mem::take(&mut trace.matmul_out[l]);
            for c in 0..fan_out {
                trace.layer_inputs[l + 1][c] = activate(spec.activation, o[c] + b[c]);
            }
            trace.matmul_out[l] = o;
        }
    }
}

/// One forward pass, returning the full trace.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != params.spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} entries, model expects {}",
            x.len(),
            params.spec.input_dim()
        )));
    }
    let mut trace = ForwardTrace::new(&params.spec);
    forward_into(params, x, &mut trace);
    Ok(trace)
}

fn loss_from_prediction(loss: LossKind, prediction: &[f64], target: &SampleTarget) -> Result<f64> {
    match (loss, target) {
        (LossKind::Mse, SampleTarget::Value(y)) => {
            if prediction.len() != 1 {
                return Err(Error::ShapeMismatch(
                    "mse expects a 1-dimensional output".into(),
                ));
            }
            let d = prediction[0] - y;
            Ok(d * d)
        }
        (LossKind::SoftmaxCrossEntropy, SampleTarget::Label(y)) => {
            if *y >= prediction.len() {
                return Err(Error::ShapeMismatch(format!(
                    "label {} out of range for {} logits",
                    y,
                    prediction.len()
                )));
            }
            let max = prediction.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum: f64 = prediction.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            Ok(-(prediction[*y] - max - log_sum))
        }
        _ => Err(Error::ShapeMismatch(
            "loss kind does not match the sample's target kind".into(),
        )),
    }
}

/// Loss of one sample at the current parameters.
pub fn sample_loss(params: &MlpParams, x: &[f64], target: &SampleTarget) -> Result<f64> {
    let trace = forward(params, x)?;
    loss_from_prediction(params.spec.loss, &trace.prediction, target)
}

/// Mean of `sample_loss` over the dataset.
pub fn batch_loss(params: &MlpParams, d: &Dataset) -> Result<f64> {
    if d.len() == 0 {
        return Err(Error::Degenerate("batch_loss over an empty dataset".into()));
    }
    let mut acc = 0.0;
    let mut trace = ForwardTrace::new(&params.spec);
    for i in 0..d.len() {
        forward_into(params, d.input(i), &mut trace);
        acc += loss_from_prediction(params.spec.loss, &trace.prediction, &d.target(i))?;
    }
    Ok(acc / d.len() as f64)
}

/// n x P matrix of per-sample gradients; row i is the flattened gradient of
/// sample i's loss.
#[derive(Debug, Clone)]
pub struct GradMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl GradMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn param_count(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    /// Column mean: the gradient of the full-batch loss.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.p];
        for i in 0..self.n {
            let row = self.row(i);
            for j in 0..self.p {
                mean[j] += row[j];
            }
        }
        let inv = 1.0 / self.n as f64;
        for m in &mut mean {
            *m *= inv;
        }
        mean
    }

    /// Build from explicit rows (test support).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Degenerate("GradMatrix needs at least one row".into()));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::ShapeMismatch("ragged gradient rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * p);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Self { data, n: rows.len(), p })
    }
}

struct Backprop {
    trace: ForwardTrace,
    /// delta[l] = dL/d(o^(l) + b^(l)) for the layer currently processed.
    deltas: Vec<Vec<f64>>,
}

impl Backprop {
    fn new(spec: &MlpSpec) -> Self {
        Self {
            trace: ForwardTrace::new(spec),
            deltas: (0..spec.num_layers()).map(|l| vec![0.0; spec.layer_dims[l + 1]]).collect(),
        }
    }

    /// Backward pass for one sample; writes the flat gradient into `out` and
    /// returns the sample loss.
    fn sample_grad(
        &mut self,
        params: &MlpParams,
        x: &[f64],
        target: &SampleTarget,
        out: &mut [f64],
    ) -> Result<f64> {
        let spec = &params.spec;
        let layers = spec.num_layers();
        forward_into(params, x, &mut self.trace);
        let loss = loss_from_prediction(spec.loss, &self.trace.prediction, target)?;

        // output delta
        match (spec.loss, target) {
            (LossKind::Mse, SampleTarget::Value(y)) => {
                self.deltas[layers - 1][0] = 2.0 * (self.trace.prediction[0] - y);
            }
            (LossKind::SoftmaxCrossEntropy, SampleTarget::Label(y)) => {
                let logits = &self.trace.prediction;
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (c, &z) in logits.iter().enumerate() {
                    let e = (z - max).exp();
                    self.deltas[layers - 1][c] = e;
                    sum += e;
                }
                for d in &mut self.deltas[layers - 1] {
                    *d /= sum;
                }
                self.deltas[layers - 1][*y] -= 1.0;
            }
            _ => unreachable!("checked by loss_from_prediction"),
        }

        for l in (0..layers).rev() {
            let fan_in = spec.layer_dims[l];
            let fan_out = spec.layer_dims[l + 1];
            let a = &self.trace.layer_inputs[l];
            let wr = spec.weight_range(l);
            let br = spec.bias_range(l);
            {
                let delta = &self.deltas[l];
                let gw = &mut out[wr];
                for c in 0..fan_out {
                    let dc = delta[c];
                    let row = &mut gw[c * fan_in..(c + 1) * fan_in];
                    for s in 0..fan_in {
                        row[s] = dc * a[s];
                    }
                }
            }
            out[br].copy_from_slice(&self.deltas[l]);

            if l > 0 {
                // propagate to the previous layer's post-activation delta
                let (prev, cur) = self.deltas.split_at_mut(l);
                let delta = &cur[0];
                let w = &params.weights[l];
                let b = &params.biases[l - 1];
                let o_prev = &self.trace.matmul_out[l - 1];
                let dprev = &mut prev[l - 1];
                for s in 0..fan_in {
                    let mut acc = 0.0;
                    for c in 0..fan_out {
                        acc += w[c * fan_in + s] * delta[c];
                    }
                    dprev[s] = acc * activate_deriv(spec.activation, o_prev[s] + b[s]);
                }
            }
        }
        Ok(loss)
    }
}

/// Exact per-sample gradients for the whole dataset, plus each sample's loss.
pub fn per_sample_grads_with_losses(
    params: &MlpParams,
    d: &Dataset,
) -> Result<(GradMatrix, Vec<f64>)> {
    if d.len() == 0 {
        return Err(Error::Degenerate("per-sample gradients of an empty dataset".into()));
    }
    if d.input_dim() != params.spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset input_dim {} does not match model input_dim {}",
            d.input_dim(),
            params.spec.input_dim()
        )));
    }
    let n = d.len();
    let p = params.param_count();
    let mut data = vec![0.0; n * p];
    let mut losses = Vec::with_capacity(n);
    let mut bp = Backprop::new(&params.spec);
    for i in 0..n {
        let loss = bp.sample_grad(params, d.input(i), &d.target(i), &mut data[i * p..(i + 1) * p])?;
        losses.push(loss);
    }
    Ok((GradMatrix { data, n, p }, losses))
}

/// Exact per-sample gradients for the whole dataset.
pub fn per_sample_grads(params: &MlpParams, d: &Dataset) -> Result<GradMatrix> {
    per_sample_grads_with_losses(params, d).map(|(g, _)| g)
}

/// One full-batch gradient-descent step: theta <- theta - lr * grad_mean,
/// skipping frozen parameters.
pub fn gd_step(
    params: &MlpParams,
    grad_mean: &[f64],
    learning_rate: f64,
    mask: &FreezeMask,
) -> Result<MlpParams> {
    let p = params.param_count();
    if grad_mean.len() != p || mask.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "gradient/mask length must equal the parameter count {p}"
        )));
    }
    if learning_rate <= 0.0 {
        return Err(Error::InvalidSpec("learning rate must be positive".into()));
    }
    if grad_mean.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient contains a non-finite entry".into()));
    }
    let mut flat = params.flatten();
    for (j, theta) in flat.iter_mut().enumerate() {
        if !mask.is_frozen(j) {
            *theta -= learning_rate * grad_mean[j];
        }
    }
    MlpParams::unflatten(&params.spec, &flat)
}

/// Central-difference gradient of one sample's loss: the independent oracle
/// for `per_sample_grads`.
pub fn finite_diff_grad(
    params: &MlpParams,
    x: &[f64],
    target: &SampleTarget,
    h: f64,
) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidSpec("finite-difference step must be positive".into()));
    }
    let mut flat = params.flatten();
    let mut grad = vec![0.0; flat.len()];
    for j in 0..flat.len() {
        let orig = flat[j];
        flat[j] = orig + h;
        let plus = sample_loss(&MlpParams::unflatten(&params.spec, &flat)?, x, target)?;
        flat[j] = orig - h;
        let minus = sample_loss(&MlpParams::unflatten(&params.spec, &flat)?, x, target)?;
        flat[j] = orig;
        grad[j] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsHeader {
    layer_dims: Vec<usize>,
    activation: Activation,
    loss: LossKind,
    param_count: usize,
}

/// Write parameters as little-endian f64 in flat order to `<path>`, with a
/// JSON shape header at `<path>.json`.
pub fn save_params(params: &MlpParams, path: &Path) -> Result<()> {
    let header = ParamsHeader {
        layer_dims: params.spec.layer_dims.clone(),
        activation: params.spec.activation,
        loss: params.spec.loss,
        param_count: params.param_count(),
    };
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::Config(format!("header serialization failed: {e}")))?;
    std::fs::write(path.with_extension("json"), json)?;
    let mut f = std::fs::File::create(path)?;
    for v in params.flatten() {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Inverse of [`save_params`].
pub fn load_params(path: &Path) -> Result<MlpParams> {
    let header: ParamsHeader =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)
            .map_err(|e| Error::Config(format!("bad params header: {e}")))?;
    let spec = MlpSpec::new(header.layer_dims, header.activation, header.loss)?;
    if spec.param_count() != header.param_count {
        return Err(Error::Config("header param_count disagrees with layer_dims".into()));
    }
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() != header.param_count * 8 {
        return Err(Error::Config(format!(
            "parameter file has {} bytes, expected {}",
            bytes.len(),
            header.param_count * 8
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MlpParams::unflatten(&spec, &flat)
}
