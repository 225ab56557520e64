use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::ParamBlock;

use super::task::{Batch, Targets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `h`.
    fn slope_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Parameter block names for layer `i`.
pub fn weight_name(i: usize) -> String {
    format!("layer{i}.weight")
}

pub fn bias_name(i: usize) -> String {
    format!("layer{i}.bias")
}

/// Fully connected network `x ↦ f_L(W_L · … f_1(W_1 x + b_1) … + b_L)`.
///
/// Parameters live in `params` as `[W_0, b_0, W_1, b_1, …]` so the whole
/// model can be handed to the optimizer as one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    params: Vec<ParamBlock>,
    activations: Vec<Activation>,
}

/// Layer outputs from a forward pass; `outputs[0]` is the input batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub outputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn predictions(&self) -> &Matrix {
        self.outputs.last().expect("cache holds the input at least")
    }
}

impl MlpModel {
    /// Gaussian weights with std `1/√fan_in`, zero biases. Hidden layers use
    /// `hidden_activation`; the output layer is linear.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        hidden_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        if dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = 1.0 / (fan_in as f64).sqrt();
            let w = Matrix::from_fn(fan_out, fan_in, |_, _| std * rng.sample::<f64, _>(StandardNormal));
            let act = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                hidden_activation
            };
            layers.push((w, vec![0.0; fan_out], act));
        }
        Self::from_layers(layers)
    }

    /// Builds a model from `(weight, bias, activation)` triples.
    pub fn from_layers(layers: Vec<(Matrix, Vec<f64>, Activation)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        let mut params = Vec::with_capacity(2 * layers.len());
        let mut activations = Vec::with_capacity(layers.len());
        let mut prev_out: Option<usize> = None;
        for (i, (w, b, act)) in layers.into_iter().enumerate() {
            if let Some(p) = prev_out {
                if w.cols() != p {
                    return Err(Error::shape((w.rows(), p), w.shape()));
                }
            }
            if b.len() != w.rows() {
                return Err(Error::shape((w.rows(), 1), (b.len(), 1)));
            }
            prev_out = Some(w.rows());
            params.push(ParamBlock::matrix(weight_name(i), w));
            params.push(ParamBlock::vector(bias_name(i), b));
            activations.push(act);
        }
        Ok(Self { params, activations })
    }

    /// Rebuilds a model from named blocks (any order) and per-layer activations.
    pub fn from_blocks(blocks: &[ParamBlock], activations: &[Activation]) -> Result<Self> {
        let by_name: BTreeMap<&str, &ParamBlock> = blocks.iter().map(|b| (b.name.as_str(), b)).collect();
        if by_name.len() != 2 * activations.len() || blocks.len() != by_name.len() {
            return Err(Error::FormatError(format!(
                "expected {} uniquely named blocks for {} layers, got {}",
                2 * activations.len(),
                activations.len(),
                blocks.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (i, &act) in activations.iter().enumerate() {
            let fetch = |name: String| {
                by_name
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| Error::FormatError(format!("missing block `{name}`")))
            };
            let w = fetch(weight_name(i))?;
            let b = fetch(bias_name(i))?;
            if b.weight.cols() != 1 {
                return Err(Error::FormatError(format!("bias `{}` is not a vector", b.name)));
            }
            layers.push((w.weight.clone(), b.weight.as_slice().to_vec(), act));
        }
        Self::from_layers(layers)
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.weight(0).cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight(self.num_layers() - 1).rows()
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        &self.params[2 * layer].weight
    }

    /// Weights of the layers that produce hidden activations (all but the
    /// output layer).
    pub fn hidden_weights(&self) -> impl Iterator<Item = &Matrix> {
        (0..self.num_layers() - 1).map(|i| self.weight(i))
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        self.params[2 * layer + 1].weight.as_slice()
    }

    pub fn params(&self) -> &[ParamBlock] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<ParamBlock> {
        self.params
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.weight.rows() * p.weight.cols()).sum()
    }

    /// Runs the network on the rows of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape((x.rows(), self.input_dim()), x.shape()));
        }
        let mut outputs = Vec::with_capacity(self.num_layers() + 1);
        outputs.push(x.clone());
        for layer in 0..self.num_layers() {
            let act = self.activations[layer];
            let mut z = outputs[layer].matmul_t(self.weight(layer))?;
            let bias = self.bias(layer);
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(bias) {
                    *v = act.apply(*v + b);
                }
            }
            outputs.push(z);
        }
        Ok(ForwardCache { outputs })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.outputs.pop().expect("nonempty"))
    }

    /// Mean loss over the batch and its exact gradient for every block.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, BTreeMap<String, Matrix>)> {
        let cache = self.forward(&batch.x)?;
        let (loss, mut delta) = loss_with_output_grad(cache.predictions(), &batch.y)?;
        let mut grads = BTreeMap::new();
        for layer in (0..self.num_layers()).rev() {
            let out = &cache.outputs[layer + 1];
            let act = self.activations[layer];
            if act != Activation::Identity {
                for (d, h) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= act.slope_from_output(*h);
                }
            }
            let gw = delta.t_matmul(&cache.outputs[layer])?;
            let mut gb = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (acc, d) in gb.iter_mut().zip(delta.row(r)) {
                    *acc += d;
                }
            }
            if layer > 0 {
                delta = delta.matmul(self.weight(layer))?;
            }
            grads.insert(weight_name(layer), gw);
            let n = gb.len();
            grads.insert(bias_name(layer), Matrix::from_fn(n, 1, |i, _| gb[i]));
        }
        Ok((loss, grads))
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let pred = self.predict(&batch.x)?;
        Ok(loss_with_output_grad(&pred, &batch.y)?.0)
    }

    /// Central finite differences of the batch loss, one coordinate at a time.
    pub fn finite_diff_grad(&self, batch: &Batch, h: f64) -> Result<BTreeMap<String, Matrix>> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput("finite-difference step must be > 0".into()));
        }
        let mut probe = self.clone();
        let mut grads = BTreeMap::new();
        for p in 0..self.params.len() {
            let (rows, cols) = self.params[p].weight.shape();
            let mut g = Matrix::zeros(rows, cols);
            for idx in 0..rows * cols {
                let orig = self.params[p].weight.as_slice()[idx];
                probe.params[p].weight.as_mut_slice()[idx] = orig + h;
                let up = probe.loss(batch)?;
                probe.params[p].weight.as_mut_slice()[idx] = orig - h;
                let down = probe.loss(batch)?;
                probe.params[p].weight.as_mut_slice()[idx] = orig;
                g.as_mut_slice()[idx] = (up - down) / (2.0 * h);
            }
            grads.insert(self.params[p].name.clone(), g);
        }
        Ok(grads)
    }
}

/// Loss and its gradient with respect to the network output.
///
/// Regression: `(1/n)·Σᵢ ‖ŷᵢ − yᵢ‖²`. Classification: mean softmax
/// cross-entropy.
fn loss_with_output_grad(pred: &Matrix, targets: &Targets) -> Result<(f64, Matrix)> {
    let n = pred.rows() as f64;
    match targets {
        Targets::Values(y) => {
            if y.shape() != pred.shape() {
                return Err(Error::shape(pred.shape(), y.shape()));
            }
            let diff = pred.sub(y)?;
            let loss = diff.frobenius_norm_sq() / n;
            Ok((loss, diff.scale(2.0 / n)))
        }
        Targets::Labels(labels) => {
            if labels.len() != pred.rows() {
                return Err(Error::shape((pred.rows(), 1), (labels.len(), 1)));
            }
            let classes = pred.cols();
            let mut grad = Matrix::zeros(pred.rows(), classes);
            let mut total = 0.0;
            for (r, &label) in labels.iter().enumerate() {
                if label >= classes {
                    return Err(Error::InvalidInput(format!("label {label} >= {classes} classes")));
                }
                let logits = pred.row(r);
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
                let log_norm = max + sum.ln();
                total += log_norm - logits[label];
                for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
                    let p = (logits[c] - log_norm).exp();
                    *g = (p - if c == label { 1.0 } else { 0.0 }) / n;
                }
            }
            Ok((total / n, grad))
        }
    }
}
