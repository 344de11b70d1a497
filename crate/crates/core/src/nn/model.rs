//! Dense feed-forward model: storage, inference, gradients, and a versioned
//! on-disk format.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, LabeledDataset, NnError, ScoreVector};

const MODEL_FILE_VERSION: u32 = 1;

/// A multi-layer perceptron with softmax output.
///
/// Weights are row-major `(out_dim, in_dim)` per layer. Hidden layers use
/// the configured activation; the final layer emits logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    activation: Activation,
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

fn check_dims(layer_dims: &[usize]) -> Result<(), NnError> {
    if layer_dims.len() < 2 {
        return Err(NnError::InvalidArch(format!(
            "need at least input and output layers, got {layer_dims:?}"
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(NnError::InvalidArch(format!(
            "zero-width layer in {layer_dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Seeded initialization: weights uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`,
    /// biases zero.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self, NnError> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(layer_dims, activation, &mut rng)
    }

    pub(crate) fn init_with_rng(
        layer_dims: &[usize],
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        check_dims(layer_dims)?;
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let layer: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            weights.push(layer);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    /// Build a model from explicit parameters (used for hand-set weights).
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        check_dims(&layer_dims)?;
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(NnError::InvalidArch(format!(
                "expected {n_layers} weight/bias layers, got {}/{}",
                weights.len(),
                biases.len()
            )));
        }
        for (l, w) in layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            if weights[l].len() != fan_in * fan_out {
                return Err(NnError::InvalidArch(format!(
                    "layer {l}: {} weights, expected {}",
                    weights[l].len(),
                    fan_in * fan_out
                )));
            }
            if biases[l].len() != fan_out {
                return Err(NnError::InvalidArch(format!(
                    "layer {l}: {} biases, expected {fan_out}",
                    biases[l].len()
                )));
            }
        }
        let model = Self {
            layer_dims,
            weights,
            biases,
            activation,
        };
        if model.flat_params().iter().any(|p| !p.is_finite()) {
            return Err(NnError::InvalidData("non-finite model parameter".into()));
        }
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Forward pass returning the output-layer logits.
    pub fn forward_logits(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut a = x.to_vec();
        for l in 0..self.n_layers() {
            let mut z = self.affine(l, &a);
            if l + 1 < self.n_layers() {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            a = z;
        }
        Ok(a)
    }

    fn affine(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let fan_in = self.layer_dims[layer];
        let fan_out = self.layer_dims[layer + 1];
        let w = &self.weights[layer];
        let mut out = self.biases[layer].clone();
        for (o, out_v) in out.iter_mut().enumerate().take(fan_out) {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            *out_v += acc;
        }
        out
    }

    /// Total number of parameters (weights + biases).
    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// All parameters flattened: per layer, weights row-major then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in 0..self.n_layers() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Overwrite all parameters from a flat buffer in [`Self::flat_params`] order.
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.n_params() {
            return Err(NnError::DimensionMismatch {
                expected: self.n_params(),
                actual: params.len(),
            });
        }
        let mut off = 0;
        for l in 0..self.n_layers() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Mean cross-entropy loss over the rows of `data`.
    ///
    /// Computed as `logsumexp(z) - z_y`, which stays finite for any finite
    /// logits.
    pub fn batch_loss(&self, data: &LabeledDataset) -> Result<f64, NnError> {
        let ids: Vec<usize> = (0..data.len()).collect();
        self.loss_grad_subset(data, &ids, false).map(|(l, _)| l)
    }

    /// Mean cross-entropy loss and its gradient (flat, [`Self::flat_params`]
    /// order) over the rows of `data`.
    pub fn batch_loss_gradient(&self, data: &LabeledDataset) -> Result<(f64, Vec<f64>), NnError> {
        let ids: Vec<usize> = (0..data.len()).collect();
        let (loss, grad) = self.loss_grad_subset(data, &ids, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    /// Loss (and optionally gradient) over the listed rows of `data`.
    pub(crate) fn loss_grad_subset(
        &self,
        data: &LabeledDataset,
        ids: &[usize],
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>), NnError> {
        if ids.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        if data.dim() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                actual: data.dim(),
            });
        }
        if data.n_classes() != self.output_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.output_dim(),
                actual: data.n_classes(),
            });
        }

        let n_layers = self.n_layers();
        let mut grad_w: Vec<Vec<f64>> = Vec::new();
        let mut grad_b: Vec<Vec<f64>> = Vec::new();
        if want_grad {
            grad_w = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
            grad_b = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        }

        let mut total_loss = 0.0;
        // Per-sample forward keeping pre-activations, then backprop.
        for &i in ids {
            let x = data.row(i);
            let y = data.label(i);

            let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
            let mut pre_acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
            activations.push(x.to_vec());
            for l in 0..n_layers {
                let z = self.affine(l, &activations[l]);
                if l + 1 < n_layers {
                    let a = z.iter().map(|&v| self.activation.apply(v)).collect();
                    pre_acts.push(z);
                    activations.push(a);
                } else {
                    pre_acts.push(z.clone());
                    activations.push(z);
                }
            }

            let logits = &activations[n_layers];
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
            total_loss += max + sum_exp.ln() - logits[y];

            if want_grad {
                // delta at output: softmax(z) - onehot(y)
                let mut delta: Vec<f64> = logits
                    .iter()
                    .map(|&z| (z - max).exp() / sum_exp)
                    .collect();
                delta[y] -= 1.0;

                for l in (0..n_layers).rev() {
                    let fan_in = self.layer_dims[l];
                    let input = &activations[l];
                    let gw = &mut grad_w[l];
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                        for (g, &xi) in row.iter_mut().zip(input) {
                            *g += d * xi;
                        }
                        grad_b[l][o] += d;
                    }
                    if l > 0 {
                        let w = &self.weights[l];
                        let mut next = vec![0.0; fan_in];
                        for (o, &d) in delta.iter().enumerate() {
                            let row = &w[o * fan_in..(o + 1) * fan_in];
                            for (nv, &wi) in next.iter_mut().zip(row) {
                                *nv += d * wi;
                            }
                        }
                        for (nv, &z) in next.iter_mut().zip(&pre_acts[l - 1]) {
                            *nv *= self.activation.derivative(z);
                        }
                        delta = next;
                    }
                }
            }
        }

        let scale = 1.0 / ids.len() as f64;
        let loss = total_loss * scale;
        let grad = if want_grad {
            let mut flat = Vec::with_capacity(self.n_params());
            for l in 0..n_layers {
                flat.extend(grad_w[l].iter().map(|g| g * scale));
                flat.extend(grad_b[l].iter().map(|g| g * scale));
            }
            Some(flat)
        } else {
            None
        };
        Ok((loss, grad))
    }

    pub(crate) fn sgd_step(&mut self, flat_grad: &[f64], lr: f64, l2: f64) {
        let mut off = 0;
        for l in 0..self.n_layers() {
            let nw = self.weights[l].len();
            for (w, &g) in self.weights[l].iter_mut().zip(&flat_grad[off..off + nw]) {
                *w -= lr * (g + l2 * *w);
            }
            off += nw;
            let nb = self.biases[l].len();
            for (b, &g) in self.biases[l].iter_mut().zip(&flat_grad[off..off + nb]) {
                *b -= lr * g;
            }
            off += nb;
        }
    }

    /// Write the model as versioned JSON. Parameters are serialized with
    /// shortest-roundtrip float formatting, so save/load is bit-exact.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            activation: self.activation,
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| NnError::Format(format!("serialize: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| NnError::Format(format!("parse: {e}")))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(NnError::Format(format!(
                "unsupported model file version {}",
                file.version
            )));
        }
        Self::from_parts(file.layer_dims, file.weights, file.biases, file.activation)
    }
}

/// Softmax probability vector for one input, numerically stabilized by
/// max-subtraction.
pub fn predict_softmax(model: &MlpModel, x: &[f64]) -> Result<ScoreVector, NnError> {
    let logits = model.forward_logits(x)?;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ScoreVector::new(exps.into_iter().map(|e| e / sum).collect())
}

/// Class with the largest softmax probability; ties go to the lowest id.
pub fn predict_label(model: &MlpModel, x: &[f64]) -> Result<usize, NnError> {
    Ok(predict_softmax(model, x)?.argmax())
}
