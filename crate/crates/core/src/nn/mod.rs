//! Minimal feed-forward classifiers for victim, surrogate, and membership
//! models.
//!
//! Training is plain mini-batch SGD on softmax cross-entropy, seeded end to
//! end: identical data, architecture, and seed produce a bit-identical
//! model. Models are immutable after training, so read-only inference from
//! multiple threads is safe.

mod model;
mod train;

pub use model::{predict_label, predict_softmax, MlpModel};
pub use train::train_classifier;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from dataset construction, training, and inference.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: u32 },

    #[error("model io: {0}")]
    Io(#[from] std::io::Error),

    #[error("model file: {0}")]
    Format(String),
}

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// A dense classification dataset: row-major features plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    n_classes: usize,
}

impl LabeledDataset {
    /// Build a dataset from feature rows and class labels.
    ///
    /// Requires `dim >= 1`, one label per row, every label `< n_classes`,
    /// and all feature values finite.
    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
    ) -> Result<Self, NnError> {
        if rows.len() != labels.len() {
            return Err(NnError::InvalidData(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(NnError::InvalidData(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, dim, labels.to_vec(), n_classes)
    }

    /// Build a dataset from an already-flat row-major feature buffer.
    pub fn from_flat(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, NnError> {
        if dim == 0 {
            return Err(NnError::InvalidData("feature dimension must be >= 1".into()));
        }
        if n_classes == 0 {
            return Err(NnError::InvalidData("need at least one class".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(NnError::InvalidData(format!(
                "feature buffer has {} values, expected {} rows x {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(NnError::InvalidData(format!("non-finite feature value {bad}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(NnError::InvalidData(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            dim,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// New dataset containing the given rows (duplicates allowed).
    pub fn subset(&self, ids: &[usize]) -> Result<Self, NnError> {
        let mut features = Vec::with_capacity(ids.len() * self.dim);
        let mut labels = Vec::with_capacity(ids.len());
        for &i in ids {
            if i >= self.len() {
                return Err(NnError::InvalidData(format!(
                    "row id {i} out of range for dataset of {}",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(features, self.dim, labels, self.n_classes)
    }

    /// Fraction of rows the model labels correctly.
    pub fn accuracy_of(&self, model: &MlpModel) -> Result<f64, NnError> {
        if self.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        let mut hits = 0usize;
        for i in 0..self.len() {
            if predict_label(model, self.row(i))? == self.labels[i] {
                hits += 1;
            }
        }
        Ok(hits as f64 / self.len() as f64)
    }
}

/// Hyper-parameters for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: u32, batch_size: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            epochs,
            batch_size,
            seed,
            l2_penalty: 0.0,
        }
    }

    /// Same hyper-parameters, different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(NnError::InvalidConfig(format!(
                "l2_penalty must be non-negative, got {}",
                self.l2_penalty
            )));
        }
        Ok(())
    }
}

/// A model's softmax output for one input: entries in [0,1] summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    probs: Vec<f64>,
}

impl ScoreVector {
    const SUM_TOL: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self, NnError> {
        if probs.is_empty() {
            return Err(NnError::InvalidData("empty probability vector".into()));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(NnError::InvalidData(format!("probability {p} outside [0,1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(NnError::InvalidData(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    /// Argmax class, ties broken by lowest class id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}
