//! Deterministic mini-batch SGD training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Activation, LabeledDataset, MlpModel, NnError, TrainConfig};

/// Train a softmax classifier on `data` with plain mini-batch SGD.
///
/// `arch` gives the full layer widths `[d, hidden.., Y]` and must match the
/// dataset's feature dimension and class count. The whole run (init, epoch
/// shuffles, updates) is driven by a single generator seeded from
/// `cfg.seed`, so identical inputs produce a bit-identical model. With
/// `epochs = 0` the returned model is exactly the seeded initialization.
///
/// L2 decay (`cfg.l2_penalty`) applies to weights only, not biases.
pub fn train_classifier(
    data: &LabeledDataset,
    arch: &[usize],
    activation: Activation,
    cfg: &TrainConfig,
) -> Result<MlpModel, NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if arch.first() != Some(&data.dim()) {
        return Err(NnError::InvalidArch(format!(
            "arch input dim {:?} does not match data dim {}",
            arch.first(),
            data.dim()
        )));
    }
    if arch.last() != Some(&data.n_classes()) {
        return Err(NnError::InvalidArch(format!(
            "arch output dim {:?} does not match class count {}",
            arch.last(),
            data.n_classes()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::init_with_rng(arch, activation, &mut rng)?;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = model.loss_grad_subset(data, batch, true)?;
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch });
            }
            let grad = grad.expect("gradient requested");
            model.sgd_step(&grad, cfg.learning_rate, cfg.l2_penalty);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn xor_dataset() -> LabeledDataset {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        LabeledDataset::from_rows(&rows, &[0, 1, 1, 0], 2).unwrap()
    }

    /// Two Gaussians with means -1 and +1 per dimension, unit variance.
    fn two_gaussian_dataset(n: usize, dim: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let mean = if class == 0 { -1.0 } else { 1.0 };
            rows.push((0..dim).map(|_| mean + noise.sample(&mut rng)).collect());
            labels.push(class);
        }
        LabeledDataset::from_rows(&rows, &labels, 2).unwrap()
    }

    /// Closed-form Gaussian (Bayes) classifier for the two-Gaussian task:
    /// with means +/-1 and shared unit covariance, the optimal rule is the
    /// sign of the feature sum.
    fn bayes_accuracy(data: &LabeledDataset) -> f64 {
        let mut hits = 0;
        for i in 0..data.len() {
            let s: f64 = data.row(i).iter().sum();
            let pred = usize::from(s > 0.0);
            if pred == data.label(i) {
                hits += 1;
            }
        }
        hits as f64 / data.len() as f64
    }

    #[test]
    fn xor_converges() {
        let data = xor_dataset();
        let cfg = TrainConfig::new(0.5, 2000, 4, 3);
        let model = train_classifier(&data, &[2, 8, 2], Activation::Tanh, &cfg).unwrap();
        assert!(data.accuracy_of(&model).unwrap() >= 0.99);
    }

    #[test]
    fn zero_epochs_equals_seeded_init() {
        let data = xor_dataset();
        let cfg = TrainConfig::new(0.5, 0, 4, 7);
        let model = train_classifier(&data, &[2, 8, 2], Activation::Relu, &cfg).unwrap();
        let init = MlpModel::init(&[2, 8, 2], Activation::Relu, 7).unwrap();
        assert_eq!(model.flat_params(), init.flat_params());
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = two_gaussian_dataset(60, 2, 5);
        let cfg = TrainConfig::new(0.1, 30, 8, 123);
        let a = train_classifier(&data, &[2, 6, 2], Activation::Relu, &cfg).unwrap();
        let b = train_classifier(&data, &[2, 6, 2], Activation::Relu, &cfg).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        let c = train_classifier(&data, &[2, 6, 2], Activation::Relu, &cfg.with_seed(124)).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn two_gaussian_task_reaches_085() {
        let data = two_gaussian_dataset(200, 2, 9);
        // The task itself is separable at this level: check with the
        // closed-form Gaussian classifier first.
        assert!(bayes_accuracy(&data) >= 0.85, "oracle {}", bayes_accuracy(&data));
        let cfg = TrainConfig::new(0.2, 200, 16, 21);
        let model = train_classifier(&data, &[2, 8, 2], Activation::Tanh, &cfg).unwrap();
        assert!(data.accuracy_of(&model).unwrap() >= 0.85);
    }

    #[test]
    fn rejects_mismatched_arch() {
        let data = xor_dataset();
        let cfg = TrainConfig::new(0.5, 1, 4, 0);
        assert!(train_classifier(&data, &[3, 8, 2], Activation::Relu, &cfg).is_err());
        assert!(train_classifier(&data, &[2, 8, 3], Activation::Relu, &cfg).is_err());
    }

    #[test]
    fn rejects_empty_dataset() {
        let data = LabeledDataset::from_flat(vec![], 2, vec![], 2).unwrap();
        let cfg = TrainConfig::new(0.5, 1, 4, 0);
        assert!(matches!(
            train_classifier(&data, &[2, 4, 2], Activation::Relu, &cfg),
            Err(NnError::EmptyDataset)
        ));
    }

    /// Central finite differences, independent of the backprop path: only
    /// `batch_loss` evaluations.
    fn finite_diff_gradient(model: &MlpModel, data: &LabeledDataset, step: f64) -> Vec<f64> {
        let base = model.flat_params();
        let mut grad = vec![0.0; base.len()];
        let mut probe = model.clone();
        for i in 0..base.len() {
            let mut params = base.clone();
            params[i] = base[i] + step;
            probe.set_flat_params(&params).unwrap();
            let up = probe.batch_loss(data).unwrap();
            params[i] = base[i] - step;
            probe.set_flat_params(&params).unwrap();
            let down = probe.batch_loss(data).unwrap();
            grad[i] = (up - down) / (2.0 * step);
        }
        grad
    }

    fn grad_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        let diff: f64 = analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        diff / norm.max(1e-12)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for (trial, &act) in [Activation::Relu, Activation::Tanh].iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + trial as u64);
            let dims = [3, 5, 4, 3];
            let model = MlpModel::init(&dims, act, rng.random()).unwrap();
            let noise = Normal::new(0.0, 1.0).unwrap();
            let rows: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..3).map(|_| noise.sample(&mut rng)).collect())
                .collect();
            let labels: Vec<usize> = (0..12).map(|_| rng.random_range(0..3)).collect();
            let data = LabeledDataset::from_rows(&rows, &labels, 3).unwrap();

            let (_, analytic) = model.batch_loss_gradient(&data).unwrap();
            let numeric = finite_diff_gradient(&model, &data, 1e-5);
            let err = grad_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "activation {act:?}: relative error {err}");
        }
    }
}

