use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grad::{accumulate, check_data, evaluate};
use super::{AdamConfig, AdamState, Loss, Matrix, MlpModel};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub validation_fraction: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            validation_fraction: 0.2,
            seed: 0,
            shuffle_each_epoch: true,
            loss: Loss::RelativeMse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss: Loss,
    pub n_train: usize,
    pub n_validation: usize,
    /// Losses of the starting parameters.
    pub initial_train_loss: f64,
    pub initial_validation_loss: f64,
    /// One entry per epoch, evaluated after the epoch in inference mode.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub wall_seconds: f64,
    pub checksum: String,
}

impl TrainReport {
    pub fn final_validation_loss(&self) -> f64 {
        self.validation_loss.last().copied().unwrap_or(self.initial_validation_loss)
    }

    pub fn final_train_loss(&self) -> f64 {
        self.train_loss.last().copied().unwrap_or(self.initial_train_loss)
    }
}

/// Mini-batch ADAM on normalized data, starting from `model`.
///
/// A seeded fraction of the rows is held out once for validation.
pub fn train(model: &MlpModel, x: &Matrix, y: &Matrix, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    check_data(model, x, y)?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid("training needs at least two samples"));
    }
    let started = Instant::now();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, stream::TRAINING, 0)));
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let (val, rest) = idx.split_at(n_val);
    let val = val.to_vec();
    let mut order = rest.to_vec();

    let mut model = model.clone();
    let mut adam = AdamState::new(model.params().len());
    let mut grad = vec![0.0; model.params().len()];
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, stream::TRAINING, 1));
    let mut report = TrainReport {
        loss: cfg.loss,
        n_train: order.len(),
        n_validation: val.len(),
        initial_train_loss: evaluate(&model, x, y, &order, cfg.loss),
        initial_validation_loss: evaluate(&model, x, y, &val, cfg.loss),
        train_loss: Vec::with_capacity(cfg.epochs),
        validation_loss: Vec::with_capacity(cfg.epochs),
        wall_seconds: 0.0,
        checksum: String::new(),
    };
    for epoch in 0..cfg.epochs {
        if cfg.shuffle_each_epoch || epoch == 0 {
            order.shuffle(&mut shuffle_rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let value = accumulate(&model, x, y, batch, cfg.loss, &mut grad);
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            adam.step(model.params_mut(), &grad, &cfg.adam)?;
        }
        let tl = evaluate(&model, x, y, &order, cfg.loss);
        let vl = evaluate(&model, x, y, &val, cfg.loss);
        if !tl.is_finite() || !vl.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch} train_loss {tl:.6e} validation_loss {vl:.6e}");
        report.train_loss.push(tl);
        report.validation_loss.push(vl);
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    report.checksum = model.checksum();
    Ok((model, report))
}

/// Continues training a pre-trained network on new data with fresh optimizer state.
///
/// The architecture and the attached scaling are kept; the data must already be
/// normalized with that scaling.
pub fn fine_tune(pretrained: &MlpModel, x: &Matrix, y: &Matrix, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    check_data(pretrained, x, y)?;
    train(pretrained, x, y, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;

    fn toy(n: usize) -> (Matrix, Matrix) {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let x = Matrix::new(n, 1, xs.clone()).unwrap();
        let y = Matrix::new(n, 1, xs.iter().map(|v| 2.0 * v).collect()).unwrap();
        (x, y)
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let m = MlpModel::init(&[1, 4, 1], OutputActivation::Linear, 1).unwrap();
        let (x, y) = toy(20);
        let cfg = TrainConfig { epochs: 0, loss: Loss::Mse, ..TrainConfig::default() };
        let (out, rep) = fine_tune(&m, &x, &y, &cfg).unwrap();
        assert_eq!(out, m);
        assert!(rep.train_loss.is_empty() && rep.validation_loss.is_empty());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let m = MlpModel::init(&[1, 4, 1], OutputActivation::Linear, 1).unwrap();
        let (x, y) = toy(100);
        let cfg = TrainConfig { epochs: 5, loss: Loss::Mse, ..TrainConfig::default() };
        let a = train(&m, &x, &y, &cfg).unwrap().1;
        let b = train(&m, &x, &y, &cfg).unwrap().1;
        assert_eq!(a.checksum, b.checksum);
        assert_eq!(a.validation_loss, b.validation_loss);
    }

    #[test]
    fn rejects_mismatched_data() {
        let m = MlpModel::init(&[2, 4, 1], OutputActivation::Linear, 1).unwrap();
        let (x, y) = toy(10);
        assert!(matches!(fine_tune(&m, &x, &y, &TrainConfig::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn huge_learning_rate_is_reported_as_divergence() {
        let m = MlpModel::init(&[1, 8, 1], OutputActivation::Linear, 2).unwrap();
        let (x, y) = toy(50);
        let y = y.map(|_, v| v * 1e300);
        let cfg = TrainConfig { epochs: 3, loss: Loss::Mse, ..TrainConfig::default() };
        assert!(matches!(train(&m, &x, &y, &cfg), Err(Error::Divergence { .. })));
    }
}
