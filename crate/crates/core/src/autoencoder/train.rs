use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grad::gradients_with_loss;
use super::model::{mean_reconstruction_loss, AutoencoderModel, LossKind};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub loss_kind: LossKind,
    /// Seeds the per-epoch batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 1024,
            learning_rate: 1e-3,
            l2_lambda: 1e-4,
            loss_kind: LossKind::Mse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(
                "learning_rate must be positive".into(),
            ));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidParameter(
                "l2_lambda must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch reconstruction loss (without the L2 term).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// Writes `epoch,loss` rows for one curve.
    pub fn write_curve(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss"])?;
        for (i, l) in losses.iter().enumerate() {
            w.write_record([(i + 1).to_string(), crate::dataset::format_real(*l)])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Adaptive moment estimation with the usual decay constants.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Mini-batch Adam on benign rows. Batches are reshuffled every epoch from
/// `cfg.seed`; the final short batch is kept.
pub fn train(
    model: &AutoencoderModel,
    cfg: &TrainConfig,
    train_x: &Array2<f64>,
    validation_x: &Array2<f64>,
) -> Result<(AutoencoderModel, TrainHistory)> {
    cfg.validate()?;
    if train_x.nrows() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    if validation_x.nrows() == 0 {
        return Err(Error::Data("empty validation set".into()));
    }
    for x in [train_x, validation_x] {
        if x.ncols() != model.input_width() {
            return Err(Error::Dimension {
                expected: model.input_width(),
                actual: x.ncols(),
            });
        }
    }

    let mut model = model.clone();
    model.loss_kind = cfg.loss_kind;
    model.l2_lambda = cfg.l2_lambda;
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((model, history));
    }

    let n = train_x.nrows();
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = model.flat_parameters();
    let mut adam = Adam::new(cfg.learning_rate, params.len());

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = train_x.select(Axis(0), idx);
            let (g, loss) = gradients_with_loss(&model, &batch)?;
            weighted += loss * idx.len() as f64;
            adam.update(&mut params, &g.flat());
            model.set_flat_parameters(&params)?;
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::Numeric(format!(
                "parameters diverged in epoch {}",
                epoch + 1
            )));
        }
        history.train_loss.push(weighted / n as f64);
        history.validation_loss.push(mean_reconstruction_loss(
            &model,
            validation_x,
            cfg.loss_kind,
        )?);
        log::debug!(
            "epoch {}: train {:.6} validation {:.6}",
            epoch + 1,
            history.train_loss[epoch],
            history.validation_loss[epoch]
        );
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::super::model::{build_autoencoder, Architecture};
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};
    use crate::preprocess::fit_scaler;

    fn data() -> (Array2<f64>, Array2<f64>) {
        let spec = SyntheticSpec {
            n_benign: 1200,
            n_per_attack_class: 1,
            n_features: 8,
            benign_covariance_rank: 2,
            attack_offsets: vec![0.0],
            noise_sigma: 0.05,
            seed: 1,
        };
        let d = generate_synthetic(&spec).unwrap();
        let x = d.benign_rows();
        let z = fit_scaler(&x).unwrap().transform(&x).unwrap();
        let train = z.slice(ndarray::s![..900, ..]).to_owned();
        let val = z.slice(ndarray::s![900.., ..]).to_owned();
        (train, val)
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 5e-3,
            l2_lambda: 1e-4,
            loss_kind: LossKind::Mse,
            seed: 3,
        }
    }

    #[test]
    fn loss_falls_on_low_rank_data() {
        let (tr, va) = data();
        let m = build_autoencoder(&Architecture::new(8, &[6, 3, 6]), 1e-4, 1).unwrap();
        let initial = mean_reconstruction_loss(&m, &va, LossKind::Mse).unwrap();
        let (_, h) = train(&m, &cfg(), &tr, &va).unwrap();
        assert_eq!(h.epochs(), 50);
        assert_eq!(h.validation_loss.len(), 50);
        assert!(h.train_loss[49] < h.train_loss[0]);
        assert!(
            h.validation_loss[49] < 0.3 * initial,
            "{} vs {initial}",
            h.validation_loss[49]
        );
    }

    #[test]
    fn zero_epochs_is_noop() {
        let (tr, va) = data();
        let m = build_autoencoder(&Architecture::new(8, &[3]), 0.0, 1).unwrap();
        let mut c = cfg();
        c.epochs = 0;
        let (out, h) = train(&m, &c, &tr, &va).unwrap();
        assert_eq!(out.weights, m.weights);
        assert_eq!(h.epochs(), 0);
    }

    #[test]
    fn deterministic_by_seed() {
        let (tr, va) = data();
        let m = build_autoencoder(&Architecture::new(8, &[3]), 0.0, 1).unwrap();
        let mut c = cfg();
        c.epochs = 3;
        let (a, ha) = train(&m, &c, &tr, &va).unwrap();
        let (b, hb) = train(&m, &c, &tr, &va).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn empty_training_set_rejected() {
        let m = build_autoencoder(&Architecture::new(8, &[3]), 0.0, 1).unwrap();
        let (_, va) = data();
        assert!(train(&m, &cfg(), &Array2::zeros((0, 8)), &va).is_err());
    }
}
