//! Random search over architecture, epochs, learning rate and L2 strength.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{build_autoencoder, Architecture, LossKind};
use super::train::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::seed;

/// Epoch cap for search trials; the winner is retrained at its full epoch count.
pub const TRIAL_EPOCH_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub architectures: Vec<Architecture>,
    pub learning_rates: Vec<f64>,
    pub epoch_counts: Vec<usize>,
    pub l2_lambdas: Vec<f64>,
    pub batch_size: usize,
    pub loss_kind: LossKind,
    pub budget: usize,
    pub seed: u64,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidParameter(
                "search budget must be at least 1".into(),
            ));
        }
        if self.architectures.is_empty()
            || self.learning_rates.is_empty()
            || self.epoch_counts.is_empty()
            || self.l2_lambdas.is_empty()
        {
            return Err(Error::InvalidParameter(
                "every search dimension needs at least one value".into(),
            ));
        }
        for a in &self.architectures {
            a.validate()?;
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.architectures.len()
            * self.learning_rates.len()
            * self.epoch_counts.len()
            * self.l2_lambdas.len()
    }
}

/// One point of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub architecture: Architecture,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub candidate: Candidate,
    pub epochs_run: usize,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Candidate,
    pub trials: Vec<Trial>,
}

/// Trains one candidate at the trial epoch cap and returns its final
/// validation loss. Every trial uses the same init and batch seeds, so the
/// loss is a function of the candidate alone.
pub fn evaluate_candidate(
    candidate: &Candidate,
    train_x: &Array2<f64>,
    val_x: &Array2<f64>,
    search_seed: u64,
) -> Result<(usize, f64)> {
    let model = build_autoencoder(
        &candidate.architecture,
        candidate.train.l2_lambda,
        seed::derive(search_seed, seed::INIT),
    )?;
    let mut cfg = candidate.train.clone();
    cfg.epochs = cfg.epochs.min(TRIAL_EPOCH_CAP);
    let (_, history) = train(&model, &cfg, train_x, val_x)?;
    let loss = match history.validation_loss.last() {
        Some(l) => *l,
        None => super::model::mean_reconstruction_loss(&model, val_x, cfg.loss_kind)?,
    };
    Ok((cfg.epochs, loss))
}

/// Samples `budget` candidates uniformly (with replacement) and returns the
/// one with the lowest validation loss; ties go to the earlier trial.
pub fn random_search(
    space: &SearchSpace,
    train_x: &Array2<f64>,
    val_x: &Array2<f64>,
) -> Result<SearchResult> {
    space.validate()?;
    let mut rng = seed::rng(seed::derive(space.seed, seed::SEARCH));
    let mut trials: Vec<Trial> = Vec::with_capacity(space.budget);
    for index in 0..space.budget {
        let candidate = Candidate {
            architecture: space.architectures[rng.random_range(0..space.architectures.len())]
                .clone(),
            train: TrainConfig {
                learning_rate: space.learning_rates
                    [rng.random_range(0..space.learning_rates.len())],
                epochs: space.epoch_counts[rng.random_range(0..space.epoch_counts.len())],
                l2_lambda: space.l2_lambdas[rng.random_range(0..space.l2_lambdas.len())],
                batch_size: space.batch_size,
                loss_kind: space.loss_kind,
                seed: seed::derive(space.seed, seed::BATCH),
            },
        };
        let (epochs_run, validation_loss) =
            evaluate_candidate(&candidate, train_x, val_x, space.seed)?;
        log::info!(
            "trial {index}: {} lr={} epochs={} l2={} -> {validation_loss:.6}",
            candidate.architecture,
            candidate.train.learning_rate,
            candidate.train.epochs,
            candidate.train.l2_lambda
        );
        trials.push(Trial {
            index,
            candidate,
            epochs_run,
            validation_loss,
        });
    }
    let best = trials
        .iter()
        .fold(None::<&Trial>, |best, t| match best {
            Some(b) if !(t.validation_loss < b.validation_loss) => Some(b),
            _ => Some(t),
        })
        .expect("budget >= 1")
        .candidate
        .clone();
    Ok(SearchResult { best, trials })
}

impl SearchResult {
    pub fn write_trials_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "trial",
            "architecture",
            "activation",
            "learning_rate",
            "epochs",
            "l2",
            "epochs_run",
            "validation_loss",
        ])?;
        for t in &self.trials {
            let c = &t.candidate;
            w.write_record([
                t.index.to_string(),
                c.architecture.to_string(),
                serde_json::to_string(&c.architecture.hidden_activation)?
                    .trim_matches('"')
                    .to_owned(),
                c.train.learning_rate.to_string(),
                c.train.epochs.to_string(),
                c.train.l2_lambda.to_string(),
                t.epochs_run.to_string(),
                t.validation_loss.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
