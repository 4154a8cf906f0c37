//! Feed-forward autoencoder trained on benign rows; rows whose reconstruction
//! error exceeds a threshold are flagged as zero-day attacks.
//!
//! Hidden layers default to tanh with a linear output layer. Weights use the
//! symmetric uniform fan-in/fan-out initialisation and training uses Adam.
//! Reconstruction error is the per-instance mean over features.

mod grad;
mod model;
mod search;
mod train;

pub use grad::{gradients, gradients_with_loss, Gradients};
pub use model::{
    build_autoencoder, detect, reconstruction_error, score, score_with, Activation, Architecture,
    AutoencoderModel, LayerDocument, LossKind, ModelDocument, MODEL_FORMAT,
};
pub use search::{
    evaluate_candidate, random_search, Candidate, SearchResult, SearchSpace, Trial, TRIAL_EPOCH_CAP,
};
pub use train::{train, TrainConfig, TrainHistory};
