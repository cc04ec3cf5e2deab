//! Mixture density network mapping (feature cell, week) to a Gaussian
//! mixture over log price, its NLL training loop and seeded ensembles.

mod model;
mod network;
mod train;

pub use model::{predict_density, DensityModel, EnsembleModel, MODEL_FORMAT_VERSION};
pub use network::{forward, InputSchema, Layout, NetworkParams, TargetScale};
pub use train::{nll_loss, train, train_ensemble, LrSchedule, TrainConfig};
