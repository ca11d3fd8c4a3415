//! Learned dynamics: transition datasets, input/target normalization,
//! ensembles of deterministic or probabilistic networks, and particle
//! propagation through an ensemble.

mod dataset;
mod ensemble;
mod normalizer;
mod propagate;

pub use dataset::TransitionDataset;
pub use ensemble::{DynamicsConfig, DynamicsEnsemble, LossKind, Member, ModelKind, MultiStepNorm, TrainReport};
pub use normalizer::{Normalizer, STD_FLOOR};
pub use propagate::{particle_returns, propagate, propagate_batch, ParticleRollout, PropagationKind, PropagationMode};

use crate::error::Result;
use crate::rng::RngStream;

/// Trains a fresh deterministic ensemble on `data`.
pub fn train_deterministic(data: &TransitionDataset, cfg: &DynamicsConfig, stream: &RngStream) -> Result<(DynamicsEnsemble, TrainReport)> {
    let cfg = DynamicsConfig {
        kind: ModelKind::Deterministic,
        loss: LossKind::Single,
        ..cfg.clone()
    };
    train_fresh(data, &cfg, stream)
}

/// Trains a fresh probabilistic ensemble with the Gaussian likelihood loss.
pub fn train_probabilistic(data: &TransitionDataset, cfg: &DynamicsConfig, stream: &RngStream) -> Result<(DynamicsEnsemble, TrainReport)> {
    let cfg = DynamicsConfig {
        kind: ModelKind::Probabilistic,
        loss: LossKind::Single,
        ..cfg.clone()
    };
    train_fresh(data, &cfg, stream)
}

/// Trains a fresh deterministic ensemble with the multi-step loss over
/// windows of `ms_horizon` contiguous transitions.
pub fn train_multistep(data: &TransitionDataset, cfg: &DynamicsConfig, ms_horizon: usize, stream: &RngStream) -> Result<(DynamicsEnsemble, TrainReport)> {
    let cfg = DynamicsConfig {
        kind: ModelKind::Deterministic,
        loss: LossKind::Multistep,
        ms_horizon,
        ..cfg.clone()
    };
    train_fresh(data, &cfg, stream)
}

fn train_fresh(data: &TransitionDataset, cfg: &DynamicsConfig, stream: &RngStream) -> Result<(DynamicsEnsemble, TrainReport)> {
    let mut ens = DynamicsEnsemble::new(data.obs_dim(), data.act_dim(), cfg, stream)?;
    let report = ens.fit(data, cfg, stream)?;
    Ok((ens, report))
}
