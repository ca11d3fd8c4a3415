use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::TransitionDataset;
use crate::error::{Error, Result};

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension statistics of model inputs `(state, action)` and of the
/// state-delta targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn moments(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    // Welford
    for row in rows {
        n += 1;
        for d in 0..dim {
            let delta = row[d] - mean[d];
            mean[d] += delta / n as f64;
            m2[d] += delta * (row[d] - mean[d]);
        }
    }
    let std = m2
        .iter()
        .map(|v| (v / n.max(1) as f64).sqrt().max(STD_FLOOR))
        .collect();
    (mean, std)
}

impl Normalizer {
    pub fn fit(data: &TransitionDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a normalizer to an empty dataset"));
        }
        let (od, ad) = (data.obs_dim(), data.act_dim());
        let inputs = data
            .transitions()
            .iter()
            .map(|t| t.state.iter().chain(t.action.iter()).copied().collect());
        let (input_mean, input_std) = moments(inputs, od + ad);
        let targets = data
            .transitions()
            .iter()
            .map(|t| t.next_state.iter().zip(t.state.iter()).map(|(n, s)| n - s).collect());
        let (target_mean, target_std) = moments(targets, od);
        Ok(Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        })
    }

    /// Identity statistics.
    pub fn identity(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            input_mean: vec![0.0; obs_dim + act_dim],
            input_std: vec![1.0; obs_dim + act_dim],
            target_mean: vec![0.0; obs_dim],
            target_std: vec![1.0; obs_dim],
        }
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn denormalize_input(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn normalize_target(&self, delta: &[f64]) -> Vec<f64> {
        delta
            .iter()
            .zip(&self.target_mean)
            .zip(&self.target_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn denormalize_target(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.target_mean)
            .zip(&self.target_std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    /// Normalized network inputs for a batch of states and actions.
    pub fn input_batch(&self, states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> Array2<f64> {
        let od = states.ncols();
        let rows = states.nrows();
        let mut x = Array2::zeros((rows, od + actions.ncols()));
        for r in 0..rows {
            for c in 0..od {
                x[[r, c]] = (states[[r, c]] - self.input_mean[c]) / self.input_std[c];
            }
            for c in 0..actions.ncols() {
                let j = od + c;
                x[[r, j]] = (actions[[r, c]] - self.input_mean[j]) / self.input_std[j];
            }
        }
        x
    }
}
