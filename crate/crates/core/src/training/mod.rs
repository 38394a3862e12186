//! Training loop, cross-validated grid search and classification metrics.

mod grid;
mod metrics;

pub use grid::{grid_search, write_cv_table, CellResult, GridResult, GridSpec};
pub use metrics::{evaluate, MetricsReport};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MtsDataset;
use crate::error::{Error, Result};
use crate::layers::{Ctx, Mode};
use crate::models::Model;
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Optimizer steps taken for `n` samples.
    pub fn steps_for(&self, n: usize) -> usize {
        self.epochs * n.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sample-weighted mean loss of each epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
}

/// Mixes a run seed with job coordinates (splitmix64 finalizer per word).
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub(crate) fn check_compatible(model: &Model, data: &MtsDataset) -> Result<()> {
    let spec = model.spec();
    if data.dims() != spec.input_d || data.length() != spec.input_t {
        return Err(Error::Shape(format!(
            "dataset is D={} T={}, model expects D={} T={}",
            data.dims(),
            data.length(),
            spec.input_d,
            spec.input_t
        )));
    }
    if data.num_classes() > spec.classes {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, model only {}",
            data.num_classes(),
            spec.classes
        )));
    }
    Ok(())
}

/// Minibatch Adam on mean cross-entropy. The last batch of an epoch may be
/// smaller than `batch_size`; it is used as is.
pub fn train(model: &mut Model, data: &MtsDataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    check_compatible(model, data)?;
    let adam = Adam::default();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0]));
    let mut ctx = Ctx::new(Mode::Train, derive_seed(config.seed, &[1]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order.shuffle(&mut shuffle_rng);
        }
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let x = data.batch_input(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
            let (loss, trace, grads) = model.loss_and_grads(&x, &labels, &mut ctx)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            model.accumulate(&grads);
            adam.step(model.params_mut());
            model.commit_running_stats(&trace);
            total += loss * idx.len() as f64;
            steps += 1;
        }
        loss_curve.push(total / data.len() as f64);
    }
    Ok(TrainReport { loss_curve, steps })
}
