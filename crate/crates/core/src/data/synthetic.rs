//! Two-class sine-wave dataset with a planted square pulse.
//!
//! Every sample has `D = 2` sine channels. Positive samples replace
//! variable 0 on timesteps `[0.6 T, 0.8 T)` with a constant pulse, and that
//! window is recorded as the ground-truth explanation region.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{MtsDataset, Region};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_per_class: usize,
    pub length: usize,
    pub noise: f64,
    pub period: f64,
    pub amplitude: f64,
    pub pulse_amplitude: f64,
    /// Draw an independent uniform phase per sample and variable.
    pub random_phase: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_per_class: 10,
            length: 100,
            noise: 0.05,
            period: 25.0,
            amplitude: 1.0,
            pulse_amplitude: 2.0,
            random_phase: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub const DIMS: usize = 2;

    /// Pulse window `[start, end)`; `[60, 80)` for the default length.
    pub fn pulse_window(&self) -> (usize, usize) {
        (self.length * 3 / 5, self.length * 4 / 5)
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<MtsDataset> {
    if cfg.length < 5 || cfg.n_per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs length >= 5 and at least one sample per class, got {cfg:?}"
        )));
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let (start, end) = cfg.pulse_window();
    let t = cfg.length;

    let mut labels: Vec<usize> = (0..2 * cfg.n_per_class).map(|i| i / cfg.n_per_class).collect();
    labels.shuffle(&mut rng);

    let mut samples = Vec::with_capacity(labels.len());
    let mut regions = Vec::with_capacity(labels.len());
    for &label in &labels {
        let mut data = Vec::with_capacity(SyntheticConfig::DIMS * t);
        for dim in 0..SyntheticConfig::DIMS {
            let phase = if cfg.random_phase {
                rng.gen_range(0.0..2.0 * PI)
            } else {
                0.0
            };
            for ti in 0..t {
                let clean = if label == POSITIVE && dim == 0 && (start..end).contains(&ti) {
                    cfg.pulse_amplitude
                } else {
                    cfg.amplitude * (2.0 * PI * ti as f64 / cfg.period + phase).sin()
                };
                let noise = if cfg.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                data.push(clean + noise);
            }
        }
        samples.push(Tensor::new(vec![SyntheticConfig::DIMS, t], data)?);
        regions.push((label == POSITIVE).then_some(Region {
            dim: 0,
            t_start: start,
            t_end: end,
        }));
    }
    MtsDataset::new(
        "Synthetic",
        SyntheticConfig::DIMS,
        t,
        samples,
        labels,
        vec!["negative".into(), "positive".into()],
    )?
    .with_regions(regions)
}
