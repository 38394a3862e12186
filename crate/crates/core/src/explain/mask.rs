use serde::{Deserialize, Serialize};

use super::AttributionMap;
use crate::data::Region;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.6;

/// Cells whose normalized attribution is strictly above `threshold`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationMask {
    length: usize,
    dims: usize,
    cells: Vec<bool>,
    threshold_bits: u64,
}

impl ExplanationMask {
    pub fn new(length: usize, dims: usize, cells: Vec<bool>, threshold: f64) -> Result<Self> {
        if cells.len() != length * dims {
            return Err(Error::Shape(format!(
                "mask has {} cells, expected {length}x{dims}",
                cells.len()
            )));
        }
        Ok(ExplanationMask {
            length,
            dims,
            cells,
            threshold_bits: threshold.to_bits(),
        })
    }

    pub fn threshold(&self) -> f64 {
        f64::from_bits(self.threshold_bits)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn get(&self, t: usize, d: usize) -> bool {
        self.cells[t * self.dims + d]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Timestamps with at least one selected variable.
    pub fn time_support(&self) -> Vec<bool> {
        self.cells.chunks(self.dims).map(|row| row.iter().any(|&c| c)).collect()
    }
}

pub fn threshold_mask(map: &AttributionMap, threshold: f64) -> Result<ExplanationMask> {
    if !map.normalized {
        return Err(Error::InvalidArgument("threshold_mask needs a normalized map".into()));
    }
    let cells = map.values.data().iter().map(|&v| v > threshold).collect();
    ExplanationMask::new(map.length(), map.dims(), cells, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouScope {
    /// Compare selected timestamps with `[t_start, t_end)`.
    TimeOnly,
    /// Compare selected cells with the region's cells on its variable.
    Cells,
}

/// Intersection over union against a ground-truth region. An empty union
/// scores 0.
pub fn iou(mask: &ExplanationMask, region: &Region, scope: IouScope) -> Result<f64> {
    if region.t_start >= region.t_end || region.t_end > mask.length || region.dim >= mask.dims {
        return Err(Error::InvalidArgument(format!(
            "region {region:?} does not fit a {}x{} mask",
            mask.length, mask.dims
        )));
    }
    let truth_t = |t: usize| (region.t_start..region.t_end).contains(&t);
    let (mut inter, mut union) = (0usize, 0usize);
    match scope {
        IouScope::TimeOnly => {
            for (t, selected) in mask.time_support().into_iter().enumerate() {
                let truth = truth_t(t);
                inter += (selected && truth) as usize;
                union += (selected || truth) as usize;
            }
        }
        IouScope::Cells => {
            for t in 0..mask.length {
                for d in 0..mask.dims {
                    let selected = mask.get(t, d);
                    let truth = truth_t(t) && d == region.dim;
                    inter += (selected && truth) as usize;
                    union += (selected || truth) as usize;
                }
            }
        }
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}
