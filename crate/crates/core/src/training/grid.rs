use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{derive_seed, evaluate, train, TrainConfig};
use crate::data::{stratified_folds, MtsDataset};
use crate::error::{Error, Result};
use crate::models::{Model, ModelSpec};
use crate::parallel::map_indices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub batch_sizes: Vec<usize>,
    pub window_pcts: Vec<f64>,
    pub k_folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            batch_sizes: vec![1, 8, 32],
            window_pcts: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            k_folds: 5,
        }
    }
}

impl GridSpec {
    /// `(batch_size, window_pct)` in row-major order: batch outer.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.batch_sizes
            .iter()
            .flat_map(|&b| self.window_pcts.iter().map(move |&w| (b, w)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty() || self.window_pcts.is_empty() {
            return Err(Error::InvalidArgument("grid axes must be non-empty".into()));
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 folds, got {}",
                self.k_folds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub batch_size: usize,
    pub window_pct: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    pub best_batch_size: usize,
    pub best_window_pct: f64,
    pub best_mean_accuracy: f64,
    pub runs: usize,
}

/// Stratified k-fold grid search over batch size and window size.
///
/// Every `(cell, fold)` run gets its own seed derived from `seed`, so jobs
/// may run in any order or concurrently. The winner has the highest mean
/// validation accuracy; ties go to the larger batch, then the smaller
/// window.
pub fn grid_search(
    template: &ModelSpec,
    train_set: &MtsDataset,
    grid: &GridSpec,
    config: &TrainConfig,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    config.validate()?;
    let folds = stratified_folds(train_set, grid.k_folds, derive_seed(seed, &[0]))?;
    let cells = grid.cells();
    for &(_, w) in &cells {
        template.clone().with_window(w).validate()?;
    }
    let k = grid.k_folds;
    let accuracies: Vec<Result<f64>> = map_indices(cells.len() * k, |job| {
        let (cell, fold) = (job / k, job % k);
        let (batch_size, window_pct) = cells[cell];
        let run_seed = derive_seed(seed, &[1, cell as u64, fold as u64]);
        let (tr, va) = folds.split(fold);
        let mut model = Model::new(template.clone().with_window(window_pct), run_seed)?;
        let cfg = TrainConfig {
            batch_size,
            seed: run_seed,
            ..config.clone()
        };
        train(&mut model, &train_set.subset(&tr), &cfg)?;
        Ok(evaluate(&model, &train_set.subset(&va))?.accuracy)
    });
    let accuracies = accuracies.into_iter().collect::<Result<Vec<_>>>()?;

    let results: Vec<CellResult> = cells
        .iter()
        .zip(accuracies.chunks(k))
        .map(|(&(batch_size, window_pct), acc)| CellResult {
            batch_size,
            window_pct,
            fold_accuracies: acc.to_vec(),
            mean_accuracy: acc.iter().sum::<f64>() / k as f64,
        })
        .collect();
    let best = results
        .iter()
        .max_by(|a, b| {
            a.mean_accuracy
                .total_cmp(&b.mean_accuracy)
                .then(a.batch_size.cmp(&b.batch_size))
                .then(b.window_pct.total_cmp(&a.window_pct))
        })
        .expect("grid is non-empty");
    Ok(GridResult {
        best_batch_size: best.batch_size,
        best_window_pct: best.window_pct,
        best_mean_accuracy: best.mean_accuracy,
        runs: accuracies.len(),
        cells: results,
    })
}

/// Columns `batch_size,window_pct,fold,val_accuracy`, one row per run.
pub fn write_cv_table(result: &GridResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["batch_size", "window_pct", "fold", "val_accuracy"])?;
    for cell in &result.cells {
        for (fold, acc) in cell.fold_accuracies.iter().enumerate() {
            w.write_record([
                cell.batch_size.to_string(),
                cell.window_pct.to_string(),
                fold.to_string(),
                acc.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
