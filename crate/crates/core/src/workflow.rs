//! End-to-end workflows behind the command-line tool. Each one writes its
//! artifacts into an output directory together with a run manifest, and
//! is a pure function of its options: rerunning with the same options
//! rewrites byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_ts_file, save_ts_file, MtsDataset, Region, SyntheticConfig};
use crate::error::{Error, Result};
use crate::explain::{explain, iou, threshold_mask, write_map_csv, write_map_ppm, IouScope};
use crate::models::{load_checkpoint, save_checkpoint, Architecture, ModelSpec};
use crate::reporting::{persist_run, summarize, summary_to_csv, ResultsTable, RunManifest, TieMethod};
use crate::training::{evaluate, grid_search, train, write_cv_table, GridSpec, TrainConfig};
use crate::Model;

/// Name of the manifest a command writes.
pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn finish(manifest: RunManifest, out: &Path) -> Result<PathBuf> {
    let command = manifest.command.clone();
    let path = persist_run(manifest, out)?;
    let target = out.join(manifest_name(&command));
    std::fs::rename(&path, &target).map_err(|e| Error::io(&target, e))?;
    Ok(target)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub n_per_class: usize,
    pub length: usize,
    pub noise: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            n_per_class: 10,
            length: 100,
            noise: 0.05,
        }
    }
}

pub const SYNTH_TRAIN: &str = "synthetic_TRAIN.ts";
pub const SYNTH_TEST: &str = "synthetic_TEST.ts";
pub const SYNTH_REGIONS: &str = "synthetic_regions.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegionRow {
    file: String,
    index: usize,
    dim: usize,
    t_start: usize,
    t_end: usize,
}

/// Synthetic corpus split half and half per class into train and test.
pub fn synthetic_split(options: &SynthOptions, seed: u64) -> Result<(MtsDataset, MtsDataset)> {
    if options.n_per_class < 2 || !options.n_per_class.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "n_per_class must be even and at least 2, got {}",
            options.n_per_class
        )));
    }
    let ds = generate_synthetic(&SyntheticConfig {
        n_per_class: options.n_per_class,
        length: options.length,
        noise: options.noise,
        seed,
        ..SyntheticConfig::default()
    })?;
    let (mut train_set, mut test_set) = ds.split_per_class(options.n_per_class / 2);
    train_set.name = "synthetic".into();
    test_set.name = "synthetic".into();
    Ok((train_set, test_set))
}

pub fn synth(options: &SynthOptions, seed: u64, out: &Path) -> Result<PathBuf> {
    prepare(out)?;
    let (train_set, test_set) = synthetic_split(options, seed)?;
    save_ts_file(&train_set, out.join(SYNTH_TRAIN))?;
    save_ts_file(&test_set, out.join(SYNTH_TEST))?;
    let regions_path = out.join(SYNTH_REGIONS);
    let file = std::fs::File::create(&regions_path).map_err(|e| Error::io(&regions_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for (name, ds) in [(SYNTH_TRAIN, &train_set), (SYNTH_TEST, &test_set)] {
        for index in 0..ds.len() {
            if let Some(r) = ds.region(index) {
                w.serialize(RegionRow {
                    file: name.into(),
                    index,
                    dim: r.dim,
                    t_start: r.t_start,
                    t_end: r.t_end,
                })?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&regions_path, e))?;

    let mut m = RunManifest::new("synth", seed)
        .with_config(options)?
        .with_metrics(&serde_json::json!({
            "train_samples": train_set.len(),
            "test_samples": test_set.len(),
        }))?;
    for f in [SYNTH_TRAIN, SYNTH_TEST, SYNTH_REGIONS] {
        m.add_file(f);
    }
    finish(m, out)
}

/// Ground-truth region of sample `index` of data file `data`, looked up in
/// a regions CSV by the data file's name.
pub fn lookup_region(regions_csv: &Path, data: &Path, index: usize) -> Result<Option<Region>> {
    let name = data
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut reader = csv::Reader::from_path(regions_csv)?;
    for row in reader.deserialize() {
        let row: RegionRow = row?;
        if row.file == name && row.index == index {
            return Ok(Some(Region {
                dim: row.dim,
                t_start: row.t_start,
                t_end: row.t_end,
            }));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub architecture: Architecture,
    pub batch_size: usize,
    pub window_pct: f64,
    pub epochs: usize,
    pub filters: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            architecture: Architecture::Xcm,
            batch_size: 1,
            window_pct: 0.2,
            epochs: 100,
            filters: ModelSpec::DEFAULT_FILTERS,
        }
    }
}

pub const CHECKPOINT_FILE: &str = "model.json";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";

/// Trains a fresh model on `train_path`; the seed drives both the weight
/// initialization and the batch order.
pub fn train_model(options: &TrainOptions, train_path: &Path, seed: u64, out: &Path) -> Result<PathBuf> {
    prepare(out)?;
    let data = load_ts_file(train_path)?;
    let spec = ModelSpec::new(options.architecture, data.length(), data.dims(), data.num_classes())
        .with_window(options.window_pct)
        .with_filters(options.filters);
    let mut model = Model::new(spec.clone(), seed)?;
    let config = TrainConfig {
        epochs: options.epochs,
        batch_size: options.batch_size,
        seed,
        shuffle_each_epoch: true,
    };
    let report = train(&mut model, &data, &config)?;
    save_checkpoint(&model, out.join(CHECKPOINT_FILE))?;
    let mut curve = String::from("epoch,loss\n");
    for (e, l) in report.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{e},{l}\n"));
    }
    write(&out.join(LOSS_CURVE_FILE), curve)?;
    let train_metrics = evaluate(&model, &data)?;

    let mut m = RunManifest::new("train", seed)
        .with_spec(&spec)?
        .with_config(&serde_json::json!({
            "options": options,
            "train": train_path.file_name().map(|n| n.to_string_lossy()),
            "train_config": config,
            "retrained_on_full_train_set": true,
        }))?
        .with_metrics(&serde_json::json!({
            "trainable_parameters": model.count_parameters(),
            "optimizer_steps": report.steps,
            "final_loss": report.loss_curve.last(),
            "train_accuracy": train_metrics.accuracy,
        }))?;
    m.add_file(CHECKPOINT_FILE);
    m.add_file(LOSS_CURVE_FILE);
    finish(m, out)
}

// ---------------------------------------------------------------- eval

pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";

pub fn eval_model(checkpoint: &Path, test_path: &Path, seed: u64, out: &Path) -> Result<PathBuf> {
    prepare(out)?;
    let model = load_checkpoint(checkpoint)?;
    let data = load_ts_file(test_path)?;
    let metrics = evaluate(&model, &data)?;
    let mut text = serde_json::to_string_pretty(&metrics)?;
    text.push('\n');
    write(&out.join(METRICS_FILE), text)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(data.class_names().iter().cloned());
    w.write_record(&header)?;
    for (name, row) in data.class_names().iter().zip(&metrics.confusion) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    write(
        &out.join(CONFUSION_FILE),
        w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?,
    )?;

    let mut m = RunManifest::new("eval", seed)
        .with_spec(model.spec())?
        .with_config(&serde_json::json!({
            "checkpoint": checkpoint.file_name().map(|n| n.to_string_lossy()),
            "test": test_path.file_name().map(|n| n.to_string_lossy()),
        }))?
        .with_metrics(&metrics)?;
    m.add_file(METRICS_FILE);
    m.add_file(CONFUSION_FILE);
    finish(m, out)
}

// ---------------------------------------------------------------- explain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    pub index: usize,
    /// `None` explains the predicted class.
    pub class: Option<usize>,
    pub threshold: f64,
    pub regions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub index: usize,
    pub target_class: usize,
    pub predicted_class: usize,
    pub probabilities: Vec<f64>,
    pub threshold: f64,
    pub variables_mask_cells: usize,
    pub time_mask_timestamps: usize,
    pub region: Option<Region>,
    pub time_iou: Option<f64>,
    pub variables_iou_cells: Option<f64>,
}

pub const EXPLANATION_FILE: &str = "explanation.json";

pub fn explain_sample(
    checkpoint: &Path,
    data_path: &Path,
    options: &ExplainOptions,
    seed: u64,
    out: &Path,
) -> Result<PathBuf> {
    prepare(out)?;
    let model = load_checkpoint(checkpoint)?;
    let data = load_ts_file(data_path)?;
    if options.index >= data.len() {
        return Err(Error::InvalidArgument(format!(
            "index {} out of range for {} samples",
            options.index,
            data.len()
        )));
    }
    let e = explain(&model, data.sample(options.index), options.class)?;
    let var_mask = threshold_mask(&e.variables, options.threshold)?;
    let time_mask = threshold_mask(&e.time, options.threshold)?;
    let region = match &options.regions {
        Some(p) => lookup_region(p, data_path, options.index)?,
        None => None,
    };
    let time_iou = region.map(|r| iou(&time_mask, &r, IouScope::TimeOnly)).transpose()?;
    let variables_iou_cells = region.map(|r| iou(&var_mask, &r, IouScope::Cells)).transpose()?;

    let files = [
        "variables_map.csv",
        "time_map.csv",
        "variables_map.ppm",
        "time_map.ppm",
        EXPLANATION_FILE,
    ];
    write_map_csv(&e.variables, out.join(files[0]))?;
    write_map_csv(&e.time, out.join(files[1]))?;
    write_map_ppm(&e.variables, out.join(files[2]))?;
    write_map_ppm(&e.time, out.join(files[3]))?;
    let summary = ExplainSummary {
        index: options.index,
        target_class: e.target_class,
        predicted_class: e.predicted_class,
        probabilities: e.probs.clone(),
        threshold: options.threshold,
        variables_mask_cells: var_mask.count(),
        time_mask_timestamps: time_mask.time_support().iter().filter(|&&s| s).count(),
        region,
        time_iou,
        variables_iou_cells,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write(&out.join(EXPLANATION_FILE), text)?;

    let mut m = RunManifest::new("explain", seed)
        .with_spec(model.spec())?
        .with_config(&serde_json::json!({
            "checkpoint": checkpoint.file_name().map(|n| n.to_string_lossy()),
            "data": data_path.file_name().map(|n| n.to_string_lossy()),
            "index": options.index,
            "class": options.class,
            "threshold": options.threshold,
            "regions": options.regions.as_ref().and_then(|p| p.file_name()).map(|n| n.to_string_lossy()),
        }))?
        .with_metrics(&summary)?;
    for f in files {
        m.add_file(f);
    }
    finish(m, out)
}

// ---------------------------------------------------------------- gridsearch

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub architecture: Architecture,
    pub grid: GridSpec,
    pub epochs: usize,
    pub filters: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            architecture: Architecture::Xcm,
            grid: GridSpec::default(),
            epochs: 100,
            filters: ModelSpec::DEFAULT_FILTERS,
        }
    }
}

pub const CV_TABLE_FILE: &str = "cv_table.csv";
pub const GRID_RESULT_FILE: &str = "grid_result.json";

pub fn gridsearch(options: &GridOptions, train_path: &Path, seed: u64, out: &Path) -> Result<PathBuf> {
    prepare(out)?;
    let data = load_ts_file(train_path)?;
    let template = ModelSpec::new(options.architecture, data.length(), data.dims(), data.num_classes())
        .with_filters(options.filters);
    let config = TrainConfig {
        epochs: options.epochs,
        ..TrainConfig::default()
    };
    let result = grid_search(&template, &data, &options.grid, &config, seed)?;
    write_cv_table(&result, out.join(CV_TABLE_FILE))?;
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    write(&out.join(GRID_RESULT_FILE), text)?;

    let mut m = RunManifest::new("gridsearch", seed)
        .with_spec(&template)?
        .with_config(&serde_json::json!({
            "options": options,
            "train": train_path.file_name().map(|n| n.to_string_lossy()),
        }))?
        .with_metrics(&serde_json::json!({
            "runs": result.runs,
            "best_batch_size": result.best_batch_size,
            "best_window_pct": result.best_window_pct,
            "best_mean_accuracy": result.best_mean_accuracy,
        }))?;
    m.add_file(CV_TABLE_FILE);
    m.add_file(GRID_RESULT_FILE);
    finish(m, out)
}

// ---------------------------------------------------------------- report

pub const RANKS_FILE: &str = "ranks.csv";

pub fn report(results: &Path, ties: TieMethod, seed: u64, out: &Path) -> Result<PathBuf> {
    prepare(out)?;
    let table = ResultsTable::read_csv(results)?;
    let summary = summarize(&table, ties)?;
    write(&out.join(RANKS_FILE), summary_to_csv(&summary)?)?;
    let mut m = RunManifest::new("report", seed)
        .with_config(&serde_json::json!({
            "results": results.file_name().map(|n| n.to_string_lossy()),
            "ties": ties,
            "datasets": table.datasets.len(),
        }))?
        .with_metrics(&summary)?;
    m.add_file(RANKS_FILE);
    finish(m, out)
}
