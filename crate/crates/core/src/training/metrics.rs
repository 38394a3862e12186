use serde::{Deserialize, Serialize};

use super::check_compatible;
use crate::data::{argmax, MtsDataset};
use crate::error::{Error, Result};
use crate::layers::Ctx;
use crate::models::Model;

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Metrics of a square confusion matrix. Undefined ratios are 0.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let k = confusion.len();
        if k == 0 || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("no predictions to score".into()));
        }
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        for c in 0..k {
            let predicted: usize = confusion.iter().map(|r| r[c]).sum();
            let actual: usize = confusion[c].iter().sum();
            let p = ratio(confusion[c][c], predicted);
            let r = ratio(confusion[c][c], actual);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        }
        Ok(MetricsReport {
            accuracy: ratio(correct, total),
            macro_f1: f1.iter().sum::<f64>() / k as f64,
            precision,
            recall,
            f1,
            confusion,
        })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape("truth and prediction lengths differ".into()));
        }
        let mut confusion = vec![vec![0; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::LabelOutOfRange {
                    label: t.max(p),
                    classes,
                });
            }
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }
}

/// Inference-mode predictions for every sample.
pub fn predict_dataset(model: &Model, data: &MtsDataset) -> Result<Vec<usize>> {
    check_compatible(model, data)?;
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let trace = model.forward(&data.batch_input(chunk), &mut Ctx::inference())?;
        out.extend(trace.probs.data().chunks(model.spec().classes).map(argmax));
    }
    Ok(out)
}

pub fn evaluate(model: &Model, data: &MtsDataset) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let predicted = predict_dataset(model, data)?;
    MetricsReport::from_predictions(data.labels(), &predicted, model.spec().classes)
}
