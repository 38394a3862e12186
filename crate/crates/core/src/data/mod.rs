//! Multivariate time series datasets.

mod folds;
mod synthetic;
mod ts;

pub use folds::{stratified_folds, FoldAssignment};
pub use synthetic::{generate_synthetic, SyntheticConfig, NEGATIVE, POSITIVE};
pub use ts::{load_ts_file, parse_ts, save_ts_file, write_ts};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A planted discriminative region: variable `dim`, timesteps `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub dim: usize,
    pub t_start: usize,
    pub t_end: usize,
}

/// Equal-length labelled samples, each stored as a `[D, T]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MtsDataset {
    pub name: String,
    dims: usize,
    length: usize,
    samples: Vec<Tensor>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    regions: Option<Vec<Option<Region>>>,
}

impl MtsDataset {
    pub fn new(
        name: impl Into<String>,
        dims: usize,
        length: usize,
        samples: Vec<Tensor>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        for s in &samples {
            if s.shape() != [dims, length] {
                return Err(Error::Shape(format!(
                    "sample shape {:?}, dataset is {dims}x{length}",
                    s.shape()
                )));
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_names.len(),
            });
        }
        Ok(MtsDataset {
            name: name.into(),
            dims,
            length,
            samples,
            labels,
            class_names,
            regions: None,
        })
    }

    pub fn with_regions(mut self, regions: Vec<Option<Region>>) -> Result<Self> {
        if regions.len() != self.samples.len() {
            return Err(Error::InvalidArgument("one region slot per sample required".into()));
        }
        for r in regions.iter().flatten() {
            if r.dim >= self.dims || r.t_start >= r.t_end || r.t_end > self.length {
                return Err(Error::InvalidArgument(format!("region {r:?} outside sample bounds")));
            }
        }
        self.regions = Some(regions);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of observed variables `D`.
    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Series length `T`.
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Tensor {
        &self.samples[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn regions(&self) -> Option<&[Option<Region>]> {
        self.regions.as_deref()
    }

    pub fn region(&self, i: usize) -> Option<Region> {
        self.regions.as_ref().and_then(|r| r[i])
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> MtsDataset {
        MtsDataset {
            name: self.name.clone(),
            dims: self.dims,
            length: self.length,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            regions: self.regions.as_ref().map(|r| indices.iter().map(|&i| r[i]).collect()),
        }
    }

    /// Splits off the first `per_class` samples of every class (in dataset
    /// order) as the first part; the rest form the second part.
    pub fn split_per_class(&self, per_class: usize) -> (MtsDataset, MtsDataset) {
        let mut seen = vec![0; self.num_classes()];
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for (i, &l) in self.labels.iter().enumerate() {
            if seen[l] < per_class {
                first.push(i);
            } else {
                second.push(i);
            }
            seen[l] += 1;
        }
        (self.subset(&first), self.subset(&second))
    }

    /// Network input `[B, 1, T, D]` for the given samples.
    pub fn batch_input(&self, indices: &[usize]) -> Tensor {
        let (d, t) = (self.dims, self.length);
        let mut data = Vec::with_capacity(indices.len() * d * t);
        for &i in indices {
            data.extend(to_time_major(&self.samples[i]));
        }
        Tensor::new(vec![indices.len(), 1, t, d], data).expect("batch volume")
    }
}

/// `[D, T]` sample to the `T x D` row-major layout used by the networks.
pub fn to_time_major(sample: &Tensor) -> Vec<f64> {
    let (d, t) = (sample.dim(0), sample.dim(1));
    let s = sample.data();
    (0..t).flat_map(|ti| (0..d).map(move |di| s[di * t + ti])).collect()
}

/// One-hot rows `[B, C]`.
pub fn to_onehot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        out.data_mut()[i * classes + l] = 1.0;
    }
    Ok(out)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn onehot_rows() {
        let oh = to_onehot(&[0], 2).unwrap();
        assert_eq!(oh.data(), &[1.0, 0.0]);
        let labels = [2, 0, 1, 1, 3];
        let oh = to_onehot(&labels, 4).unwrap();
        for (row, &l) in oh.data().chunks(4).zip(&labels) {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(argmax(row), l);
        }
        assert!(to_onehot(&[2], 2).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn batch_input_is_time_major() {
        let s = Tensor::new(vec![2, 3], vec![1., 2., 3., 10., 20., 30.]).unwrap();
        let ds = MtsDataset::new("x", 2, 3, vec![s], vec![0], vec!["a".into()]).unwrap();
        let b = ds.batch_input(&[0]);
        assert_eq!(b.shape(), &[1, 1, 3, 2]);
        assert_eq!(b.data(), &[1., 10., 2., 20., 3., 30.]);
    }

    #[test]
    fn rejects_bad_labels_and_regions() {
        let s = Tensor::zeros(&[1, 4]);
        assert!(MtsDataset::new("x", 1, 4, vec![s.clone()], vec![1], vec!["a".into()]).is_err());
        let ds = MtsDataset::new("x", 1, 4, vec![s], vec![0], vec!["a".into()]).unwrap();
        let bad = Region {
            dim: 0,
            t_start: 2,
            t_end: 5,
        };
        assert!(ds.with_regions(vec![Some(bad)]).is_err());
    }
}
