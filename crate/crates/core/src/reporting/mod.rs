//! Multi-dataset result aggregation and run manifests.

mod manifest;

pub use manifest::{persist_run, RunManifest, MANIFEST_FILE};

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accuracy matrix: one row per dataset, one column per classifier.
/// `None` marks a blank (the classifier has no result on that dataset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub classifiers: Vec<String>,
    pub datasets: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl ResultsTable {
    pub fn new(classifiers: Vec<String>, datasets: Vec<String>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if values.len() != datasets.len() || values.iter().any(|r| r.len() != classifiers.len()) {
            return Err(Error::Shape(format!(
                "{} datasets x {} classifiers do not match the value grid",
                datasets.len(),
                classifiers.len()
            )));
        }
        for v in values.iter().flatten().flatten() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidArgument(format!("accuracy {v} outside [0, 1]")));
            }
        }
        Ok(ResultsTable {
            classifiers,
            datasets,
            values,
        })
    }

    /// Parses CSV text: a header of classifier names after a first label
    /// column, then one row per dataset; empty cells are blanks. If any
    /// value exceeds 1 the whole table is read as percentages.
    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: u64, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line as usize,
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
            None => return Err(parse_err(1, "empty results table".into())),
        };
        if header.len() < 2 {
            return Err(parse_err(
                1,
                "header needs a label column and at least one classifier".into(),
            ));
        }
        let classifiers: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut datasets = Vec::new();
        let mut values = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            if rec.len() != header.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            datasets.push(rec[0].trim().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|cell| {
                    let cell = cell.trim();
                    if cell.is_empty() {
                        return Ok(None);
                    }
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
                        _ => Err(parse_err(line, format!("invalid accuracy {cell:?}"))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        if datasets.is_empty() {
            return Err(parse_err(1, "no dataset rows".into()));
        }
        let max = values.iter().flatten().flatten().copied().fold(0.0, f64::max);
        if max > 1.0 {
            if max > 100.0 {
                return Err(parse_err(1, format!("accuracy {max} exceeds 100")));
            }
            for v in values.iter_mut().flatten().flatten() {
                *v /= 100.0;
            }
        }
        ResultsTable::new(classifiers, datasets, values)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["dataset".to_string()];
        header.extend(self.classifiers.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.datasets.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.datasets.is_empty() || self.classifiers.is_empty() {
            return Err(Error::InvalidArgument("results table is empty".into()));
        }
        Ok(())
    }
}

/// How tied accuracies share rank positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMethod {
    /// Competition ranking: every tied entry takes the best position of the
    /// group (1, 2, 2, 4).
    #[default]
    Min,
    /// Every tied entry takes the mean of the group's positions
    /// (1, 2.5, 2.5, 4).
    Average,
}

/// Ranks within one dataset row; rank 1 is the best accuracy. Blanks form
/// a single tie group placed after every present entry.
pub fn rank_row(row: &[Option<f64>], ties: TieMethod) -> Vec<f64> {
    let present: Vec<f64> = row.iter().flatten().copied().collect();
    let blanks = row.len() - present.len();
    let group_rank = |better: usize, size: usize| match ties {
        TieMethod::Min => (better + 1) as f64,
        TieMethod::Average => better as f64 + (size as f64 + 1.0) / 2.0,
    };
    row.iter()
        .map(|v| match v {
            Some(x) => {
                let better = present.iter().filter(|&&y| y > *x).count();
                let equal = present.iter().filter(|&&y| y == *x).count();
                group_rank(better, equal)
            }
            None => group_rank(present.len(), blanks),
        })
        .collect()
}

/// Mean rank of every classifier over all datasets.
pub fn average_rank(table: &ResultsTable, ties: TieMethod) -> Result<Vec<f64>> {
    table.check_nonempty()?;
    let mut sums = vec![0.0; table.classifiers.len()];
    for row in &table.values {
        for (s, r) in sums.iter_mut().zip(rank_row(row, ties)) {
            *s += r;
        }
    }
    let n = table.datasets.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Datasets on which each classifier matches the best present accuracy.
pub fn wins_ties(table: &ResultsTable) -> Result<Vec<usize>> {
    table.check_nonempty()?;
    let mut wins = vec![0; table.classifiers.len()];
    for row in &table.values {
        let Some(best) = row.iter().flatten().copied().reduce(f64::max) else {
            continue;
        };
        for (w, v) in wins.iter_mut().zip(row) {
            if *v == Some(best) {
                *w += 1;
            }
        }
    }
    Ok(wins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub classifier: String,
    pub average_rank: f64,
    pub wins_ties: usize,
}

pub fn summarize(table: &ResultsTable, ties: TieMethod) -> Result<Vec<RankSummary>> {
    let ranks = average_rank(table, ties)?;
    let wins = wins_ties(table)?;
    Ok(table
        .classifiers
        .iter()
        .zip(ranks.into_iter().zip(wins))
        .map(|(c, (average_rank, wins_ties))| RankSummary {
            classifier: c.clone(),
            average_rank,
            wins_ties,
        })
        .collect())
}

/// `classifier,average_rank,wins_ties`.
pub fn summary_to_csv(summary: &[RankSummary]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in summary {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

#[cfg(test)]
mod tests;
