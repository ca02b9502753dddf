// SPDX-License-Identifier: Apache-2.0

//! Contiguous k-fold cross-validation for choosing the neighbor count.
//!
//! Each fold's validation × training distances are computed once and every
//! candidate k is scored against them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify_dense_for_each_k, classify_streaming};
use crate::dataset::{fold_split, Dataset};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::metrics::MetricId;
use crate::stats::accuracy;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_K_RANGE: std::ops::RangeInclusive<usize> = 1..=10;

/// Whether each fold's distance matrix is held in memory or streamed row by
/// row. Both give identical tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Residency {
    #[default]
    Dense,
    Streaming,
}

/// Accuracy grid of folds × k values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValTable {
    pub k_values: Vec<usize>,
    pub fold_count: usize,
    /// `accuracies[fold][j]` is the accuracy of `k_values[j]` on `fold`.
    pub accuracies: Vec<Vec<f64>>,
    pub mean_by_k: Vec<f64>,
}

impl CrossValTable {
    /// Builds a table from its grid, computing the column means.
    pub fn from_grid(k_values: Vec<usize>, accuracies: Vec<Vec<f64>>) -> Result<Self> {
        if k_values.is_empty() || accuracies.is_empty() {
            return Err(Error::EmptyInput);
        }
        for row in &accuracies {
            if row.len() != k_values.len() {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: k_values.len(),
                });
            }
            if let Some(&p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::BadProportion(p));
            }
        }
        let folds = accuracies.len();
        let mean_by_k = (0..k_values.len())
            .map(|j| accuracies.iter().map(|row| row[j]).sum::<f64>() / folds as f64)
            .collect();
        Ok(CrossValTable {
            k_values,
            fold_count: folds,
            accuracies,
            mean_by_k,
        })
    }

    /// CSV text: `fold,k=..` header, one row per fold, then a `mean` row.
    /// Proportions are printed with six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold");
        for k in &self.k_values {
            write!(out, ",k={k}").unwrap();
        }
        out.push('\n');
        let mut line = |label: &str, values: &[f64]| {
            out.push_str(label);
            for v in values {
                write!(out, ",{v:.6}").unwrap();
            }
            out.push('\n');
        };
        for (fold, row) in self.accuracies.iter().enumerate() {
            line(&fold.to_string(), row);
        }
        line("mean", &self.mean_by_k);
        out
    }

    /// Parses text produced by [`CrossValTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
        if headers.get(0) != Some("fold") {
            return Err(Error::Csv("first column must be `fold`".into()));
        }
        let k_values = headers
            .iter()
            .skip(1)
            .map(|h| {
                h.strip_prefix("k=")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| Error::Csv(format!("bad k column `{h}`")))
            })
            .collect::<Result<Vec<usize>>>()?;

        let mut accuracies = Vec::new();
        let mut mean_by_k = None;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            let values = record
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| Error::Csv(format!("bad value `{v}`"))))
                .collect::<Result<Vec<f64>>>()?;
            match record.get(0) {
                Some("mean") => mean_by_k = Some(values),
                Some(id) if id == i.to_string() => accuracies.push(values),
                other => return Err(Error::Csv(format!("unexpected row id {other:?}"))),
            }
        }
        let mut table = CrossValTable::from_grid(k_values, accuracies)?;
        if let Some(means) = mean_by_k {
            table.mean_by_k = means;
        }
        Ok(table)
    }
}

/// Scores every k in `k_values` on each of `num_folds` contiguous folds of
/// `train`, using all available cores.
pub fn cross_validate(train: &Dataset, k_values: &[usize], metric: MetricId, num_folds: usize) -> Result<CrossValTable> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    cross_validate_with(&Engine::new(workers)?, train, k_values, metric, num_folds, Residency::Dense)
}

pub fn cross_validate_with(
    engine: &Engine,
    train: &Dataset,
    k_values: &[usize],
    metric: MetricId,
    num_folds: usize,
    residency: Residency,
) -> Result<CrossValTable> {
    if num_folds == 0 || !train.len().is_multiple_of(num_folds) {
        return Err(Error::IndivisibleFold {
            len: train.len(),
            folds: num_folds,
        });
    }
    let fold_train_len = train.len() - train.len() / num_folds;
    if k_values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || k > fold_train_len) {
        return Err(Error::BadK {
            k,
            row_len: fold_train_len,
        });
    }

    let mut grid = Vec::with_capacity(num_folds);
    for fold in 0..num_folds {
        let (fit, val) = fold_split(train, num_folds, fold)?;
        let per_k = match residency {
            Residency::Dense => {
                let m = engine.build_matrix(fit.images(), val.images(), metric)?;
                classify_dense_for_each_k(&m, fit.labels(), k_values)?
            }
            Residency::Streaming => {
                classify_streaming(engine, fit.images(), fit.labels(), val.images(), metric, k_values)?
            }
        };
        grid.push(
            per_k
                .iter()
                .map(|preds| accuracy(preds, val.labels()))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    CrossValTable::from_grid(k_values.to_vec(), grid)
}

/// The k with the highest mean accuracy; ties go to the smaller k.
pub fn select_k(table: &CrossValTable) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (&k, &mean) in table.k_values.iter().zip(&table.mean_by_k) {
        best = match best {
            Some((bk, bm)) if bm > mean || (bm == mean && bk < k) => Some((bk, bm)),
            _ => Some((k, mean)),
        };
    }
    best.expect("table has at least one k").0
}

pub fn write_crossval_csv(table: &CrossValTable, path: &Path) -> Result<()> {
    fs::write(path, table.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_crossval_csv(path: &Path) -> Result<CrossValTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CrossValTable::from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::classify_all;
    use crate::dataset::SplitTag;
    use crate::image::Image;

    /// Class c images are a bright block at a class-specific column band plus
    /// a small per-example perturbation, so classes are far apart.
    fn clustered(n: usize) -> Dataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = (i % 10) as u8;
            let mut img = Image::zeros();
            for r in 4..24 {
                img.set(r, 2 + 2 * c as usize, 250);
            }
            img.set(0, 0, (i / 10) as u8);
            images.push(img);
            labels.push(c);
        }
        Dataset::new(images, labels, SplitTag::Train).unwrap()
    }

    #[test]
    fn separable_clusters_score_perfectly() {
        let t = cross_validate(&clustered(100), &[1], MetricId::Plain, 10).unwrap();
        assert_eq!(t.fold_count, 10);
        assert!(t.accuracies.iter().flatten().all(|&a| a == 1.0));
        assert_eq!(t.mean_by_k, vec![1.0]);
    }

    #[test]
    fn matches_manual_composition() {
        let d = clustered(20);
        let engine = Engine::new(2).unwrap();
        let t = cross_validate_with(&engine, &d, &[1, 3], MetricId::Sliding, 2, Residency::Dense).unwrap();
        for fold in 0..2 {
            let (fit, val) = fold_split(&d, 2, fold).unwrap();
            let m = engine.build_matrix(fit.images(), val.images(), MetricId::Sliding).unwrap();
            for (j, k) in [1, 3].into_iter().enumerate() {
                let preds: Vec<u8> = classify_all(&m, fit.labels(), k).unwrap().iter().map(|p| p.label).collect();
                assert_eq!(t.accuracies[fold][j], accuracy(&preds, val.labels()).unwrap());
            }
        }
        let streamed = cross_validate_with(&engine, &d, &[1, 3], MetricId::Sliding, 2, Residency::Streaming).unwrap();
        assert_eq!(streamed, t);
    }

    #[test]
    fn rejects_bad_configs() {
        let d = clustered(10);
        assert!(matches!(
            cross_validate(&d, &[1], MetricId::Plain, 3),
            Err(Error::IndivisibleFold { len: 10, folds: 3 })
        ));
        assert!(matches!(cross_validate(&d, &[0], MetricId::Plain, 5), Err(Error::BadK { k: 0, .. })));
        assert!(matches!(cross_validate(&d, &[9], MetricId::Plain, 5), Err(Error::BadK { k: 9, row_len: 8 })));
    }

    fn table(k_values: Vec<usize>, means: Vec<f64>) -> CrossValTable {
        CrossValTable::from_grid(k_values, vec![means]).unwrap()
    }

    #[test]
    fn select_k_examples() {
        assert_eq!(select_k(&table(vec![1, 2, 3], vec![0.9, 0.95, 0.93])), 2);
        assert_eq!(select_k(&table(vec![1, 2, 3], vec![0.9, 0.9, 0.9])), 1);
        assert_eq!(select_k(&table(vec![3, 1, 2], vec![0.9, 0.9, 0.8])), 1);
        let published = vec![
            0.9653, 0.9684, 0.9717, 0.9664, 0.9706, 0.9628, 0.9711, 0.9684, 0.9639, 0.9659,
        ];
        assert_eq!(select_k(&table((1..=10).collect(), published)), 3);
    }

    #[test]
    fn select_k_ignores_appended_worse_column() {
        let base = table(vec![1, 2, 3], vec![0.91, 0.97, 0.95]);
        let extended = table(vec![1, 2, 3, 4], vec![0.91, 0.97, 0.95, 0.5]);
        assert_eq!(select_k(&base), select_k(&extended));
    }

    #[test]
    fn means_are_column_averages() {
        let t = CrossValTable::from_grid(vec![1, 2], vec![vec![0.5, 1.0], vec![0.25, 0.0], vec![0.75, 0.5]]).unwrap();
        assert!((t.mean_by_k[0] - 0.5).abs() < 1e-12);
        assert!((t.mean_by_k[1] - 0.5).abs() < 1e-12);
        assert!(matches!(
            CrossValTable::from_grid(vec![1], vec![vec![1.5]]),
            Err(Error::BadProportion(_))
        ));
    }

    #[test]
    fn csv_single_cell() {
        let t = CrossValTable::from_grid(vec![1], vec![vec![0.5]]).unwrap();
        assert_eq!(t.to_csv(), "fold,k=1\n0,0.500000\nmean,0.500000\n");
    }

    #[test]
    fn csv_roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cv.csv");
        let t = CrossValTable::from_grid(vec![1, 2], vec![vec![0.1234567, 1.0], vec![0.0, 0.333333333]]).unwrap();
        write_crossval_csv(&t, &path).unwrap();
        let back = read_crossval_csv(&path).unwrap();
        assert_eq!(back.k_values, t.k_values);
        assert_eq!(back.to_csv(), t.to_csv());
        for (a, b) in back.accuracies.iter().flatten().zip(t.accuracies.iter().flatten()) {
            assert!((a - b).abs() <= 5e-7);
        }
        assert!(CrossValTable::from_csv("fold,x\n0,1\n").is_err());
    }
}
