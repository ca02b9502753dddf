// SPDX-License-Identifier: Apache-2.0

//! Neighbor selection and majority voting over distance rows.
//!
//! Neighbors are ordered by `(distance, train_index)`, which is a total order,
//! so selection never depends on sort stability. Label ties in the vote go to
//! the label whose closest member comes first in that order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, NUM_CLASSES};
use crate::engine::{DistanceMatrix, Engine};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{MetricId, SquaredDistance};

// Above this k a full selection beats repeated insertion.
const INSERTION_MAX_K: usize = 64;

/// Field order matters: the derived `Ord` is `(distance, train_index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Neighbor {
    pub distance: SquaredDistance,
    pub train_index: u32,
}

/// The `k` smallest entries of a row, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeighborList(Vec<Neighbor>);

impl NeighborList {
    pub fn entries(&self) -> &[Neighbor] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The first `k` neighbors. Equal to `k_nearest(row, k)` for the row this
    /// list was selected from, as long as `k <= len`.
    pub fn prefix(&self, k: usize) -> &[Neighbor] {
        &self.0[..k.min(self.0.len())]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub test_index: usize,
    pub label: Label,
    pub neighbors: NeighborList,
}

pub fn k_nearest(row: &[SquaredDistance], k: usize) -> Result<NeighborList> {
    if k == 0 || k > row.len() {
        return Err(Error::BadK { k, row_len: row.len() });
    }
    let neighbor = |(j, &distance): (usize, &SquaredDistance)| Neighbor {
        distance,
        train_index: j as u32,
    };

    if k > INSERTION_MAX_K {
        let mut all: Vec<Neighbor> = row.iter().enumerate().map(neighbor).collect();
        if k < all.len() {
            all.select_nth_unstable(k - 1);
            all.truncate(k);
        }
        all.sort_unstable();
        return Ok(NeighborList(all));
    }

    let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
    for entry in row.iter().enumerate() {
        // indices only grow, so an equal distance can never displace the tail
        if best.len() == k && *entry.1 >= best[k - 1].distance {
            continue;
        }
        let cand = neighbor(entry);
        let at = best.partition_point(|n| *n < cand);
        best.insert(at, cand);
        best.truncate(k);
    }
    Ok(NeighborList(best))
}

/// Majority label among `neighbors`.
///
/// # Panics
/// If `neighbors` is empty or refers past the end of `train_labels`.
pub fn vote(neighbors: &[Neighbor], train_labels: &[Label]) -> Label {
    assert!(!neighbors.is_empty(), "vote needs at least one neighbor");
    let mut counts = [0usize; NUM_CLASSES];
    let mut first_seen = [usize::MAX; NUM_CLASSES];
    for (rank, n) in neighbors.iter().enumerate() {
        let label = usize::from(train_labels[n.train_index as usize]);
        counts[label] += 1;
        first_seen[label] = first_seen[label].min(rank);
    }
    (0..NUM_CLASSES)
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(first_seen[b].cmp(&first_seen[a])))
        .expect("ten classes") as Label
}

pub fn classify_all(m: &DistanceMatrix, train_labels: &[Label], k: usize) -> Result<Vec<Prediction>> {
    if train_labels.len() != m.n_train() {
        return Err(Error::LengthMismatch {
            left: train_labels.len(),
            right: m.n_train(),
        });
    }
    if k == 0 || k > m.n_train() {
        return Err(Error::BadK { k, row_len: m.n_train() });
    }
    (0..m.n_test())
        .into_par_iter()
        .map(|i| {
            let neighbors = k_nearest(m.row(i), k)?;
            Ok(Prediction {
                test_index: i,
                label: vote(neighbors.entries(), train_labels),
                neighbors,
            })
        })
        .collect()
}

/// Labels for every `k` in `k_values` from one row, selecting neighbors once
/// at the largest k. `out[j]` is the prediction for `k_values[j]`.
pub fn predict_for_each_k(row: &[SquaredDistance], train_labels: &[Label], k_values: &[usize]) -> Result<Vec<Label>> {
    let k_max = check_k_values(k_values, row.len())?;
    let neighbors = k_nearest(row, k_max)?;
    Ok(k_values
        .iter()
        .map(|&k| vote(neighbors.prefix(k), train_labels))
        .collect())
}

/// Classifies every test image at each k without storing the distance matrix.
/// Returns one prediction vector per entry of `k_values`.
pub fn classify_streaming(
    engine: &Engine,
    train: &[Image],
    train_labels: &[Label],
    test: &[Image],
    metric: MetricId,
    k_values: &[usize],
) -> Result<Vec<Vec<Label>>> {
    if train_labels.len() != train.len() {
        return Err(Error::LengthMismatch {
            left: train_labels.len(),
            right: train.len(),
        });
    }
    check_k_values(k_values, train.len())?;
    let rows = engine.map_rows(train, test, metric, |_, row| {
        predict_for_each_k(row, train_labels, k_values).expect("k validated above")
    })?;
    Ok(transpose(rows, k_values.len()))
}

/// Per-k prediction vectors for a dense matrix.
pub fn classify_dense_for_each_k(m: &DistanceMatrix, train_labels: &[Label], k_values: &[usize]) -> Result<Vec<Vec<Label>>> {
    if train_labels.len() != m.n_train() {
        return Err(Error::LengthMismatch {
            left: train_labels.len(),
            right: m.n_train(),
        });
    }
    let rows = (0..m.n_test())
        .into_par_iter()
        .map(|i| predict_for_each_k(m.row(i), train_labels, k_values))
        .collect::<Result<Vec<_>>>()?;
    Ok(transpose(rows, k_values.len()))
}

/// Largest k, after checking every k is in `1..=row_len`.
fn check_k_values(k_values: &[usize], row_len: usize) -> Result<usize> {
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || k > row_len) {
        return Err(Error::BadK { k, row_len });
    }
    k_values.iter().copied().max().ok_or(Error::EmptyInput)
}

fn transpose(rows: Vec<Vec<Label>>, width: usize) -> Vec<Vec<Label>> {
    let mut out = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        for (col, label) in out.iter_mut().zip(row) {
            col.push(label);
        }
    }
    out
}
