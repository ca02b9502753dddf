// SPDX-License-Identifier: Apache-2.0

//! Dense test × train distance matrices.
//!
//! Work is split into blocks of consecutive test rows and every row is written
//! by exactly one worker, so the output does not depend on the worker count
//! or on scheduling.

use std::ops::Range;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::Sender;

use rayon::prelude::*;

use crate::cache;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{MetricId, PreparedTrain, SquaredDistance, MAX_SQUARED_DISTANCE};

const BLOCK_ROWS: usize = 16;

/// Row-major `n_test × n_train` squared distances under one metric.
///
/// Row `i` holds the distances from test image `i` to every training image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n_test: usize,
    n_train: usize,
    metric: MetricId,
    values: Vec<SquaredDistance>,
}

impl DistanceMatrix {
    pub fn from_values(
        n_test: usize,
        n_train: usize,
        metric: MetricId,
        values: Vec<SquaredDistance>,
    ) -> Result<Self> {
        if values.len() != n_test * n_train {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: n_test * n_train,
            });
        }
        if let Some((offset, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| v > MAX_SQUARED_DISTANCE)
        {
            return Err(Error::DistanceOutOfRange { offset, value });
        }
        Ok(DistanceMatrix {
            n_test,
            n_train,
            metric,
            values,
        })
    }

    pub fn n_test(&self) -> usize {
        self.n_test
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn metric(&self) -> MetricId {
        self.metric
    }

    pub fn values(&self) -> &[SquaredDistance] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[SquaredDistance] {
        &self.values[i * self.n_train..(i + 1) * self.n_train]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[SquaredDistance]> {
        // n_train == 0 never reaches here through the engine, but keep chunks_exact happy
        self.values.chunks_exact(self.n_train.max(1))
    }

    pub fn get(&self, test: usize, train: usize) -> SquaredDistance {
        self.values[test * self.n_train + train]
    }
}

/// Progress notice sent after each completed block of test rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Progress {
    pub rows_done: usize,
    pub rows_total: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    /// Loaded from an existing cache file.
    Hit,
    /// Computed and written to the cache path.
    Built,
}

/// Owns the worker pool used for distance computation.
pub struct Engine {
    pool: rayon::ThreadPool,
    workers: usize,
    progress: Option<Sender<Progress>>,
    kernel_evals: AtomicU64,
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::ZeroWorkers);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("dmat-{i}"))
            .build()
            .expect("thread pool construction");
        Ok(Engine {
            pool,
            workers,
            progress: None,
            kernel_evals: AtomicU64::new(0),
        })
    }

    /// Sends a [`Progress`] after every row block. Sends never block, and a
    /// dropped receiver is ignored.
    pub fn with_progress(mut self, tx: Sender<Progress>) -> Self {
        self.progress = Some(tx);
        self
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Number of (train, test) kernel evaluations performed so far.
    pub fn kernel_evaluations(&self) -> u64 {
        self.kernel_evals.load(Ordering::Relaxed)
    }

    pub fn build_matrix(&self, train: &[Image], test: &[Image], metric: MetricId) -> Result<DistanceMatrix> {
        check_nonempty(train, test)?;
        let (n_test, n_train) = (test.len(), train.len());
        let mut values = vec![0; n_test * n_train];
        self.pool.install(|| {
            let prepared = PreparedTrain::new(train, metric);
            let done = AtomicUsize::new(0);
            values
                .par_chunks_mut(BLOCK_ROWS * n_train)
                .enumerate()
                .for_each(|(block, chunk)| {
                    let first = block * BLOCK_ROWS;
                    let rows = chunk.len() / n_train;
                    prepared.block_distances_into(&test[first..first + rows], chunk);
                    self.finish_block(rows, n_train, n_test, &done);
                });
        });
        DistanceMatrix::from_values(n_test, n_train, metric, values)
    }

    /// Computes each block of test rows into a scratch buffer and hands the
    /// rows to `f`, without ever holding the full matrix. Results come back in test
    /// order.
    pub fn map_rows<T, F>(&self, train: &[Image], test: &[Image], metric: MetricId, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &[SquaredDistance]) -> T + Sync,
    {
        check_nonempty(train, test)?;
        let (n_test, n_train) = (test.len(), train.len());
        let blocks: Vec<Range<usize>> = (0..n_test)
            .step_by(BLOCK_ROWS)
            .map(|lo| lo..(lo + BLOCK_ROWS).min(n_test))
            .collect();
        let per_block: Vec<Vec<T>> = self.pool.install(|| {
            let prepared = PreparedTrain::new(train, metric);
            let done = AtomicUsize::new(0);
            blocks
                .into_par_iter()
                .map(|rows| {
                    let mut scratch = vec![0; rows.len() * n_train];
                    prepared.block_distances_into(&test[rows.clone()], &mut scratch);
                    let out = rows
                        .clone()
                        .zip(scratch.chunks_exact(n_train))
                        .map(|(i, row)| f(i, row))
                        .collect();
                    self.finish_block(rows.len(), n_train, n_test, &done);
                    out
                })
                .collect()
        });
        Ok(per_block.into_iter().flatten().collect())
    }

    /// Loads the matrix from `cache_path` when it holds one of the requested
    /// shape, otherwise builds it and writes the cache.
    ///
    /// A cache written for another metric is an error rather than a miss.
    pub fn build_matrix_cached(
        &self,
        train: &[Image],
        test: &[Image],
        metric: MetricId,
        cache_path: &Path,
    ) -> Result<(DistanceMatrix, CacheStatus)> {
        if cache_path.exists() {
            let header = cache::read_header(cache_path)?;
            if header.metric != metric {
                return Err(Error::MetricMismatch {
                    requested: metric,
                    found: header.metric,
                });
            }
            if header.n_test as usize == test.len() && header.n_train as usize == train.len() {
                return Ok((cache::load_cache(cache_path, Some(metric))?, CacheStatus::Hit));
            }
        }
        let m = self.build_matrix(train, test, metric)?;
        cache::save_cache(&m, cache_path)?;
        Ok((m, CacheStatus::Built))
    }

    fn finish_block(&self, rows: usize, n_train: usize, n_test: usize, done: &AtomicUsize) {
        self.kernel_evals
            .fetch_add((rows * n_train) as u64, Ordering::Relaxed);
        let rows_done = done.fetch_add(rows, Ordering::Relaxed) + rows;
        if let Some(tx) = &self.progress {
            let _ = tx.send(Progress {
                rows_done,
                rows_total: n_test,
            });
        }
    }
}

fn check_nonempty(train: &[Image], test: &[Image]) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        Err(Error::EmptyInput)
    } else {
        Ok(())
    }
}

pub fn build_matrix(train: &[Image], test: &[Image], metric: MetricId, workers: usize) -> Result<DistanceMatrix> {
    Engine::new(workers)?.build_matrix(train, test, metric)
}

pub fn build_matrix_cached(
    train: &[Image],
    test: &[Image],
    metric: MetricId,
    cache_path: &Path,
    workers: usize,
) -> Result<DistanceMatrix> {
    Engine::new(workers)?
        .build_matrix_cached(train, test, metric, cache_path)
        .map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{sliding_squared_l2, squared_l2};
    use std::sync::mpsc;

    fn img(seed: u8) -> Image {
        let mut out = Image::zeros();
        for (i, p) in out.0.iter_mut().enumerate() {
            *p = (i as u8).wrapping_mul(seed).wrapping_add(seed) & 0x3f;
        }
        out
    }

    #[test]
    fn one_by_one_identical() {
        let a = img(3);
        let m = build_matrix(std::slice::from_ref(&a), std::slice::from_ref(&a), MetricId::Plain, 1).unwrap();
        assert_eq!(m.values(), &[0]);
        assert_eq!((m.n_test(), m.n_train()), (1, 1));
    }

    #[test]
    fn row_holds_distances_to_each_train_image() {
        let a = Image::zeros();
        let mut b = Image::zeros();
        b.0[0] = 3;
        b.0[1] = 4;
        assert_eq!(squared_l2(&a, &b), 25);
        let m = build_matrix(&[a.clone(), b], &[a], MetricId::Plain, 1).unwrap();
        assert_eq!(m.row(0), &[0, 25]);
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let train: Vec<_> = (1..=2).map(img).collect();
        let test: Vec<_> = (5..=7).map(img).collect();
        for metric in MetricId::ALL {
            let one = build_matrix(&train, &test, metric, 1).unwrap();
            let eight = build_matrix(&train, &test, metric, 8).unwrap();
            assert_eq!(one, eight);
            for (i, t) in test.iter().enumerate() {
                for (j, tr) in train.iter().enumerate() {
                    let expected = match metric {
                        MetricId::Plain => squared_l2(tr, t),
                        MetricId::Sliding => sliding_squared_l2(tr, t),
                    };
                    assert_eq!(one.get(i, j), expected);
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(Engine::new(0), Err(Error::ZeroWorkers)));
        assert!(matches!(
            build_matrix(&[], &[img(1)], MetricId::Plain, 1),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn streaming_rows_match_dense() {
        let train: Vec<_> = (1..=9).map(img).collect();
        let test: Vec<_> = (10..=50).map(img).collect();
        let engine = Engine::new(3).unwrap();
        for metric in MetricId::ALL {
            let dense = engine.build_matrix(&train, &test, metric).unwrap();
            let rows = engine.map_rows(&train, &test, metric, |i, row| (i, row.to_vec())).unwrap();
            assert_eq!(rows.len(), test.len());
            for (i, (idx, row)) in rows.iter().enumerate() {
                assert_eq!(*idx, i);
                assert_eq!(row.as_slice(), dense.row(i));
            }
        }
    }

    #[test]
    fn progress_reaches_total_and_counts_evaluations() {
        let (tx, rx) = mpsc::channel();
        let engine = Engine::new(2).unwrap().with_progress(tx);
        let train: Vec<_> = (1..=4).map(img).collect();
        let test: Vec<_> = (1..=40).map(img).collect();
        engine.build_matrix(&train, &test, MetricId::Plain).unwrap();
        drop(engine);
        let notices: Vec<Progress> = rx.iter().collect();
        assert_eq!(notices.len(), 40usize.div_ceil(BLOCK_ROWS));
        assert_eq!(notices.iter().map(|p| p.rows_done).max(), Some(40));
        assert!(notices.iter().all(|p| p.rows_total == 40));
    }

    #[test]
    fn progress_without_consumer_does_not_block() {
        let (tx, rx) = mpsc::channel();
        drop(rx);
        let engine = Engine::new(2).unwrap().with_progress(tx);
        let m = engine.build_matrix(&[img(1)], &[img(2), img(3)], MetricId::Sliding).unwrap();
        assert_eq!(m.n_test(), 2);
        assert_eq!(engine.kernel_evaluations(), 2);
    }

    #[test]
    fn cached_build_hits_on_second_call() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmat");
        let train: Vec<_> = (1..=3).map(img).collect();
        let test: Vec<_> = (4..=5).map(img).collect();

        let engine = Engine::new(2).unwrap();
        let (first, status) = engine.build_matrix_cached(&train, &test, MetricId::Plain, &path).unwrap();
        assert_eq!(status, CacheStatus::Built);
        assert_eq!(engine.kernel_evaluations(), 6);
        let bytes = std::fs::read(&path).unwrap();

        let engine = Engine::new(2).unwrap();
        let (second, status) = engine.build_matrix_cached(&train, &test, MetricId::Plain, &path).unwrap();
        assert_eq!(status, CacheStatus::Hit);
        assert_eq!(engine.kernel_evaluations(), 0);
        assert_eq!(first, second);

        let err = engine
            .build_matrix_cached(&train, &test, MetricId::Sliding, &path)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::MetricMismatch {
                requested: MetricId::Sliding,
                found: MetricId::Plain
            }
        ));

        std::fs::remove_file(&path).unwrap();
        engine.build_matrix_cached(&train, &test, MetricId::Plain, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn cached_build_rebuilds_on_shape_change() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmat");
        let train: Vec<_> = (1..=3).map(img).collect();
        let engine = Engine::new(1).unwrap();
        engine.build_matrix_cached(&train, &[img(9)], MetricId::Plain, &path).unwrap();
        let (m, status) = engine
            .build_matrix_cached(&train, &[img(9), img(10)], MetricId::Plain, &path)
            .unwrap();
        assert_eq!(status, CacheStatus::Built);
        assert_eq!(m.n_test(), 2);
    }

    #[test]
    fn from_values_validates() {
        assert!(matches!(
            DistanceMatrix::from_values(2, 2, MetricId::Plain, vec![0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            DistanceMatrix::from_values(1, 1, MetricId::Plain, vec![MAX_SQUARED_DISTANCE + 1]),
            Err(Error::DistanceOutOfRange { offset: 0, .. })
        ));
    }
}
