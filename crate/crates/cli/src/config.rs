// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use knn_core::crossval::Residency;
use knn_core::{idx, Dataset, MetricId, SplitTag};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Plain,
    Sliding,
}

impl From<MetricArg> for MetricId {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Plain => MetricId::Plain,
            MetricArg::Sliding => MetricId::Sliding,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    #[arg(long, default_value = "data/mnist/train-images.idx3-ubyte")]
    pub train_images: PathBuf,
    #[arg(long, default_value = "data/mnist/train-labels.idx1-ubyte")]
    pub train_labels: PathBuf,
    #[arg(long, default_value = "data/mnist/t10k-images.idx3-ubyte")]
    pub test_images: PathBuf,
    #[arg(long, default_value = "data/mnist/t10k-labels.idx1-ubyte")]
    pub test_labels: PathBuf,

    /// Distance metric [default: plain; sliding for `compare`]
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,

    /// Directory for distance-matrix caches; no caching when unset
    #[arg(long, env = "KNN_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads [default: available cores]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Critical value for intervals and the hypothesis test
    #[arg(long, default_value_t = knn_core::stats::Z_95)]
    pub z: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Use only the first N training examples
    #[arg(long)]
    pub max_train: Option<usize>,
    /// Use only the first N test examples
    #[arg(long)]
    pub max_test: Option<usize>,
    /// Write the report here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Classify rows as they are computed instead of holding the full matrix
    #[arg(long)]
    pub streaming: bool,
}

/// Validated settings, embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub metric: MetricId,
    pub k: usize,
    pub folds: usize,
    pub k_range: [usize; 2],
    pub cache_dir: Option<PathBuf>,
    pub workers: usize,
    pub z_value: f64,
    pub output_format: OutputFormat,
    pub max_train: Option<usize>,
    pub max_test: Option<usize>,
    pub residency: Residency,
}

impl RunConfig {
    pub fn from_args(args: &CommonArgs, default_metric: MetricId) -> Result<Self> {
        let workers = args
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let usage = |msg: String| Err(UsageError(msg).into());
        if args.k == 0 {
            return usage("--k must be at least 1".into());
        }
        if workers == 0 {
            return usage("--workers must be at least 1".into());
        }
        if args.k_min == 0 || args.k_min > args.k_max {
            return usage(format!(
                "--k-min {} / --k-max {} must satisfy 1 <= k-min <= k-max",
                args.k_min, args.k_max
            ));
        }
        if !(args.z.is_finite() && args.z > 0.0) {
            return usage(format!("--z {} must be positive", args.z));
        }
        Ok(RunConfig {
            train_images: args.train_images.clone(),
            train_labels: args.train_labels.clone(),
            test_images: args.test_images.clone(),
            test_labels: args.test_labels.clone(),
            metric: args.metric.map_or(default_metric, MetricId::from),
            k: args.k,
            folds: args.folds,
            k_range: [args.k_min, args.k_max],
            cache_dir: args.cache_dir.clone(),
            workers,
            z_value: args.z,
            output_format: args.format,
            max_train: args.max_train,
            max_test: args.max_test,
            residency: if args.streaming {
                Residency::Streaming
            } else {
                Residency::Dense
            },
        })
    }

    pub fn k_values(&self) -> Vec<usize> {
        (self.k_range[0]..=self.k_range[1]).collect()
    }

    pub fn load_train(&self) -> Result<Dataset> {
        load(&self.train_images, &self.train_labels, SplitTag::Train, self.max_train, "--max-train")
    }

    pub fn load_test(&self) -> Result<Dataset> {
        load(&self.test_images, &self.test_labels, SplitTag::Test, self.max_test, "--max-test")
    }
}

fn load(images: &Path, labels: &Path, split: SplitTag, limit: Option<usize>, flag: &str) -> Result<Dataset> {
    for path in [images, labels] {
        if !path.exists() {
            return Err(UsageError(format!("{} does not exist", path.display())).into());
        }
    }
    let data = idx::load_dataset(images, labels, split)
        .with_context(|| format!("loading {}", images.display()))?;
    match limit {
        Some(n) if n > data.len() => Err(UsageError(format!(
            "{flag} {n} exceeds the {} available examples",
            data.len()
        ))
        .into()),
        Some(0) => Err(UsageError(format!("{flag} must be at least 1")).into()),
        Some(n) => Ok(data.prefix(n)),
        None => Ok(data),
    }
}

/// Cache file for one (metric, train, test) combination. The name carries a
/// digest of both image sets so a changed subset never reuses a stale matrix.
pub fn cache_path(dir: &Path, metric: MetricId, train: &Dataset, test: &Dataset) -> PathBuf {
    let mut h = Sha256::new();
    for set in [train, test] {
        h.update((set.len() as u64).to_le_bytes());
        for img in set.images() {
            h.update(img.pixels());
        }
    }
    let digest: String = h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{metric}-{}x{}-{digest}.dmat", test.len(), train.len()))
}
