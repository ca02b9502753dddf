// SPDX-License-Identifier: Apache-2.0

//! Exact k-nearest-neighbor classification of 28×28 handwritten digits.
//!
//! Two metrics are provided: plain squared L2, and a sliding-window variant
//! that takes the minimum plain distance over the nine one-pixel crops of the
//! zero-padded training image, which absorbs small translations. Around them
//! sit an IDX reader, a parallel distance-matrix engine with an on-disk cache,
//! neighbor selection and voting, evaluation statistics, and contiguous k-fold
//! cross-validation.
//!
//! ```no_run
//! use std::path::Path;
//! use knn_core::{classifier, engine::Engine, idx, stats, MetricId, SplitTag};
//!
//! let train = idx::load_dataset(
//!     Path::new("train-images.idx3-ubyte"),
//!     Path::new("train-labels.idx1-ubyte"),
//!     SplitTag::Train,
//! )?;
//! let test = idx::load_dataset(
//!     Path::new("t10k-images.idx3-ubyte"),
//!     Path::new("t10k-labels.idx1-ubyte"),
//!     SplitTag::Test,
//! )?;
//! let engine = Engine::new(8)?;
//! let m = engine.build_matrix(train.images(), test.images(), MetricId::Sliding)?;
//! let labels: Vec<u8> = classifier::classify_all(&m, train.labels(), 3)?
//!     .iter()
//!     .map(|p| p.label)
//!     .collect();
//! println!("{:.4}", stats::accuracy(&labels, test.labels())?);
//! # Ok::<(), knn_core::Error>(())
//! ```

pub mod cache;
pub mod classifier;
pub mod crossval;
pub mod dataset;
pub mod engine;
mod error;
pub mod idx;
pub mod image;
pub mod metrics;
pub mod stats;

pub use dataset::{Dataset, Label, SplitTag, NUM_CLASSES};
pub use engine::{DistanceMatrix, Engine};
pub use error::{Error, Result};
pub use image::Image;
pub use metrics::{MetricId, SquaredDistance};
