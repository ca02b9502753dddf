// SPDX-License-Identifier: Apache-2.0

//! Exact integer distance kernels.
//!
//! Distances are squared L2 over 8-bit pixels and are never rooted on the
//! classification path; the square root is monotone so neighbor orderings are
//! unchanged. The largest possible value is `784 * 255²`, which fits in `u32`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::image::{windows_of, Image, WindowSet, IMAGE_LEN};

/// Squared L2 distance in units of squared 8-bit intensity.
pub type SquaredDistance = u32;

pub const MAX_SQUARED_DISTANCE: SquaredDistance = (IMAGE_LEN as u32) * 255 * 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum MetricId {
    Plain = 0,
    Sliding = 1,
}

impl MetricId {
    pub const ALL: [MetricId; 2] = [MetricId::Plain, MetricId::Sliding];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(MetricId::Plain),
            1 => Ok(MetricId::Sliding),
            other => Err(Error::UnknownMetric(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Plain => "plain",
            MetricId::Sliding => "sliding",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plain" => Ok(MetricId::Plain),
            "sliding" => Ok(MetricId::Sliding),
            other => Err(format!("unknown metric `{other}` (expected plain or sliding)")),
        }
    }
}

/// Exact `Σ (a_i - b_i)²`.
#[inline]
pub fn squared_l2(a: &Image, b: &Image) -> SquaredDistance {
    kernel::full(a.pixels(), b.pixels())
}

/// Minimum plain distance between `test_img` and the nine one-pixel crops of
/// the zero-padded `train_img`. Only the training side is windowed, so the
/// result is not symmetric in general.
pub fn sliding_squared_l2(train_img: &Image, test_img: &Image) -> SquaredDistance {
    sliding_min(&windows_of(train_img), test_img)
}

/// [`sliding_squared_l2`] against windows that were already extracted.
#[inline]
pub fn sliding_min(windows: &WindowSet, test_img: &Image) -> SquaredDistance {
    let test = test_img.pixels();
    windows
        .iter()
        .map(|w| kernel::full(w.pixels(), test))
        .min()
        .expect("nine windows")
}

/// Per-class mean of the rooted plain distance from `probe` to every member
/// of `data`. This is the only place a square root is taken.
pub fn mean_distance_by_class(probe: &Image, data: &Dataset) -> Result<[f64; NUM_CLASSES]> {
    let mut sums = [0f64; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for (img, &label) in data.images().iter().zip(data.labels()) {
        let c = usize::from(label);
        sums[c] += f64::from(squared_l2(probe, img)).sqrt();
        counts[c] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(c as u8));
    }
    Ok(std::array::from_fn(|c| sums[c] / counts[c] as f64))
}

/// Training images prepared for repeated distance queries under one metric.
///
/// For the sliding metric the nine windows of every training image are
/// materialized once, trading `9 × 784` bytes per image for not re-cropping
/// on every pair.
pub enum PreparedTrain<'a> {
    Plain(&'a [Image]),
    Sliding(Vec<WindowSet>),
}

impl<'a> PreparedTrain<'a> {
    pub fn new(train: &'a [Image], metric: MetricId) -> Self {
        match metric {
            MetricId::Plain => PreparedTrain::Plain(train),
            MetricId::Sliding => PreparedTrain::Sliding(train.iter().map(windows_of).collect()),
        }
    }

    pub fn metric(&self) -> MetricId {
        match self {
            PreparedTrain::Plain(_) => MetricId::Plain,
            PreparedTrain::Sliding(_) => MetricId::Sliding,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PreparedTrain::Plain(t) => t.len(),
            PreparedTrain::Sliding(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `out[j]` with the distance from training image `j` to `test`.
    pub fn distances_into(&self, test: &Image, out: &mut [SquaredDistance]) {
        self.block_distances_into(std::slice::from_ref(test), out);
    }

    /// Fills row `t` of the row-major `tests.len() × len()` block `out` with
    /// distances to `tests[t]`. Training images are visited in the outer loop
    /// so each one (and its windows) is loaded once per block of tests.
    pub fn block_distances_into(&self, tests: &[Image], out: &mut [SquaredDistance]) {
        let n = self.len();
        debug_assert_eq!(out.len(), tests.len() * n);
        match self {
            PreparedTrain::Plain(train) => {
                for (j, img) in train.iter().enumerate() {
                    for (t, test) in tests.iter().enumerate() {
                        out[t * n + j] = squared_l2(img, test);
                    }
                }
            }
            PreparedTrain::Sliding(windows) => {
                for (j, ws) in windows.iter().enumerate() {
                    for (t, test) in tests.iter().enumerate() {
                        out[t * n + j] = sliding_min(ws, test);
                    }
                }
            }
        }
    }
}

/// Summation kernels over 784-byte images.
///
/// Differences are taken in `i16` and squared into `u32` lanes. The portable
/// version is written so LLVM vectorizes it; on x86_64 the same body is also
/// compiled with AVX2 enabled and picked at runtime. Both produce identical
/// integers.
mod kernel {
    use super::IMAGE_LEN;

    const LANES: usize = 16;

    // Wrapping ops never wrap here (a lane sum is at most 49 · 255²); they
    // keep overflow checks from blocking vectorization in checked builds.
    #[inline(always)]
    fn accumulate(a: &[u8], b: &[u8], acc: &mut [u32; LANES]) {
        for (ca, cb) in a.chunks_exact(LANES).zip(b.chunks_exact(LANES)) {
            for i in 0..LANES {
                let d = i32::from(i16::from(ca[i]).wrapping_sub(i16::from(cb[i])));
                acc[i] = acc[i].wrapping_add(d.wrapping_mul(d) as u32);
            }
        }
    }

    #[inline(always)]
    fn full_portable(a: &[u8; IMAGE_LEN], b: &[u8; IMAGE_LEN]) -> u32 {
        let mut acc = [0u32; LANES];
        accumulate(a, b, &mut acc);
        acc.iter().fold(0, |s, &x| s.wrapping_add(x))
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    fn full_avx2(a: &[u8; IMAGE_LEN], b: &[u8; IMAGE_LEN]) -> u32 {
        full_portable(a, b)
    }

    #[inline]
    pub(super) fn full(a: &[u8; IMAGE_LEN], b: &[u8; IMAGE_LEN]) -> u32 {
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { full_avx2(a, b) };
        }
        full_portable(a, b)
    }

    #[cfg(test)]
    pub(super) fn full_without_dispatch(a: &[u8; IMAGE_LEN], b: &[u8; IMAGE_LEN]) -> u32 {
        full_portable(a, b)
    }

    const _: () = assert!(IMAGE_LEN.is_multiple_of(LANES));
}
