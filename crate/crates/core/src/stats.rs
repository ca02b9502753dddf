// SPDX-License-Identifier: Apache-2.0

//! Accuracy, its binomial standard deviation and normal-approximation
//! interval, the confusion matrix, and the two-proportion z-test.
//!
//! Everything is computed in `f64` from exact integer counts. Nothing is
//! rounded here; rounding is left to whoever prints the numbers.

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::MetricId;

/// z for a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Counts indexed `[actual][predicted]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal_sum(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    /// Number of examples whose true class is `c`, per class.
    pub fn actual_totals(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|c| self.counts[c].iter().sum())
    }

    /// CSV table: header `actual,0,...,9`, then one row per actual class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual");
        for p in 0..NUM_CLASSES {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
        for (a, row) in self.counts.iter().enumerate() {
            out.push_str(&a.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: MetricId,
    pub k: usize,
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub std: f64,
    pub z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confusion: ConfusionMatrix,
    /// Informational only; not covered by any determinism guarantee.
    pub wall_time_secs: f64,
}

impl EvalReport {
    pub fn new(
        metric: MetricId,
        k: usize,
        predictions: &[Label],
        truths: &[Label],
        z: f64,
        wall_time_secs: f64,
    ) -> Result<Self> {
        let confusion = confusion_matrix(predictions, truths)?;
        let (correct, n) = (confusion.diagonal_sum(), confusion.total());
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let accuracy = proportion(correct, n);
        let std = binomial_std(accuracy, n)?;
        let (ci_low, ci_high) = confidence_interval(accuracy, n, z)?;
        Ok(EvalReport {
            metric,
            k,
            n,
            correct,
            accuracy,
            std,
            z,
            ci_low,
            ci_high,
            confusion,
            wall_time_secs,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    /// `p2 - p1`.
    pub d: f64,
    /// Unpooled standard deviation of the difference.
    pub sigma_d: f64,
    /// `|d| / sigma_d`, or 0 when `sigma_d` is 0.
    pub z_stat: f64,
    pub z_critical: f64,
    pub rejected: bool,
    /// Both proportions sit at 0 or 1, so the difference has no variance and
    /// the test is not applied.
    pub degenerate_variance: bool,
}

#[inline]
fn proportion(correct: u64, n: u64) -> f64 {
    correct as f64 / n as f64
}

fn check_proportion(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::BadProportion(p))
    }
}

pub fn accuracy(predictions: &[Label], truths: &[Label]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(proportion(correct as u64, truths.len() as u64))
}

/// `sqrt(p (1 - p) / n)`.
pub fn binomial_std(p: f64, n: u64) -> Result<f64> {
    check_proportion(p)?;
    if n == 0 {
        return Err(Error::ZeroSamples);
    }
    Ok((p * (1.0 - p) / n as f64).sqrt())
}

/// `(p - z·σ̂, p + z·σ̂)` with σ̂ from [`binomial_std`]. Not clamped to [0, 1].
pub fn confidence_interval(p: f64, n: u64, z: f64) -> Result<(f64, f64)> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::BadCriticalValue(z));
    }
    let half = z * binomial_std(p, n)?;
    Ok((p - half, p + half))
}

pub fn confusion_matrix(predictions: &[Label], truths: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (index, (&p, &t)) in predictions.iter().zip(truths).enumerate() {
        for value in [p, t] {
            if usize::from(value) >= NUM_CLASSES {
                return Err(Error::BadLabel { index, value });
            }
        }
        m.counts[usize::from(t)][usize::from(p)] += 1;
    }
    Ok(m)
}

/// Two-sided z-test of `p1 == p2` using the unpooled variance
/// `p1(1-p1)/n1 + p2(1-p2)/n2`. Rejects when `|d| / sigma_d > z_critical`.
pub fn two_proportion_test(p1: f64, n1: u64, p2: f64, n2: u64, z_critical: f64) -> Result<HypothesisResult> {
    if !(z_critical.is_finite() && z_critical > 0.0) {
        return Err(Error::BadCriticalValue(z_critical));
    }
    let s1 = binomial_std(p1, n1)?;
    let s2 = binomial_std(p2, n2)?;
    let d = p2 - p1;
    let sigma_d = (s1 * s1 + s2 * s2).sqrt();
    let degenerate_variance = sigma_d == 0.0;
    let z_stat = if degenerate_variance { 0.0 } else { d.abs() / sigma_d };
    Ok(HypothesisResult {
        d,
        sigma_d,
        z_stat,
        z_critical,
        rejected: !degenerate_variance && z_stat > z_critical,
        degenerate_variance,
    })
}
