//! Accuracy bookkeeping and the plasticity / stability metrics.
//!
//! Experiences are 1-indexed throughout. Entry `(k, i)` is the test accuracy
//! on experience `i` measured right after training experience `k`, so only
//! the lower triangle `i <= k` exists.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Lower-triangular record of accuracies.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccuracyMatrix {
    entries: BTreeMap<(usize, usize), f64>,
    trained: usize,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a complete matrix from rows; row `k - 1` holds `k` accuracies.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let mut m = Self::new();
        for row in rows {
            m.push_row(row.as_ref())?;
        }
        Ok(m)
    }

    /// Appends the evaluation row taken after the next experience.
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        let k = self.trained + 1;
        if row.len() != k {
            return Err(Error::IncompleteMatrix {
                after: k,
                on: row.len().min(k) + 1,
            });
        }
        for (idx, &acc) in row.iter().enumerate() {
            check_accuracy(k, idx + 1, acc)?;
        }
        for (idx, &acc) in row.iter().enumerate() {
            self.entries.insert((k, idx + 1), acc);
        }
        self.trained = k;
        Ok(())
    }

    /// Sets a single entry. Used to build sparse (possibly incomplete)
    /// matrices; `num_experiences` tracks the largest row index seen.
    pub fn set(&mut self, after: usize, on: usize, acc: f64) -> Result<()> {
        if after == 0 || on == 0 || on > after {
            return Err(Error::IncompleteMatrix { after, on });
        }
        check_accuracy(after, on, acc)?;
        self.entries.insert((after, on), acc);
        self.trained = self.trained.max(after);
        Ok(())
    }

    pub fn get(&self, after: usize, on: usize) -> Option<f64> {
        self.entries.get(&(after, on)).copied()
    }

    fn require(&self, after: usize, on: usize) -> Result<f64> {
        self.get(after, on)
            .ok_or(Error::IncompleteMatrix { after, on })
    }

    /// Number of experiences trained so far (the largest row index).
    pub fn num_experiences(&self) -> usize {
        self.trained
    }

    /// The evaluation row after experience `k`, if complete.
    pub fn row(&self, k: usize) -> Result<Vec<f64>> {
        (1..=k).map(|i| self.require(k, i)).collect()
    }
}

fn check_accuracy(after: usize, on: usize, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidAccuracy { after, on, value })
    }
}

fn check_k(matrix: &AccuracyMatrix, k: usize) -> Result<()> {
    if k == 0 || k > matrix.num_experiences() {
        return Err(Error::IncompleteMatrix { after: k, on: 1 });
    }
    Ok(())
}

/// Mean accuracy of the current model over every experience seen so far:
/// `(1/K) * sum_i a[K][i]`.
pub fn plasticity(matrix: &AccuracyMatrix, k: usize) -> Result<f64> {
    check_k(matrix, k)?;
    let mut sum = 0.0;
    for i in 1..=k {
        sum += matrix.require(k, i)?;
    }
    Ok(sum / k as f64)
}

/// One minus the mean forgetting over prior experiences, with forgetting
/// `F_i = max(0, a[i][i] - a[K][i])`. Exactly 1 when `K = 1`.
pub fn stability(matrix: &AccuracyMatrix, k: usize) -> Result<f64> {
    check_k(matrix, k)?;
    if k == 1 {
        matrix.require(1, 1)?;
        return Ok(1.0);
    }
    let mut forgetting = 0.0;
    for i in 1..k {
        let peak = matrix.require(i, i)?;
        let now = matrix.require(k, i)?;
        forgetting += (peak - now).max(0.0);
    }
    // every row through K must be complete even if it does not feed the sum
    for j in 1..=k {
        matrix.require(k, j)?;
    }
    Ok((1.0 - forgetting / (k - 1) as f64).clamp(0.0, 1.0))
}

/// Target values the health score compares against.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Thresholds {
    pub plasticity: f64,
    pub stability: f64,
    /// Seconds.
    pub latency_s: f64,
    /// Maximum allowed memory, MB.
    pub memory_max_mb: f64,
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.plasticity,
            self.stability,
            self.latency_s,
            self.memory_max_mb,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain("thresholds"));
        }
        if self.memory_max_mb <= 0.0 {
            return Err(Error::InvalidConfig("memory_max_mb must be > 0".into()));
        }
        if self.latency_s < 0.0 {
            return Err(Error::InvalidConfig(
                "latency threshold must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Metrics for one experience, bundled with their thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSnapshot {
    pub plasticity: f64,
    pub stability: f64,
    pub latency_s: f64,
    pub memory_peak_mb: f64,
    pub thresholds: Thresholds,
}

impl MetricSnapshot {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        let vals = [
            self.plasticity,
            self.stability,
            self.latency_s,
            self.memory_peak_mb,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain("snapshot"));
        }
        if !(0.0..=1.0).contains(&self.plasticity) || !(0.0..=1.0).contains(&self.stability) {
            return Err(Error::NumericDomain("plasticity/stability outside [0, 1]"));
        }
        if self.latency_s < 0.0 {
            return Err(Error::NumericDomain("latency < 0"));
        }
        if self.memory_peak_mb < 0.0 {
            return Err(Error::NumericDomain("memory_peak < 0"));
        }
        Ok(())
    }
}

pub fn snapshot(
    matrix: &AccuracyMatrix,
    k: usize,
    latency_s: f64,
    memory_peak_mb: f64,
    thresholds: Thresholds,
) -> Result<MetricSnapshot> {
    let snap = MetricSnapshot {
        plasticity: plasticity(matrix, k)?,
        stability: stability(matrix, k)?,
        latency_s,
        memory_peak_mb,
        thresholds,
    };
    snap.validate()?;
    Ok(snap)
}
