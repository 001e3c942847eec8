//! Single-distance estimators for the depth pixels inside a detection box.
//!
//! All three assume the detected object dominates the box in some sense:
//! the histogram and K-means estimators pick the most populated depth mode,
//! double thresholding strips background and foreground around the mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Histogram,
    Kmeans,
    DoubleThreshold,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "histogram" => Ok(Estimator::Histogram),
            "kmeans" => Ok(Estimator::Kmeans),
            "double_threshold" => Ok(Estimator::DoubleThreshold),
            other => Err(Error::Config(format!(
                "unknown estimator `{other}` (expected histogram, kmeans or double_threshold)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorParams {
    pub k_bins: usize,
    pub k_clusters: usize,
    /// Background rejection margin, meters.
    pub x_b: f64,
    /// Foreground rejection margin, meters.
    pub x_f: f64,
    pub max_kmeans_iters: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            k_bins: 10,
            k_clusters: 3,
            x_b: 0.3,
            x_f: 0.3,
            max_kmeans_iters: 100,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_bins < 2 {
            return Err(Error::Config("roi_depth.k_bins must be >= 2".into()));
        }
        if self.k_clusters < 2 {
            return Err(Error::Config("roi_depth.k_clusters must be >= 2".into()));
        }
        if !(self.x_b > 0.0) || !(self.x_f > 0.0) {
            return Err(Error::Config("roi_depth.x_b and roi_depth.x_f must be > 0".into()));
        }
        if self.max_kmeans_iters == 0 {
            return Err(Error::Config("roi_depth.max_kmeans_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Valid depth readings (meters) from one region of interest.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiDepthSample {
    values: Vec<f64>,
}

impl RoiDepthSample {
    /// Keeps only finite, positive readings.
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            values: values
                .into_iter()
                .filter(|v| v.is_finite() && *v > 0.0)
                .collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn non_empty(&self) -> Result<&[f64]> {
        if self.values.is_empty() {
            Err(Error::NoDepth)
        } else {
            Ok(&self.values)
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn estimate(estimator: Estimator, s: &RoiDepthSample, p: &EstimatorParams) -> Result<f64> {
    match estimator {
        Estimator::Histogram => estimate_histogram(s, p),
        Estimator::Kmeans => estimate_kmeans(s, p),
        Estimator::DoubleThreshold => estimate_double_threshold(s, p),
    }
}

/// Mean of the readings in the most populated of `k_bins` equal-width bins
/// spanning `[min, max]`. Ties go to the nearer bin.
pub fn estimate_histogram(s: &RoiDepthSample, p: &EstimatorParams) -> Result<f64> {
    let values = s.non_empty()?;
    let bins = p.k_bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span <= 0.0 {
        return Ok(lo);
    }
    let bin_of = |v: f64| (((v - lo) / span * bins as f64) as usize).min(bins - 1);
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[bin_of(v)] += 1;
    }
    let mut winner = 0;
    for (b, &c) in counts.iter().enumerate() {
        if c > counts[winner] {
            winner = b;
        }
    }
    let members: Vec<f64> = values.iter().copied().filter(|&v| bin_of(v) == winner).collect();
    Ok(mean(&members))
}

/// 1-D Lloyd iteration from quantile seeds; returns the mean of the cluster
/// with the most members (ties go to the nearer cluster). Samples smaller
/// than `k_clusters` fall back to the overall mean.
pub fn estimate_kmeans(s: &RoiDepthSample, p: &EstimatorParams) -> Result<f64> {
    let values = s.non_empty()?;
    let k = p.k_clusters.max(1);
    if values.len() < k {
        return Ok(mean(values));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut centers: Vec<f64> = (0..k)
        .map(|j| sorted[(((2 * j + 1) * n) / (2 * k)).min(n - 1)])
        .collect();

    let assign = |centers: &[f64], v: f64| -> usize {
        let mut best = 0;
        for (c, &center) in centers.iter().enumerate() {
            if (v - center).abs() < (v - centers[best]).abs() {
                best = c;
            }
        }
        best
    };

    let mut labels: Vec<usize> = sorted.iter().map(|&v| assign(&centers, v)).collect();
    for _ in 0..p.max_kmeans_iters {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&v, &l) in sorted.iter().zip(&labels) {
            sums[l] += v;
            counts[l] += 1;
        }
        for c in 0..k {
            // Empty clusters keep their previous center.
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            }
        }
        let next: Vec<usize> = sorted.iter().map(|&v| assign(&centers, v)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }

    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k];
    for (&v, &l) in sorted.iter().zip(&labels) {
        counts[l] += 1;
        sums[l] += v;
    }
    let winner = (0..k)
        .filter(|&c| counts[c] > 0)
        .max_by(|&a, &b| {
            counts[a]
                .cmp(&counts[b])
                .then_with(|| (sums[b] / counts[b] as f64).total_cmp(&(sums[a] / counts[a] as f64)))
        })
        .expect("at least one non-empty cluster");
    Ok(sums[winner] / counts[winner] as f64)
}

/// Two-pass rejection around the mean: drop readings beyond `mean + x_b`,
/// then drop readings nearer than `mean' - x_f` where `mean'` is the mean of
/// the survivors. Returns the mean of what is left.
pub fn estimate_double_threshold(s: &RoiDepthSample, p: &EstimatorParams) -> Result<f64> {
    let values = s.non_empty()?;
    let background_mean = mean(values);
    let kept: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&v| v <= background_mean + p.x_b)
        .collect();
    if kept.is_empty() {
        return Err(Error::NoDepth);
    }
    let foreground_mean = mean(&kept);
    let object: Vec<f64> = kept
        .into_iter()
        .filter(|&v| v >= foreground_mean - p.x_f)
        .collect();
    if object.is_empty() {
        return Err(Error::NoDepth);
    }
    Ok(mean(&object))
}
