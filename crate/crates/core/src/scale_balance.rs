//! Grasp-scale statistics and scale-balanced loss weighting.
//!
//! The scale of a sample is the width of its best-scoring grasp. Widths are
//! binned into `t` equal bins over `[0, w_max]`; a sample whose bin holds
//! `C_i` grasps, with `C_max` the fullest bin, weighs `1 - ln(C_i / C_max)`.
//! Negative samples weigh 1.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::geom::{GraspPose, GripperModel};

/// Default number of bins: 1 cm bins over a 10 cm gripper.
pub const DEFAULT_BINS: usize = 10;

/// Default weight of the rotation term in [`weighted_loss`].
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Candidate grasps annotated for each sampled point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraspLabelSet {
    per_point: Vec<Vec<GraspPose>>,
}

impl GraspLabelSet {
    pub fn new(per_point: Vec<Vec<GraspPose>>, gripper: &GripperModel) -> Result<Self> {
        for (i, grasps) in per_point.iter().enumerate() {
            for g in grasps {
                g.validate(gripper)
                    .map_err(|e| invalid!("point {i}: {e}"))?;
            }
        }
        Ok(Self { per_point })
    }

    pub fn per_point(&self) -> &[Vec<GraspPose>] {
        &self.per_point
    }

    pub fn len(&self) -> usize {
        self.per_point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_point.is_empty()
    }

    /// All grasps, point by point.
    pub fn flatten(&self) -> Vec<GraspPose> {
        self.per_point.iter().flatten().copied().collect()
    }
}

/// Width of each point's highest-scoring successful grasp (score > 0).
/// Score ties go to the smaller width, then to the earlier grasp. `None`
/// marks a negative sample.
pub fn best_scale_per_point(labels: &GraspLabelSet) -> Vec<Option<f64>> {
    labels
        .per_point
        .iter()
        .map(|grasps| {
            grasps
                .iter()
                .filter(|g| g.score > 0.0)
                .min_by(|a, b| {
                    b.score
                        .total_cmp(&a.score)
                        .then(a.width.total_cmp(&b.width))
                })
                .map(|g| g.width)
        })
        .collect()
}

/// Counts of grasp widths over `t` equal bins of `[0, w_max]`. Bin `i`
/// covers `[i w_max / t, (i + 1) w_max / t)`; the last bin is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleHistogram {
    t: usize,
    w_max: f64,
    counts: Vec<u64>,
}

impl ScaleHistogram {
    pub fn new(t: usize, w_max: f64) -> Result<Self> {
        Self::from_counts(w_max, vec![0; t])
    }

    pub fn from_counts(w_max: f64, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(invalid!("histogram needs at least one bin"));
        }
        if !(w_max.is_finite() && w_max > 0.0) {
            return Err(invalid!("w_max must be positive, got {w_max}"));
        }
        Ok(Self {
            t: counts.len(),
            w_max,
            counts,
        })
    }

    pub fn bins(&self) -> usize {
        self.t
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn c_max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Lower edge of bin `i`.
    pub fn edge(&self, i: usize) -> f64 {
        i as f64 * self.w_max / self.t as f64
    }

    /// Bin holding `width`, consistent with [`Self::edge`].
    pub fn bin_of(&self, width: f64) -> Result<usize> {
        if !(width >= 0.0 && width <= self.w_max) {
            return Err(invalid!("width {width} outside [0, {}]", self.w_max));
        }
        let last = self.t - 1;
        let mut i = (libm::floor(width * self.t as f64 / self.w_max) as usize).min(last);
        while i > 0 && width < self.edge(i) {
            i -= 1;
        }
        while i < last && width >= self.edge(i + 1) {
            i += 1;
        }
        Ok(i)
    }

    pub fn add(&mut self, width: f64) -> Result<()> {
        let i = self.bin_of(width)?;
        self.counts[i] += 1;
        Ok(())
    }

    /// Adds another histogram's counts. Bin layouts must agree.
    pub fn merge(&mut self, other: &ScaleHistogram) -> Result<()> {
        if self.t != other.t || self.w_max != other.w_max {
            return Err(Error::DimensionMismatch(alloc::format!(
                "cannot merge histograms with layouts ({}, {}) and ({}, {})",
                self.t,
                self.w_max,
                other.t,
                other.w_max
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Histogram of `scales` over `t` bins of `[0, w_max]`.
pub fn build_scale_histogram(scales: &[f64], t: usize, w_max: f64) -> Result<ScaleHistogram> {
    let mut h = ScaleHistogram::new(t, w_max)?;
    for &s in scales {
        h.add(s)?;
    }
    Ok(h)
}

/// `1 - ln(C_i / C_max)` for the bin of `scale`, 1 for a negative sample.
/// Empty bins count as 1 so unseen scales get a finite weight.
pub fn sample_weight(h: &ScaleHistogram, scale: Option<f64>) -> Result<f64> {
    let c_max = h.c_max();
    if c_max == 0 {
        return Err(Error::InvalidState("histogram has no counts".into()));
    }
    let Some(width) = scale else {
        return Ok(1.0);
    };
    let c_i = h.counts[h.bin_of(width)?].max(1);
    Ok(1.0 - libm::log(c_i as f64 / c_max as f64))
}

/// Weights for a batch of optional scales.
pub fn sample_weights(h: &ScaleHistogram, scales: &[Option<f64>]) -> Result<Vec<f64>> {
    scales.iter().map(|&s| sample_weight(h, s)).collect()
}

/// Mean over samples of `W_i (approach_i + alpha rotation_i)`.
pub fn weighted_loss(approach: &[f64], rotation: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if approach.len() != rotation.len() || approach.len() != weights.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "loss arrays have lengths {}, {} and {}",
            approach.len(),
            rotation.len(),
            weights.len()
        )));
    }
    if approach.is_empty() {
        return Err(invalid!("no samples"));
    }
    if !(alpha >= 0.0) {
        return Err(invalid!("alpha must be non-negative, got {alpha}"));
    }
    let sum: f64 = approach
        .iter()
        .zip(rotation)
        .zip(weights)
        .map(|((a, r), w)| w * (a + alpha * r))
        .sum();
    Ok(sum / approach.len() as f64)
}
