//! Candidate-point selection and seed-feature propagation.
//!
//! [`fps`] is the scene-wide greedy maximin sampler. [`foreground_sample`]
//! restricts it to labelled points and [`object_balanced_sample`] splits the
//! budget evenly across instances so that small objects still receive
//! candidates. Features of resampled positions come from
//! [`interpolate_features`].

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::geom::{Point3, PointCloud};
use crate::spatial::{dist2, KdTree};

/// Offset added to neighbor distances before inverting them.
pub const INTERPOLATION_EPS: f64 = 1e-8;

/// Seed positions with one feature vector each.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedFeatureSet {
    positions: Vec<Point3>,
    features: Vec<DVector<f64>>,
}

impl SeedFeatureSet {
    pub fn new(positions: Vec<Point3>, features: Vec<DVector<f64>>) -> Result<Self> {
        if positions.len() != features.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} seed positions but {} features",
                positions.len(),
                features.len()
            )));
        }
        if let Some(first) = features.first() {
            let c = first.len();
            if let Some(i) = features.iter().position(|f| f.len() != c) {
                return Err(Error::DimensionMismatch(alloc::format!(
                    "seed feature {i} has dimension {}, expected {c}",
                    features[i].len()
                )));
            }
        }
        Ok(Self {
            positions,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn features(&self) -> &[DVector<f64>] {
        &self.features
    }

    /// Feature dimension, 0 for an empty set.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }
}

/// Result of a sampler that may return fewer points than requested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// Indices into the input cloud.
    pub indices: Vec<usize>,
    /// Requested count minus returned count.
    pub shortfall: usize,
}

/// Greedy maximin over `subset` (indices into `points`), starting at
/// `subset[start]`. Returns indices into `points` in selection order.
fn fps_over(points: &[Point3], subset: &[usize], m: usize, start: usize) -> Vec<usize> {
    let n = subset.len();
    let m = m.min(n);
    if m == 0 {
        return Vec::new();
    }
    let mut chosen = vec![false; n];
    let mut min_d = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(m);
    let mut current = start;
    for _ in 0..m {
        chosen[current] = true;
        out.push(subset[current]);
        let anchor = points[subset[current]];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for j in 0..n {
            if chosen[j] {
                continue;
            }
            let d = dist2(&points[subset[j]], &anchor);
            if d < min_d[j] {
                min_d[j] = d;
            }
            // strict comparison keeps the lowest index on ties
            if min_d[j] > best_d {
                best_d = min_d[j];
                best = j;
            }
        }
        current = best;
    }
    out
}

/// Farthest point sampling: `m` distinct indices; each after `start`
/// maximizes the distance to the already chosen set, ties to the lowest index.
pub fn fps(cloud: &PointCloud, m: usize, start: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if n == 0 {
        return Err(invalid!("cannot sample from an empty cloud"));
    }
    if m == 0 || m > n {
        return Err(invalid!("sample count {m} outside [1, {n}]"));
    }
    if start >= n {
        return Err(invalid!("start index {start} out of range for {n} points"));
    }
    let all: Vec<usize> = (0..n).collect();
    Ok(fps_over(cloud.points(), &all, m, start))
}

/// FPS restricted to non-background points. Starts at the lowest-index
/// foreground point. When fewer than `m` foreground points exist, all of
/// them are returned and the gap is reported as `shortfall`.
pub fn foreground_sample(cloud: &PointCloud, m: usize) -> Result<Sample> {
    let labels = cloud.require_labels()?;
    if m == 0 {
        return Err(invalid!("sample count must be at least 1"));
    }
    let fg: Vec<usize> = (0..cloud.len()).filter(|&i| labels[i].is_some()).collect();
    if fg.is_empty() {
        return Err(invalid!("cloud has no foreground points"));
    }
    let indices = fps_over(cloud.points(), &fg, m, 0);
    let shortfall = m - indices.len();
    Ok(Sample { indices, shortfall })
}

/// Per-instance sample counts for object-balanced sampling.
///
/// Each of the `K` instances gets `m / K`, the first `m % K` (ascending id)
/// one more. Instances smaller than their quota give up the difference, which
/// is handed out one point at a time, round-robin in id order, to instances
/// that still have unsampled points.
pub fn balanced_quotas(sizes: &[usize], m: usize) -> Vec<usize> {
    let k = sizes.len();
    if k == 0 {
        return Vec::new();
    }
    let base = m / k;
    let extra = m % k;
    let mut quota: Vec<usize> = (0..k)
        .map(|i| (base + usize::from(i < extra)).min(sizes[i]))
        .collect();
    let target = m.min(sizes.iter().sum());
    let mut assigned: usize = quota.iter().sum();
    while assigned < target {
        for i in 0..k {
            if assigned == target {
                break;
            }
            if quota[i] < sizes[i] {
                quota[i] += 1;
                assigned += 1;
            }
        }
    }
    quota
}

/// Object-balanced sampling: FPS inside each foreground instance with the
/// quotas of [`balanced_quotas`]. Indices are grouped by ascending instance id.
pub fn object_balanced_sample(cloud: &PointCloud, m: usize) -> Result<Sample> {
    let labels = cloud.require_labels()?;
    if m == 0 {
        return Err(invalid!("sample count must be at least 1"));
    }
    let ids = cloud.instance_ids();
    if ids.is_empty() {
        return Err(invalid!("cloud has no foreground instance"));
    }
    let members: Vec<Vec<usize>> = ids
        .iter()
        .map(|&id| {
            (0..cloud.len())
                .filter(|&i| labels[i] == Some(id))
                .collect()
        })
        .collect();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = balanced_quotas(&sizes, m);
    let mut indices = Vec::with_capacity(m);
    for (subset, &q) in members.iter().zip(&quotas) {
        indices.extend(fps_over(cloud.points(), subset, q, 0));
    }
    let shortfall = m - indices.len();
    Ok(Sample { indices, shortfall })
}

/// Inverse-distance interpolation over the three nearest seeds.
#[derive(Debug, Clone)]
pub struct FeatureInterpolator<'a> {
    seeds: &'a SeedFeatureSet,
    tree: KdTree,
}

impl<'a> FeatureInterpolator<'a> {
    pub fn new(seeds: &'a SeedFeatureSet) -> Result<Self> {
        if seeds.is_empty() {
            return Err(invalid!("seed set is empty"));
        }
        Ok(Self {
            seeds,
            tree: KdTree::new(seeds.positions()),
        })
    }

    /// Weighted average of the (up to) three nearest seed features with
    /// weights `1 / (d + eps)` normalized to sum to one.
    pub fn interpolate(&self, query: &Point3) -> DVector<f64> {
        let nn = self.tree.nearest(query, 3);
        let weights: Vec<f64> = nn
            .iter()
            .map(|n| 1.0 / (libm::sqrt(n.dist2) + INTERPOLATION_EPS))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut out = DVector::zeros(self.seeds.dim());
        for (n, w) in nn.iter().zip(&weights) {
            out.axpy(w / total, &self.seeds.features[n.index], 1.0);
        }
        out
    }

    /// The seed's own feature when `query` coincides with a seed position,
    /// otherwise [`Self::interpolate`].
    pub fn lookup(&self, query: &Point3) -> DVector<f64> {
        match self.tree.nearest(query, 1).first() {
            Some(n) if n.dist2 == 0.0 => self.seeds.features[n.index].clone(),
            _ => self.interpolate(query),
        }
    }
}

/// Features for `new_positions` interpolated from the three nearest seeds.
pub fn interpolate_features(
    new_positions: &[Point3],
    seeds: &SeedFeatureSet,
) -> Result<Vec<DVector<f64>>> {
    let interp = FeatureInterpolator::new(seeds)?;
    Ok(new_positions.iter().map(|p| interp.interpolate(p)).collect())
}
