//! Noisy-clean mixing.
//!
//! Clean scenes are composed from per-instance model clouds and poses, pruned
//! wherever the sensor capture has no points of the same instance, and then
//! whole instances of the noisy capture are swapped for their clean
//! counterparts at random.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::geom::{transform_cloud, InstanceLabel, PointCloud, RigidPose};
use crate::spatial::KdTree;

/// Default visibility radius: 5 mm.
pub const DEFAULT_VISIBILITY_RADIUS: f64 = 0.005;

/// Default per-instance replacement probability.
pub const DEFAULT_REPLACE_PROB: f64 = 0.5;

/// One object: its model cloud in the object frame and its pose in the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub instance: u32,
    pub model: PointCloud,
    pub pose: RigidPose,
}

impl Asset {
    /// Model cloud placed in the scene, labelled with the instance id.
    pub fn world_cloud(&self) -> PointCloud {
        transform_cloud(&self.model, &self.pose).with_uniform_label(Some(self.instance))
    }
}

/// Per-instance models and poses, kept in ascending instance order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneAssets {
    assets: Vec<Asset>,
}

impl SceneAssets {
    pub fn new(mut assets: Vec<Asset>) -> Result<Self> {
        assets.sort_by_key(|a| a.instance);
        if let Some(w) = assets.windows(2).find(|w| w[0].instance == w[1].instance) {
            return Err(invalid!("instance {} appears twice", w[0].instance));
        }
        Ok(Self { assets })
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, instance: u32) -> Option<&Asset> {
        self.assets
            .binary_search_by_key(&instance, |a| a.instance)
            .ok()
            .map(|i| &self.assets[i])
    }

    /// Checks that every foreground instance of `scene` has an asset.
    pub fn covers(&self, scene: &PointCloud) -> Result<()> {
        for id in scene.instance_ids() {
            if self.get(id).is_none() {
                return Err(invalid!("scene instance {id} has no asset"));
            }
        }
        Ok(())
    }
}

/// Every model moved to its pose and concatenated in instance order, labelled
/// by instance.
pub fn synthesize_clean_scene(assets: &SceneAssets) -> PointCloud {
    let parts: Vec<PointCloud> = assets.assets.iter().map(Asset::world_cloud).collect();
    PointCloud::concat(&parts)
}

/// Indices of clean points that have a noisy point of the same label within
/// distance `r`, ascending.
pub fn visible_indices(clean: &PointCloud, noisy: &PointCloud, r: f64) -> Result<Vec<usize>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid!("visibility radius must be positive, got {r}"));
    }
    let clean_labels = clean.require_labels()?;
    let noisy_labels = noisy.require_labels()?;
    let mut by_label: BTreeMap<InstanceLabel, Vec<usize>> = BTreeMap::new();
    for (i, l) in noisy_labels.iter().enumerate() {
        by_label.entry(*l).or_default().push(i);
    }
    let trees: BTreeMap<InstanceLabel, KdTree> = by_label
        .into_iter()
        .map(|(l, idx)| {
            let pts: Vec<_> = idx.iter().map(|&i| noisy.points()[i]).collect();
            (l, KdTree::new(&pts))
        })
        .collect();
    Ok(clean
        .points()
        .iter()
        .zip(clean_labels)
        .enumerate()
        .filter(|(_, (p, l))| {
            trees
                .get(l)
                .is_some_and(|t| t.any_within(p, r, |_| true))
        })
        .map(|(i, _)| i)
        .collect())
}

/// Keeps clean points that the noisy capture witnesses (same instance, within `r`).
pub fn visibility_filter(clean: &PointCloud, noisy: &PointCloud, r: f64) -> Result<PointCloud> {
    Ok(clean.select(&visible_indices(clean, noisy, r)?))
}

/// Instance ids replaced by [`mix_scene`] for a given seed: one uniform draw
/// per noisy instance, in ascending id order.
pub fn replaced_instances(noisy: &PointCloud, replace_prob: f64, seed: u64) -> Result<BTreeSet<u32>> {
    if !(0.0..=1.0).contains(&replace_prob) {
        return Err(invalid!("replace probability {replace_prob} outside [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(noisy
        .instance_ids()
        .into_iter()
        .filter(|_| rng.random::<f64>() < replace_prob)
        .collect())
}

/// Swaps whole instances of `noisy` for their points in `clean_filtered`.
///
/// The output follows the noisy point order; a replaced instance's clean
/// points are emitted where its first noisy point was. Background always
/// comes from `noisy`. An instance with no clean points keeps its noisy
/// points so the instance set is unchanged.
pub fn mix_scene(noisy: &PointCloud, clean_filtered: &PointCloud, replace_prob: f64, seed: u64) -> Result<PointCloud> {
    let noisy_labels = noisy.require_labels()?;
    let clean_labels = clean_filtered.require_labels()?;
    let mut replaced = replaced_instances(noisy, replace_prob, seed)?;
    let mut clean_members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, l) in clean_labels.iter().enumerate() {
        if let Some(id) = l {
            if replaced.contains(id) {
                clean_members.entry(*id).or_default().push(i);
            }
        }
    }
    replaced.retain(|id| clean_members.contains_key(id));

    let mut points = Vec::with_capacity(noisy.len());
    let mut normals: Option<Vec<_>> = Some(Vec::with_capacity(noisy.len()));
    let mut labels = Vec::with_capacity(noisy.len());
    let mut emitted: BTreeSet<u32> = BTreeSet::new();
    let mut push = |cloud: &PointCloud, i: usize, label: InstanceLabel, normals: &mut Option<Vec<_>>| {
        points.push(cloud.points()[i]);
        labels.push(label);
        *normals = match (normals.take(), cloud.normals()) {
            (Some(mut acc), Some(ns)) => {
                acc.push(ns[i]);
                Some(acc)
            }
            _ => None,
        };
    };
    for (i, l) in noisy_labels.iter().enumerate() {
        match l {
            Some(id) if replaced.contains(id) => {
                if emitted.insert(*id) {
                    for &j in &clean_members[id] {
                        push(clean_filtered, j, *l, &mut normals);
                    }
                }
            }
            _ => push(noisy, i, *l, &mut normals),
        }
    }
    Ok(PointCloud::from_parts_unchecked(points, normals, Some(labels)))
}
