//! Grasp evaluation: gripper collision, antipodal friction-cone success,
//! Precision@k based AP metrics and per-scale statistics.
//!
//! Gripper geometry lives in the gripper frame of [`frame_of_grasp`]: x along
//! the approach, y along the closing direction, z completing the frame. The
//! fingertips sit at `x = depth`, the fingers extend back by `finger_depth`,
//! and the palm occupies the `base_depth` slab behind them.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Result};
use crate::geom::{frame_of_grasp, GraspPose, GripperModel, Point3, PointCloud, Vec3};
use crate::ncm::SceneAssets;
use crate::spatial::KdTree;

/// Friction coefficients averaged into AP.
pub const MU_GRID: [f64; 6] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
/// Precision@k is averaged over `k = 1..=TOP_K`.
pub const TOP_K: usize = 50;
/// Grasps per object considered by [`per_scale_stats`].
pub const STATS_TOP: usize = 10;
/// Friction used by [`per_scale_stats`].
pub const STATS_MU: f64 = 0.8;
/// Points closer than this to a box face count as outside it; the closing
/// sweep is widened by the same amount.
pub const GEOM_EPS: f64 = 1e-6;
/// Thickness of each finger's contact slab, measured inward from the
/// outermost point the closing finger meets.
pub const CONTACT_SLAB: f64 = 0.002;
/// Slack on the friction-cone comparison.
pub const ANGLE_EPS: f64 = 1e-9;

/// Grasp-width class: `[0, 4)`, `[4, 7)` and `[7, 10]` cm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScaleClass {
    Small,
    Medium,
    Large,
}

impl ScaleClass {
    pub const ALL: [ScaleClass; 3] = [ScaleClass::Small, ScaleClass::Medium, ScaleClass::Large];

    /// Class of a width in meters; `None` outside `[0, 0.10]`.
    pub fn of(width: f64) -> Option<Self> {
        if !(0.0..=0.10).contains(&width) {
            None
        } else if width < 0.04 {
            Some(Self::Small)
        } else if width < 0.07 {
            Some(Self::Medium)
        } else {
            Some(Self::Large)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Axis-aligned box in gripper coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl GripperBox {
    /// Strict containment, shrunk by [`GEOM_EPS`].
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] > self.min[k] + GEOM_EPS && p[k] < self.max[k] - GEOM_EPS)
    }
}

/// Left finger, right finger and palm boxes for a grasp. The fingers' inner
/// faces are `width` apart.
pub fn gripper_boxes(g: &GraspPose, gm: &GripperModel) -> [GripperBox; 3] {
    let half = g.width / 2.0;
    let tip = g.depth;
    let back = g.depth - gm.finger_depth;
    let hz = gm.finger_height / 2.0;
    let outer = half + gm.finger_width;
    [
        GripperBox {
            min: [back, -outer, -hz],
            max: [tip, -half, hz],
        },
        GripperBox {
            min: [back, half, -hz],
            max: [tip, outer, hz],
        },
        GripperBox {
            min: [back - gm.base_depth, -outer, -hz],
            max: [back, outer, hz],
        },
    ]
}

/// Whether any scene point lies strictly inside the gripper.
pub fn collision_check(g: &GraspPose, scene: &PointCloud, gm: &GripperModel) -> Result<bool> {
    let frame = frame_of_grasp(g)?;
    let boxes = gripper_boxes(g, gm);
    let reach2 = boxes
        .iter()
        .flat_map(|b| {
            (0..8).map(move |c| {
                let x = if c & 1 == 0 { b.min[0] } else { b.max[0] };
                let y = if c & 2 == 0 { b.min[1] } else { b.max[1] };
                let z = if c & 4 == 0 { b.min[2] } else { b.max[2] };
                x * x + y * y + z * z
            })
        })
        .fold(0.0, f64::max);
    let origin = g.translation;
    Ok(scene.points().iter().any(|p| {
        (p - origin).norm_squared() <= reach2 && {
            let local = frame.inverse_transform_point(p);
            boxes.iter().any(|b| b.contains(&local))
        }
    }))
}

/// Smallest friction-cone half-angles achievable on the left and right
/// fingers, or `None` when either finger has no usable contact.
///
/// The closing sweep is the region between the fingers. Each finger's
/// contacts are the sweep points within [`CONTACT_SLAB`] of the outermost
/// sweep point on its side; a contact is usable when its normal faces that
/// finger, and its angle is measured against the closing line.
pub fn contact_angles(g: &GraspPose, object: &PointCloud, gm: &GripperModel) -> Result<Option<(f64, f64)>> {
    let normals = object.require_normals()?;
    let frame = frame_of_grasp(g)?;
    let half = g.width / 2.0 + GEOM_EPS;
    let tip = g.depth + GEOM_EPS;
    let back = g.depth - gm.finger_depth - GEOM_EPS;
    let hz = gm.finger_height / 2.0 + GEOM_EPS;
    let sweep: Vec<(Point3, Vec3)> = object
        .points()
        .iter()
        .zip(normals)
        .filter_map(|(p, n)| {
            let q = frame.inverse_transform_point(p);
            (q.x >= back && q.x <= tip && q.y.abs() <= half && q.z.abs() <= hz)
                .then(|| (q, frame.rotation().tr_mul(n)))
        })
        .collect();
    if sweep.is_empty() {
        return Ok(None);
    }
    let y_min = sweep.iter().map(|(q, _)| q.y).fold(f64::INFINITY, f64::min);
    let y_max = sweep.iter().map(|(q, _)| q.y).fold(f64::NEG_INFINITY, f64::max);
    let best = |on_side: &dyn Fn(f64) -> bool, sign: f64| -> Option<f64> {
        sweep
            .iter()
            .filter(|(q, n)| on_side(q.y) && sign * n.y > 0.0)
            .map(|(_, n)| libm::atan2(libm::sqrt(n.x * n.x + n.z * n.z), sign * n.y))
            .min_by(f64::total_cmp)
    };
    let left = best(&|y| y <= y_min + CONTACT_SLAB, -1.0);
    let right = best(&|y| y >= y_max - CONTACT_SLAB, 1.0);
    Ok(left.zip(right))
}

/// Friction-cone half-angle for coefficient `mu`.
pub fn cone_half_angle(mu: f64) -> f64 {
    libm::atan(mu)
}

fn within_cone(required: Option<f64>, mu: f64) -> bool {
    required.is_some_and(|a| a <= cone_half_angle(mu) + ANGLE_EPS)
}

/// The largest of the two contact angles, i.e. the cone half-angle the grasp needs.
pub fn required_angle(g: &GraspPose, object: &PointCloud, gm: &GripperModel) -> Result<Option<f64>> {
    Ok(contact_angles(g, object, gm)?.map(|(l, r)| l.max(r)))
}

/// Antipodal force-closure test: each finger has a contact whose normal lies
/// within the friction cone (half-angle `atan(mu)`) about the closing line.
pub fn grasp_success(g: &GraspPose, object: &PointCloud, mu: f64, gm: &GripperModel) -> Result<bool> {
    if !(mu > 0.0) {
        return Err(invalid!("friction coefficient must be positive, got {mu}"));
    }
    Ok(within_cone(required_angle(g, object, gm)?, mu))
}

/// Fraction of successes among the first `k` results; missing entries count
/// as failures.
pub fn precision_at_k(results: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid!("k must be at least 1"));
    }
    let hits = results.iter().take(k).filter(|&&r| r).count();
    Ok(hits as f64 / k as f64)
}

/// Mean Precision@k over `k = 1..=50`.
pub fn ap_mu(results: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0.0;
    for k in 1..=TOP_K {
        if results.get(k - 1) == Some(&true) {
            hits += 1;
        }
        total += hits as f64 / k as f64;
    }
    total / TOP_K as f64
}

/// Canonical ranking: score descending, width ascending, then the remaining
/// fields, then input order.
pub fn rank_order(grasps: &[GraspPose]) -> Vec<usize> {
    let key = |g: &GraspPose| {
        [
            g.translation.x,
            g.translation.y,
            g.translation.z,
            g.approach.x,
            g.approach.y,
            g.approach.z,
            g.angle,
            g.depth,
        ]
    };
    let mut order: Vec<usize> = (0..grasps.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&grasps[i], &grasps[j]);
        b.score
            .total_cmp(&a.score)
            .then(a.width.total_cmp(&b.width))
            .then_with(|| {
                key(a)
                    .iter()
                    .zip(key(b).iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then(i.cmp(&j))
    });
    order
}

/// Object clouds in scene coordinates with a nearest-object lookup.
#[derive(Debug, Clone)]
pub struct ObjectIndex {
    ids: Vec<u32>,
    clouds: Vec<PointCloud>,
    tree: KdTree,
    owner: Vec<usize>,
}

impl ObjectIndex {
    pub fn new(objects: &SceneAssets) -> Result<Self> {
        let mut ids = Vec::new();
        let mut clouds = Vec::new();
        let mut all = Vec::new();
        let mut owner = Vec::new();
        for (k, asset) in objects.assets().iter().enumerate() {
            let cloud = asset.world_cloud();
            cloud
                .require_normals()
                .map_err(|_| invalid!("object {} has no normals", asset.instance))?;
            all.extend_from_slice(cloud.points());
            owner.extend(core::iter::repeat_n(k, cloud.len()));
            ids.push(asset.instance);
            clouds.push(cloud);
        }
        Ok(Self {
            ids,
            clouds,
            tree: KdTree::new(&all),
            owner,
        })
    }

    /// Position in [`Self::ids`] of the object owning the point nearest to `p`.
    pub fn nearest(&self, p: &Point3) -> Option<usize> {
        self.tree.nearest(p, 1).first().map(|n| self.owner[n.index])
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn cloud(&self, k: usize) -> &PointCloud {
        &self.clouds[k]
    }
}

/// Count and success rate of one scale class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassStats {
    pub count: usize,
    pub successes: usize,
    /// `successes / count`, 0 when the class is empty.
    pub success_rate: f64,
}

/// [`ClassStats`] for small, medium and large grasps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScaleStats {
    pub small: ClassStats,
    pub medium: ClassStats,
    pub large: ClassStats,
}

impl ScaleStats {
    pub fn get(&self, class: ScaleClass) -> &ClassStats {
        match class {
            ScaleClass::Small => &self.small,
            ScaleClass::Medium => &self.medium,
            ScaleClass::Large => &self.large,
        }
    }

    fn from_tallies(counts: [usize; 3], successes: [usize; 3]) -> Self {
        let stat = |i: usize| ClassStats {
            count: counts[i],
            successes: successes[i],
            success_rate: if counts[i] == 0 {
                0.0
            } else {
                successes[i] as f64 / counts[i] as f64
            },
        };
        Self {
            small: stat(0),
            medium: stat(1),
            large: stat(2),
        }
    }
}

/// Evaluation summary of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ap: f64,
    /// `(mu, AP_mu)` for every entry of [`MU_GRID`].
    pub ap_by_mu: Vec<(f64, f64)>,
    pub ap_small: f64,
    pub ap_medium: f64,
    pub ap_large: f64,
    pub stats: ScaleStats,
}

impl EvalReport {
    pub fn ap_by_scale(&self, class: ScaleClass) -> f64 {
        match class {
            ScaleClass::Small => self.ap_small,
            ScaleClass::Medium => self.ap_medium,
            ScaleClass::Large => self.ap_large,
        }
    }
}

fn validate_all(grasps: &[GraspPose], gm: &GripperModel) -> Result<()> {
    gm.validate()?;
    for (i, g) in grasps.iter().enumerate() {
        g.validate(gm).map_err(|e| invalid!("grasp {i}: {e}"))?;
    }
    Ok(())
}

/// Required cone angle of every grasp against its nearest object.
fn grasp_angles(grasps: &[GraspPose], index: &ObjectIndex, gm: &GripperModel) -> Result<Vec<Option<f64>>> {
    grasps
        .iter()
        .map(|g| match index.nearest(&g.translation) {
            Some(k) => required_angle(g, index.cloud(k), gm),
            None => Ok(None),
        })
        .collect()
}

/// AP per friction for the ranked survivors in `ranked` (indices into the
/// per-grasp arrays).
fn ap_curve(ranked: &[usize], angles: &[Option<f64>]) -> Vec<(f64, f64)> {
    MU_GRID
        .iter()
        .map(|&mu| {
            let results: Vec<bool> = ranked.iter().map(|&i| within_cone(angles[i], mu)).collect();
            (mu, ap_mu(&results))
        })
        .collect()
}

fn mean_ap(curve: &[(f64, f64)]) -> f64 {
    curve.iter().map(|(_, ap)| ap).sum::<f64>() / curve.len() as f64
}

/// Full scene evaluation.
///
/// Grasps are ranked ([`rank_order`]), colliding ones are dropped, each
/// survivor is judged against its nearest object, and AP is the mean of
/// `AP_mu` over [`MU_GRID`]. The per-class APs repeat this on the grasps
/// whose width falls in each [`ScaleClass`].
pub fn evaluate(grasps: &[GraspPose], scene: &PointCloud, objects: &SceneAssets, gm: &GripperModel) -> Result<EvalReport> {
    validate_all(grasps, gm)?;
    let index = ObjectIndex::new(objects)?;
    let collides = grasps
        .iter()
        .map(|g| collision_check(g, scene, gm))
        .collect::<Result<Vec<bool>>>()?;
    let angles = grasp_angles(grasps, &index, gm)?;
    let survivors: Vec<usize> = rank_order(grasps).into_iter().filter(|&i| !collides[i]).collect();

    let curve = ap_curve(&survivors, &angles);
    let ap = mean_ap(&curve);
    let class_ap = |class: ScaleClass| {
        let subset: Vec<usize> = survivors
            .iter()
            .copied()
            .filter(|&i| ScaleClass::of(grasps[i].width) == Some(class))
            .collect();
        mean_ap(&ap_curve(&subset, &angles))
    };
    Ok(EvalReport {
        ap,
        ap_by_mu: curve,
        ap_small: class_ap(ScaleClass::Small),
        ap_medium: class_ap(ScaleClass::Medium),
        ap_large: class_ap(ScaleClass::Large),
        stats: stats_with(grasps, &index, &angles),
    })
}

fn stats_with(grasps: &[GraspPose], index: &ObjectIndex, angles: &[Option<f64>]) -> ScaleStats {
    let mut per_object: Vec<Vec<usize>> = alloc::vec![Vec::new(); index.ids().len()];
    for i in rank_order(grasps) {
        if let Some(k) = index.nearest(&grasps[i].translation) {
            per_object[k].push(i);
        }
    }
    let mut counts = [0usize; 3];
    let mut successes = [0usize; 3];
    for ranked in &per_object {
        for &i in ranked.iter().take(STATS_TOP) {
            let Some(class) = ScaleClass::of(grasps[i].width) else {
                continue;
            };
            counts[class.index()] += 1;
            if within_cone(angles[i], STATS_MU) {
                successes[class.index()] += 1;
            }
        }
    }
    ScaleStats::from_tallies(counts, successes)
}

/// Per-class counts and success rates (at `mu = 0.8`) over each object's
/// ten best grasps.
pub fn per_scale_stats(grasps: &[GraspPose], objects: &SceneAssets, gm: &GripperModel) -> Result<ScaleStats> {
    validate_all(grasps, gm)?;
    let index = ObjectIndex::new(objects)?;
    let angles = grasp_angles(grasps, &index, gm)?;
    Ok(stats_with(grasps, &index, &angles))
}
