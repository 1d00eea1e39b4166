//! Deterministic synthetic scenes made of boxes, cylinders and thin plates,
//! with analytic normals and analytically known antipodal grasps.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::geom::{angle_for_closing, GraspPose, GripperModel, Point3, PointCloud, RigidPose, Vec3};
use crate::ncm::{Asset, SceneAssets};
use crate::scale_balance::GraspLabelSet;

/// Shape and size of a primitive, in its own frame (centered at the origin;
/// cylinder axis along z; plate thickness along z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveKind {
    Box { size: [f64; 3] },
    Cylinder { diameter: f64, height: f64 },
    Plate { length: f64, width: f64, thickness: f64 },
}

impl PrimitiveKind {
    fn box_size(&self) -> Option<[f64; 3]> {
        match *self {
            Self::Box { size } => Some(size),
            Self::Plate {
                length,
                width,
                thickness,
            } => Some([length, width, thickness]),
            Self::Cylinder { .. } => None,
        }
    }

    fn dims(&self) -> Vec<f64> {
        match *self {
            Self::Box { size } => size.to_vec(),
            Self::Cylinder { diameter, height } => vec![diameter, height],
            Self::Plate {
                length,
                width,
                thickness,
            } => vec![length, width, thickness],
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Self::Cylinder { diameter, height } => {
                let r = diameter / 2.0;
                PI * diameter * height + 2.0 * PI * r * r
            }
            _ => {
                let [a, b, c] = self.box_size().unwrap();
                2.0 * (a * b + b * c + a * c)
            }
        }
    }
}

/// A primitive object placed in a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    /// Points per square meter.
    pub density: f64,
    pub pose: RigidPose,
    pub instance: u32,
}

impl PrimitiveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind.dims().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(invalid!("instance {}: dimensions must be positive", self.instance));
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(invalid!("instance {}: density must be positive", self.instance));
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        libm::round(self.density * self.kind.surface_area()) as usize
    }
}

/// Splits `total` over weights proportionally, largest remainder first.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// `n` stratified samples of the unit square: a jittered grid with roughly
/// square cells for aspect `u_len / v_len`, `n` distinct cells chosen at random.
fn stratified_unit(rng: &mut ChaCha8Rng, n: usize, u_len: f64, v_len: f64) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let cols = (libm::round(libm::sqrt(n as f64 * u_len / v_len)) as usize).clamp(1, n);
    let rows = n.div_ceil(cols);
    let mut cells: Vec<usize> = index::sample(rng, rows * cols, n).into_vec();
    cells.sort_unstable();
    cells
        .into_iter()
        .map(|cell| {
            let (r, c) = (cell / cols, cell % cols);
            let u = (c as f64 + rng.random::<f64>()) / cols as f64;
            let v = (r as f64 + rng.random::<f64>()) / rows as f64;
            (u, v)
        })
        .collect()
}

/// Surface samples with exact normals in the primitive's own frame.
pub fn sample_primitive_local(kind: &PrimitiveKind, count: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    match *kind {
        PrimitiveKind::Cylinder { diameter, height } => {
            let r = diameter / 2.0;
            let side = PI * diameter * height;
            let cap = PI * r * r;
            let counts = apportion(count, &[side, cap, cap]);
            for (u, v) in stratified_unit(&mut rng, counts[0], PI * diameter, height) {
                let (s, c) = libm::sincos(2.0 * PI * u);
                points.push(Point3::new(r * c, r * s, (v - 0.5) * height));
                normals.push(Vec3::new(c, s, 0.0));
            }
            for (f, sign) in [(1, 1.0), (2, -1.0)] {
                for (u, v) in stratified_unit(&mut rng, counts[f], 1.0, 1.0) {
                    let rho = r * libm::sqrt(u);
                    let (s, c) = libm::sincos(2.0 * PI * v);
                    points.push(Point3::new(rho * c, rho * s, sign * height / 2.0));
                    normals.push(Vec3::new(0.0, 0.0, sign));
                }
            }
        }
        _ => {
            let size = kind.box_size().unwrap();
            let mut faces = Vec::with_capacity(6);
            for axis in 0..3 {
                let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
                for sign in [1.0, -1.0] {
                    faces.push((axis, ua, va, sign, size[ua] * size[va]));
                }
            }
            let areas: Vec<f64> = faces.iter().map(|f| f.4).collect();
            let counts = apportion(count, &areas);
            for (&(axis, ua, va, sign, _), &n) in faces.iter().zip(&counts) {
                for (u, v) in stratified_unit(&mut rng, n, size[ua], size[va]) {
                    let mut p = Point3::origin();
                    p[axis] = sign * size[axis] / 2.0;
                    p[ua] = (u - 0.5) * size[ua];
                    p[va] = (v - 0.5) * size[va];
                    let mut n = Vec3::zeros();
                    n[axis] = sign;
                    points.push(p);
                    normals.push(n);
                }
            }
        }
    }
    PointCloud::from_parts_unchecked(points, Some(normals), None)
}

/// `round(density * area)` stratified surface samples of the primitive in
/// scene coordinates, labelled with its instance id.
pub fn sample_primitive(spec: &PrimitiveSpec, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    let local = sample_primitive_local(&spec.kind, spec.point_count(), seed);
    Ok(crate::geom::transform_cloud(&local, &spec.pose).with_uniform_label(Some(spec.instance)))
}

/// Builds the clean assets and a noisy capture of a scene.
///
/// Each instance loses `round(dropout * n)` of its points, and survivors are
/// displaced by isotropic Gaussian noise of standard deviation `noise_sigma`.
/// The noisy cloud carries labels but no normals.
pub fn generate_scene(
    specs: &[PrimitiveSpec],
    noise_sigma: f64,
    dropout: f64,
    seed: u64,
) -> Result<(PointCloud, SceneAssets)> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(invalid!("noise sigma must be non-negative, got {noise_sigma}"));
    }
    if !(0.0..=1.0).contains(&dropout) {
        return Err(invalid!("dropout {dropout} outside [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assets = Vec::with_capacity(specs.len());
    let mut parts = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let model = sample_primitive_local(&spec.kind, spec.point_count(), rng.next_u64());
        let asset = Asset {
            instance: spec.instance,
            model,
            pose: spec.pose,
        };
        let world = asset.world_cloud();
        let n = world.len();
        let removed = libm::round(dropout * n as f64) as usize;
        let mut keep: Vec<usize> = index::sample(&mut rng, n, n - removed).into_vec();
        keep.sort_unstable();
        let points = keep
            .iter()
            .map(|&i| {
                let p = world.points()[i];
                if noise_sigma == 0.0 {
                    return p;
                }
                let d = Vec3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                p + d * noise_sigma
            })
            .collect();
        parts.push(PointCloud::from_parts_unchecked(
            points,
            None,
            Some(vec![Some(spec.instance); keep.len()]),
        ));
        assets.push(asset);
    }
    Ok((PointCloud::concat(&parts), SceneAssets::new(assets)?))
}

/// Density of analytic grasps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspGrid {
    /// Spacing of grasp centers along a box edge.
    pub spacing: f64,
    /// Closing directions per cylinder cap.
    pub angles: usize,
}

impl Default for GraspGrid {
    fn default() -> Self {
        Self {
            spacing: 0.01,
            angles: 12,
        }
    }
}

/// Antipodal grasps known to succeed on a primitive.
///
/// Boxes close across every side no wider than the gripper, approaching from
/// both faces of each other axis with centers spaced along the remaining one.
/// Plates close only across their thickness. Cylinders are grasped from either
/// cap, closing along a diameter. Fingertips reach `min(finger_depth, extent) / 2`
/// past the entry face, so the palm always stays clear of the object.
pub fn analytic_grasps(spec: &PrimitiveSpec, gm: &GripperModel, grid: &GraspGrid) -> Result<GraspLabelSet> {
    spec.validate()?;
    if !(grid.spacing > 0.0) || grid.angles == 0 {
        return Err(invalid!("grasp grid needs positive spacing and at least one angle"));
    }
    let pose = &spec.pose;
    let mut per_point: Vec<Vec<GraspPose>> = Vec::new();
    let make = |local_center: Vec3, local_approach: Vec3, local_closing: Vec3, width: f64, depth: f64, score: f64| {
        let approach = pose.transform_vector(&local_approach);
        let closing = pose.transform_vector(&local_closing);
        GraspPose {
            translation: pose.transform_point(&Point3::from(local_center)),
            approach,
            angle: angle_for_closing(&approach, &closing),
            width,
            depth,
            score,
        }
    };
    match spec.kind {
        PrimitiveKind::Cylinder { diameter, height } => {
            if diameter > gm.w_max {
                return GraspLabelSet::new(per_point, gm);
            }
            let depth = gm.finger_depth.min(height) / 2.0;
            for side in [1.0, -1.0] {
                let center = Vec3::new(0.0, 0.0, side * height / 2.0);
                let grasps = (0..grid.angles)
                    .map(|t| {
                        let phi = PI * t as f64 / grid.angles as f64;
                        let (s, c) = libm::sincos(phi);
                        make(center, Vec3::new(0.0, 0.0, -side), Vec3::new(c, s, 0.0), diameter, depth, 1.0)
                    })
                    .collect();
                per_point.push(grasps);
            }
        }
        kind => {
            let size = kind.box_size().unwrap();
            let closable: Vec<usize> = match kind {
                PrimitiveKind::Plate { .. } => vec![2],
                _ => (0..3).collect(),
            };
            for close in closable.into_iter().filter(|&i| size[i] <= gm.w_max) {
                for along in (0..3).filter(|&j| j != close) {
                    let third = 3 - close - along;
                    let depth = gm.finger_depth.min(size[along]) / 2.0;
                    let n = ((size[third] / grid.spacing) as usize).max(1);
                    for side in [1.0, -1.0] {
                        for t in 0..n {
                            let offset = (-0.5 + (t as f64 + 0.5) / n as f64) * size[third];
                            let mut center = Vec3::zeros();
                            center[along] = side * size[along] / 2.0;
                            center[third] = offset;
                            let mut approach = Vec3::zeros();
                            approach[along] = -side;
                            let mut closing = Vec3::zeros();
                            closing[close] = 1.0;
                            let score = 1.0 - libm::fabs(offset) / size[third];
                            per_point.push(vec![make(center, approach, closing, size[close], depth, score)]);
                        }
                    }
                }
            }
        }
    }
    GraspLabelSet::new(per_point, gm)
}
