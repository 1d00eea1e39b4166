//! Scenes shared by several test targets.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scalegrasp_core::geom::{gripper_frame, GraspPose, GripperModel, InstanceLabel, Point3, PointCloud, RigidPose, Vec3};
use scalegrasp_core::mscg::{EncoderParams, FusionMode};
use scalegrasp_core::ncm::SceneAssets;
use scalegrasp_core::sampling::SeedFeatureSet;
use scalegrasp_core::scenegen::{analytic_grasps, generate_scene, GraspGrid, PrimitiveKind, PrimitiveSpec};

pub fn at(x: f64, y: f64, z: f64) -> RigidPose {
    RigidPose::from_translation(Vec3::new(x, y, z))
}

/// One object per width class, far apart: a thin plate (small), a 5 cm cube
/// (medium) and an 8 cm cylinder (large).
pub fn one_per_class() -> Vec<PrimitiveSpec> {
    vec![
        PrimitiveSpec {
            kind: PrimitiveKind::Plate { length: 0.1, width: 0.06, thickness: 0.01 },
            density: 2e5,
            pose: RigidPose::from_axis_angle(Vec3::new(0.3, -0.2, 1.0), 0.4, Vec3::new(0.0, 0.0, 0.005)).unwrap(),
            instance: 0,
        },
        PrimitiveSpec {
            kind: PrimitiveKind::Box { size: [0.05; 3] },
            density: 2e5,
            pose: RigidPose::from_axis_angle(Vec3::z(), 0.9, Vec3::new(0.3, 0.0, 0.025)).unwrap(),
            instance: 1,
        },
        PrimitiveSpec {
            kind: PrimitiveKind::Cylinder { diameter: 0.08, height: 0.06 },
            density: 2e5,
            pose: at(0.0, 0.3, 0.03),
            instance: 2,
        },
    ]
}

pub const FINE_GRID: GraspGrid = GraspGrid { spacing: 0.005, angles: 30 };

/// Noise-free scene and every analytic grasp on it.
pub fn all_success_scene(seed: u64) -> (PointCloud, SceneAssets, Vec<GraspPose>) {
    let specs = one_per_class();
    let (scene, assets) = generate_scene(&specs, 0.0, 0.0, seed).unwrap();
    let gm = GripperModel::default();
    let grasps = specs
        .iter()
        .flat_map(|s| analytic_grasps(s, &gm, &FINE_GRID).unwrap().flatten())
        .collect();
    (scene, assets, grasps)
}

/// Object whose contact points sit on the inner faces of a grasp at the
/// origin (approach -z, closing along world x), with every normal tilted by
/// `tilt` radians away from the closing line. Returns the grasp and the object
/// in world coordinates.
pub fn tilted_contacts(width: f64, tilt: f64) -> (GraspPose, PointCloud) {
    let g = GraspPose {
        translation: Point3::origin(),
        approach: -Vec3::z(),
        angle: 0.0,
        width,
        depth: 0.02,
        score: 1.0,
    };
    let frame = scalegrasp_core::geom::frame_of_grasp(&g).unwrap();
    let mut pts = Vec::new();
    let mut normals = Vec::new();
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            for j in 0..5 {
                let local = Point3::new(-0.015 + 0.007 * i as f64, side * width / 2.0, -0.008 + 0.004 * j as f64);
                let n_local = Vec3::new(tilt.sin(), side * tilt.cos(), 0.0);
                pts.push(frame.transform_point(&local));
                normals.push(frame.transform_vector(&n_local).normalize());
            }
        }
    }
    (g, PointCloud::new(pts).unwrap().with_normals(normals).unwrap())
}

/// Random cloud; every other one is drawn from a coarse integer lattice so
/// that distance ties and duplicate points are common.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, lattice: bool) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            if lattice {
                Point3::new(
                    rng.random_range(0..4) as f64,
                    rng.random_range(0..4) as f64,
                    rng.random_range(0..3) as f64,
                )
            } else {
                Point3::new(rng.random(), rng.random(), rng.random())
            }
        })
        .collect()
}

pub fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn point(rng: &mut ChaCha8Rng, scale: f64) -> Point3 {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn random_frame(rng: &mut ChaCha8Rng, scale: f64) -> RigidPose {
    let t = point(rng, scale);
    gripper_frame(&t, &unit(rng), rng.random_range(-3.2..3.2)).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, scales: usize, channels: usize, mode: FusionMode) -> EncoderParams {
    let depth = rng.random_range(0..3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..6)).collect();
    EncoderParams::seeded(rng.random(), scales, &hidden, channels, mode).unwrap()
}

pub fn seed_set(rng: &mut ChaCha8Rng, n: usize, c: usize) -> SeedFeatureSet {
    let pos: Vec<Point3> = (0..n).map(|_| point(rng, 0.1)).collect();
    let feats = (0..n).map(|_| DVector::from_fn(c, |_, _| rng.random_range(-1.0..1.0))).collect();
    SeedFeatureSet::new(pos, feats).unwrap()
}

/// A clean scene and a noisy capture of it: whole regions are occluded (a
/// random half-space per instance), survivors are jittered, and a few
/// points change label.
pub fn occlusion_fixture(rng: &mut ChaCha8Rng) -> (PointCloud, PointCloud) {
    let k = rng.random_range(1..5u32);
    let n = rng.random_range(20..300);
    let pts: Vec<Point3> = (0..n).map(|_| Point3::new(rng.random::<f64>() * 0.1, rng.random::<f64>() * 0.1, rng.random::<f64>() * 0.1)).collect();
    let labels: Vec<InstanceLabel> = (0..n).map(|_| {
        let r = rng.random_range(0..=k);
        (r < k).then_some(r)
    }).collect();
    let clean = labelled(pts.clone(), labels.clone());
    let cut: Vec<(Vec3, f64)> = (0..=k).map(|_| (Vec3::new(rng.random(), rng.random(), rng.random()), rng.random::<f64>() * 0.15)).collect();
    let mut npts = Vec::new();
    let mut nlab = Vec::new();
    for (p, l) in pts.iter().zip(&labels) {
        let (dir, off) = cut[l.map_or(k as usize, |v| v as usize)];
        if p.coords.dot(&dir) < off {
            continue;
        }
        let jitter = Vec3::new(rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004));
        npts.push(p + jitter);
        nlab.push(if rng.random_bool(0.05) { Some(k + 7) } else { *l });
    }
    (clean, labelled(npts, nlab))
}

pub fn labelled(points: Vec<Point3>, labels: Vec<InstanceLabel>) -> PointCloud {
    PointCloud::new(points).unwrap().with_labels(labels).unwrap()
}
