//! Straight-line reference implementations used as test oracles. Each one
//! follows the definition directly, with no acceleration structures.

#![allow(dead_code)]

use nalgebra::DVector;
use scalegrasp_core::geom::{GraspPose, GripperModel, Point3, RigidPose, Vec3};
use scalegrasp_core::mscg::{Affine, CylinderSpec, EncoderParams, FusionMode};

pub fn d2(a: &Point3, b: &Point3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Greedy maximin recomputing every min-distance from scratch at each step.
pub fn fps(points: &[Point3], m: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < m {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..points.len() {
            if chosen.contains(&j) {
                continue;
            }
            let md = chosen.iter().map(|&c| d2(&points[j], &points[c])).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| md > bd) {
                best = Some((md, j));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

/// Quotas: `m / K` each, one extra for the first `m % K` instances, capped at
/// instance size; the total shortfall is then handed out one point per pass
/// over the instances in id order.
pub fn quotas(sizes: &[usize], m: usize) -> Vec<usize> {
    let k = sizes.len();
    let mut q = vec![0usize; k];
    let mut shortfall = 0;
    for i in 0..k {
        let want = m / k + if i < m % k { 1 } else { 0 };
        q[i] = want.min(sizes[i]);
        shortfall += want - q[i];
    }
    while shortfall > 0 && (0..k).any(|i| q[i] < sizes[i]) {
        for i in 0..k {
            if shortfall > 0 && q[i] < sizes[i] {
                q[i] += 1;
                shortfall -= 1;
            }
        }
    }
    q
}

/// Local coordinates by explicit dot products with the frame's columns.
pub fn to_local(frame: &RigidPose, p: &Point3) -> [f64; 3] {
    let r = frame.rotation();
    let d = p - Point3::from(*frame.translation());
    [0, 1, 2].map(|c| r[(0, c)] * d.x + r[(1, c)] * d.y + r[(2, c)] * d.z)
}

/// Per-point cylinder inequalities, then the nearest-to-axis cap.
pub fn cylinder(points: &[Point3], frame: &RigidPose, spec: &CylinderSpec) -> Vec<usize> {
    let mut hits = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let [x, y, z] = to_local(frame, p);
        let rho2 = y * y + z * z;
        if spec.h_min <= x && x <= spec.h_max && rho2.sqrt() <= spec.radius {
            hits.push((rho2, i));
        }
    }
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    hits.truncate(spec.max_points);
    let mut out: Vec<usize> = hits.into_iter().map(|h| h.1).collect();
    out.sort();
    out
}

fn dense(a: &Affine, x: &[f64]) -> Vec<f64> {
    (0..a.out_dim())
        .map(|r| a.bias[r] + (0..a.in_dim()).map(|c| a.weight[(r, c)] * x[c]).sum::<f64>())
        .collect()
}

/// Per-point MLP then elementwise max, all with plain loops.
pub fn encode(group: &[Point3], params: &EncoderParams, s: usize) -> Option<Vec<f64>> {
    let mlp = &params.scale_mlps()[s];
    let mut pooled: Option<Vec<f64>> = None;
    for p in group {
        let mut x = vec![p.x, p.y, p.z];
        for (l, layer) in mlp.iter().enumerate() {
            x = dense(layer, &x);
            if l + 1 < mlp.len() {
                x.iter_mut().for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 });
            }
        }
        pooled = Some(match pooled {
            None => x,
            Some(acc) => acc.iter().zip(&x).map(|(a, b)| a.max(*b)).collect(),
        });
    }
    pooled
}

pub fn fuse(scale_feats: &[Vec<f64>], seed: &[f64], params: &EncoderParams) -> Vec<f64> {
    let g = dense(params.gate(), seed);
    let gated: Vec<f64> = g.iter().zip(seed).map(|(a, s)| s / (1.0 + (-a).exp())).collect();
    let mut input = Vec::new();
    match params.mode() {
        FusionMode::Concat => {
            for f in scale_feats {
                input.extend_from_slice(f);
            }
        }
        FusionMode::Sum => {
            let mut acc = vec![0.0; seed.len()];
            for f in scale_feats {
                acc.iter_mut().zip(f).for_each(|(a, b)| *a += b);
            }
            input.extend(acc);
        }
    }
    input.extend(gated);
    dense(params.fusion(), &input)
}

/// Three nearest seeds by full sort, inverse-distance weights.
pub fn interpolate(q: &Point3, positions: &[Point3], features: &[DVector<f64>]) -> Vec<f64> {
    let mut order: Vec<(f64, usize)> = positions.iter().enumerate().map(|(i, p)| (d2(q, p), i)).collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    order.truncate(3);
    let w: Vec<f64> = order.iter().map(|(d, _)| 1.0 / (d.sqrt() + 1e-8)).collect();
    let total: f64 = w.iter().sum();
    let mut out = vec![0.0; features[0].len()];
    for ((_, i), wi) in order.iter().zip(&w) {
        for (o, f) in out.iter_mut().zip(features[*i].iter()) {
            *o += wi / total * f;
        }
    }
    out
}

/// A gripper part as a world-frame oriented box: center, unit axes and half
/// extents.
pub struct Obb {
    pub center: Point3,
    pub axes: [Vec3; 3],
    pub half: [f64; 3],
}

/// The three gripper parts of a grasp as world-frame boxes: fingers span
/// `[depth - finger_depth, depth]` along the approach, sit outside the
/// opening `width`, and the palm spans the full outer width behind them.
pub fn gripper_obbs(g: &GraspPose, gm: &GripperModel) -> Vec<Obb> {
    let frame = scalegrasp_core::geom::frame_of_grasp(g).unwrap();
    let r = frame.rotation();
    let axes = [r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned()];
    let x_mid = g.depth - gm.finger_depth / 2.0;
    let y_finger = g.width / 2.0 + gm.finger_width / 2.0;
    let parts = [
        ([x_mid, -y_finger, 0.0], [gm.finger_depth / 2.0, gm.finger_width / 2.0, gm.finger_height / 2.0]),
        ([x_mid, y_finger, 0.0], [gm.finger_depth / 2.0, gm.finger_width / 2.0, gm.finger_height / 2.0]),
        (
            [g.depth - gm.finger_depth - gm.base_depth / 2.0, 0.0, 0.0],
            [gm.base_depth / 2.0, g.width / 2.0 + gm.finger_width, gm.finger_height / 2.0],
        ),
    ];
    parts
        .iter()
        .map(|(c, h)| Obb {
            center: g.translation + axes[0] * c[0] + axes[1] * c[1] + axes[2] * c[2],
            axes,
            half: *h,
        })
        .collect()
}

/// Point-in-any-box test with the given inward margin.
pub fn collides(g: &GraspPose, points: &[Point3], gm: &GripperModel, margin: f64) -> bool {
    let boxes = gripper_obbs(g, gm);
    points.iter().any(|p| {
        boxes.iter().any(|b| {
            let d = p - b.center;
            (0..3).all(|k| d.dot(&b.axes[k]).abs() < b.half[k] - margin)
        })
    })
}

/// AP over k = 1..50 with the shortfall counted as failures.
pub fn ap(results: &[bool]) -> f64 {
    (1..=50)
        .map(|k| results.iter().take(k).filter(|r| **r).count() as f64 / k as f64)
        .sum::<f64>()
        / 50.0
}

pub mod fixtures;
