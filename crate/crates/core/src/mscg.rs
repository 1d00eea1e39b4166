//! Multi-scale cylinder grouping.
//!
//! Around each candidate, points are cropped by concentric cylinders aligned
//! with the approach axis. Each scale is encoded by its own point-wise MLP
//! followed by a coordinate-wise max, and the scale features are fused with
//! the candidate's seed feature, which first passes through a sigmoid gate
//! conditioned on itself.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::geom::{gripper_frame, GripperModel, Point3, PointCloud, RigidPose, Vec3};
use crate::sampling::{FeatureInterpolator, SeedFeatureSet};

/// Input dimension of every scale MLP: gripper-frame xyz.
pub const POINT_DIM: usize = 3;

/// A cylinder around the approach axis, in gripper-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderSpec {
    pub radius: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
}

impl CylinderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(invalid!("cylinder radius must be positive, got {}", self.radius));
        }
        if !(self.h_min < self.h_max) {
            return Err(invalid!(
                "cylinder height range [{}, {}] is empty",
                self.h_min,
                self.h_max
            ));
        }
        if self.max_points == 0 {
            return Err(invalid!("cylinder max_points must be at least 1"));
        }
        Ok(())
    }
}

/// Indices of the points inside the cylinder, ascending. When more than
/// `max_points` qualify, the ones nearest to the axis are kept (ties to the
/// lower index).
pub fn cylinder_query(cloud: &PointCloud, frame: &RigidPose, spec: &CylinderSpec) -> Vec<usize> {
    let r2 = spec.radius * spec.radius;
    let mut hits: Vec<(f64, usize)> = cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let local = frame.inverse_transform_point(p);
            let radial2 = local.y * local.y + local.z * local.z;
            (local.x >= spec.h_min && local.x <= spec.h_max && radial2 <= r2).then_some((radial2, i))
        })
        .collect();
    if hits.len() > spec.max_points {
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.truncate(spec.max_points);
    }
    let mut idx: Vec<usize> = hits.into_iter().map(|(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

/// Radii `w_max * i / s` for `i = 1..=s`.
pub fn make_radii(w_max: f64, s: usize) -> Result<Vec<f64>> {
    if s == 0 || !(w_max > 0.0) {
        return Err(invalid!("need s >= 1 and w_max > 0 (got s = {s}, w_max = {w_max})"));
    }
    Ok((1..=s).map(|i| w_max * i as f64 / s as f64).collect())
}

/// Dense layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Affine {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weight * x + &self.bias
    }

    fn seeded(rng: &mut ChaCha8Rng, out_dim: usize, in_dim: usize) -> Self {
        let bound = 1.0 / libm::sqrt(in_dim as f64);
        let weight = DMatrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-bound..bound));
        let bias = DVector::from_fn(out_dim, |_, _| rng.random_range(-bound..bound));
        Self { weight, bias }
    }
}

/// How scale features enter the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// `[f_1 | ... | f_s | gated seed]`, fusion input `(s + 1) C`.
    #[default]
    Concat,
    /// `[f_1 + ... + f_s | gated seed]`, fusion input `2 C`.
    Sum,
}

/// Weights of the scale encoders, the gate and the fusion layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    scale_mlps: Vec<Vec<Affine>>,
    gate: Affine,
    fusion: Affine,
    mode: FusionMode,
}

impl EncoderParams {
    /// Validates the dimension chain: every scale MLP maps 3 -> C, the gate is
    /// C x C and the fusion layer maps the fusion input to C.
    pub fn new(scale_mlps: Vec<Vec<Affine>>, gate: Affine, fusion: Affine, mode: FusionMode) -> Result<Self> {
        if scale_mlps.is_empty() {
            return Err(invalid!("at least one scale encoder is required"));
        }
        let channels = gate.out_dim();
        for (s, mlp) in scale_mlps.iter().enumerate() {
            let Some(first) = mlp.first() else {
                return Err(invalid!("scale {s} encoder has no layers"));
            };
            let mut dim = first.in_dim();
            if dim != POINT_DIM {
                return Err(Error::DimensionMismatch(alloc::format!(
                    "scale {s} layer 0 expects input {dim}, points are {POINT_DIM}-d"
                )));
            }
            for (l, layer) in mlp.iter().enumerate() {
                if layer.in_dim() != dim || layer.bias.len() != layer.out_dim() {
                    return Err(Error::DimensionMismatch(alloc::format!(
                        "scale {s} layer {l} expects input {}, previous output is {dim}",
                        layer.in_dim()
                    )));
                }
                dim = layer.out_dim();
            }
            if dim != channels {
                return Err(Error::DimensionMismatch(alloc::format!(
                    "scale {s} encoder outputs {dim} channels, gate has {channels}"
                )));
            }
        }
        if gate.in_dim() != channels || gate.bias.len() != channels {
            return Err(Error::DimensionMismatch(alloc::format!(
                "gate must be {channels}x{channels}, got {}x{}",
                gate.out_dim(),
                gate.in_dim()
            )));
        }
        let fusion_in = fusion_input_dim(mode, scale_mlps.len(), channels);
        if fusion.in_dim() != fusion_in || fusion.out_dim() != channels || fusion.bias.len() != channels {
            return Err(Error::DimensionMismatch(alloc::format!(
                "fusion must be {channels}x{fusion_in}, got {}x{}",
                fusion.out_dim(),
                fusion.in_dim()
            )));
        }
        Ok(Self {
            scale_mlps,
            gate,
            fusion,
            mode,
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization from a seeded ChaCha8 stream.
    /// `hidden` lists the hidden widths shared by every scale encoder.
    pub fn seeded(seed: u64, scales: usize, hidden: &[usize], channels: usize, mode: FusionMode) -> Result<Self> {
        if scales == 0 || channels == 0 || hidden.contains(&0) {
            return Err(invalid!("scales, channels and hidden widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![POINT_DIM];
        dims.extend_from_slice(hidden);
        dims.push(channels);
        let scale_mlps = (0..scales)
            .map(|_| {
                dims.windows(2)
                    .map(|w| Affine::seeded(&mut rng, w[1], w[0]))
                    .collect()
            })
            .collect();
        let gate = Affine::seeded(&mut rng, channels, channels);
        let fusion = Affine::seeded(&mut rng, channels, fusion_input_dim(mode, scales, channels));
        Self::new(scale_mlps, gate, fusion, mode)
    }

    pub fn num_scales(&self) -> usize {
        self.scale_mlps.len()
    }

    pub fn channels(&self) -> usize {
        self.gate.out_dim()
    }

    pub fn mode(&self) -> FusionMode {
        self.mode
    }

    pub fn scale_mlps(&self) -> &[Vec<Affine>] {
        &self.scale_mlps
    }

    pub fn gate(&self) -> &Affine {
        &self.gate
    }

    pub fn fusion(&self) -> &Affine {
        &self.fusion
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let z = |a: &Affine| Affine::zeros(a.out_dim(), a.in_dim());
        Self {
            scale_mlps: self.scale_mlps.iter().map(|m| m.iter().map(z).collect()).collect(),
            gate: z(&self.gate),
            fusion: z(&self.fusion),
            mode: self.mode,
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Affine> {
        self.scale_mlps.iter().flatten().chain([&self.gate, &self.fusion])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Affine> {
        self.scale_mlps
            .iter_mut()
            .flatten()
            .chain([&mut self.gate, &mut self.fusion])
    }

    /// Every parameter in a fixed order (layers as stored, weights
    /// column-major, then biases).
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers()
            .flat_map(|a| a.weight.iter().chain(a.bias.iter()).copied())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|a| a.weight.len() + a.bias.len()).sum()
    }

    /// Copy of `self` with parameters replaced from [`Self::to_flat`] order.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut out = self.clone();
        let mut it = flat.iter();
        for a in out.layers_mut() {
            for v in a.weight.iter_mut().chain(a.bias.iter_mut()) {
                *v = *it.next().unwrap();
            }
        }
        Ok(out)
    }
}

fn fusion_input_dim(mode: FusionMode, scales: usize, channels: usize) -> usize {
    match mode {
        FusionMode::Concat => (scales + 1) * channels,
        FusionMode::Sum => 2 * channels,
    }
}

fn relu_inplace(v: &mut DVector<f64>) {
    v.apply(|x| *x = x.max(0.0));
}

/// Output of [`encode_group`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFeature {
    pub feature: DVector<f64>,
    /// The group had no points; `feature` is zero.
    pub empty: bool,
}

fn point_mlp(mlp: &[Affine], p: &Point3) -> DVector<f64> {
    let mut x = DVector::from_column_slice(p.coords.as_slice());
    let last = mlp.len() - 1;
    for (l, layer) in mlp.iter().enumerate() {
        x = layer.apply(&x);
        if l < last {
            relu_inplace(&mut x);
        }
    }
    x
}

/// Encodes one cylinder group: the scale's MLP on every point (rectifier
/// between layers, none after the last), then a coordinate-wise max.
pub fn encode_group(group: &[Point3], params: &EncoderParams, scale_index: usize) -> Result<GroupFeature> {
    let mlp = params
        .scale_mlps
        .get(scale_index)
        .ok_or_else(|| invalid!("scale index {scale_index} out of range"))?;
    let mut pooled: Option<DVector<f64>> = None;
    for p in group {
        let f = point_mlp(mlp, p);
        pooled = Some(match pooled {
            None => f,
            Some(acc) => acc.zip_map(&f, f64::max),
        });
    }
    Ok(match pooled {
        Some(feature) => GroupFeature { feature, empty: false },
        None => GroupFeature {
            feature: DVector::zeros(params.channels()),
            empty: true,
        },
    })
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Gate activations `logistic(W_g seed + b_g)`.
pub fn gate_activations(seed_feature: &DVector<f64>, params: &EncoderParams) -> Result<DVector<f64>> {
    if seed_feature.len() != params.channels() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "seed feature has {} channels, expected {}",
            seed_feature.len(),
            params.channels()
        )));
    }
    Ok(params.gate.apply(seed_feature).map(logistic))
}

fn fusion_input(scale_features: &[DVector<f64>], gated: &DVector<f64>, mode: FusionMode) -> DVector<f64> {
    let c = gated.len();
    match mode {
        FusionMode::Concat => {
            let mut x = DVector::zeros((scale_features.len() + 1) * c);
            for (i, f) in scale_features.iter().chain([gated]).enumerate() {
                x.rows_mut(i * c, c).copy_from(f);
            }
            x
        }
        FusionMode::Sum => {
            let mut x = DVector::zeros(2 * c);
            for f in scale_features {
                let mut head = x.rows_mut(0, c);
                head += f;
            }
            x.rows_mut(c, c).copy_from(gated);
            x
        }
    }
}

/// Fuses per-scale features with the gated seed feature.
pub fn gated_fusion(
    scale_features: &[DVector<f64>],
    seed_feature: &DVector<f64>,
    params: &EncoderParams,
) -> Result<DVector<f64>> {
    let c = params.channels();
    if scale_features.len() != params.num_scales() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} scale features for {} scales",
            scale_features.len(),
            params.num_scales()
        )));
    }
    if let Some(f) = scale_features.iter().find(|f| f.len() != c) {
        return Err(Error::DimensionMismatch(alloc::format!(
            "scale feature has {} channels, expected {c}",
            f.len()
        )));
    }
    let gate = gate_activations(seed_feature, params)?;
    let gated = gate.component_mul(seed_feature);
    Ok(params.fusion.apply(&fusion_input(scale_features, &gated, params.mode)))
}

/// A grasp candidate: position and gripper axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub position: Point3,
    pub approach: Vec3,
    pub angle: f64,
}

impl Candidate {
    pub fn frame(&self) -> Result<RigidPose> {
        gripper_frame(&self.position, &self.approach, self.angle)
    }
}

/// Grouping configuration shared by all candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MscgConfig {
    pub w_max: f64,
    pub scales: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
}

impl MscgConfig {
    /// Four scales up to the gripper opening, height range ±finger depth.
    pub fn for_gripper(gm: &GripperModel) -> Self {
        Self {
            w_max: gm.w_max,
            scales: 4,
            h_min: -gm.finger_depth,
            h_max: gm.finger_depth,
            max_points: 64,
        }
    }

    pub fn cylinders(&self) -> Result<Vec<CylinderSpec>> {
        let specs: Vec<CylinderSpec> = make_radii(self.w_max, self.scales)?
            .into_iter()
            .map(|radius| CylinderSpec {
                radius,
                h_min: self.h_min,
                h_max: self.h_max,
                max_points: self.max_points,
            })
            .collect();
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

/// Fused feature of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFeature {
    pub feature: DVector<f64>,
    /// Every cylinder was empty; `feature` is zero.
    pub all_empty: bool,
}

/// Gripper-frame coordinates of every group around one candidate.
pub fn candidate_groups(
    cloud: &PointCloud,
    frame: &RigidPose,
    cylinders: &[CylinderSpec],
) -> Vec<Vec<Point3>> {
    cylinders
        .iter()
        .map(|spec| {
            cylinder_query(cloud, frame, spec)
                .into_iter()
                .map(|i| frame.inverse_transform_point(&cloud.points()[i]))
                .collect()
        })
        .collect()
}

/// Multi-scale cylinder features for every candidate. A candidate's seed
/// feature is the seed at its exact position when one exists, otherwise the
/// three-neighbor interpolation.
pub fn mscg_features(
    cloud: &PointCloud,
    candidates: &[Candidate],
    seeds: &SeedFeatureSet,
    params: &EncoderParams,
    config: &MscgConfig,
) -> Result<Vec<CandidateFeature>> {
    if config.scales != params.num_scales() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "config has {} scales, encoder has {}",
            config.scales,
            params.num_scales()
        )));
    }
    if seeds.dim() != params.channels() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "seed features have {} channels, encoder has {}",
            seeds.dim(),
            params.channels()
        )));
    }
    let cylinders = config.cylinders()?;
    let interp = FeatureInterpolator::new(seeds)?;
    candidates
        .iter()
        .map(|cand| {
            let frame = cand.frame()?;
            let groups = candidate_groups(cloud, &frame, &cylinders);
            let encoded = groups
                .iter()
                .enumerate()
                .map(|(s, g)| encode_group(g, params, s))
                .collect::<Result<Vec<_>>>()?;
            if encoded.iter().all(|e| e.empty) {
                return Ok(CandidateFeature {
                    feature: DVector::zeros(params.channels()),
                    all_empty: true,
                });
            }
            let feats: Vec<DVector<f64>> = encoded.into_iter().map(|e| e.feature).collect();
            let seed = interp.lookup(&cand.position);
            Ok(CandidateFeature {
                feature: gated_fusion(&feats, &seed, params)?,
                all_empty: false,
            })
        })
        .collect()
}

/// Fused output for fixed groups together with the gradient of
/// `upstream · fused` with respect to every parameter.
///
/// Max-pool routes gradient to the first point attaining each maximum; the
/// rectifier's derivative at zero is taken as zero.
pub fn fused_with_gradient(
    groups: &[Vec<Point3>],
    seed_feature: &DVector<f64>,
    params: &EncoderParams,
    upstream: &DVector<f64>,
) -> Result<(DVector<f64>, EncoderParams)> {
    let c = params.channels();
    if groups.len() != params.num_scales() || upstream.len() != c {
        return Err(Error::DimensionMismatch(alloc::format!(
            "expected {} groups and a {c}-d upstream vector",
            params.num_scales()
        )));
    }
    let mut grad = params.zeros_like();

    // Forward through each scale, keeping per-point activations.
    struct Trace {
        // inputs[l] is the input of layer l; pre[l] its pre-activation.
        inputs: Vec<DVector<f64>>,
        pre: Vec<DVector<f64>>,
    }
    let mut traces: Vec<Vec<Trace>> = Vec::with_capacity(groups.len());
    let mut feats: Vec<DVector<f64>> = Vec::with_capacity(groups.len());
    let mut argmax: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
    for (s, group) in groups.iter().enumerate() {
        let mlp = &params.scale_mlps[s];
        let last = mlp.len() - 1;
        let mut per_point = Vec::with_capacity(group.len());
        for p in group {
            let mut x = DVector::from_column_slice(p.coords.as_slice());
            let mut inputs = Vec::with_capacity(mlp.len());
            let mut pre = Vec::with_capacity(mlp.len());
            for (l, layer) in mlp.iter().enumerate() {
                let z = layer.apply(&x);
                inputs.push(x);
                x = z.clone();
                if l < last {
                    relu_inplace(&mut x);
                }
                pre.push(z);
            }
            per_point.push(Trace { inputs, pre });
        }
        let mut feat = DVector::zeros(c);
        let mut arg = vec![usize::MAX; c];
        for (j, t) in per_point.iter().enumerate() {
            let out = &t.pre[last];
            for k in 0..c {
                if arg[k] == usize::MAX || out[k] > feat[k] {
                    feat[k] = out[k];
                    arg[k] = j;
                }
            }
        }
        traces.push(per_point);
        feats.push(feat);
        argmax.push(arg);
    }
    let gate_pre = params.gate.apply(seed_feature);
    let gate = gate_pre.map(logistic);
    let gated = gate.component_mul(seed_feature);
    let x = fusion_input(&feats, &gated, params.mode);
    let fused = params.fusion.apply(&x);

    // Backward.
    grad.fusion.weight = upstream * x.transpose();
    grad.fusion.bias = upstream.clone();
    let dx = params.fusion.weight.tr_mul(upstream);
    let s_count = groups.len();
    let gated_offset = match params.mode {
        FusionMode::Concat => s_count * c,
        FusionMode::Sum => c,
    };
    let d_gated = dx.rows(gated_offset, c).into_owned();
    let d_gate_pre = DVector::from_fn(c, |k, _| d_gated[k] * seed_feature[k] * gate[k] * (1.0 - gate[k]));
    grad.gate.weight = &d_gate_pre * seed_feature.transpose();
    grad.gate.bias = d_gate_pre;

    for s in 0..s_count {
        if groups[s].is_empty() {
            continue;
        }
        let d_feat = match params.mode {
            FusionMode::Concat => dx.rows(s * c, c).into_owned(),
            FusionMode::Sum => dx.rows(0, c).into_owned(),
        };
        let mlp = &params.scale_mlps[s];
        let last = mlp.len() - 1;
        for (j, t) in traces[s].iter().enumerate() {
            let mut delta = DVector::from_fn(c, |k, _| if argmax[s][k] == j { d_feat[k] } else { 0.0 });
            if delta.iter().all(|v| *v == 0.0) {
                continue;
            }
            for l in (0..=last).rev() {
                if l < last {
                    delta.zip_apply(&t.pre[l], |d, z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    });
                }
                let g = &mut grad.scale_mlps[s][l];
                g.weight += &delta * t.inputs[l].transpose();
                g.bias += &delta;
                if l > 0 {
                    delta = mlp[l].weight.tr_mul(&delta);
                }
            }
        }
    }
    Ok((fused, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64, scales: usize, mode: FusionMode) -> EncoderParams {
        EncoderParams::seeded(seed, scales, &[8], 6, mode).unwrap()
    }

    fn z_axis_frame() -> RigidPose {
        // approach along world z through the origin
        gripper_frame(&Point3::origin(), &Vec3::z(), 0.0).unwrap()
    }

    #[test]
    fn cylinder_inequalities() {
        let c = PointCloud::new(vec![
            Point3::new(0.4, 0.0, 0.0),
            Point3::new(0.6, 0.0, 0.0),
            Point3::new(0.0, 0.0, 2.0),
        ])
        .unwrap();
        let spec = CylinderSpec {
            radius: 0.5,
            h_min: -1.0,
            h_max: 1.0,
            max_points: 10,
        };
        assert_eq!(cylinder_query(&c, &z_axis_frame(), &spec), vec![0]);
        let huge = CylinderSpec {
            radius: 1e9,
            h_min: -1e9,
            h_max: 1e9,
            max_points: 10,
        };
        assert_eq!(cylinder_query(&c, &z_axis_frame(), &huge), vec![0, 1, 2]);
    }

    #[test]
    fn cap_keeps_points_nearest_the_axis() {
        let c = PointCloud::new(vec![
            Point3::new(0.3, 0.0, 0.0),
            Point3::new(0.1, 0.0, 0.0),
            Point3::new(0.2, 0.0, 0.0),
            Point3::new(0.0, 0.1, 0.0),
        ])
        .unwrap();
        let spec = CylinderSpec {
            radius: 1.0,
            h_min: -1.0,
            h_max: 1.0,
            max_points: 2,
        };
        assert_eq!(cylinder_query(&c, &z_axis_frame(), &spec), vec![1, 3]);
    }

    #[test]
    fn radii() {
        let r = make_radii(0.10, 4).unwrap();
        for (got, want) in r.iter().zip([0.025, 0.050, 0.075, 0.100]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(make_radii(0.1, 1).unwrap(), vec![0.1]);
        assert!(make_radii(0.1, 0).is_err());
    }

    #[test]
    fn identity_layer_lifts_point() {
        let mut w = DMatrix::zeros(5, 3);
        for i in 0..3 {
            w[(i, i)] = 1.0;
        }
        let c = 5;
        let p = EncoderParams::new(
            vec![vec![Affine::new(w, DVector::zeros(5)).unwrap()]],
            Affine::zeros(c, c),
            Affine::zeros(c, 2 * c),
            FusionMode::Concat,
        )
        .unwrap();
        let out = encode_group(&[Point3::new(0.1, -0.2, 0.3)], &p, 0).unwrap();
        assert_eq!(out.feature.as_slice(), &[0.1, -0.2, 0.3, 0.0, 0.0]);
        assert!(!out.empty);
        let empty = encode_group(&[], &p, 0).unwrap();
        assert!(empty.empty);
        assert_eq!(empty.feature, DVector::zeros(5));
        assert!(encode_group(&[], &p, 1).is_err());
    }

    #[test]
    fn dimension_chain_is_validated() {
        let good = params(1, 2, FusionMode::Concat);
        let mut mlps = good.scale_mlps().to_vec();
        mlps[1][0] = Affine::zeros(8, 4);
        assert!(EncoderParams::new(mlps, good.gate().clone(), good.fusion().clone(), FusionMode::Concat).is_err());
        assert!(EncoderParams::new(
            good.scale_mlps().to_vec(),
            good.gate().clone(),
            good.fusion().clone(),
            FusionMode::Sum
        )
        .is_err());
    }

    #[test]
    fn zero_gate_halves_seed() {
        let mut p = params(2, 1, FusionMode::Concat);
        p.gate = Affine::zeros(6, 6);
        let seed = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        let g = gate_activations(&seed, &p).unwrap();
        assert!(g.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn saturated_gate_ignores_seed() {
        let mut p = params(3, 2, FusionMode::Concat);
        p.gate.bias = DVector::from_element(6, -1e6);
        let feats = vec![DVector::from_element(6, 0.3), DVector::from_element(6, -0.1)];
        let a = gated_fusion(&feats, &DVector::from_element(6, 5.0), &p).unwrap();
        let b = gated_fusion(&feats, &DVector::from_element(6, -7.0), &p).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn sum_mode_adds_scale_features() {
        let p = params(4, 3, FusionMode::Sum);
        let feats = vec![
            DVector::from_element(6, 1.0),
            DVector::from_element(6, 2.0),
            DVector::from_element(6, 3.0),
        ];
        let seed = DVector::from_element(6, 0.5);
        let out = gated_fusion(&feats, &seed, &p).unwrap();
        let gated = gate_activations(&seed, &p).unwrap().component_mul(&seed);
        let mut x = DVector::zeros(12);
        x.rows_mut(0, 6).fill(6.0);
        x.rows_mut(6, 6).copy_from(&gated);
        assert!((out - p.fusion().apply(&x)).amax() < 1e-12);
    }

    #[test]
    fn flat_round_trip() {
        let p = params(5, 2, FusionMode::Concat);
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.num_params());
        assert_eq!(p.with_flat(&flat).unwrap(), p);
    }

    #[test]
    fn far_candidate_is_flagged() {
        let cloud = PointCloud::new(vec![Point3::origin(), Point3::new(0.01, 0.0, 0.0)]).unwrap();
        let p = params(6, 2, FusionMode::Concat);
        let seeds = SeedFeatureSet::new(vec![Point3::origin()], vec![DVector::from_element(6, 1.0)]).unwrap();
        let cfg = MscgConfig {
            w_max: 0.1,
            scales: 2,
            h_min: -0.04,
            h_max: 0.04,
            max_points: 16,
        };
        let cands = [
            Candidate {
                position: Point3::new(5.0, 5.0, 5.0),
                approach: Vec3::z(),
                angle: 0.0,
            },
            Candidate {
                position: Point3::origin(),
                approach: Vec3::z(),
                angle: 0.0,
            },
        ];
        let out = mscg_features(&cloud, &cands, &seeds, &p, &cfg).unwrap();
        assert!(out[0].all_empty);
        assert_eq!(out[0].feature, DVector::zeros(6));
        assert!(!out[1].all_empty);
    }
}
