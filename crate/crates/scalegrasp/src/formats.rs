//! JSON documents: histograms, asset manifests, scene specs, encoder weights
//! and evaluation reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use scalegrasp_core::eval::{ClassStats, EvalReport, ScaleStats};
use scalegrasp_core::geom::{PointCloud, RigidPose};
use scalegrasp_core::mscg::{Affine, EncoderParams, FusionMode};
use scalegrasp_core::ncm::{Asset, SceneAssets};
use scalegrasp_core::scale_balance::ScaleHistogram;
use scalegrasp_core::scenegen::{PrimitiveKind, PrimitiveSpec};

use crate::error::{IoError, Result};
use crate::ply;

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramDoc {
    pub t: usize,
    pub w_max: f64,
    pub counts: Vec<u64>,
}

impl From<&ScaleHistogram> for HistogramDoc {
    fn from(h: &ScaleHistogram) -> Self {
        Self {
            t: h.bins(),
            w_max: h.w_max(),
            counts: h.counts().to_vec(),
        }
    }
}

impl HistogramDoc {
    pub fn to_histogram(&self, path: &Path) -> Result<ScaleHistogram> {
        if self.counts.len() != self.t {
            return Err(IoError::parse(
                path,
                "counts",
                format!("t is {} but {} counts are given", self.t, self.counts.len()),
            ));
        }
        Ok(ScaleHistogram::from_counts(self.w_max, self.counts.clone())?)
    }
}

/// A rigid pose as a row-major rotation and a translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDoc {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RigidPose> for PoseDoc {
    fn from(p: &RigidPose) -> Self {
        let t = p.translation();
        Self {
            rotation: p.rotation_row_major(),
            translation: [t.x, t.y, t.z],
        }
    }
}

impl PoseDoc {
    pub fn to_pose(&self) -> Result<RigidPose> {
        Ok(RigidPose::from_row_major(&self.rotation, self.translation)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetDoc {
    pub instance: u32,
    /// Model PLY, relative to the manifest's directory unless absolute.
    pub model: PathBuf,
    #[serde(flatten)]
    pub pose: PoseDoc,
}

/// Per-instance model clouds and poses. `units` applies to model coordinates
/// and translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    #[serde(default = "default_units")]
    pub units: String,
    pub assets: Vec<AssetDoc>,
}

fn default_units() -> String {
    "m".into()
}

fn unit_scale(units: &str) -> Option<f64> {
    match units {
        "m" => Some(1.0),
        "cm" => Some(0.01),
        "mm" => Some(0.001),
        _ => None,
    }
}

/// Loads an asset manifest and the model clouds it references, in meters.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<SceneAssets> {
    let path = path.as_ref();
    let doc: ManifestDoc = read_json(path)?;
    let scale = unit_scale(&doc.units)
        .ok_or_else(|| IoError::parse(path, "units", format!("unknown units '{}'; use m, cm or mm", doc.units)))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let assets = doc
        .assets
        .iter()
        .map(|a| {
            let mut model = ply::read_cloud(base.join(&a.model))?;
            let mut pose_doc = a.pose.clone();
            if scale != 1.0 {
                model = scale_cloud(&model, scale)?;
                pose_doc.translation = pose_doc.translation.map(|v| v * scale);
            }
            Ok(Asset {
                instance: a.instance,
                model,
                pose: pose_doc.to_pose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneAssets::new(assets)?)
}

fn scale_cloud(cloud: &PointCloud, scale: f64) -> Result<PointCloud> {
    let mut out = PointCloud::new(cloud.points().iter().map(|p| p * scale).collect())?;
    if let Some(ns) = cloud.normals() {
        out = out.with_normals(ns.to_vec())?;
    }
    if let Some(ls) = cloud.labels() {
        out = out.with_labels(ls.to_vec())?;
    }
    Ok(out)
}

/// Writes each model as `<dir>/models/instance_<id>.ply` plus a manifest at
/// `<dir>/<name>`, in meters.
pub fn write_manifest(dir: &Path, name: &str, assets: &SceneAssets, format: ply::PlyFormat) -> Result<()> {
    let models = dir.join("models");
    std::fs::create_dir_all(&models).map_err(|e| IoError::io(&models, e))?;
    let mut docs = Vec::with_capacity(assets.len());
    for a in assets.assets() {
        let rel = PathBuf::from("models").join(format!("instance_{}.ply", a.instance));
        ply::write_cloud(dir.join(&rel), &a.model, format)?;
        docs.push(AssetDoc {
            instance: a.instance,
            model: rel,
            pose: PoseDoc::from(&a.pose),
        });
    }
    write_json(
        dir.join(name),
        &ManifestDoc {
            units: default_units(),
            assets: docs,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeDoc {
    Box { size: [f64; 3] },
    Cylinder { diameter: f64, height: f64 },
    Plate { length: f64, width: f64, thickness: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveDoc {
    pub instance: u32,
    /// Surface sample density in points per square meter.
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseDoc>,
    #[serde(flatten)]
    pub shape: ShapeDoc,
}

impl PrimitiveDoc {
    pub fn to_spec(&self) -> Result<PrimitiveSpec> {
        let kind = match self.shape {
            ShapeDoc::Box { size } => PrimitiveKind::Box { size },
            ShapeDoc::Cylinder { diameter, height } => PrimitiveKind::Cylinder { diameter, height },
            ShapeDoc::Plate {
                length,
                width,
                thickness,
            } => PrimitiveKind::Plate {
                length,
                width,
                thickness,
            },
        };
        let spec = PrimitiveSpec {
            kind,
            density: self.density,
            pose: match &self.pose {
                Some(p) => p.to_pose()?,
                None => RigidPose::identity(),
            },
            instance: self.instance,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A scene spec is a JSON array of primitive records.
pub fn read_scene_spec(path: impl AsRef<Path>) -> Result<Vec<PrimitiveSpec>> {
    let docs: Vec<PrimitiveDoc> = read_json(path)?;
    docs.iter().map(PrimitiveDoc::to_spec).collect()
}

/// A matrix as a shape and row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDoc {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorDoc {
    fn matrix(m: &DMatrix<f64>) -> Self {
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn vector(v: &DVector<f64>) -> Self {
        Self {
            shape: vec![v.len()],
            data: v.as_slice().to_vec(),
        }
    }

    fn to_matrix(&self, name: &str, path: &Path) -> Result<DMatrix<f64>> {
        match self.shape[..] {
            [r, c] if r * c == self.data.len() => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(IoError::parse(path, name, "weight needs shape [rows, cols] matching its data")),
        }
    }

    fn to_vector(&self, name: &str, path: &Path) -> Result<DVector<f64>> {
        match self.shape[..] {
            [n] if n == self.data.len() => Ok(DVector::from_column_slice(&self.data)),
            _ => Err(IoError::parse(path, name, "bias needs shape [n] matching its data")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub weight: TensorDoc,
    pub bias: TensorDoc,
}

impl LayerDoc {
    fn from_affine(a: &Affine) -> Self {
        Self {
            weight: TensorDoc::matrix(&a.weight),
            bias: TensorDoc::vector(&a.bias),
        }
    }

    fn to_affine(&self, name: &str, path: &Path) -> Result<Affine> {
        Ok(Affine::new(
            self.weight.to_matrix(name, path)?,
            self.bias.to_vector(name, path)?,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionModeDoc {
    Concat,
    Sum,
}

/// Encoder weights: one layer list per scale, the gate and the fusion layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderDoc {
    pub mode: FusionModeDoc,
    pub scales: Vec<Vec<LayerDoc>>,
    pub gate: LayerDoc,
    pub fusion: LayerDoc,
}

impl From<&EncoderParams> for EncoderDoc {
    fn from(p: &EncoderParams) -> Self {
        Self {
            mode: match p.mode() {
                FusionMode::Concat => FusionModeDoc::Concat,
                FusionMode::Sum => FusionModeDoc::Sum,
            },
            scales: p
                .scale_mlps()
                .iter()
                .map(|mlp| mlp.iter().map(LayerDoc::from_affine).collect())
                .collect(),
            gate: LayerDoc::from_affine(p.gate()),
            fusion: LayerDoc::from_affine(p.fusion()),
        }
    }
}

impl EncoderDoc {
    pub fn to_params(&self, path: &Path) -> Result<EncoderParams> {
        let scales = self
            .scales
            .iter()
            .enumerate()
            .map(|(s, mlp)| {
                mlp.iter()
                    .enumerate()
                    .map(|(l, layer)| layer.to_affine(&format!("scales[{s}][{l}]"), path))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mode = match self.mode {
            FusionModeDoc::Concat => FusionMode::Concat,
            FusionModeDoc::Sum => FusionMode::Sum,
        };
        Ok(EncoderParams::new(
            scales,
            self.gate.to_affine("gate", path)?,
            self.fusion.to_affine("fusion", path)?,
            mode,
        )?)
    }
}

pub fn read_encoder(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    read_json::<EncoderDoc>(path)?.to_params(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStatsDoc {
    pub count: usize,
    pub successes: usize,
    pub success_rate: f64,
}

impl From<&ClassStats> for ClassStatsDoc {
    fn from(c: &ClassStats) -> Self {
        Self {
            count: c.count,
            successes: c.successes,
            success_rate: c.success_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStatsDoc {
    pub small: ClassStatsDoc,
    pub medium: ClassStatsDoc,
    pub large: ClassStatsDoc,
}

impl From<&ScaleStats> for ScaleStatsDoc {
    fn from(s: &ScaleStats) -> Self {
        Self {
            small: (&s.small).into(),
            medium: (&s.medium).into(),
            large: (&s.large).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub ap: f64,
    /// AP at each friction coefficient, keyed by the coefficient as written
    /// with one decimal.
    pub ap_by_mu: BTreeMap<String, f64>,
    pub ap_small: f64,
    pub ap_medium: f64,
    pub ap_large: f64,
    pub stats: ScaleStatsDoc,
}

impl From<&EvalReport> for ReportDoc {
    fn from(r: &EvalReport) -> Self {
        Self {
            ap: r.ap,
            ap_by_mu: r.ap_by_mu.iter().map(|(mu, ap)| (format!("{mu:.1}"), *ap)).collect(),
            ap_small: r.ap_small,
            ap_medium: r.ap_medium,
            ap_large: r.ap_large,
            stats: (&r.stats).into(),
        }
    }
}
