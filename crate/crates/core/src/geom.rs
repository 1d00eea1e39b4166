//! Geometric primitives shared by every kernel: points, clouds, rigid poses,
//! grasp poses and the parallel-jaw gripper model.
//!
//! Lengths are in meters throughout.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Per-point instance assignment. `None` is background.
pub type InstanceLabel = Option<u32>;

const UNIT_TOL: f64 = 1e-6;
const ORTHO_TOL: f64 = 1e-6;

/// A set of points with optional unit normals and optional instance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Vec3>>,
    labels: Option<Vec<InstanceLabel>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(invalid!("point {i} has a non-finite coordinate"));
        }
        Ok(Self {
            points,
            normals: None,
            labels: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            normals: None,
            labels: None,
        }
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(invalid!("normal {i} has norm {norm}, expected 1"));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<InstanceLabel>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} labels for {} points",
                labels.len(),
                self.points.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Labels every point with the same instance id.
    pub fn with_uniform_label(self, label: InstanceLabel) -> Self {
        let n = self.points.len();
        Self {
            labels: Some(alloc::vec![label; n]),
            ..self
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn labels(&self) -> Option<&[InstanceLabel]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[InstanceLabel]> {
        self.labels()
            .ok_or_else(|| invalid!("point cloud has no instance labels"))
    }

    pub fn require_normals(&self) -> Result<&[Vec3]> {
        self.normals()
            .ok_or_else(|| invalid!("point cloud has no normals"))
    }

    /// Distinct foreground instance ids in ascending order.
    pub fn instance_ids(&self) -> Vec<u32> {
        let ids: BTreeSet<u32> = self
            .labels
            .iter()
            .flatten()
            .filter_map(|l| *l)
            .collect();
        ids.into_iter().collect()
    }

    /// Sub-cloud made of `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Concatenates clouds. Normals (labels) survive only if every part has them.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a PointCloud>) -> Self {
        let parts: Vec<&PointCloud> = parts.into_iter().collect();
        let points = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let normals = parts
            .iter()
            .map(|c| c.normals.as_ref())
            .collect::<Option<Vec<_>>>()
            .map(|ns| ns.into_iter().flatten().copied().collect());
        let labels = parts
            .iter()
            .map(|c| c.labels.as_ref())
            .collect::<Option<Vec<_>>>()
            .map(|ls| ls.into_iter().flatten().copied().collect());
        Self {
            points,
            normals,
            labels,
        }
    }

    pub(crate) fn from_parts_unchecked(
        points: Vec<Point3>,
        normals: Option<Vec<Vec3>>,
        labels: Option<Vec<InstanceLabel>>,
    ) -> Self {
        Self {
            points,
            normals,
            labels,
        }
    }
}

/// Rotation followed by translation: `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(invalid!("pose has non-finite entries"));
        }
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ORTHO_TOL {
            return Err(invalid!("rotation is not orthonormal (error {ortho_err:e})"));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(invalid!("rotation determinant is {det}, expected +1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a pose from a row-major 3x3 rotation and a translation.
    pub fn from_row_major(rotation: &[f64; 9], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vec3::new(translation[0], translation[1], translation[2]),
        )
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation about a unit `axis` by `angle` radians.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        let norm = axis.norm();
        if !(norm > 1e-12) {
            return Err(invalid!("rotation axis is degenerate"));
        }
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_unchecked(axis / norm),
            angle,
        );
        Self::new(*rot.matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vec3::zeros()
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Maps a world point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.tr_mul(&(p.coords - self.translation)))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Row-major rotation entries.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }
}

/// A parallel-jaw grasp.
///
/// The gripper advances along `approach`; `angle` rotates the closing
/// direction about the approach axis (see [`frame_of_grasp`]). `width` is the
/// jaw opening, the scale of the grasp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    pub translation: Point3,
    pub approach: Vec3,
    pub angle: f64,
    pub width: f64,
    pub depth: f64,
    pub score: f64,
}

impl GraspPose {
    /// Checks the invariants against a gripper.
    pub fn validate(&self, gripper: &GripperModel) -> Result<()> {
        let finite = self.translation.coords.iter().all(|v| v.is_finite())
            && self.approach.iter().all(|v| v.is_finite())
            && self.angle.is_finite()
            && self.width.is_finite()
            && self.depth.is_finite()
            && self.score.is_finite();
        if !finite {
            return Err(invalid!("grasp has non-finite fields"));
        }
        if (self.approach.norm() - 1.0).abs() > UNIT_TOL {
            return Err(invalid!("grasp approach is not a unit vector"));
        }
        if self.width < 0.0 || self.width > gripper.w_max {
            return Err(invalid!(
                "grasp width {} outside [0, {}]",
                self.width,
                gripper.w_max
            ));
        }
        if self.depth < 0.0 {
            return Err(invalid!("grasp depth {} is negative", self.depth));
        }
        Ok(())
    }
}

/// Parallel-jaw gripper geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperModel {
    /// Maximum opening.
    pub w_max: f64,
    /// Finger length along the approach axis.
    pub finger_depth: f64,
    /// Jaw thickness along the third gripper axis.
    pub finger_height: f64,
    /// Jaw thickness along the closing axis.
    pub finger_width: f64,
    /// Depth of the palm behind the fingers.
    pub base_depth: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            w_max: 0.10,
            finger_depth: 0.04,
            finger_height: 0.02,
            finger_width: 0.01,
            base_depth: 0.02,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("w_max", self.w_max),
            ("finger_depth", self.finger_depth),
            ("finger_height", self.finger_height),
            ("finger_width", self.finger_width),
            ("base_depth", self.base_depth),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid!("gripper {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// In-plane reference direction for an approach axis: world +z projected onto
/// the plane orthogonal to `approach`, or +x when `approach` is within 1e-6 of ±z.
pub fn reference_direction(approach: &Vec3) -> Vec3 {
    let z = Vec3::z();
    let base = if approach.cross(&z).norm() < 1e-6 {
        Vec3::x()
    } else {
        z
    };
    (base - approach * approach.dot(&base)).normalize()
}

/// Gripper frame for a grasp axis: columns are approach, closing direction and
/// their cross product.
pub fn gripper_frame(translation: &Point3, approach: &Vec3, angle: f64) -> Result<RigidPose> {
    let norm = approach.norm();
    if !(norm >= 1e-9) || !angle.is_finite() {
        return Err(invalid!("degenerate approach direction (norm {norm})"));
    }
    let a = approach / norm;
    let r = reference_direction(&a);
    let (s, c) = libm::sincos(angle);
    let b = (r * c + a.cross(&r) * s).normalize();
    let third = a.cross(&b);
    let rotation = Matrix3::from_columns(&[a, b, third]);
    Ok(RigidPose {
        rotation,
        translation: translation.coords,
    })
}

/// Rigid frame of a grasp. Column 0 maps the gripper x axis to the approach,
/// column 1 is the closing direction, column 2 completes a right-handed frame.
pub fn frame_of_grasp(g: &GraspPose) -> Result<RigidPose> {
    gripper_frame(&g.translation, &g.approach, g.angle)
}

/// In-plane angle for which [`gripper_frame`] yields closing direction `closing`.
pub fn angle_for_closing(approach: &Vec3, closing: &Vec3) -> f64 {
    let a = approach.normalize();
    let r = reference_direction(&a);
    libm::atan2(a.cross(&r).dot(closing), r.dot(closing))
}

/// Applies a rigid pose: points rotated then translated, normals rotated,
/// labels unchanged.
pub fn transform_cloud(cloud: &PointCloud, pose: &RigidPose) -> PointCloud {
    if pose.is_identity() {
        return cloud.clone();
    }
    PointCloud {
        points: cloud.points.iter().map(|p| pose.transform_point(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| pose.transform_vector(n)).collect()),
        labels: cloud.labels.clone(),
    }
}
