//! Whitespace-separated numeric text files.
//!
//! Every format here is one record per line, with blank lines and `#` comments
//! ignored. Reals are written with 17 significant digits so they read back
//! bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use scalegrasp_core::geom::{GraspPose, Point3, Vec3};
use scalegrasp_core::mscg::{Candidate, CandidateFeature};
use scalegrasp_core::sampling::SeedFeatureSet;

use crate::error::{IoError, Result};

/// Number of reals in a grasp record: `tx ty tz ax ay az angle width depth score`.
pub const GRASP_FIELDS: usize = 10;

/// Number of reals in a candidate record: `x y z ax ay az angle`.
pub const CANDIDATE_FIELDS: usize = 7;

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// A parsed data line with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub number: usize,
    pub values: Vec<f64>,
}

/// Splits text into numeric rows, skipping blanks and comments.
pub fn parse_rows(text: &str, path: &Path) -> Result<Vec<Line>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let values = body
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IoError::parse(path, format!("line {}", i + 1), format!("invalid number '{tok}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Line { number: i + 1, values });
    }
    Ok(rows)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

fn expect_len(line: &Line, n: usize, path: &Path) -> Result<()> {
    if line.values.len() != n {
        return Err(IoError::parse(
            path,
            format!("line {}", line.number),
            format!("expected {n} values, found {}", line.values.len()),
        ));
    }
    Ok(())
}

fn as_index(v: f64, line: &Line, path: &Path) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(IoError::parse(path, format!("line {}", line.number), format!("invalid index {v}")))
    }
}

pub fn grasp_fields(g: &GraspPose) -> [f64; GRASP_FIELDS] {
    [
        g.translation.x,
        g.translation.y,
        g.translation.z,
        g.approach.x,
        g.approach.y,
        g.approach.z,
        g.angle,
        g.width,
        g.depth,
        g.score,
    ]
}

pub fn grasp_from_fields(v: &[f64]) -> GraspPose {
    GraspPose {
        translation: Point3::new(v[0], v[1], v[2]),
        approach: Vec3::new(v[3], v[4], v[5]),
        angle: v[6],
        width: v[7],
        depth: v[8],
        score: v[9],
    }
}

fn push_reals(out: &mut String, values: &[f64]) {
    let mut first = out.is_empty() || out.ends_with(['\n', ' ']);
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        out.push_str(&fmt_real(*v));
    }
}

pub fn encode_grasps(grasps: &[GraspPose]) -> String {
    let mut out = String::from("# tx ty tz ax ay az angle width depth score\n");
    for g in grasps {
        push_reals(&mut out, &grasp_fields(g));
        out.push('\n');
    }
    out
}

pub fn decode_grasps(text: &str, path: &Path) -> Result<Vec<GraspPose>> {
    parse_rows(text, path)?
        .iter()
        .map(|line| {
            expect_len(line, GRASP_FIELDS, path)?;
            Ok(grasp_from_fields(&line.values))
        })
        .collect()
}

pub fn read_grasps(path: impl AsRef<Path>) -> Result<Vec<GraspPose>> {
    let path = path.as_ref();
    decode_grasps(&read_text(path)?, path)
}

pub fn write_grasps(path: impl AsRef<Path>, grasps: &[GraspPose]) -> Result<()> {
    write_text(path.as_ref(), &encode_grasps(grasps))
}

/// Grasp labels keyed by point: each line is `point_index` followed by a grasp
/// record, or `point_index` alone for a point without grasps. The result has
/// one entry per point up to the largest index mentioned.
pub fn decode_labels(text: &str, path: &Path) -> Result<Vec<Vec<GraspPose>>> {
    let mut per_point: Vec<Vec<GraspPose>> = Vec::new();
    for line in parse_rows(text, path)? {
        let idx = as_index(line.values[0], &line, path)?;
        if per_point.len() <= idx {
            per_point.resize_with(idx + 1, Vec::new);
        }
        match line.values.len() {
            1 => {}
            n if n == GRASP_FIELDS + 1 => per_point[idx].push(grasp_from_fields(&line.values[1..])),
            n => {
                return Err(IoError::parse(
                    path,
                    format!("line {}", line.number),
                    format!("expected 1 or {} values, found {n}", GRASP_FIELDS + 1),
                ))
            }
        }
    }
    Ok(per_point)
}

pub fn encode_labels(per_point: &[Vec<GraspPose>]) -> String {
    let mut out = String::from("# point_index [tx ty tz ax ay az angle width depth score]\n");
    for (i, grasps) in per_point.iter().enumerate() {
        if grasps.is_empty() {
            let _ = writeln!(out, "{i}");
        }
        for g in grasps {
            let _ = write!(out, "{i} ");
            push_reals(&mut out, &grasp_fields(g));
            out.push('\n');
        }
    }
    out
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<Vec<GraspPose>>> {
    let path = path.as_ref();
    decode_labels(&read_text(path)?, path)
}

pub fn write_labels(path: impl AsRef<Path>, per_point: &[Vec<GraspPose>]) -> Result<()> {
    write_text(path.as_ref(), &encode_labels(per_point))
}

pub fn encode_indices(indices: &[usize]) -> String {
    indices.iter().map(|i| format!("{i}\n")).collect()
}

pub fn read_indices(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    parse_rows(&read_text(path)?, path)?
        .iter()
        .map(|line| {
            expect_len(line, 1, path)?;
            as_index(line.values[0], line, path)
        })
        .collect()
}

pub fn write_indices(path: impl AsRef<Path>, indices: &[usize]) -> Result<()> {
    write_text(path.as_ref(), &encode_indices(indices))
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<Candidate>> {
    let path = path.as_ref();
    parse_rows(&read_text(path)?, path)?
        .iter()
        .map(|line| {
            expect_len(line, CANDIDATE_FIELDS, path)?;
            let v = &line.values;
            Ok(Candidate {
                position: Point3::new(v[0], v[1], v[2]),
                approach: Vec3::new(v[3], v[4], v[5]),
                angle: v[6],
            })
        })
        .collect()
}

pub fn write_candidates(path: impl AsRef<Path>, candidates: &[Candidate]) -> Result<()> {
    let mut out = String::from("# x y z ax ay az angle\n");
    for c in candidates {
        push_reals(
            &mut out,
            &[c.position.x, c.position.y, c.position.z, c.approach.x, c.approach.y, c.approach.z, c.angle],
        );
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

/// Seed points with features: `x y z f_1 .. f_C` per line.
pub fn read_seeds(path: impl AsRef<Path>) -> Result<SeedFeatureSet> {
    let path = path.as_ref();
    let rows = parse_rows(&read_text(path)?, path)?;
    let Some(first) = rows.first() else {
        return Err(IoError::parse(path, "end of file", "no seed rows"));
    };
    let width = first.values.len();
    if width < 4 {
        return Err(IoError::parse(path, format!("line {}", first.number), "seed rows need x y z and at least one feature"));
    }
    let mut positions = Vec::with_capacity(rows.len());
    let mut features = Vec::with_capacity(rows.len());
    for line in &rows {
        expect_len(line, width, path)?;
        let v = &line.values;
        positions.push(Point3::new(v[0], v[1], v[2]));
        features.push(DVector::from_column_slice(&v[3..]));
    }
    Ok(SeedFeatureSet::new(positions, features)?)
}

pub fn write_seeds(path: impl AsRef<Path>, seeds: &SeedFeatureSet) -> Result<()> {
    let mut out = String::from("# x y z features...\n");
    for (p, f) in seeds.positions().iter().zip(seeds.features()) {
        push_reals(&mut out, &[p.x, p.y, p.z]);
        out.push(' ');
        push_reals(&mut out, f.as_slice());
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

/// Candidate features: `all_empty f_1 .. f_C`, the flag being 0 or 1.
pub fn encode_features(features: &[CandidateFeature]) -> String {
    let mut out = String::from("# all_empty features...\n");
    for f in features {
        let _ = write!(out, "{} ", u8::from(f.all_empty));
        push_reals(&mut out, f.feature.as_slice());
        out.push('\n');
    }
    out
}

pub fn write_features(path: impl AsRef<Path>, features: &[CandidateFeature]) -> Result<()> {
    write_text(path.as_ref(), &encode_features(features))
}

pub fn write_reals(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let out: String = values.iter().map(|v| fmt_real(*v) + "\n").collect();
    write_text(path.as_ref(), &out)
}

pub fn read_reals(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    parse_rows(&read_text(path)?, path)?
        .iter()
        .map(|line| {
            expect_len(line, 1, path)?;
            Ok(line.values[0])
        })
        .collect()
}
