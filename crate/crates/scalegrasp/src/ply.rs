//! PLY point clouds.
//!
//! Written clouds carry `x y z` as `double`, optional `nx ny nz` as `double`
//! and an optional `instance_id` as `int` (`-1` for background). The reader
//! accepts any scalar property type for these fields, ignores unknown scalar
//! properties and supports the `ascii` and `binary_little_endian` encodings.

use std::fmt::Write as _;
use std::path::Path;

use scalegrasp_core::geom::{InstanceLabel, Point3, PointCloud, Vec3};

use crate::error::{IoError, Result};

pub const BACKGROUND_ID: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    format: PlyFormat,
    count: usize,
    props: Vec<(String, ScalarType)>,
    body_offset: usize,
    body_line: usize,
}

/// Column of each field of interest within a vertex row.
struct Layout {
    xyz: [usize; 3],
    normals: Option<[usize; 3]>,
    label: Option<usize>,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |line: usize, msg: String| IoError::parse(path, format!("line {line}"), msg);
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    loop {
        let Some(end) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(err(line_no + 1, "header is not terminated by end_header".into()));
        };
        line_no += 1;
        let raw = &bytes[offset..offset + end];
        offset += end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| err(line_no, "header is not valid text".into()))?
            .trim_end_matches('\r')
            .trim();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err(1, "missing 'ply' magic".into()));
            }
            continue;
        }
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(err(line_no, format!("unsupported format '{other}'"))),
                });
            }
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(err(line_no, "duplicate vertex element".into()));
                }
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| err(line_no, format!("invalid vertex count '{n}'")))?,
                );
                in_vertex = true;
            }
            ["element", name, _] => {
                return Err(err(line_no, format!("unsupported element '{name}'; only vertex is read")));
            }
            ["property", "list", ..] => {
                return Err(err(line_no, "list properties are not supported".into()));
            }
            ["property", ty, name] => {
                if !in_vertex {
                    return Err(err(line_no, "property outside the vertex element".into()));
                }
                let ty = ScalarType::parse(ty).ok_or_else(|| err(line_no, format!("unknown property type '{ty}'")))?;
                if props.iter().any(|(n, _)| n == name) {
                    return Err(err(line_no, format!("duplicate property '{name}'")));
                }
                props.push((name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(err(line_no, format!("unrecognized header line '{line}'"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| err(line_no, "missing format line".into()))?,
        count: count.ok_or_else(|| err(line_no, "missing vertex element".into()))?,
        props,
        body_offset: offset,
        body_line: line_no + 1,
    })
}

fn layout(header: &Header, path: &Path) -> Result<Layout> {
    let find = |name: &str| header.props.iter().position(|(n, _)| n == name);
    let err = |msg: String| IoError::parse(path, "header", msg);
    let mut xyz = [0; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(name).ok_or_else(|| err(format!("missing property '{name}'")))?;
    }
    let normals = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        (None, None, None) => None,
        _ => return Err(err("normals need all of nx, ny, nz".into())),
    };
    let label = find("instance_id");
    if let Some(i) = label {
        if !header.props[i].1.is_integer() {
            return Err(err("instance_id must have an integer type".into()));
        }
    }
    Ok(Layout { xyz, normals, label })
}

/// Decodes a PLY byte buffer; `path` is only used in error messages.
pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let header = parse_header(bytes, path)?;
    let lay = layout(&header, path)?;
    let rows = match header.format {
        PlyFormat::Ascii => ascii_rows(&header, &bytes[header.body_offset..], path)?,
        PlyFormat::BinaryLittleEndian => binary_rows(&header, &bytes[header.body_offset..], path)?,
    };
    let mut points = Vec::with_capacity(rows.len());
    let mut normals = lay.normals.map(|_| Vec::with_capacity(rows.len()));
    let mut labels = lay.label.map(|_| Vec::with_capacity(rows.len()));
    for (v, (loc, row)) in rows.iter().enumerate() {
        let bad = |msg: String| IoError::parse(path, loc.clone(), msg);
        let p = Point3::new(row[lay.xyz[0]], row[lay.xyz[1]], row[lay.xyz[2]]);
        if !p.coords.iter().all(|c| c.is_finite()) {
            return Err(bad(format!("vertex {v} has a non-finite coordinate")));
        }
        points.push(p);
        if let (Some(cols), Some(ns)) = (lay.normals, normals.as_mut()) {
            let n = Vec3::new(row[cols[0]], row[cols[1]], row[cols[2]]);
            if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > 1e-6 {
                return Err(bad(format!("vertex {v} normal is not a unit vector")));
            }
            ns.push(n);
        }
        if let (Some(col), Some(ls)) = (lay.label, labels.as_mut()) {
            let id = row[col];
            let label: InstanceLabel = if id == BACKGROUND_ID as f64 {
                None
            } else if id >= 0.0 && id <= i32::MAX as f64 {
                Some(id as u32)
            } else {
                return Err(bad(format!("vertex {v} has invalid instance_id {id}")));
            };
            ls.push(label);
        }
    }
    let mut cloud = PointCloud::new(points)?;
    if let Some(ns) = normals {
        cloud = cloud.with_normals(ns)?;
    }
    if let Some(ls) = labels {
        cloud = cloud.with_labels(ls)?;
    }
    Ok(cloud)
}

type Row = (String, Vec<f64>);

fn ascii_rows(header: &Header, body: &[u8], path: &Path) -> Result<Vec<Row>> {
    let text = std::str::from_utf8(body).map_err(|_| IoError::parse(path, "body", "ascii body is not valid text"))?;
    let mut rows = Vec::with_capacity(header.count);
    for (i, line) in text.lines().enumerate() {
        let line_no = header.body_line + i;
        let loc = format!("line {line_no}");
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if rows.len() == header.count {
            return Err(IoError::parse(
                path,
                loc,
                format!("header declares {} vertices but the body has more rows", header.count),
            ));
        }
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| IoError::parse(path, loc.clone(), "non-numeric value"))?;
        if values.len() != header.props.len() {
            return Err(IoError::parse(
                path,
                loc,
                format!("expected {} values, found {}", header.props.len(), values.len()),
            ));
        }
        rows.push((loc, values));
    }
    if rows.len() != header.count {
        return Err(IoError::parse(
            path,
            "end of file",
            format!("header declares {} vertices but the body has {} rows", header.count, rows.len()),
        ));
    }
    Ok(rows)
}

fn binary_rows(header: &Header, body: &[u8], path: &Path) -> Result<Vec<Row>> {
    let stride: usize = header.props.iter().map(|(_, t)| t.size()).sum();
    let expected = stride * header.count;
    if body.len() != expected {
        return Err(IoError::parse(
            path,
            format!("offset {}", header.body_offset + body.len().min(expected)),
            format!(
                "header declares {} vertices ({expected} bytes) but the body has {} bytes",
                header.count,
                body.len()
            ),
        ));
    }
    Ok(body
        .chunks_exact(stride.max(1))
        .take(header.count)
        .enumerate()
        .map(|(v, chunk)| {
            let mut at = 0;
            let values = header
                .props
                .iter()
                .map(|(_, t)| {
                    let x = t.decode_le(&chunk[at..]);
                    at += t.size();
                    x
                })
                .collect();
            (format!("offset {}", header.body_offset + v * stride), values)
        })
        .collect())
}

/// Encodes a cloud. ASCII values use 17 significant digits, so both variants
/// round-trip exactly.
pub fn encode_cloud(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let mut head = String::from("ply\n");
    head.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(head, "element vertex {}", cloud.len());
    for name in ["x", "y", "z"] {
        let _ = writeln!(head, "property double {name}");
    }
    if cloud.normals().is_some() {
        for name in ["nx", "ny", "nz"] {
            let _ = writeln!(head, "property double {name}");
        }
    }
    if cloud.labels().is_some() {
        head.push_str("property int instance_id\n");
    }
    head.push_str("end_header\n");
    let mut out = head.into_bytes();
    for i in 0..cloud.len() {
        let p = cloud.points()[i];
        let mut doubles = vec![p.x, p.y, p.z];
        if let Some(ns) = cloud.normals() {
            doubles.extend(ns[i].iter());
        }
        let label = cloud
            .labels()
            .map(|ls| ls[i].map_or(BACKGROUND_ID, |id| id as i32));
        match format {
            PlyFormat::Ascii => {
                let mut line: Vec<String> = doubles.iter().map(|v| format!("{v:.16e}")).collect();
                if let Some(l) = label {
                    line.push(l.to_string());
                }
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
            PlyFormat::BinaryLittleEndian => {
                for v in doubles {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(l) = label {
                    out.extend_from_slice(&l.to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_cloud(&bytes, path)
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_cloud(cloud, format)).map_err(|e| IoError::io(path, e))
}
