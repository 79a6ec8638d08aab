//! PLY point clouds with an optional `class` property.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::lifting::SemanticPointCloud;
use crate::taxonomy::ClassId;

use super::{read_bytes, write_bytes};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let bad = |msg: &str| Error::format(path, msg);
    let end = find_header_end(bytes).ok_or_else(|| bad("missing end_header"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not utf-8"))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] | ["end_header"] => {}
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(bad(&format!("unsupported format {other}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, i, _] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let count = Scalar::parse(c).ok_or_else(|| bad("bad list count type"))?;
                let item = Scalar::parse(i).ok_or_else(|| bad("bad list item type"))?;
                el.props.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad(&format!("bad property type {ty}")))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(bad(&format!("unrecognized header line: {line}"))),
        }
    }
    let format = format.ok_or_else(|| bad("missing format line"))?;
    Ok(Header { format, elements, body: end })
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let key = b"end_header";
    let pos = bytes.windows(key.len()).position(|w| w == key)?;
    let mut i = pos + key.len();
    if bytes.get(i) == Some(&b'\r') {
        i += 1;
    }
    if bytes.get(i) == Some(&b'\n') {
        i += 1;
    }
    Some(i)
}

/// Read a PLY point cloud. Points without a `class` property get label 0.
pub fn read_point_cloud(path: &Path) -> Result<SemanticPointCloud> {
    let bytes = read_bytes(path)?;
    parse_point_cloud(path, &bytes)
}

pub(crate) fn parse_point_cloud(path: &Path, bytes: &[u8]) -> Result<SemanticPointCloud> {
    let header = parse_header(path, bytes)?;
    let body = &bytes[header.body..];
    let mut ascii_tokens = match header.format {
        PlyFormat::Ascii => Some(
            std::str::from_utf8(body)
                .map_err(|_| Error::format(path, "ascii body is not utf-8"))?
                .split_whitespace(),
        ),
        PlyFormat::BinaryLittleEndian => None,
    };
    let mut offset = 0usize;
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    let mut found_vertex = false;

    let mut next = |ty: Scalar| -> Result<f64> {
        match ascii_tokens.as_mut() {
            Some(tokens) => {
                let tok = tokens.next().ok_or_else(|| Error::format(path, "truncated ascii body"))?;
                tok.parse::<f64>().map_err(|_| Error::format(path, format!("bad number {tok}")))
            }
            None => {
                let n = ty.size();
                let chunk = body
                    .get(offset..offset + n)
                    .ok_or_else(|| Error::format(path, "truncated binary body"))?;
                offset += n;
                Ok(ty.decode(chunk))
            }
        }
    };

    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let slot = |name: &str| {
            el.props.iter().position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
        };
        let (xi, yi, zi, ci) = (slot("x"), slot("y"), slot("z"), slot("class"));
        if is_vertex {
            if xi.is_none() || yi.is_none() || zi.is_none() {
                return Err(Error::format(path, "vertex element lacks x/y/z"));
            }
            found_vertex = true;
            positions.reserve(el.count);
            labels.reserve(el.count);
        }
        let mut values = vec![0.0f64; el.props.len()];
        for _ in 0..el.count {
            for (pi, prop) in el.props.iter().enumerate() {
                match *prop {
                    Property::Scalar { ty, .. } => values[pi] = next(ty)?,
                    Property::List { count, item } => {
                        let n = next(count)?;
                        if n < 0.0 {
                            return Err(Error::format(path, "negative list length"));
                        }
                        for _ in 0..n as usize {
                            next(item)?;
                        }
                    }
                }
            }
            if is_vertex {
                positions.push(Point3::new(values[xi.unwrap()], values[yi.unwrap()], values[zi.unwrap()]));
                let class = match ci {
                    Some(c) => {
                        let v = values[c];
                        if v < 0.0 || v > ClassId::MAX as f64 || v.fract() != 0.0 {
                            return Err(Error::format(path, format!("bad class value {v}")));
                        }
                        v as ClassId
                    }
                    None => 0,
                };
                labels.push(class);
            }
        }
    }
    if !found_vertex {
        return Err(Error::format(path, "no vertex element"));
    }
    SemanticPointCloud::new(positions, labels)
}

/// Write a point cloud with float64 coordinates and, if `with_class`, a
/// uint16 `class` property.
pub fn write_point_cloud(path: &Path, cloud: &SemanticPointCloud, format: PlyFormat, with_class: bool) -> Result<()> {
    write_bytes(path, &encode_point_cloud(cloud, format, with_class))
}

pub(crate) fn encode_point_cloud(cloud: &SemanticPointCloud, format: PlyFormat, with_class: bool) -> Vec<u8> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        cloud.len()
    );
    if with_class {
        out.push_str("property ushort class\n");
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for (p, &c) in cloud.positions.iter().zip(&cloud.labels) {
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", p.x, p.y, p.z);
                if with_class {
                    line.push_str(&format!(" {c}"));
                }
                line.push('\n');
                bytes.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                if with_class {
                    bytes.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
    }
    bytes
}
