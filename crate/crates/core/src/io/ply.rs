//! PLY point clouds, ASCII and binary little-endian.
//!
//! Known vertex properties: `x y z` (required), `confidence` (default 1.0),
//! `red green blue` (8-bit, all three or none) and `frame` (source frame
//! label). Anything else is skipped with a warning.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::cloud::{PointCloud, Rgb, Vec3};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Scalar> {
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

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    binary: bool,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body: usize,
    /// Line number of the first body line.
    body_line: usize,
}

fn parse_error(offset: usize, line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        line,
        message: message.into(),
    }
}

fn parse_header(data: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let start = pos;
        let Some(len) = data[pos..].iter().position(|b| *b == b'\n') else {
            return Err(parse_error(start, Some(line_no + 1), "header ended before end_header"));
        };
        pos += len + 1;
        line_no += 1;
        let line = std::str::from_utf8(&data[start..start + len])
            .map_err(|_| parse_error(start, Some(line_no), "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        let err = |m: String| parse_error(start, Some(line_no), m);
        let words: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err("missing `ply` magic".into()));
            }
            continue;
        }
        match words.as_slice() {
            ["format", fmt, _version] => {
                binary = Some(match *fmt {
                    "ascii" => false,
                    "binary_little_endian" => true,
                    other => return Err(err(format!("unsupported format `{other}`"))),
                });
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(format!("bad element count `{count}`")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| err("property before element".into()))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(err(format!("unknown list type in `{line}`")));
                };
                el.properties.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| err("property before element".into()))?;
                let ty = Scalar::parse(ty).ok_or_else(|| err(format!("unknown type `{ty}`")))?;
                el.properties.push(Property::Scalar { name: name.to_string(), ty });
            }
            ["end_header"] => break,
            _ => return Err(err(format!("unrecognized header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_error(0, Some(2), "missing format line"))?;
    Ok(Header { binary, elements, body: pos, body_line: line_no + 1 })
}

/// Column of each known vertex property.
#[derive(Default)]
struct Layout {
    xyz: [Option<usize>; 3],
    confidence: Option<usize>,
    rgb: [Option<usize>; 3],
    frame: Option<usize>,
}

fn vertex_layout(el: &Element) -> Result<Layout> {
    let mut layout = Layout::default();
    for (i, p) in el.properties.iter().enumerate() {
        let name = match p {
            Property::Scalar { name, .. } => name.as_str(),
            Property::List { name, .. } => {
                log::warn!("skipping list property `{name}` of vertex");
                continue;
            }
        };
        let slot = match name {
            "x" => &mut layout.xyz[0],
            "y" => &mut layout.xyz[1],
            "z" => &mut layout.xyz[2],
            "confidence" => &mut layout.confidence,
            "red" => &mut layout.rgb[0],
            "green" => &mut layout.rgb[1],
            "blue" => &mut layout.rgb[2],
            "frame" => &mut layout.frame,
            other => {
                log::warn!("skipping unsupported vertex property `{other}`");
                continue;
            }
        };
        *slot = Some(i);
    }
    if layout.xyz.iter().any(Option::is_none) {
        return Err(parse_error(0, None, "vertex element lacks x, y or z"));
    }
    let n_rgb = layout.rgb.iter().filter(|c| c.is_some()).count();
    if n_rgb != 0 && n_rgb != 3 {
        return Err(parse_error(0, None, "vertex colors need all of red, green, blue"));
    }
    Ok(layout)
}

/// Reads every element, returning the vertex rows as f64 values.
fn read_body(data: &[u8], header: &Header) -> Result<Vec<Vec<f64>>> {
    let mut pos = header.body;
    let mut line = header.body_line;
    let mut vertices = Vec::new();
    let text = if header.binary { None } else { Some(data) };
    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        for row in 0..el.count {
            let mut values = Vec::with_capacity(if is_vertex { el.properties.len() } else { 0 });
            if let Some(text) = text {
                let start = pos;
                let end = text[pos..].iter().position(|b| *b == b'\n').map_or(text.len(), |n| pos + n);
                if start >= text.len() {
                    return Err(parse_error(start, Some(line), format!(
                        "file ends in {} row {row} of {}", el.name, el.count
                    )));
                }
                let s = std::str::from_utf8(&text[start..end])
                    .map_err(|_| parse_error(start, Some(line), "invalid UTF-8"))?;
                let mut tokens = s.split_whitespace();
                let mut next = || -> Result<f64> {
                    let t = tokens.next().ok_or_else(|| {
                        parse_error(start, Some(line), format!("{} row {row} has too few values", el.name))
                    })?;
                    t.parse::<f64>()
                        .map_err(|_| parse_error(start, Some(line), format!("bad number `{t}`")))
                };
                for p in &el.properties {
                    match p {
                        Property::Scalar { .. } => values.push(next()?),
                        Property::List { .. } => {
                            let n = next()?;
                            for _ in 0..n as usize {
                                next()?;
                            }
                            values.push(f64::NAN);
                        }
                    }
                }
                pos = end + 1;
                line += 1;
            } else {
                let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
                    let s = data.get(*pos..*pos + n).ok_or_else(|| {
                        parse_error(data.len(), None, format!(
                            "file truncated in {} row {row} of {}", el.name, el.count
                        ))
                    })?;
                    *pos += n;
                    Ok(s)
                };
                for p in &el.properties {
                    match p {
                        Property::Scalar { ty, .. } => values.push(ty.decode(take(&mut pos, ty.size())?)),
                        Property::List { count, item, .. } => {
                            let n = count.decode(take(&mut pos, count.size())?) as usize;
                            take(&mut pos, n * item.size())?;
                            values.push(f64::NAN);
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(values);
            }
        }
    }
    Ok(vertices)
}

pub fn parse_ply(data: &[u8]) -> Result<PointCloud> {
    let header = parse_header(data)?;
    let el = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| parse_error(0, None, "no vertex element"))?;
    let layout = vertex_layout(el)?;
    let rows = read_body(data, &header)?;

    let col = |r: &[f64], c: Option<usize>| r[c.unwrap()];
    let points = rows
        .iter()
        .map(|r| Vec3::new(col(r, layout.xyz[0]), col(r, layout.xyz[1]), col(r, layout.xyz[2])))
        .collect();
    let confidence = match layout.confidence {
        Some(c) => rows.iter().map(|r| r[c]).collect(),
        None => vec![1.0; rows.len()],
    };
    let mut cloud = PointCloud::new(points, confidence)
        .map_err(|e| parse_error(header.body, None, e.to_string()))?;
    if layout.rgb[0].is_some() {
        let colors: Vec<Rgb> = rows
            .iter()
            .map(|r| std::array::from_fn(|i| col(r, layout.rgb[i]).clamp(0.0, 255.0) as u8))
            .collect();
        cloud = cloud.with_colors(colors)?;
    }
    if let Some(c) = layout.frame {
        cloud = cloud.with_source_frames(rows.iter().map(|r| r[c] as u32).collect())?;
    }
    Ok(cloud)
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&data)
}

fn exact_f32(v: f64) -> bool {
    (v as f32) as f64 == v
}

/// Serializes `cloud`. Coordinates and confidences are stored as 32-bit
/// floats when that is exact and as doubles otherwise, so a write/read
/// round trip never loses precision.
pub fn encode_ply(cloud: &PointCloud, encoding: PlyEncoding) -> Vec<u8> {
    let xyz_single = cloud.points().iter().all(|p| p.iter().all(|v| exact_f32(*v)));
    let conf_single = cloud.confidence().iter().all(|v| exact_f32(*v));
    let ty = |single: bool| if single { "float" } else { "double" };

    let mut out = Vec::new();
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {format} 1.0\nelement vertex {}\n", cloud.len());
    for axis in ["x", "y", "z"] {
        header += &format!("property {} {axis}\n", ty(xyz_single));
    }
    header += &format!("property {} confidence\n", ty(conf_single));
    if cloud.colors().is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    if cloud.source_frames().is_some() {
        header += "property uint frame\n";
    }
    header += "end_header\n";
    out.extend_from_slice(header.as_bytes());

    let put = |out: &mut Vec<u8>, v: f64, single: bool| match encoding {
        PlyEncoding::Ascii => {
            if single {
                write!(out, "{}", v as f32).unwrap();
            } else {
                write!(out, "{v}").unwrap();
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            if single {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    };
    let ascii = encoding == PlyEncoding::Ascii;
    for i in 0..cloud.len() {
        let p = cloud.points()[i];
        for a in 0..3 {
            put(&mut out, p[a], xyz_single);
            if ascii {
                out.push(b' ');
            }
        }
        put(&mut out, cloud.confidence()[i], conf_single);
        if let Some(c) = cloud.colors() {
            for v in c[i] {
                if ascii {
                    write!(out, " {v}").unwrap();
                } else {
                    out.push(v);
                }
            }
        }
        if let Some(f) = cloud.source_frames() {
            if ascii {
                write!(out, " {}", f[i]).unwrap();
            } else {
                out.extend_from_slice(&f[i].to_le_bytes());
            }
        }
        if ascii {
            out.push(b'\n');
        }
    }
    out
}

pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ply(cloud, encoding)).map_err(|e| Error::io(path, e))
}
