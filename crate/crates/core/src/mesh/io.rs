//! PLY (ascii / binary little-endian) and OBJ reading and writing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshFormat {
    PlyBinary,
    PlyAscii,
    Obj,
}

/// Serialized mesh plus anything lost on the way.
#[derive(Debug, Clone)]
pub struct EncodedMesh {
    pub bytes: Vec<u8>,
    pub warnings: Vec<String>,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedMesh(msg.into())
}

/// Loads PLY or OBJ, detected from the leading bytes.
pub fn load_mesh(bytes: &[u8]) -> Result<TriMesh> {
    let mesh = if bytes.starts_with(b"ply") {
        load_ply(bytes)?
    } else {
        load_obj(bytes)?
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn save_mesh(mesh: &TriMesh, format: MeshFormat) -> EncodedMesh {
    match format {
        MeshFormat::PlyBinary => EncodedMesh {
            bytes: write_ply(mesh, false),
            warnings: vec![],
        },
        MeshFormat::PlyAscii => EncodedMesh {
            bytes: write_ply(mesh, true),
            warnings: vec![],
        },
        MeshFormat::Obj => {
            let mut warnings = vec![];
            if mesh.vertex_colors.is_some() {
                warnings.push("OBJ output drops per-vertex colors".to_string());
            }
            EncodedMesh {
                bytes: write_obj(mesh),
                warnings,
            }
        }
    }
}

/// Binary little-endian PLY, the pipeline's interchange format.
pub fn ply_bytes(mesh: &TriMesh) -> Vec<u8> {
    write_ply(mesh, false)
}

fn write_ply(mesh: &TriMesh, ascii: bool) -> Vec<u8> {
    let colors = mesh.vertex_colors.as_ref();
    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(if ascii {
        "format ascii 1.0\n"
    } else {
        "format binary_little_endian 1.0\n"
    });
    header.push_str("comment flatlift\n");
    let _ = writeln!(header, "element vertex {}", mesh.vertices.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    let _ = writeln!(header, "element face {}", mesh.triangles.len());
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let mut out = header.into_bytes();
    if ascii {
        let mut body = String::new();
        for (i, v) in mesh.vertices.iter().enumerate() {
            let _ = write!(body, "{} {} {}", v[0] as f32, v[1] as f32, v[2] as f32);
            if let Some(c) = colors {
                let _ = write!(body, " {} {} {}", c[i][0], c[i][1], c[i][2]);
            }
            body.push('\n');
        }
        for t in &mesh.triangles {
            let _ = writeln!(body, "3 {} {} {}", t[0], t[1], t[2]);
        }
        out.extend_from_slice(body.as_bytes());
    } else {
        for (i, v) in mesh.vertices.iter().enumerate() {
            for c in v {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
            if let Some(c) = colors {
                out.extend_from_slice(&c[i]);
            }
        }
        for t in &mesh.triangles {
            out.push(3);
            for ix in t {
                out.extend_from_slice(&(*ix as i32).to_le_bytes());
            }
        }
    }
    out
}

fn write_obj(mesh: &TriMesh) -> Vec<u8> {
    let mut s = String::from("# flatlift\n");
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v[0] as f32, v[1] as f32, v[2] as f32);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s.into_bytes()
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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(malformed(format!("unknown PLY scalar type {other:?}"))),
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

type Row = Vec<Vec<f64>>;

fn load_ply(bytes: &[u8]) -> Result<TriMesh> {
    let header_end = find_subslice(bytes, b"end_header")
        .ok_or_else(|| malformed("PLY header has no end_header"))?;
    let mut body_start = header_end + b"end_header".len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| malformed("PLY header is not UTF-8"))?;

    let mut ascii = None;
    let mut elements: Vec<Element> = vec![];
    for line in header.lines().skip(1) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => ascii = Some(true),
            ["format", "binary_little_endian", _] => ascii = Some(false),
            ["format", other, _] => {
                return Err(malformed(format!("unsupported PLY format {other}")));
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| malformed(format!("bad element count {count:?}")))?,
                props: vec![],
            }),
            ["property", "list", count, item, name] => elements
                .last_mut()
                .ok_or_else(|| malformed("property before element"))?
                .props
                .push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| malformed("property before element"))?
                .props
                .push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                }),
            _ => return Err(malformed(format!("unrecognized PLY header line {line:?}"))),
        }
    }
    let ascii = ascii.ok_or_else(|| malformed("PLY header has no format line"))?;
    let body = &bytes[body_start..];

    let mut rows: Vec<Vec<Row>> = Vec::with_capacity(elements.len());
    if ascii {
        let text = std::str::from_utf8(body).map_err(|_| malformed("PLY body is not UTF-8"))?;
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            let t = tokens
                .next()
                .ok_or_else(|| malformed(format!("PLY body ended while reading {what}")))?;
            t.parse::<f64>()
                .map_err(|_| malformed(format!("bad PLY value {t:?} in {what}")))
        };
        for el in &elements {
            let mut el_rows = Vec::with_capacity(el.count);
            for _ in 0..el.count {
                let mut row = Vec::with_capacity(el.props.len());
                for p in &el.props {
                    match p {
                        Property::Scalar { .. } => row.push(vec![next(&el.name)?]),
                        Property::List { .. } => {
                            let n = next(&el.name)?;
                            if n < 0.0 || n.fract() != 0.0 {
                                return Err(malformed(format!("bad list length {n}")));
                            }
                            let items = (0..n as usize)
                                .map(|_| next(&el.name))
                                .collect::<Result<Vec<_>>>()?;
                            row.push(items);
                        }
                    }
                }
                el_rows.push(row);
            }
            rows.push(el_rows);
        }
    } else {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            let s = body
                .get(pos..pos + n)
                .ok_or_else(|| malformed(format!("PLY body ended while reading {what}")))?;
            pos += n;
            Ok(s)
        };
        for el in &elements {
            let mut el_rows = Vec::with_capacity(el.count.min(1 << 20));
            for _ in 0..el.count {
                let mut row = Vec::with_capacity(el.props.len());
                for p in &el.props {
                    match p {
                        Property::Scalar { ty, .. } => {
                            row.push(vec![ty.read_le(take(ty.size(), &el.name)?)])
                        }
                        Property::List { count, item, .. } => {
                            let n = count.read_le(take(count.size(), &el.name)?);
                            if n < 0.0 {
                                return Err(malformed(format!("negative list length {n}")));
                            }
                            let mut items = Vec::with_capacity(n as usize);
                            for _ in 0..n as usize {
                                items.push(item.read_le(take(item.size(), &el.name)?));
                            }
                            row.push(items);
                        }
                    }
                }
                el_rows.push(row);
            }
            rows.push(el_rows);
        }
    }

    let prop_index = |el: &Element, name: &str| {
        el.props.iter().position(|p| match p {
            Property::Scalar { name: n, .. } | Property::List { name: n, .. } => n == name,
        })
    };

    let mut vertices = vec![];
    let mut colors: Option<Vec<[u8; 3]>> = None;
    let mut triangles = vec![];
    for (el, el_rows) in elements.iter().zip(&rows) {
        match el.name.as_str() {
            "vertex" => {
                let xyz = ["x", "y", "z"].map(|n| prop_index(el, n));
                let [Some(xi), Some(yi), Some(zi)] = xyz else {
                    return Err(malformed("vertex element lacks x, y or z"));
                };
                let rgb = ["red", "green", "blue"].map(|n| prop_index(el, n));
                let has_rgb = rgb.iter().all(Option::is_some);
                let mut cols = Vec::new();
                for row in el_rows {
                    vertices.push([row[xi][0], row[yi][0], row[zi][0]]);
                    if has_rgb {
                        cols.push(rgb.map(|i| row[i.expect("checked")][0].clamp(0.0, 255.0) as u8));
                    }
                }
                if has_rgb {
                    colors = Some(cols);
                }
            }
            "face" => {
                let fi = prop_index(el, "vertex_indices")
                    .or_else(|| prop_index(el, "vertex_index"))
                    .ok_or_else(|| malformed("face element lacks vertex_indices"))?;
                for row in el_rows {
                    fan(&row[fi], &mut triangles)?;
                }
            }
            _ => {}
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
        vertex_colors: colors,
    })
}

fn fan(poly: &[f64], out: &mut Vec<[u32; 3]>) -> Result<()> {
    if poly.len() < 3 {
        return Err(malformed(format!("face with {} vertices", poly.len())));
    }
    let ix = poly
        .iter()
        .map(|&v| {
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                Err(malformed(format!("bad vertex index {v}")))
            } else {
                Ok(v as u32)
            }
        })
        .collect::<Result<Vec<u32>>>()?;
    for k in 1..ix.len() - 1 {
        out.push([ix[0], ix[k], ix[k + 1]]);
    }
    Ok(())
}

fn load_obj(bytes: &[u8]) -> Result<TriMesh> {
    let text = std::str::from_utf8(bytes).map_err(|_| malformed("OBJ is not UTF-8"))?;
    let mut vertices: Vec<[f64; 3]> = vec![];
    let mut triangles = vec![];
    for (lineno, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let coords: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| malformed(format!("line {}: bad vertex", lineno + 1)))?;
                if coords.len() != 3 {
                    return Err(malformed(format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let mut poly = vec![];
                for t in toks {
                    let first = t.split('/').next().unwrap_or("");
                    let raw: i64 = first
                        .parse()
                        .map_err(|_| malformed(format!("line {}: bad face index {t:?}", lineno + 1)))?;
                    let ix = match raw {
                        0 => {
                            return Err(malformed(format!(
                                "line {}: OBJ indices are 1-based, got 0",
                                lineno + 1
                            )))
                        }
                        r if r > 0 => r - 1,
                        r => vertices.len() as i64 + r,
                    };
                    if ix < 0 {
                        return Err(malformed(format!("line {}: index {raw} out of range", lineno + 1)));
                    }
                    poly.push(ix as f64);
                }
                fan(&poly, &mut triangles)?;
            }
            _ => {}
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
        vertex_colors: None,
    })
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}
