//! Minimal PLY reader shared by the point-cloud and mesh loaders.
//!
//! Supports `format ascii 1.0` and `format binary_little_endian 1.0`.
//! Vertex scalar properties are widened to `f64`; the face element's first
//! list property is returned as index polygons. Other elements are skipped.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PlyError {
    #[error("{0}: {1}")]
    Malformed(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
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

    fn read(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, kind: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Parsed PLY contents: vertex property columns plus raw index polygons.
#[derive(Debug, Default)]
pub struct PlyFile {
    pub vertex_props: Vec<String>,
    /// One column of length `vertex_count` per entry of `vertex_props`.
    pub vertex_data: Vec<Vec<f64>>,
    pub faces: Vec<Vec<u32>>,
}

impl PlyFile {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.vertex_props
            .iter()
            .position(|p| p == name)
            .map(|i| self.vertex_data[i].as_slice())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_data.first().map_or(0, Vec::len)
    }
}

pub fn read_ply(path: &Path) -> Result<PlyFile, PlyError> {
    let bytes = std::fs::read(path)?;
    let label = path.display().to_string();
    let err = |msg: &str| PlyError::Malformed(label.clone(), msg.to_string());

    let mut cursor = 0usize;
    let next_line = |cursor: &mut usize| -> Option<String> {
        if *cursor >= bytes.len() {
            return None;
        }
        let start = *cursor;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| start + i);
        *cursor = end + 1;
        Some(String::from_utf8_lossy(&bytes[start..end]).trim_end_matches('\r').to_string())
    };

    match next_line(&mut cursor) {
        Some(magic) if magic.trim() == "ply" => {}
        _ => return Err(err("missing ply magic")),
    }

    let mut ascii = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line(&mut cursor).ok_or_else(|| err("unterminated header"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                ascii = match tokens.get(1).copied() {
                    Some("ascii") => Some(true),
                    Some("binary_little_endian") => Some(false),
                    other => {
                        return Err(err(&format!("unsupported format {:?}", other.unwrap_or(""))))
                    }
                };
            }
            Some("element") => {
                if tokens.len() != 3 {
                    return Err(err("malformed element line"));
                }
                let count: usize = tokens[2]
                    .parse()
                    .map_err(|_| err("bad element count"))?;
                elements.push(Element {
                    name: tokens[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err("property before element"))?;
                if tokens.get(1).copied() == Some("list") {
                    if tokens.len() != 5 {
                        return Err(err("malformed list property"));
                    }
                    let count = Scalar::parse(tokens[2]).ok_or_else(|| err("bad list count type"))?;
                    let item = Scalar::parse(tokens[3]).ok_or_else(|| err("bad list item type"))?;
                    element.properties.push(Property::List {
                        name: tokens[4].to_string(),
                        count,
                        item,
                    });
                } else {
                    if tokens.len() != 3 {
                        return Err(err("malformed property line"));
                    }
                    let kind = Scalar::parse(tokens[1]).ok_or_else(|| err("bad property type"))?;
                    element.properties.push(Property::Scalar {
                        name: tokens[2].to_string(),
                        kind,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(err(&format!("unexpected header keyword {other:?}"))),
        }
    }
    let ascii = ascii.ok_or_else(|| err("missing format line"))?;

    let mut out = PlyFile::default();
    for element in &elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        if is_vertex {
            for prop in &element.properties {
                if let Property::Scalar { name, .. } = prop {
                    out.vertex_props.push(name.clone());
                    out.vertex_data.push(Vec::with_capacity(element.count));
                }
            }
        }
        if ascii {
            for _ in 0..element.count {
                let line = next_line(&mut cursor).ok_or_else(|| err("unexpected end of data"))?;
                let mut values = line.split_whitespace();
                let mut col = 0usize;
                for prop in &element.properties {
                    match prop {
                        Property::Scalar { .. } => {
                            let v: f64 = values
                                .next()
                                .ok_or_else(|| err("short data row"))?
                                .parse()
                                .map_err(|_| err("non-numeric value"))?;
                            if is_vertex {
                                out.vertex_data[col].push(v);
                                col += 1;
                            }
                        }
                        Property::List { name, .. } => {
                            let n: usize = values
                                .next()
                                .ok_or_else(|| err("short data row"))?
                                .parse()
                                .map_err(|_| err("bad list count"))?;
                            let mut poly = Vec::with_capacity(n);
                            for _ in 0..n {
                                let v: f64 = values
                                    .next()
                                    .ok_or_else(|| err("short list"))?
                                    .parse()
                                    .map_err(|_| err("non-numeric index"))?;
                                poly.push(v as u32);
                            }
                            if is_face && name.starts_with("vertex_ind") {
                                out.faces.push(poly);
                            }
                        }
                    }
                }
            }
        } else {
            for _ in 0..element.count {
                let mut col = 0usize;
                for prop in &element.properties {
                    match prop {
                        Property::Scalar { kind, .. } => {
                            let size = kind.size();
                            if cursor + size > bytes.len() {
                                return Err(err("truncated binary data"));
                            }
                            let v = kind.read(&bytes[cursor..]);
                            cursor += size;
                            if is_vertex {
                                out.vertex_data[col].push(v);
                                col += 1;
                            }
                        }
                        Property::List { name, count, item } => {
                            let csize = count.size();
                            if cursor + csize > bytes.len() {
                                return Err(err("truncated binary data"));
                            }
                            let n = count.read(&bytes[cursor..]) as usize;
                            cursor += csize;
                            let total = n * item.size();
                            if cursor + total > bytes.len() {
                                return Err(err("truncated binary list"));
                            }
                            if is_face && name.starts_with("vertex_ind") {
                                let mut poly = Vec::with_capacity(n);
                                for j in 0..n {
                                    poly.push(item.read(&bytes[cursor + j * item.size()..]) as u32);
                                }
                                out.faces.push(poly);
                            }
                            cursor += total;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
