//! Mesh files: ASCII OBJ and ASCII / binary PLY.
//!
//! Writers keep full `f64` precision (PLY `double` properties, shortest
//! round-trip decimal in OBJ) so meshes survive a write/read cycle bit-exactly.
//! Normals are written only when present; PLY colors are `uchar` RGB.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{GeometryError, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// Reads an `.obj` or `.ply` file, chosen by extension.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh, GeometryError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(file);
    let mesh = match extension(path).as_str() {
        "obj" => read_obj(&mut reader),
        "ply" => read_ply(&mut reader),
        other => Err(GeometryError::Format(format!("unsupported mesh extension '{other}'"))),
    }?;
    mesh.validate()?;
    Ok(mesh)
}

/// Writes `.obj` or binary `.ply`, chosen by extension.
pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<(), GeometryError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    match extension(path).as_str() {
        "obj" => write_obj(&mut w, mesh),
        "ply" => write_ply(&mut w, mesh, PlyEncoding::BinaryLittleEndian),
        other => Err(GeometryError::Format(format!("unsupported mesh extension '{other}'"))),
    }?;
    w.flush().map_err(|e| io_err(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn io_err(path: &Path, e: std::io::Error) -> GeometryError {
    GeometryError::Io(format!("{}: {e}", path.display()))
}

fn fmt_err(line: usize, msg: impl Into<String>) -> GeometryError {
    GeometryError::Format(format!("line {line}: {}", msg.into()))
}

pub fn read_obj(reader: &mut impl BufRead) -> Result<TriMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut file_normals: Vec<Vector3<f64>> = Vec::new();
    let mut triangles = Vec::new();
    // Normal index referenced by each vertex, if the faces carry `v//vn`.
    let mut vertex_normal: Vec<Option<usize>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GeometryError::Io(e.to_string()))?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c = parse_floats::<3>(&mut it, lineno + 1)?;
                vertices.push(Point3::new(c[0], c[1], c[2]));
                vertex_normal.push(None);
            }
            Some("vn") => {
                let c = parse_floats::<3>(&mut it, lineno + 1)?;
                file_normals.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let v = resolve_obj_index(parts.next().unwrap_or(""), vertices.len(), lineno + 1)?;
                    let _vt = parts.next();
                    if let Some(vn) = parts.next().filter(|s| !s.is_empty()) {
                        let n = resolve_obj_index(vn, file_normals.len(), lineno + 1)?;
                        vertex_normal[v] = Some(n);
                    }
                    poly.push(v as u32);
                }
                if poly.len() < 3 {
                    return Err(fmt_err(lineno + 1, "face with fewer than 3 vertices"));
                }
                for k in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let normals = if !vertices.is_empty() && vertex_normal.iter().all(|n| n.is_some()) {
        Some(
            vertex_normal
                .iter()
                .map(|n| {
                    let v = file_normals[n.unwrap()];
                    let len = v.norm();
                    if (len - 1.0).abs() > 1e-6 && len > 0.0 {
                        v / len
                    } else {
                        v
                    }
                })
                .collect(),
        )
    } else if vertices.len() == file_normals.len() && !vertices.is_empty() && triangles.is_empty() {
        Some(file_normals)
    } else {
        None
    };
    Ok(TriMesh {
        vertices,
        triangles,
        normals,
        colors: None,
    })
}

fn resolve_obj_index(tok: &str, count: usize, line: usize) -> Result<usize, GeometryError> {
    let i: i64 = tok
        .parse()
        .map_err(|_| fmt_err(line, format!("bad index '{tok}'")))?;
    let idx = if i < 0 { count as i64 + i } else { i - 1 };
    if idx < 0 || idx as usize >= count {
        return Err(fmt_err(line, format!("index {i} out of range")));
    }
    Ok(idx as usize)
}

fn parse_floats<const N: usize>(
    it: &mut std::str::SplitWhitespace<'_>,
    line: usize,
) -> Result<[f64; N], GeometryError> {
    let mut out = [0.0; N];
    for v in &mut out {
        let tok = it.next().ok_or_else(|| fmt_err(line, "missing coordinate"))?;
        *v = tok
            .parse()
            .map_err(|_| fmt_err(line, format!("bad number '{tok}'")))?;
    }
    Ok(out)
}

pub fn write_obj(w: &mut impl Write, mesh: &TriMesh) -> Result<(), GeometryError> {
    let io = |e: std::io::Error| GeometryError::Io(e.to_string());
    for p in &mesh.vertices {
        writeln!(w, "v {:?} {:?} {:?}", p.x, p.y, p.z).map_err(io)?;
    }
    if let Some(ns) = &mesh.normals {
        for n in ns {
            writeln!(w, "vn {:?} {:?} {:?}", n.x, n.y, n.z).map_err(io)?;
        }
        for t in &mesh.triangles {
            writeln!(
                w,
                "f {a}//{a} {b}//{b} {c}//{c}",
                a = t[0] + 1,
                b = t[1] + 1,
                c = t[2] + 1
            )
            .map_err(io)?;
        }
    } else {
        for t in &mesh.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(io)?;
        }
    }
    Ok(())
}

pub fn write_ply(w: &mut impl Write, mesh: &TriMesh, encoding: PlyEncoding) -> Result<(), GeometryError> {
    let io = |e: std::io::Error| GeometryError::Io(e.to_string());
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!(
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        mesh.vertices.len()
    );
    if mesh.normals.is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if mesh.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!(
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.triangles.len()
    ));
    w.write_all(header.as_bytes()).map_err(io)?;
    let to_byte = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
    for (i, p) in mesh.vertices.iter().enumerate() {
        let mut vals: Vec<f64> = vec![p.x, p.y, p.z];
        if let Some(ns) = &mesh.normals {
            vals.extend_from_slice(&[ns[i].x, ns[i].y, ns[i].z]);
        }
        let rgb = mesh.colors.as_ref().map(|cs| cs[i].map(to_byte));
        match encoding {
            PlyEncoding::Ascii => {
                let mut line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                if let Some(rgb) = rgb {
                    line.extend(rgb.iter().map(|b| b.to_string()));
                }
                writeln!(w, "{}", line.join(" ")).map_err(io)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in vals {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
                if let Some(rgb) = rgb {
                    w.write_all(&rgb).map_err(io)?;
                }
            }
        }
    }
    for t in &mesh.triangles {
        match encoding {
            PlyEncoding::Ascii => writeln!(w, "3 {} {} {}", t[0], t[1], t[2]).map_err(io)?,
            PlyEncoding::BinaryLittleEndian => {
                w.write_all(&[3u8]).map_err(io)?;
                for &v in t {
                    w.write_all(&(v as i32).to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    Ok(())
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Little,
    Big,
}

/// Source of PLY values for either encoding.
enum Values<'a, R: BufRead> {
    Ascii(std::vec::IntoIter<String>, &'a mut R),
    Binary(&'a mut R, bool),
}

impl<R: BufRead> Values<'_, R> {
    fn next(&mut self, ty: Scalar) -> Result<f64, GeometryError> {
        match self {
            Values::Ascii(tokens, reader) => loop {
                if let Some(t) = tokens.next() {
                    return t
                        .parse::<f64>()
                        .map_err(|_| GeometryError::Format(format!("bad PLY value '{t}'")));
                }
                let mut line = String::new();
                if reader
                    .read_line(&mut line)
                    .map_err(|e| GeometryError::Io(e.to_string()))?
                    == 0
                {
                    return Err(GeometryError::Format("unexpected end of PLY body".into()));
                }
                *tokens = line
                    .split_whitespace()
                    .map(str::to_owned)
                    .collect::<Vec<_>>()
                    .into_iter();
            },
            Values::Binary(reader, little) => {
                let mut buf = [0u8; 8];
                let n = ty.size();
                reader
                    .read_exact(&mut buf[..n])
                    .map_err(|e| GeometryError::Format(format!("truncated PLY body: {e}")))?;
                if !*little {
                    buf[..n].reverse();
                }
                let b = &buf;
                Ok(match ty {
                    Scalar::I8 => b[0] as i8 as f64,
                    Scalar::U8 => b[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F64 => f64::from_le_bytes(*b),
                })
            }
        }
    }
}

pub fn read_ply(reader: &mut impl BufRead) -> Result<TriMesh, GeometryError> {
    let io = |e: std::io::Error| GeometryError::Io(e.to_string());
    let mut line = String::new();
    reader.read_line(&mut line).map_err(io)?;
    if line.trim() != "ply" {
        return Err(GeometryError::Format("missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io)? == 0 {
            return Err(GeometryError::Format("unterminated PLY header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", f, _] => {
                encoding = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Little,
                    "binary_big_endian" => Encoding::Big,
                    other => return Err(GeometryError::Format(format!("unknown PLY format '{other}'"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| GeometryError::Format(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| GeometryError::Format("property before element".into()))?;
                let (c, i) = (Scalar::parse(count_ty), Scalar::parse(item_ty));
                match (c, i) {
                    (Some(c), Some(i)) => el.properties.push(Property::List(name.to_string(), c, i)),
                    _ => return Err(GeometryError::Format(format!("bad list property '{}'", line.trim()))),
                }
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| GeometryError::Format("property before element".into()))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| GeometryError::Format(format!("unknown PLY type '{ty}'")))?;
                el.properties.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let encoding = encoding.ok_or_else(|| GeometryError::Format("missing PLY format line".into()))?;
    let mut values = match encoding {
        Encoding::Ascii => Values::Ascii(Vec::new().into_iter(), reader),
        Encoding::Little => Values::Binary(reader, true),
        Encoding::Big => Values::Binary(reader, false),
    };

    let mut mesh = TriMesh::default();
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let names: Vec<&str> = el
            .properties
            .iter()
            .map(|p| match p {
                Property::Scalar(n, _) | Property::List(n, _, _) => n.as_str(),
            })
            .collect();
        let has = |n: &str| names.contains(&n);
        let has_normals = is_vertex && has("nx") && has("ny") && has("nz");
        let has_colors = is_vertex && has("red") && has("green") && has("blue");
        for _ in 0..el.count {
            let mut pos = [0.0; 3];
            let mut nrm = [0.0; 3];
            let mut rgb = [0.0; 3];
            for prop in &el.properties {
                match prop {
                    Property::Scalar(name, ty) => {
                        let v = values.next(*ty)?;
                        if is_vertex {
                            match name.as_str() {
                                "x" => pos[0] = v,
                                "y" => pos[1] = v,
                                "z" => pos[2] = v,
                                "nx" => nrm[0] = v,
                                "ny" => nrm[1] = v,
                                "nz" => nrm[2] = v,
                                "red" => rgb[0] = v,
                                "green" => rgb[1] = v,
                                "blue" => rgb[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, count_ty, item_ty) => {
                        let count = values.next(*count_ty)? as usize;
                        let mut items = Vec::with_capacity(count);
                        for _ in 0..count {
                            items.push(values.next(*item_ty)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if count < 3 {
                                return Err(GeometryError::Format("face with fewer than 3 vertices".into()));
                            }
                            for k in 1..count - 1 {
                                mesh.triangles
                                    .push([items[0] as u32, items[k] as u32, items[k + 1] as u32]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                mesh.vertices.push(Point3::new(pos[0], pos[1], pos[2]));
                if has_normals {
                    normals.push(Vector3::new(nrm[0], nrm[1], nrm[2]));
                }
                if has_colors {
                    let scale = if matches!(
                        el.properties.iter().find(|p| matches!(p, Property::Scalar(n, _) if n == "red")),
                        Some(Property::Scalar(_, Scalar::F32 | Scalar::F64))
                    ) {
                        1.0
                    } else {
                        255.0
                    };
                    colors.push(rgb.map(|c| c / scale));
                }
            }
        }
    }
    if !normals.is_empty() {
        mesh.normals = Some(normals);
    }
    if !colors.is_empty() {
        mesh.colors = Some(colors);
    }
    Ok(mesh)
}

/// Consumes any remaining bytes; used by tests to check the body was fully parsed.
#[cfg(test)]
fn drain(reader: &mut impl Read) -> usize {
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest).unwrap();
    rest.len()
}
