//! Wavefront OBJ and Stanford PLY reading and writing.
//!
//! OBJ: `v x y z` and `f i j k` records (1-based, negative indices relative);
//! polygons are fan-triangulated and all other records ignored. PLY: ASCII and
//! binary little/big endian; the `vertex` element must carry `x`, `y`, `z`
//! and the `face` element a list property of vertex indices.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::format(
                path.display().to_string(),
                0,
                "unknown mesh extension (expected .obj or .ply)",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

/// Loads a mesh; degenerate triangles are dropped with a logged warning.
pub fn load_mesh<T: Real>(path: &Path, format: MeshFormat) -> Result<TriMesh<T>> {
    let (mesh, dropped) = load_mesh_with_report(path, format)?;
    if !dropped.is_empty() {
        log::warn!(
            "{}: dropped {} degenerate triangle(s)",
            path.display(),
            dropped.len()
        );
    }
    Ok(mesh)
}

/// Loads a mesh and reports the file-order indices of dropped degenerate triangles.
pub fn load_mesh_with_report<T: Real>(
    path: &Path,
    format: MeshFormat,
) -> Result<(TriMesh<T>, Vec<usize>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let (verts, tris) = match format {
        MeshFormat::Obj => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::format(&ctx, 0, "OBJ file is not valid UTF-8"))?;
            parse_obj(&text, &ctx)?
        }
        MeshFormat::Ply => parse_ply(&bytes, &ctx)?,
    };
    let verts = verts
        .into_iter()
        .map(|[x, y, z]| Point3::new(T::lit(x), T::lit(y), T::lit(z)))
        .collect();
    TriMesh::from_parts(verts, tris)
}

type Parsed = (Vec<[f64; 3]>, Vec<[usize; 3]>);

pub(crate) fn parse_obj(text: &str, ctx: &str) -> Result<Parsed> {
    let mut verts = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let tok = it
                        .next()
                        .ok_or_else(|| Error::format(ctx, line_no, "vertex needs 3 coordinates"))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| Error::format(ctx, line_no, format!("bad coordinate {tok:?}")))?;
                }
                verts.push(c);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| Error::format(ctx, line_no, format!("bad face index {tok:?}")))?;
                    if i == 0 {
                        return Err(Error::format(ctx, line_no, "face index 0 (OBJ is 1-based)"));
                    }
                    idx.push(i);
                }
                if idx.len() < 3 {
                    return Err(Error::format(ctx, line_no, "face needs at least 3 vertices"));
                }
                faces.push((line_no, idx));
            }
            _ => {}
        }
    }
    let n = verts.len() as i64;
    let mut tris = Vec::new();
    for (line_no, idx) in faces {
        let resolved: Vec<usize> = idx
            .iter()
            .map(|&i| {
                let r = if i > 0 { i - 1 } else { n + i };
                if r < 0 || r >= n {
                    Err(Error::Index {
                        index: if i > 0 { i as usize } else { 0 },
                        len: n as usize,
                        context: format!("{ctx}: line {line_no}"),
                    })
                } else {
                    Ok(r as usize)
                }
            })
            .collect::<Result<_>>()?;
        for k in 1..resolved.len() - 1 {
            tris.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }
    Ok((verts, tris))
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

    fn read(self, b: &[u8], little: bool) -> f64 {
        macro_rules! rd {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().unwrap();
                (if little {
                    <$t>::from_le_bytes(arr)
                } else {
                    <$t>::from_be_bytes(arr)
                }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => rd!(i16, 2),
            Scalar::U16 => rd!(u16, 2),
            Scalar::I32 => rd!(i32, 4),
            Scalar::U32 => rd!(u32, 4),
            Scalar::F32 => rd!(f32, 4),
            Scalar::F64 => rd!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Single { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Binary { little: bool },
}

fn parse_ply(bytes: &[u8], ctx: &str) -> Result<Parsed> {
    // Header is ASCII up to and including the "end_header" line.
    let marker = b"end_header";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::format(ctx, 0, "missing end_header"))?;
    let mut body_start = pos + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..pos])
        .map_err(|_| Error::format(ctx, 0, "PLY header is not ASCII"))?;
    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::format(ctx, 1, "missing 'ply' magic")),
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines = 1;
    for (ln, line) in lines {
        header_lines = ln + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _ver] => {
                encoding = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Binary { little: true },
                    "binary_big_endian" => Encoding::Binary { little: false },
                    other => return Err(Error::format(ctx, ln + 1, format!("unknown format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::format(ctx, ln + 1, "bad element count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", cnt, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(ctx, ln + 1, "property before element"))?;
                let count = Scalar::parse(cnt)
                    .ok_or_else(|| Error::format(ctx, ln + 1, format!("unknown type {cnt}")))?;
                let item = Scalar::parse(item)
                    .ok_or_else(|| Error::format(ctx, ln + 1, format!("unknown type {item}")))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(ctx, ln + 1, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::format(ctx, ln + 1, format!("unknown type {ty}")))?;
                el.props.push(Property::Single {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(Error::format(ctx, ln + 1, format!("unrecognised header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format(ctx, 0, "missing format line"))?;
    let body = &bytes[body_start..];
    let mut verts = Vec::new();
    let mut faces = Vec::new();

    match encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| Error::format(ctx, header_lines + 1, "ASCII body is not UTF-8"))?;
            let mut lines = text
                .lines()
                .enumerate()
                .map(|(i, l)| (i + header_lines + 2, l))
                .filter(|(_, l)| !l.trim().is_empty());
            for el in &elements {
                for _ in 0..el.count {
                    let (ln, line) = lines
                        .next()
                        .ok_or_else(|| Error::format(ctx, 0, format!("truncated {} element", el.name)))?;
                    let mut toks = line.split_whitespace();
                    let mut next = || -> Result<f64> {
                        let t = toks
                            .next()
                            .ok_or_else(|| Error::format(ctx, ln, "too few values"))?;
                        t.parse()
                            .map_err(|_| Error::format(ctx, ln, format!("bad value {t:?}")))
                    };
                    read_record(el, &mut next, ln, ctx, &mut verts, &mut faces)?;
                }
            }
        }
        Encoding::Binary { little } => {
            let mut off = 0usize;
            for el in &elements {
                for rec in 0..el.count {
                    let mut next_typed = |ty: Scalar| -> Result<f64> {
                        if off + ty.size() > body.len() {
                            return Err(Error::format(ctx, 0, format!("truncated binary {} element {rec}", el.name)));
                        }
                        let v = ty.read(&body[off..], little);
                        off += ty.size();
                        Ok(v)
                    };
                    read_binary_record(el, &mut next_typed, rec, ctx, &mut verts, &mut faces)?;
                }
            }
        }
    }
    Ok((verts, faces))
}

fn check_vertex_props(el: &Element, ctx: &str) -> Result<[usize; 3]> {
    let find = |n: &str| {
        el.props
            .iter()
            .position(|p| matches!(p, Property::Single { name, .. } if name == n))
            .ok_or_else(|| Error::format(ctx, 0, format!("vertex element lacks property {n}")))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

fn push_face(idx: &[f64], faces: &mut Vec<[usize; 3]>, ctx: &str, line: usize) -> Result<()> {
    if idx.len() < 3 {
        return Err(Error::format(ctx, line, "face needs at least 3 vertices"));
    }
    let u: Vec<usize> = idx
        .iter()
        .map(|&v| {
            if v < 0.0 || v.fract() != 0.0 {
                Err(Error::format(ctx, line, format!("bad vertex index {v}")))
            } else {
                Ok(v as usize)
            }
        })
        .collect::<Result<_>>()?;
    for k in 1..u.len() - 1 {
        faces.push([u[0], u[k], u[k + 1]]);
    }
    Ok(())
}

fn is_face_list(name: &str) -> bool {
    name == "vertex_indices" || name == "vertex_index"
}

fn read_record(
    el: &Element,
    next: &mut dyn FnMut() -> Result<f64>,
    ln: usize,
    ctx: &str,
    verts: &mut Vec<[f64; 3]>,
    faces: &mut Vec<[usize; 3]>,
) -> Result<()> {
    let xyz = if el.name == "vertex" {
        Some(check_vertex_props(el, ctx)?)
    } else {
        None
    };
    let mut vals = [0.0; 3];
    for (pi, p) in el.props.iter().enumerate() {
        match p {
            Property::Single { .. } => {
                let v = next()?;
                if let Some(xyz) = xyz {
                    for k in 0..3 {
                        if xyz[k] == pi {
                            vals[k] = v;
                        }
                    }
                }
            }
            Property::List { name, .. } => {
                let n = next()?;
                let items: Vec<f64> = (0..n as usize).map(|_| next()).collect::<Result<_>>()?;
                if el.name == "face" && is_face_list(name) {
                    push_face(&items, faces, ctx, ln)?;
                }
            }
        }
    }
    if xyz.is_some() {
        verts.push(vals);
    }
    Ok(())
}

fn read_binary_record(
    el: &Element,
    next: &mut dyn FnMut(Scalar) -> Result<f64>,
    rec: usize,
    ctx: &str,
    verts: &mut Vec<[f64; 3]>,
    faces: &mut Vec<[usize; 3]>,
) -> Result<()> {
    let xyz = if el.name == "vertex" {
        Some(check_vertex_props(el, ctx)?)
    } else {
        None
    };
    let mut vals = [0.0; 3];
    for (pi, p) in el.props.iter().enumerate() {
        match p {
            Property::Single { ty, .. } => {
                let v = next(*ty)?;
                if let Some(xyz) = xyz {
                    for k in 0..3 {
                        if xyz[k] == pi {
                            vals[k] = v;
                        }
                    }
                }
            }
            Property::List { name, count, item } => {
                let n = next(*count)?;
                let items: Vec<f64> = (0..n as usize).map(|_| next(*item)).collect::<Result<_>>()?;
                if el.name == "face" && is_face_list(name) {
                    push_face(&items, faces, ctx, rec)?;
                }
            }
        }
    }
    if xyz.is_some() {
        verts.push(vals);
    }
    Ok(())
}

/// Writes a mesh. PLY output is ASCII with double-precision coordinates.
pub fn save_mesh<T: Real>(mesh: &TriMesh<T>, path: &Path, format: MeshFormat) -> Result<()> {
    let bytes = match format {
        MeshFormat::Obj => obj_string(mesh).into_bytes(),
        MeshFormat::Ply => ply_bytes(mesh, None, PlyEncoding::Ascii),
    };
    write_file(path, &bytes)
}

/// Writes a PLY mesh with one per-vertex scalar stored as the `quality` property.
pub fn save_ply_with_scalar<T: Real>(
    mesh: &TriMesh<T>,
    scalar: Option<&[f64]>,
    path: &Path,
    encoding: PlyEncoding,
) -> Result<()> {
    if let Some(s) = scalar {
        if s.len() != mesh.num_vertices() {
            return Err(Error::dimension(mesh.num_vertices(), s.len(), "per-vertex scalar field"));
        }
    }
    write_file(path, &ply_bytes(mesh, scalar, encoding))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn obj_string<T: Real>(mesh: &TriMesh<T>) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64());
    }
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    s
}

fn ply_bytes<T: Real>(mesh: &TriMesh<T>, scalar: Option<&[f64]>, encoding: PlyEncoding) -> Vec<u8> {
    let mut h = String::from("ply\n");
    h.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(h, "element vertex {}", mesh.num_vertices());
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if scalar.is_some() {
        h.push_str("property double quality\n");
    }
    let _ = writeln!(h, "element face {}", mesh.num_triangles());
    h.push_str("property list uchar int vertex_indices\nend_header\n");
    let mut out = h.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut s = String::new();
            for (i, v) in mesh.vertices().iter().enumerate() {
                let _ = write!(s, "{} {} {}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64());
                if let Some(q) = scalar {
                    let _ = write!(s, " {}", q[i]);
                }
                s.push('\n');
            }
            for [a, b, c] in mesh.triangles() {
                let _ = writeln!(s, "3 {a} {b} {c}");
            }
            out.extend_from_slice(s.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for (i, v) in mesh.vertices().iter().enumerate() {
                for c in [v.x, v.y, v.z] {
                    out.extend_from_slice(&c.as_f64().to_le_bytes());
                }
                if let Some(q) = scalar {
                    out.extend_from_slice(&q[i].to_le_bytes());
                }
            }
            for tri in mesh.triangles() {
                out.push(3);
                for &i in tri {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, body: &[u8]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        (dir, p)
    }

    #[test]
    fn minimal_obj() {
        let (_d, p) = tmp("m.obj", b"# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/2 3/3/3\n");
        let m: TriMesh<f64> = load_mesh(&p, MeshFormat::Obj).unwrap();
        assert_eq!(m.num_vertices(), 3);
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn obj_index_out_of_range() {
        let (_d, p) = tmp("m.obj", b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
        let err = load_mesh::<f64>(&p, MeshFormat::Obj).unwrap_err();
        assert!(matches!(err, Error::Index { index: 9, len: 3, .. }), "{err}");
    }

    #[test]
    fn obj_parse_error_carries_line() {
        let (_d, p) = tmp("m.obj", b"v 0 0 0\nv 1 zero 0\n");
        match load_mesh::<f64>(&p, MeshFormat::Obj).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn obj_quad_and_negative_indices() {
        let (_d, p) = tmp("m.obj", b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n");
        let m: TriMesh<f64> = load_mesh(&p, MeshFormat::Obj).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn ply_with_float_and_extra_props() {
        let body = b"ply\nformat ascii 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 0 0 0\n0 1 0 9\n3 0 1 2\n";
        let (_d, p) = tmp("m.ply", body);
        let m: TriMesh<f64> = load_mesh(&p, MeshFormat::Ply).unwrap();
        assert_eq!(m.num_vertices(), 3);
        assert_eq!(m.num_triangles(), 1);
    }

    #[test]
    fn binary_float32_ply() {
        let mut body = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for v in [[0f32, 0., 0.], [2., 0., 0.], [0., 2., 0.]] {
            for c in v {
                body.extend_from_slice(&c.to_le_bytes());
            }
        }
        body.push(3);
        for i in [0u32, 1, 2] {
            body.extend_from_slice(&i.to_le_bytes());
        }
        let (_d, p) = tmp("m.ply", &body);
        let m: TriMesh<f64> = load_mesh(&p, MeshFormat::Ply).unwrap();
        assert_eq!(m.vertices()[1].x, 2.0);
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn degenerate_triangle_dropped_on_load() {
        let (_d, p) = tmp("m.obj", b"v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n");
        let (m, dropped) = load_mesh_with_report::<f64>(&p, MeshFormat::Obj).unwrap();
        assert_eq!(dropped, vec![0]);
        assert_eq!(m.num_triangles(), 1);
    }

    #[test]
    fn scalar_ply_roundtrip_binary() {
        let m = TriMesh::new(
            vec![Point3::new(0.1, 0.2, 0.3), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.ply");
        save_ply_with_scalar(&m, Some(&[1.0, 2.0, 3.0]), &p, PlyEncoding::BinaryLittleEndian).unwrap();
        let back: TriMesh<f64> = load_mesh(&p, MeshFormat::Ply).unwrap();
        assert_eq!(back, m);
    }
}
