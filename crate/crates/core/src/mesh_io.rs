//! OBJ and binary little-endian PLY reading and writing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};

#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    /// Zero-area faces removed during validation.
    pub dropped_faces: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<LoadedMesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = BufReader::new(File::open(path)?);
    let (vertices, faces) = match format {
        MeshFormat::Obj => read_obj(&mut reader, path)?,
        MeshFormat::Ply => read_ply(&mut reader, path)?,
    };
    let (mesh, dropped_faces) = TriangleMesh::from_raw(vertices, faces).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if dropped_faces > 0 {
        log::warn!("{}: dropped {dropped_faces} degenerate faces", path.display());
    }
    Ok(LoadedMesh {
        mesh,
        dropped_faces,
    })
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let format = MeshFormat::from_path(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        MeshFormat::Obj => write_obj(mesh, &mut w)?,
        MeshFormat::Ply => write_ply(mesh, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {}", message.into()),
    }
}

fn read_obj(reader: &mut impl BufRead, path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    *slot = it
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| parse_err(path, lineno + 1, "bad vertex record"))?;
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::with_capacity(4);
                for tok in it {
                    let idx = tok.split('/').next().unwrap_or("");
                    let i: i64 = idx
                        .parse()
                        .map_err(|_| parse_err(path, lineno + 1, format!("bad face index {tok:?}")))?;
                    let n = vertices.len() as i64;
                    // OBJ indices are 1-based; negatives are relative to the end
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if resolved < 0 || resolved >= n {
                        return Err(parse_err(
                            path,
                            lineno + 1,
                            format!("face references vertex {i} of {n}"),
                        ));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, lineno + 1, "face with fewer than 3 vertices"));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn write_obj(mesh: &TriangleMesh, w: &mut impl Write) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(s: &str) -> Option<Scalar> {
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

    fn read(self, r: &mut impl Read) -> std::io::Result<f64> {
        Ok(match self {
            Scalar::I8 => i8::from_le_bytes(read_n(r)?) as f64,
            Scalar::U8 => u8::from_le_bytes(read_n(r)?) as f64,
            Scalar::I16 => i16::from_le_bytes(read_n(r)?) as f64,
            Scalar::U16 => u16::from_le_bytes(read_n(r)?) as f64,
            Scalar::I32 => i32::from_le_bytes(read_n(r)?) as f64,
            Scalar::U32 => u32::from_le_bytes(read_n(r)?) as f64,
            Scalar::F32 => f32::from_le_bytes(read_n(r)?) as f64,
            Scalar::F64 => f64::from_le_bytes(read_n(r)?),
        })
    }
}

fn read_n<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn read_ply(reader: &mut impl BufRead, path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        message: msg.to_string(),
    };
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing ply magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut binary_le = false;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(bad("unterminated header"));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "binary_little_endian", _] => binary_le = true,
            ["format", ..] => return Err(bad("only binary_little_endian PLY is supported")),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ct = Scalar::parse(ct).ok_or_else(|| bad("bad list count type"))?;
                let it = Scalar::parse(it).ok_or_else(|| bad("bad list item type"))?;
                el.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad("bad property type"))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    if !binary_le {
        return Err(bad("missing format line"));
    }

    let truncated = |_| bad("truncated body");
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = ty.read(reader).map_err(truncated)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = ct.read(reader).map_err(truncated)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(it.read(reader).map_err(truncated)?);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(bad("face with fewer than 3 vertices"));
                            }
                            for k in 1..n - 1 {
                                faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    let n = vertices.len() as u32;
    if faces.iter().flatten().any(|&i| i >= n) {
        return Err(bad("face references a missing vertex"));
    }
    Ok((vertices, faces))
}

fn write_ply(mesh: &TriangleMesh, w: &mut impl Write) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )?;
    for v in &mesh.vertices {
        for c in v.iter() {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    for f in &mesh.faces {
        w.write_all(&[3u8])?;
        for &i in f {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes an oriented point cloud as binary PLY with `nx, ny, nz` properties.
pub fn save_point_cloud(points: &[Vec3], normals: &[Vec3], path: impl AsRef<Path>) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    if points.len() != normals.len() {
        return Err(Error::InvalidMap("points and normals differ in length".into()));
    }
    let mut w = BufWriter::new(File::create(&path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nend_header\n",
        points.len()
    )?;
    for (p, n) in points.iter().zip(normals) {
        for c in p.iter().chain(n.iter()) {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
