//! OBJ / STL / PLY reading and writing.
//!
//! Text formats weld vertices closer than 1e-9 mm; binary STL welds exact
//! bitwise duplicates only.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

const TEXT_WELD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    /// STL; ASCII or binary is sniffed on load, binary is written.
    Stl,
    StlAscii,
    StlBinary,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        ext.parse()
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(Self::Obj),
            "stl" => Ok(Self::Stl),
            "stl-ascii" | "stla" => Ok(Self::StlAscii),
            "stl-binary" | "stlb" => Ok(Self::StlBinary),
            "ply" => Ok(Self::Ply),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for MeshFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Obj => "obj",
            Self::Stl => "stl",
            Self::StlAscii => "stl-ascii",
            Self::StlBinary => "stl-binary",
            Self::Ply => "ply",
        };
        f.write_str(s)
    }
}

/// Loads a mesh; `format` overrides extension-based detection.
pub fn load_mesh<T: Real>(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<Mesh<T>> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (points, tris) = match format {
        MeshFormat::Obj => parse_obj(path, &text(path, &bytes)?)?,
        MeshFormat::Ply => parse_ply(path, &text(path, &bytes)?)?,
        MeshFormat::StlAscii => parse_stl_ascii(path, &text(path, &bytes)?)?,
        MeshFormat::StlBinary => parse_stl_binary(path, &bytes)?,
        MeshFormat::Stl => {
            if looks_binary_stl(&bytes) {
                parse_stl_binary(path, &bytes)?
            } else {
                parse_stl_ascii(path, &text(path, &bytes)?)?
            }
        }
    };
    if tris.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let vertices = points
        .into_iter()
        .map(|p| Point3::new(T::lit(p[0]), T::lit(p[1]), T::lit(p[2])))
        .collect();
    Mesh::new(vertices, tris)
}

pub fn save_mesh<T: Real>(mesh: &Mesh<T>, path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<()> {
    let path = path.as_ref();
    if mesh.triangle_count() == 0 {
        return Err(Error::EmptyMesh);
    }
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MeshFormat::Obj => write_obj(mesh, &mut w),
        MeshFormat::Ply => write_ply(mesh, &mut w),
        MeshFormat::StlAscii => write_stl_ascii(mesh, &mut w),
        MeshFormat::Stl | MeshFormat::StlBinary => write_stl_binary(mesh, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn text<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.into(),
        line: 0,
        message: "file is not valid UTF-8 text".into(),
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(path, line, "missing coordinate"))?;
    let v: f64 = tok.parse().map_err(|_| parse_err(path, line, format!("bad number `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, "non-finite coordinate"));
    }
    Ok(v)
}

/// Welds points within `tol` (exact match for `tol == 0`) and drops faces that
/// collapse.
struct Welder {
    tol: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    exact: HashMap<[u64; 3], usize>,
    points: Vec<[f64; 3]>,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            cells: HashMap::new(),
            exact: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn insert(&mut self, p: [f64; 3]) -> usize {
        if self.tol == 0.0 {
            let key = p.map(|x| (x + 0.0).to_bits());
            return *self.exact.entry(key).or_insert_with(|| {
                self.points.push(p);
                self.points.len() - 1
            });
        }
        let cell = p.map(|x| (x / self.tol).floor() as i64);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [cell[0] + dx, cell[1] + dy, cell[2] + dz];
                    if let Some(ids) = self.cells.get(&key) {
                        for &id in ids {
                            let q = self.points[id];
                            let d2 = (0..3).map(|k| (q[k] - p[k]).powi(2)).sum::<f64>();
                            if d2 <= self.tol * self.tol {
                                return id;
                            }
                        }
                    }
                }
            }
        }
        self.points.push(p);
        let id = self.points.len() - 1;
        self.cells.entry(cell).or_default().push(id);
        id
    }
}

fn push_face(tris: &mut Vec<[usize; 3]>, f: [usize; 3]) {
    if f[0] != f[1] && f[1] != f[2] && f[2] != f[0] {
        tris.push(f);
    }
}

type Parsed = (Vec<[f64; 3]>, Vec<[usize; 3]>);

fn parse_obj(path: &Path, src: &str) -> Result<Parsed> {
    let mut raw = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    for (ln, line) in src.lines().enumerate() {
        let ln = ln + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let x = parse_f64(path, ln, tok.next())?;
                let y = parse_f64(path, ln, tok.next())?;
                let z = parse_f64(path, ln, tok.next())?;
                raw.push([x, y, z]);
            }
            Some("f") => {
                let idx: Vec<i64> = tok
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|s| s.parse::<i64>().ok())
                            .ok_or_else(|| parse_err(path, ln, format!("bad face index `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(path, ln, format!("{}-gon face; only triangles are supported", idx.len())));
                }
                faces.push((ln, [idx[0], idx[1], idx[2]]));
            }
            _ => {}
        }
    }
    let n = raw.len() as i64;
    let mut welder = Welder::new(TEXT_WELD_TOLERANCE);
    let remap: Vec<usize> = raw.iter().map(|&p| welder.insert(p)).collect();
    let mut tris = Vec::with_capacity(faces.len());
    for (ln, f) in faces {
        let mut out = [0usize; 3];
        for k in 0..3 {
            let i = if f[k] < 0 { n + f[k] } else { f[k] - 1 };
            if i < 0 || i >= n {
                return Err(parse_err(path, ln, format!("face references vertex {} of {}", f[k], n)));
            }
            out[k] = remap[i as usize];
        }
        push_face(&mut tris, out);
    }
    Ok((welder.points, tris))
}

fn parse_ply(path: &Path, src: &str) -> Result<Parsed> {
    let mut lines = src.lines().enumerate();
    let first = lines.next().map(|(_, l)| l.trim());
    if first != Some("ply") {
        return Err(parse_err(path, 1, "missing `ply` magic"));
    }
    let mut n_vertices = None;
    let mut n_faces = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut header_end = None;
    for (ln, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_err(path, ln + 1, "only ascii PLY is supported"));
                }
            }
            Some("element") => {
                current = tok.next().unwrap_or_default().to_string();
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, ln + 1, "bad element count"))?;
                match current.as_str() {
                    "vertex" => n_vertices = Some(count),
                    "face" => n_faces = Some(count),
                    _ => {}
                }
            }
            Some("property") if current == "vertex" => {
                vertex_props.push(tok.last().unwrap_or_default().to_string());
            }
            Some("end_header") => {
                header_end = Some(ln);
                break;
            }
            _ => {}
        }
    }
    header_end.ok_or_else(|| parse_err(path, 0, "missing end_header"))?;
    let nv = n_vertices.ok_or_else(|| parse_err(path, 0, "no vertex element"))?;
    let nf = n_faces.unwrap_or(0);
    let col = |name: &str| {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| parse_err(path, 0, format!("vertex property `{name}` missing")))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);

    let mut welder = Welder::new(TEXT_WELD_TOLERANCE);
    let mut remap = Vec::with_capacity(nv);
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    for _ in 0..nv {
        let (ln, line) = body.next().ok_or_else(|| parse_err(path, 0, "truncated vertex list"))?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        let x = parse_f64(path, ln + 1, vals.get(cx).copied())?;
        let y = parse_f64(path, ln + 1, vals.get(cy).copied())?;
        let z = parse_f64(path, ln + 1, vals.get(cz).copied())?;
        remap.push(welder.insert([x, y, z]));
    }
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, line) = body.next().ok_or_else(|| parse_err(path, 0, "truncated face list"))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(path, ln + 1, format!("bad index `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.first() != Some(&3) || vals.len() != 4 {
            return Err(parse_err(path, ln + 1, "only triangular faces are supported"));
        }
        let mut f = [0usize; 3];
        for k in 0..3 {
            let i = vals[k + 1];
            if i >= nv {
                return Err(parse_err(path, ln + 1, format!("face references vertex {i} of {nv}")));
            }
            f[k] = remap[i];
        }
        push_face(&mut tris, f);
    }
    Ok((welder.points, tris))
}

fn parse_stl_ascii(path: &Path, src: &str) -> Result<Parsed> {
    let mut welder = Welder::new(TEXT_WELD_TOLERANCE);
    let mut tris = Vec::new();
    let mut corner = Vec::with_capacity(3);
    for (ln, line) in src.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("vertex") => {
                let x = parse_f64(path, ln + 1, tok.next())?;
                let y = parse_f64(path, ln + 1, tok.next())?;
                let z = parse_f64(path, ln + 1, tok.next())?;
                corner.push(welder.insert([x, y, z]));
            }
            Some("endloop") => {
                if corner.len() != 3 {
                    return Err(parse_err(path, ln + 1, "facet without exactly three vertices"));
                }
                push_face(&mut tris, [corner[0], corner[1], corner[2]]);
                corner.clear();
            }
            _ => {}
        }
    }
    Ok((welder.points, tris))
}

fn looks_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    bytes.len() == 84 + 50 * count
}

fn parse_stl_binary(path: &Path, bytes: &[u8]) -> Result<Parsed> {
    if !looks_binary_stl(bytes) {
        return Err(parse_err(path, 0, "binary STL size does not match its triangle count"));
    }
    let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let mut welder = Welder::new(0.0);
    let mut tris = Vec::with_capacity(count);
    let f = |o: usize| f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64;
    for t in 0..count {
        let base = 84 + 50 * t + 12;
        let mut face = [0usize; 3];
        for (k, slot) in face.iter_mut().enumerate() {
            let o = base + 12 * k;
            let p = [f(o), f(o + 4), f(o + 8)];
            if p.iter().any(|x| !x.is_finite()) {
                return Err(parse_err(path, 0, format!("non-finite coordinate in facet {t}")));
            }
            *slot = welder.insert(p);
        }
        push_face(&mut tris, face);
    }
    Ok((welder.points, tris))
}

fn write_obj<T: Real, W: Write>(mesh: &Mesh<T>, w: &mut W) -> std::io::Result<()> {
    for p in mesh.vertices() {
        writeln!(w, "v {} {} {}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64())?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

fn write_ply<T: Real, W: Write>(mesh: &Mesh<T>, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertex_count())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    writeln!(w, "element face {}", mesh.triangle_count())?;
    writeln!(w, "property list uchar int vertex_indices\nend_header")?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} {}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64())?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

fn facet_normal<T: Real>(mesh: &Mesh<T>, t: usize) -> [f64; 3] {
    let [a, b, c] = mesh.corner_positions(t);
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > T::zero() {
        let n = n / len;
        [n.x.as_f64(), n.y.as_f64(), n.z.as_f64()]
    } else {
        [0.0; 3]
    }
}

fn write_stl_ascii<T: Real, W: Write>(mesh: &Mesh<T>, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "solid mesh")?;
    for t in 0..mesh.triangle_count() {
        let n = facet_normal(mesh, t);
        writeln!(w, "  facet normal {} {} {}\n    outer loop", n[0], n[1], n[2])?;
        for p in mesh.corner_positions(t) {
            writeln!(w, "      vertex {} {} {}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64())?;
        }
        writeln!(w, "    endloop\n  endfacet")?;
    }
    writeln!(w, "endsolid mesh")
}

fn write_stl_binary<T: Real, W: Write>(mesh: &Mesh<T>, w: &mut W) -> std::io::Result<()> {
    let mut header = [0u8; 80];
    let tag = b"isoscallop binary stl";
    header[..tag.len()].copy_from_slice(tag);
    w.write_all(&header)?;
    w.write_all(&(mesh.triangle_count() as u32).to_le_bytes())?;
    for t in 0..mesh.triangle_count() {
        for x in facet_normal(mesh, t) {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        for p in mesh.corner_positions(t) {
            for x in [p.x, p.y, p.z] {
                w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
            }
        }
        w.write_all(&0u16.to_le_bytes())?;
    }
    Ok(())
}
