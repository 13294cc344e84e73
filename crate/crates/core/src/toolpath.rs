//! Iso-level extraction of cutter-contact paths and their export.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;

/// Where a path point sits on the mesh: on edge `(a, b)` with `a < b` at
/// parameter `t` from `a`, or on vertex `a` when `a == b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePoint {
    pub a: usize,
    pub b: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolPath<T: Real> {
    pub level: T,
    pub points: Vec<Point3<T>>,
    pub normals: Vec<Vector3<T>>,
    pub locations: Vec<EdgePoint>,
    /// Closed paths do not repeat their first point.
    pub closed: bool,
}

impl<T: Real> ToolPath<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> T {
        let mut sum = self.points.windows(2).fold(T::zero(), |acc, w| acc + (w[1] - w[0]).norm());
        if self.closed && self.points.len() > 2 {
            sum += (self.points[0] - self.points[self.points.len() - 1]).norm();
        }
        sum
    }
}

/// Parameters that produced a path set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolPathParams {
    pub cutter_radius: f64,
    pub scallop_height: f64,
    pub source: String,
    #[serde(default)]
    pub time_multiplier: Option<f64>,
    #[serde(default)]
    pub refine_iters: Option<usize>,
    #[serde(default)]
    pub solver_tol: Option<f64>,
}

/// Paths ordered by ascending level; path 0 is the source curve at level 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolPathSet<T: Real> {
    pub paths: Vec<ToolPath<T>>,
    pub params: ToolPathParams,
}

impl<T: Real> ToolPathSet<T> {
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.paths.iter().map(ToolPath::len).sum()
    }

    /// Distinct levels in path order.
    pub fn levels(&self) -> Vec<T> {
        let mut out: Vec<T> = Vec::new();
        for p in &self.paths {
            if out.last() != Some(&p.level) {
                out.push(p.level);
            }
        }
        out
    }
}

/// Cutter-location (ball centre) points of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct ClPath<T: Real> {
    pub level: T,
    pub points: Vec<Point3<T>>,
    pub closed: bool,
}

/// Source curve emitted as path 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePolyline {
    pub vertices: Vec<usize>,
    pub closed: bool,
}

/// `k sqrt(h)` for `k = 1 ..= floor(g_max / sqrt(h))`.
pub fn levels_for_scallop<T: Real>(g_max: T, h: T) -> Result<Vec<T>> {
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("scallop height must be positive, got {h}")));
    }
    if !(g_max > T::zero()) {
        return Ok(Vec::new());
    }
    let step = h.sqrt();
    let count = (g_max / step).floor().to_usize().unwrap_or(0);
    Ok((1..=count).map(|k| T::from_usize_lossy(k) * step).collect())
}

/// One polyline of an iso-level before it becomes a tool path.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoCurve<T: Real> {
    pub points: Vec<Point3<T>>,
    pub normals: Vec<Vector3<T>>,
    pub locations: Vec<EdgePoint>,
    pub closed: bool,
}

/// Marching triangles at `level` with vertices lying exactly on it raised by
/// `1e-12 |level|`.
pub fn extract_iso_curves<T: Real>(
    mesh: &Mesh<T>,
    vertex_normals: &[Vector3<T>],
    g: &[T],
    level: T,
) -> Vec<IsoCurve<T>> {
    let nudge = (level.abs() * T::lit(1e-12)).max(T::epsilon());
    extract_level(mesh, vertex_normals, g, level, nudge)
}

pub fn extract_level<T: Real>(
    mesh: &Mesh<T>,
    vertex_normals: &[Vector3<T>],
    g: &[T],
    level: T,
    nudge: T,
) -> Vec<IsoCurve<T>> {
    let value = |v: usize| if g[v] == level { g[v] + nudge } else { g[v] };
    let above = |v: usize| value(v) > level;

    // segment per straddling triangle, from its entry edge to its exit edge
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut starting_at: Vec<Option<usize>> = vec![None; mesh.edges().len()];
    let mut ends_at: Vec<bool> = vec![false; mesh.edges().len()];
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle(t);
        let up = tri.map(above);
        if up[0] == up[1] && up[1] == up[2] {
            continue;
        }
        let mut entry = None;
        let mut exit = None;
        for c in 0..3 {
            let h = 3 * t + c;
            match (up[c], up[(c + 1) % 3]) {
                (false, true) => entry = Some(mesh.edge_of_halfedge(h)),
                (true, false) => exit = Some(mesh.edge_of_halfedge(h)),
                _ => {}
            }
        }
        if let (Some(a), Some(b)) = (entry, exit) {
            starting_at[a] = Some(segments.len());
            ends_at[b] = true;
            segments.push((a, b));
        }
    }

    let crossing = |e: usize| -> (Point3<T>, Vector3<T>, EdgePoint) {
        let [a, b] = mesh.edges()[e];
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let (ga, gb) = (value(a), value(b));
        let t = (level - ga) / (gb - ga);
        let p = mesh.position(a) + (mesh.position(b) - mesh.position(a)) * t;
        let n = vertex_normals[a] * (T::one() - t) + vertex_normals[b] * t;
        let len = n.norm();
        let n = if len > T::zero() { n / len } else { vertex_normals[a] };
        (p, n, EdgePoint { a, b, t: t.as_f64() })
    };

    let mut used = vec![false; segments.len()];
    let mut curves = Vec::new();
    let walk = |first: usize, used: &mut Vec<bool>| -> IsoCurve<T> {
        let mut edges = vec![segments[first].0];
        let mut s = first;
        let mut closed = false;
        loop {
            used[s] = true;
            let end = segments[s].1;
            match starting_at[end] {
                Some(next) if next == first => {
                    closed = true;
                    break;
                }
                Some(next) if !used[next] => {
                    edges.push(end);
                    s = next;
                }
                _ => {
                    edges.push(end);
                    break;
                }
            }
        }
        let mut curve = IsoCurve {
            points: Vec::with_capacity(edges.len()),
            normals: Vec::with_capacity(edges.len()),
            locations: Vec::with_capacity(edges.len()),
            closed,
        };
        for e in edges {
            let (p, n, loc) = crossing(e);
            curve.points.push(p);
            curve.normals.push(n);
            curve.locations.push(loc);
        }
        curve
    };
    // open chains start where no segment ends
    for s in 0..segments.len() {
        if !used[s] && !ends_at[segments[s].0] {
            curves.push(walk(s, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            curves.push(walk(s, &mut used));
        }
    }
    curves
}

/// Path 0 from the source curve, then every `k sqrt(h)` level, longest
/// polyline first within a level. Only extraction; no solver runs here.
pub fn generate_toolpaths<T: Real>(
    mesh: &Mesh<T>,
    vertex_normals: &[Vector3<T>],
    g: &[T],
    h: T,
    source: &SourcePolyline,
    params: ToolPathParams,
) -> Result<ToolPathSet<T>> {
    if g.len() != mesh.vertex_count() {
        return Err(Error::InvalidParameter(format!(
            "scalar field has {} values for {} vertices",
            g.len(),
            mesh.vertex_count()
        )));
    }
    let g_max = g.iter().fold(T::zero(), |m, &v| m.max(v));
    let levels = levels_for_scallop(g_max, h)?;
    let nudge = h.sqrt() * T::lit(1e-12);
    let mut paths = vec![ToolPath {
        level: T::zero(),
        points: source.vertices.iter().map(|&v| *mesh.position(v)).collect(),
        normals: source.vertices.iter().map(|&v| vertex_normals[v]).collect(),
        locations: source.vertices.iter().map(|&v| EdgePoint { a: v, b: v, t: 0.0 }).collect(),
        closed: source.closed,
    }];
    for level in levels {
        let mut level_paths: Vec<ToolPath<T>> = extract_level(mesh, vertex_normals, g, level, nudge)
            .into_iter()
            .map(|c| ToolPath {
                level,
                points: c.points,
                normals: c.normals,
                locations: c.locations,
                closed: c.closed,
            })
            .collect();
        level_paths.sort_by(|a, b| b.length().partial_cmp(&a.length()).unwrap_or(std::cmp::Ordering::Equal));
        paths.extend(level_paths);
    }
    Ok(ToolPathSet { paths, params })
}

/// Ball centres `CC + r n`.
pub fn cc_to_cl<T: Real>(path: &ToolPath<T>, r: T) -> Result<ClPath<T>> {
    let tol = T::lit(1e-6).max(T::epsilon() * T::lit(16.0));
    let points = path
        .points
        .iter()
        .zip(&path.normals)
        .enumerate()
        .map(|(i, (p, n))| {
            if (n.norm() - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("normal {i} of path at level {} is not unit", path.level)));
            }
            Ok(p + n * r)
        })
        .collect::<Result<_>>()?;
    Ok(ClPath {
        level: path.level,
        points,
        closed: path.closed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExportFormat {
    Json,
    Csv,
    Svg,
    Gcode,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Svg => "svg",
            Self::Gcode => "nc",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            "gcode" | "nc" => Ok(Self::Gcode),
            other => Err(Error::InvalidParameter(format!("unknown export format `{other}`"))),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Svg => "svg",
            Self::Gcode => "gcode",
        })
    }
}

/// Projection axis for plots: the plot shows the other two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlotAxis {
    X,
    Y,
    #[default]
    Z,
}

impl PlotAxis {
    fn project<T: Real>(self, p: &Point3<T>) -> (f64, f64) {
        match self {
            Self::X => (p.y.as_f64(), p.z.as_f64()),
            Self::Y => (p.x.as_f64(), p.z.as_f64()),
            Self::Z => (p.x.as_f64(), p.y.as_f64()),
        }
    }
}

impl FromStr for PlotAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Self::X),
            "y" => Ok(Self::Y),
            "z" => Ok(Self::Z),
            other => Err(Error::InvalidParameter(format!("plot axis must be x, y or z, got `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PathRecord {
    id: usize,
    level: f64,
    closed: bool,
    points: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
    locations: Vec<EdgePoint>,
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    format: String,
    provenance: ToolPathParams,
    paths: Vec<PathRecord>,
}

const JSON_TAG: &str = "isoscallop-toolpaths/1";

fn triple<T: Real>(v: &[T]) -> [f64; 3] {
    [v[0].as_f64(), v[1].as_f64(), v[2].as_f64()]
}

pub fn toolpaths_to_json<T: Real>(set: &ToolPathSet<T>) -> Result<String> {
    let file = PathFile {
        format: JSON_TAG.into(),
        provenance: set.params.clone(),
        paths: set
            .paths
            .iter()
            .enumerate()
            .map(|(id, p)| PathRecord {
                id,
                level: p.level.as_f64(),
                closed: p.closed,
                points: p.points.iter().map(|q| triple(q.coords.as_slice())).collect(),
                normals: p.normals.iter().map(|n| triple(n.as_slice())).collect(),
                locations: p.locations.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidParameter(e.to_string()))
}

pub fn toolpaths_from_json<T: Real>(text: &str) -> Result<ToolPathSet<T>> {
    let parse_err = |message: String| Error::Parse {
        path: "<toolpaths>".into(),
        line: 0,
        message,
    };
    let file: PathFile = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    if file.format != JSON_TAG {
        return Err(parse_err(format!("unexpected format tag `{}`", file.format)));
    }
    let v3 = |a: &[f64; 3]| Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
    Ok(ToolPathSet {
        params: file.provenance,
        paths: file
            .paths
            .into_iter()
            .map(|r| ToolPath {
                level: T::lit(r.level),
                points: r.points.iter().map(|a| Point3::from(v3(a))).collect(),
                normals: r.normals.iter().map(v3).collect(),
                locations: r.locations,
                closed: r.closed,
            })
            .collect(),
    })
}

pub fn read_toolpaths<T: Real>(path: &Path) -> Result<ToolPathSet<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toolpaths_from_json(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

fn to_csv<T: Real>(set: &ToolPathSet<T>) -> String {
    let mut out = String::from("path_id,point_index,x,y,z,nx,ny,nz\n");
    for (id, p) in set.paths.iter().enumerate() {
        for (i, (q, n)) in p.points.iter().zip(&p.normals).enumerate() {
            out.push_str(&format!("{id},{i},{},{},{},{},{},{}\n", q.x, q.y, q.z, n.x, n.y, n.z));
        }
    }
    out
}

fn to_svg<T: Real>(set: &ToolPathSet<T>, axis: PlotAxis) -> String {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in set.paths.iter().flat_map(|p| &p.points) {
        let (x, y) = axis.project(p);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
    }
    let margin = 0.02 * (x1 - x0).max(y1 - y0).max(1e-9);
    let (w, h) = (x1 - x0 + 2.0 * margin, y1 - y0 + 2.0 * margin);
    let stroke = 0.002 * w.max(h);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"800\" height=\"{}\">\n",
        (800.0 * h / w).round()
    );
    for (id, p) in set.paths.iter().enumerate() {
        let pts: Vec<String> = p
            .points
            .iter()
            .map(|q| {
                let (x, y) = axis.project(q);
                format!("{:.6},{:.6}", x - x0 + margin, y1 - y + margin)
            })
            .collect();
        let tag = if p.closed { "polygon" } else { "polyline" };
        let colour = if id == 0 { "#c00" } else { "#024" };
        out.push_str(&format!(
            "  <{tag} data-path=\"{id}\" data-level=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"{stroke}\" points=\"{}\"/>\n",
            p.level,
            pts.join(" ")
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn to_gcode<T: Real>(set: &ToolPathSet<T>) -> Result<String> {
    let r = T::lit(set.params.cutter_radius);
    let mut out = String::new();
    out.push_str("(isoscallop ball-end cutter-location program)\n");
    out.push_str(&format!(
        "(cutter radius {} mm, scallop height {} mm, feed in #1)\n",
        set.params.cutter_radius, set.params.scallop_height
    ));
    out.push_str("G21 G90\n");
    for (id, p) in set.paths.iter().enumerate() {
        if p.is_empty() {
            continue;
        }
        let cl = cc_to_cl(p, r)?;
        out.push_str(&format!("(path {id} level {})\n", p.level));
        let q = cl.points[0];
        out.push_str(&format!("G0 X{:.6} Y{:.6} Z{:.6}\n", q.x.as_f64(), q.y.as_f64(), q.z.as_f64()));
        let mut rest: Vec<&Point3<T>> = cl.points.iter().skip(1).collect();
        if cl.closed {
            rest.push(&cl.points[0]);
        }
        for (i, q) in rest.into_iter().enumerate() {
            let feed = if i == 0 { " F#1" } else { "" };
            out.push_str(&format!("G1 X{:.6} Y{:.6} Z{:.6}{feed}\n", q.x.as_f64(), q.y.as_f64(), q.z.as_f64()));
        }
    }
    out.push_str("M2\n");
    Ok(out)
}

/// Writes `set` in `format`; `axis` only affects plots.
pub fn export_toolpaths<T: Real>(set: &ToolPathSet<T>, path: &Path, format: ExportFormat, axis: PlotAxis) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("no tool paths to export".into()));
    }
    let text = match format {
        ExportFormat::Json => toolpaths_to_json(set)?,
        ExportFormat::Csv => to_csv(set),
        ExportFormat::Svg => to_svg(set, axis),
        ExportFormat::Gcode => to_gcode(set)?,
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
