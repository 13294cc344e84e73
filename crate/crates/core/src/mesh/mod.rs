//! Indexed triangle mesh with halfedge adjacency and cached per-element geometry.
//!
//! Halfedge `3 * t + c` runs from corner `c` of triangle `t` to corner `c + 1`.
//! Twins are only linked across edges that are shared by exactly two triangles
//! with opposite winding; anything else shows up in [`ValidationReport`].

mod io;

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use io::{load_mesh, save_mesh, MeshFormat};

#[derive(Debug, Clone)]
pub struct Mesh<T: Real> {
    vertices: Vec<Point3<T>>,
    triangles: Vec<[usize; 3]>,
    twin: Vec<Option<usize>>,
    edge_of: Vec<usize>,
    edges: Vec<[usize; 2]>,
    ring_ptr: Vec<usize>,
    ring: Vec<usize>,
    star_ptr: Vec<usize>,
    star: Vec<usize>,
    boundary_vertex: Vec<bool>,
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh and its adjacency. Only index validity is enforced here;
    /// manifoldness and orientation are reported by [`validate_mesh`].
    pub fn new(vertices: Vec<Point3<T>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= n {
                    return Err(Error::InvalidIndex {
                        triangle: t,
                        index: i,
                        count: n,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[2] == tri[0] {
                return Err(Error::RepeatedIndex { triangle: t });
            }
        }

        let nh = triangles.len() * 3;
        let mut directed: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(nh);
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::with_capacity(nh);
        let mut edges = Vec::new();
        let mut edge_of = Vec::with_capacity(nh);
        for (t, tri) in triangles.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (tri[c], tri[(c + 1) % 3]);
                directed.entry((a, b)).or_default().push(3 * t + c);
                let key = (a.min(b), a.max(b));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
                edge_of.push(id);
            }
        }

        let mut twin = vec![None; nh];
        for (t, tri) in triangles.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (tri[c], tri[(c + 1) % 3]);
                let fwd = &directed[&(a, b)];
                if fwd.len() != 1 {
                    continue;
                }
                if let Some(back) = directed.get(&(b, a)) {
                    if back.len() == 1 {
                        twin[3 * t + c] = Some(back[0]);
                    }
                }
            }
        }

        let mut boundary_vertex = vec![false; n];
        for (h, tw) in twin.iter().enumerate() {
            if tw.is_none() {
                let tri = triangles[h / 3];
                boundary_vertex[tri[h % 3]] = true;
                boundary_vertex[tri[(h % 3 + 1) % 3]] = true;
            }
        }

        let mut rings: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &edges {
            rings[e[0]].push(e[1]);
            rings[e[1]].push(e[0]);
        }
        let (ring_ptr, ring) = flatten(rings, true);

        let mut stars: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                stars[v].push(t);
            }
        }
        let (star_ptr, star) = flatten(stars, false);

        Ok(Self {
            vertices,
            triangles,
            twin,
            edge_of,
            edges,
            ring_ptr,
            ring,
            star_ptr,
            star,
            boundary_vertex,
        })
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn position(&self, v: usize) -> &Point3<T> {
        &self.vertices[v]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn corner_positions(&self, t: usize) -> [Point3<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Twin of halfedge `h`, `None` on the boundary (or on a defective edge).
    pub fn twin(&self, h: usize) -> Option<usize> {
        self.twin[h]
    }

    pub fn next(&self, h: usize) -> usize {
        3 * (h / 3) + (h % 3 + 1) % 3
    }

    /// Origin vertex of halfedge `h`.
    pub fn origin(&self, h: usize) -> usize {
        self.triangles[h / 3][h % 3]
    }

    /// Destination vertex of halfedge `h`.
    pub fn target(&self, h: usize) -> usize {
        self.triangles[h / 3][(h % 3 + 1) % 3]
    }

    pub fn halfedge_count(&self) -> usize {
        self.twin.len()
    }

    /// Undirected edges as sorted vertex pairs, in first-encounter order.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_of_halfedge(&self, h: usize) -> usize {
        self.edge_of[h]
    }

    /// Sorted one-ring neighbours of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.ring[self.ring_ptr[v]..self.ring_ptr[v + 1]]
    }

    /// Triangles incident to `v`.
    pub fn incident_triangles(&self, v: usize) -> &[usize] {
        &self.star[self.star_ptr[v]..self.star_ptr[v + 1]]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn is_boundary_halfedge(&self, h: usize) -> bool {
        self.twin[h].is_none()
    }

    /// Whether the undirected edge `e` lies on the boundary.
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        // An edge is interior iff some halfedge of it has a twin.
        !self.edge_halfedges(e).iter().any(|&h| self.twin[h].is_some())
    }

    /// Halfedges mapping to the undirected edge `e`. Linear in the valence of
    /// the edge's first vertex.
    pub fn edge_halfedges(&self, e: usize) -> Vec<usize> {
        let [a, b] = self.edges[e];
        let mut out = Vec::with_capacity(2);
        for &t in self.incident_triangles(a) {
            for c in 0..3 {
                let h = 3 * t + c;
                let (o, d) = (self.origin(h), self.target(h));
                if (o == a && d == b) || (o == b && d == a) {
                    out.push(h);
                }
            }
        }
        out
    }

    /// Halfedge from `a` to `b`, if present.
    pub fn find_halfedge(&self, a: usize, b: usize) -> Option<usize> {
        self.incident_triangles(a).iter().find_map(|&t| {
            (0..3).map(|c| 3 * t + c).find(|&h| self.origin(h) == a && self.target(h) == b)
        })
    }

    /// Vertices within `rings` edge hops of `v`, excluding `v`, in BFS order.
    pub fn k_ring(&self, v: usize, rings: usize) -> Vec<usize> {
        let mut seen = vec![v];
        let mut frontier = vec![v];
        let mut out = Vec::new();
        for _ in 0..rings {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in self.neighbors(u) {
                    if !seen.contains(&w) {
                        seen.push(w);
                        next.push(w);
                        out.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        out
    }

    /// Connected components over the edge graph, one label per vertex.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let n = self.vertex_count();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &w in self.neighbors(u) {
                    if label[w] == usize::MAX {
                        label[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    /// Copy of the mesh in another scalar type.
    pub fn cast<U: Real>(&self) -> Mesh<U> {
        let vertices = self
            .vertices
            .iter()
            .map(|p| Point3::new(U::lit(p.x.as_f64()), U::lit(p.y.as_f64()), U::lit(p.z.as_f64())))
            .collect();
        Mesh::new(vertices, self.triangles.clone()).expect("indices already validated")
    }

    /// Same connectivity with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<T>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        let mut m = self.clone();
        m.vertices = vertices;
        Ok(m)
    }

    /// Drops unreferenced vertices and renumbers the rest in order.
    pub fn compacted(&self) -> Result<Self> {
        let mut remap = vec![usize::MAX; self.vertex_count()];
        let mut vertices = Vec::new();
        for tri in &self.triangles {
            for &v in tri {
                if remap[v] == usize::MAX {
                    remap[v] = 0;
                }
            }
        }
        for (v, slot) in remap.iter_mut().enumerate() {
            if *slot != usize::MAX {
                *slot = vertices.len();
                vertices.push(self.vertices[v]);
            }
        }
        let triangles = self
            .triangles
            .iter()
            .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
            .collect();
        Mesh::new(vertices, triangles)
    }

    pub fn total_area(&self) -> T {
        (0..self.triangle_count()).fold(T::zero(), |acc, t| {
            let [a, b, c] = self.corner_positions(t);
            acc + (b - a).cross(&(c - a)).norm() * T::lit(0.5)
        })
    }

    /// Euclidean lengths of the three halfedges of `t`; entry `c` is the edge
    /// from corner `c` to corner `c + 1`.
    pub fn edge_lengths(&self, t: usize) -> [T; 3] {
        let p = self.corner_positions(t);
        [(p[1] - p[0]).norm(), (p[2] - p[1]).norm(), (p[0] - p[2]).norm()]
    }
}

fn flatten(lists: Vec<Vec<usize>>, sort: bool) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = Vec::with_capacity(lists.len() + 1);
    let mut flat = Vec::new();
    ptr.push(0);
    for mut l in lists {
        if sort {
            l.sort_unstable();
            l.dedup();
        }
        flat.extend(l);
        ptr.push(flat.len());
    }
    (ptr, flat)
}

/// Findings of [`validate_mesh`]. Vertex fans that are not manifold are listed
/// for information only; they do not make a mesh invalid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub non_manifold_edges: Vec<[usize; 2]>,
    pub inconsistent_orientation: Vec<[usize; 2]>,
    pub degenerate_triangles: Vec<usize>,
    pub isolated_vertices: Vec<usize>,
    pub non_manifold_vertices: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.non_manifold_edges.is_empty()
            && self.inconsistent_orientation.is_empty()
            && self.degenerate_triangles.is_empty()
            && self.isolated_vertices.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} non-manifold edges, {} orientation conflicts, {} degenerate triangles, {} isolated vertices",
            self.non_manifold_edges.len(),
            self.inconsistent_orientation.len(),
            self.degenerate_triangles.len(),
            self.isolated_vertices.len()
        )
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self.summary()))
        }
    }
}

pub fn validate_mesh<T: Real>(mesh: &Mesh<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut uses = vec![0usize; mesh.edges.len()];
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for h in 0..mesh.halfedge_count() {
        uses[mesh.edge_of[h]] += 1;
        *directed.entry((mesh.origin(h), mesh.target(h))).or_default() += 1;
    }
    for (e, &u) in uses.iter().enumerate() {
        let [a, b] = mesh.edges[e];
        if u > 2 {
            report.non_manifold_edges.push([a, b]);
        } else if directed.get(&(a, b)).copied().unwrap_or(0) > 1
            || directed.get(&(b, a)).copied().unwrap_or(0) > 1
        {
            report.inconsistent_orientation.push([a, b]);
        }
    }

    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.corner_positions(t);
        let longest = mesh.edge_lengths(t).iter().fold(T::zero(), |m, &l| m.max(l));
        let twice_area = (b - a).cross(&(c - a)).norm();
        if twice_area <= longest * longest * T::epsilon() * T::lit(16.0) {
            report.degenerate_triangles.push(t);
        }
    }

    for v in 0..mesh.vertex_count() {
        if mesh.incident_triangles(v).is_empty() {
            report.isolated_vertices.push(v);
        } else if mesh.is_boundary_vertex(v) {
            let outgoing = mesh
                .incident_triangles(v)
                .iter()
                .flat_map(|&t| (0..3).map(move |c| 3 * t + c))
                .filter(|&h| mesh.origin(h) == v && mesh.twin(h).is_none())
                .count();
            if outgoing > 1 {
                report.non_manifold_vertices.push(v);
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoop<T: Real> {
    /// Vertex cycle; the closing edge runs from the last vertex to the first.
    pub vertices: Vec<usize>,
    pub halfedges: Vec<usize>,
    pub length: T,
}

/// Boundary cycles sorted by descending Euclidean length.
pub fn boundary_loops<T: Real>(mesh: &Mesh<T>) -> Vec<BoundaryLoop<T>> {
    let nh = mesh.halfedge_count();
    let mut visited = vec![false; nh];
    let mut loops = Vec::new();
    for start in 0..nh {
        if visited[start] || mesh.twin(start).is_some() {
            continue;
        }
        let mut lp = BoundaryLoop {
            vertices: Vec::new(),
            halfedges: Vec::new(),
            length: T::zero(),
        };
        let mut h = start;
        for _ in 0..=nh {
            visited[h] = true;
            lp.vertices.push(mesh.origin(h));
            lp.halfedges.push(h);
            lp.length += (mesh.position(mesh.target(h)) - mesh.position(mesh.origin(h))).norm();
            // rotate around the target until the next boundary halfedge
            let mut n = mesh.next(h);
            let mut guard = 0;
            while let Some(tw) = mesh.twin(n) {
                n = mesh.next(tw);
                guard += 1;
                if guard > nh {
                    break;
                }
            }
            h = n;
            if h == start || visited[h] {
                break;
            }
        }
        loops.push(lp);
    }
    loops.sort_by(|a, b| b.length.partial_cmp(&a.length).unwrap_or(std::cmp::Ordering::Equal));
    loops
}

/// Area, corner cotangents and mixed Voronoi corner areas of a triangle given
/// its three halfedge lengths (entry `c` runs from corner `c` to `c + 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleShape<T> {
    pub area: T,
    pub cot: [T; 3],
    pub voronoi: [T; 3],
}

impl<T: Real> TriangleShape<T> {
    pub fn from_lengths(l: [T; 3]) -> Option<Self> {
        let mut s = l;
        s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let (a, b, c) = (s[0], s[1], s[2]);
        // Kahan's stable Heron
        let prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
        if !(prod > T::zero()) {
            return None;
        }
        let area = prod.sqrt() * T::lit(0.25);
        let sq = [l[0] * l[0], l[1] * l[1], l[2] * l[2]];
        let four_a = area * T::lit(4.0);
        let cot = [
            (sq[0] + sq[2] - sq[1]) / four_a,
            (sq[1] + sq[0] - sq[2]) / four_a,
            (sq[2] + sq[1] - sq[0]) / four_a,
        ];
        let mut voronoi = [T::zero(); 3];
        if let Some(obtuse) = (0..3).find(|&c| cot[c] < T::zero()) {
            for (c, v) in voronoi.iter_mut().enumerate() {
                *v = if c == obtuse { area * T::lit(0.5) } else { area * T::lit(0.25) };
            }
        } else {
            for (c, v) in voronoi.iter_mut().enumerate() {
                let (cn, cp) = ((c + 1) % 3, (c + 2) % 3);
                *v = (sq[c] * cot[cp] + sq[cp] * cot[cn]) * T::lit(0.125);
            }
        }
        Some(Self { area, cot, voronoi })
    }
}

/// Per-element Euclidean geometry. Immutable once built.
#[derive(Debug, Clone)]
pub struct GeometryCache<T: Real> {
    pub triangle_normals: Vec<Vector3<T>>,
    pub triangle_areas: Vec<T>,
    pub vertex_normals: Vec<Vector3<T>>,
    pub voronoi_areas: Vec<T>,
    pub mean_edge_length: T,
}

pub fn geometry_cache<T: Real>(mesh: &Mesh<T>) -> Result<GeometryCache<T>> {
    let nt = mesh.triangle_count();
    let nv = mesh.vertex_count();
    let mut triangle_normals = Vec::with_capacity(nt);
    let mut triangle_areas = Vec::with_capacity(nt);
    let mut vertex_normals = vec![Vector3::zeros(); nv];
    let mut voronoi_areas = vec![T::zero(); nv];
    for t in 0..nt {
        let [a, b, c] = mesh.corner_positions(t);
        let cross = (b - a).cross(&(c - a));
        let shape = TriangleShape::from_lengths(mesh.edge_lengths(t))
            .ok_or(Error::DegenerateTriangle { triangle: t })?;
        let norm = cross.norm();
        if !(norm > T::zero()) {
            return Err(Error::DegenerateTriangle { triangle: t });
        }
        let n = cross / norm;
        triangle_normals.push(n);
        triangle_areas.push(shape.area);
        for (c, &v) in mesh.triangle(t).iter().enumerate() {
            vertex_normals[v] += n * shape.area;
            voronoi_areas[v] += shape.voronoi[c];
        }
    }
    for n in &mut vertex_normals {
        let len = n.norm();
        if len > T::zero() {
            *n /= len;
        }
    }
    Ok(GeometryCache {
        triangle_normals,
        triangle_areas,
        vertex_normals,
        voronoi_areas,
        mean_edge_length: mean_edge_length(mesh),
    })
}

/// Arithmetic mean over unique undirected edges.
pub fn mean_edge_length<T: Real>(mesh: &Mesh<T>) -> T {
    if mesh.edges.is_empty() {
        return T::zero();
    }
    let sum = mesh
        .edges
        .iter()
        .fold(T::zero(), |acc, e| acc + (mesh.position(e[1]) - mesh.position(e[0])).norm());
    sum / T::from_usize_lossy(mesh.edges.len())
}
