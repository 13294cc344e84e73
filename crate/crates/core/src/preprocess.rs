//! Triangle quality and local remeshing of skinny triangles.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use crate::error::Result;
use crate::mesh::Mesh;
use crate::scalar::Real;

pub const DEFAULT_MIN_ANGLE: f64 = 15.0;
pub const DEFAULT_MAX_PASSES: usize = 5;
/// Histogram bin width in degrees; 12 bins cover (0°, 60°].
pub const HISTOGRAM_BIN: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub min_angles: Vec<f64>,
    /// Longest edge over shortest altitude.
    pub aspect_ratios: Vec<f64>,
    pub histogram: Vec<usize>,
    pub threshold: f64,
    pub below_threshold: Vec<usize>,
    pub global_min_angle: f64,
}

impl QualityReport {
    pub fn count_below(&self) -> usize {
        self.below_threshold.len()
    }
}

/// Interior angles in degrees at the three corners.
pub fn triangle_angles<T: Real>(p: &[Point3<T>; 3]) -> [f64; 3] {
    [0, 1, 2].map(|c| {
        let u = p[(c + 1) % 3] - p[c];
        let v = p[(c + 2) % 3] - p[c];
        u.cross(&v).norm().as_f64().atan2(u.dot(&v).as_f64()).to_degrees()
    })
}

fn min_angle<T: Real>(p: &[Point3<T>; 3]) -> f64 {
    let a = triangle_angles(p);
    a[0].min(a[1]).min(a[2])
}

pub fn quality_report<T: Real>(mesh: &Mesh<T>, min_angle_threshold_deg: f64) -> QualityReport {
    let mut report = QualityReport {
        min_angles: Vec::with_capacity(mesh.triangle_count()),
        aspect_ratios: Vec::with_capacity(mesh.triangle_count()),
        histogram: vec![0; (60.0 / HISTOGRAM_BIN) as usize],
        threshold: min_angle_threshold_deg,
        below_threshold: Vec::new(),
        global_min_angle: f64::INFINITY,
    };
    let last = report.histogram.len() - 1;
    for t in 0..mesh.triangle_count() {
        let p = mesh.corner_positions(t);
        let m = min_angle(&p);
        let l = mesh.edge_lengths(t);
        let longest = l[0].max(l[1]).max(l[2]).as_f64();
        let twice_area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm().as_f64();
        report.aspect_ratios.push(longest * longest / twice_area);
        report.histogram[((m / HISTOGRAM_BIN) as usize).min(last)] += 1;
        if m < min_angle_threshold_deg {
            report.below_threshold.push(t);
        }
        report.global_min_angle = report.global_min_angle.min(m);
        report.min_angles.push(m);
    }
    report
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RemeshReport {
    pub flips: usize,
    pub splits: usize,
    pub passes: usize,
    pub min_angle_before: f64,
    pub min_angle_after: f64,
    /// Triangles of the output still below the threshold.
    pub remaining: Vec<usize>,
}

struct Work<T: Real> {
    verts: Vec<Point3<T>>,
    tris: Vec<[usize; 3]>,
    edges: HashMap<(usize, usize), Vec<usize>>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<T: Real> Work<T> {
    fn new(mesh: &Mesh<T>) -> Self {
        let mut w = Self {
            verts: mesh.vertices().to_vec(),
            tris: mesh.triangles().to_vec(),
            edges: HashMap::new(),
        };
        for t in 0..w.tris.len() {
            w.link(t);
        }
        w
    }

    fn link(&mut self, t: usize) {
        let tri = self.tris[t];
        for c in 0..3 {
            self.edges.entry(key(tri[c], tri[(c + 1) % 3])).or_default().push(t);
        }
    }

    fn unlink(&mut self, t: usize) {
        let tri = self.tris[t];
        for c in 0..3 {
            let k = key(tri[c], tri[(c + 1) % 3]);
            if let Some(list) = self.edges.get_mut(&k) {
                list.retain(|&x| x != t);
                if list.is_empty() {
                    self.edges.remove(&k);
                }
            }
        }
    }

    fn corners(&self, tri: &[usize; 3]) -> [Point3<T>; 3] {
        tri.map(|v| self.verts[v])
    }

    fn normal(&self, tri: &[usize; 3]) -> Vector3<T> {
        let p = self.corners(tri);
        (p[1] - p[0]).cross(&(p[2] - p[0]))
    }

    fn min_angle_of(&self, t: usize) -> f64 {
        min_angle(&self.corners(&self.tris[t]))
    }

    /// Flips the edge from corner `c` of `t` when that strictly improves the
    /// smaller minimum angle of the two triangles.
    fn try_flip(&mut self, t: usize, c: usize) -> bool {
        let tri = self.tris[t];
        let (a, b, cv) = (tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]);
        let Some(list) = self.edges.get(&key(a, b)) else { return false };
        if list.len() != 2 {
            return false;
        }
        let u = if list[0] == t { list[1] } else { list[0] };
        let other = self.tris[u];
        let Some(k) = (0..3).find(|&k| other[k] == b && other[(k + 1) % 3] == a) else {
            return false;
        };
        let d = other[(k + 2) % 3];
        if d == cv || self.edges.contains_key(&key(cv, d)) {
            return false;
        }
        let n1 = [cv, a, d];
        let n2 = [cv, d, b];
        let reference = self.normal(&tri) + self.normal(&other);
        let (m1, m2) = (self.normal(&n1), self.normal(&n2));
        if !(m1.dot(&reference) > T::zero()) || !(m2.dot(&reference) > T::zero()) {
            return false;
        }
        let before = self.min_angle_of(t).min(self.min_angle_of(u));
        let after = min_angle(&self.corners(&n1)).min(min_angle(&self.corners(&n2)));
        if !(after > before) {
            return false;
        }
        self.unlink(t);
        self.unlink(u);
        self.tris[t] = n1;
        self.tris[u] = n2;
        self.link(t);
        self.link(u);
        true
    }

    /// Splits edge `(a, b)` at its midpoint unless that lowers the minimum
    /// angle among the triangles around it. Returns the touched triangles.
    fn try_split(&mut self, a: usize, b: usize) -> Option<Vec<usize>> {
        let around = self.edges.get(&key(a, b))?.clone();
        let mid = Point3::from((self.verts[a].coords + self.verts[b].coords) * T::lit(0.5));
        let m = self.verts.len();
        let before = around.iter().map(|&t| self.min_angle_of(t)).fold(f64::INFINITY, f64::min);
        let mut replacement = Vec::new();
        for &t in &around {
            let tri = self.tris[t];
            let c = (0..3).find(|&c| key(tri[c], tri[(c + 1) % 3]) == key(a, b))?;
            let (x, y, opp) = (tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]);
            replacement.push((t, [x, m, opp], [m, y, opp]));
        }
        self.verts.push(mid);
        let after = replacement
            .iter()
            .flat_map(|(_, p, q)| [min_angle(&self.corners(p)), min_angle(&self.corners(q))])
            .fold(f64::INFINITY, f64::min);
        if !(after >= before) {
            self.verts.pop();
            return None;
        }
        let mut touched = Vec::new();
        for (t, p, q) in replacement {
            self.unlink(t);
            self.tris[t] = p;
            self.link(t);
            let new = self.tris.len();
            self.tris.push(q);
            self.link(new);
            touched.push(t);
            touched.push(new);
        }
        Some(touched)
    }

    fn flagged(&self, threshold: f64) -> Vec<usize> {
        (0..self.tris.len()).filter(|&t| self.min_angle_of(t) < threshold).collect()
    }
}

/// Flip-then-split passes over triangles below `min_angle_threshold_deg`.
/// Boundary edges are only split; every accepted operation keeps or raises
/// the local minimum angle, and splits keep new vertices on existing edges.
pub fn remesh_skinny<T: Real>(
    mesh: &Mesh<T>,
    min_angle_threshold_deg: f64,
    max_passes: usize,
) -> Result<(Mesh<T>, RemeshReport)> {
    let start = quality_report(mesh, min_angle_threshold_deg);
    let mut report = RemeshReport {
        min_angle_before: start.global_min_angle,
        ..RemeshReport::default()
    };
    if start.below_threshold.is_empty() {
        report.min_angle_after = start.global_min_angle;
        return Ok((mesh.clone(), report));
    }
    let mean = crate::mesh::mean_edge_length(mesh);
    let mut w = Work::new(mesh);
    for _ in 0..max_passes {
        let flagged = w.flagged(min_angle_threshold_deg);
        if flagged.is_empty() {
            break;
        }
        report.passes += 1;
        let mut changed = false;
        for &t in &flagged {
            if w.min_angle_of(t) >= min_angle_threshold_deg {
                continue;
            }
            // longest edge first: it faces the widest angle
            let p = w.corners(&w.tris[t]);
            let mut order = [0, 1, 2];
            order.sort_by(|&i, &j| {
                let li = (p[(i + 1) % 3] - p[i]).norm();
                let lj = (p[(j + 1) % 3] - p[j]).norm();
                lj.partial_cmp(&li).unwrap_or(std::cmp::Ordering::Equal)
            });
            for c in order {
                if w.try_flip(t, c) {
                    report.flips += 1;
                    changed = true;
                    break;
                }
            }
        }
        let flagged = w.flagged(min_angle_threshold_deg);
        let mut touched = vec![false; w.tris.len()];
        for &t in &flagged {
            if touched.get(t).copied().unwrap_or(true) {
                continue;
            }
            let tri = w.tris[t];
            let p = w.corners(&tri);
            let c = (0..3)
                .max_by(|&i, &j| {
                    let li = (p[(i + 1) % 3] - p[i]).norm();
                    let lj = (p[(j + 1) % 3] - p[j]).norm();
                    li.partial_cmp(&lj).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0);
            let (a, b) = (tri[c], tri[(c + 1) % 3]);
            let long = (p[(c + 1) % 3] - p[c]).norm() > mean * T::lit(2.0);
            let boundary = w.edges.get(&key(a, b)).is_some_and(|l| l.len() == 1);
            if !(long || boundary) {
                continue;
            }
            let around = w.edges.get(&key(a, b)).cloned().unwrap_or_default();
            if around.iter().any(|&u| touched.get(u).copied().unwrap_or(true)) {
                continue;
            }
            if let Some(new) = w.try_split(a, b) {
                report.splits += 1;
                changed = true;
                for u in new {
                    if u >= touched.len() {
                        touched.resize(u + 1, false);
                    }
                    touched[u] = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let out = Mesh::new(w.verts, w.tris)?;
    let end = quality_report(&out, min_angle_threshold_deg);
    report.min_angle_after = end.global_min_angle;
    report.remaining = end.below_threshold;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_mesh;

    fn mesh2d(v: &[(f64, f64)], t: Vec<[usize; 3]>) -> Mesh<f64> {
        Mesh::new(v.iter().map(|&(x, y)| Point3::new(x, y, 0.0)).collect(), t).unwrap()
    }

    #[test]
    fn angle_examples() {
        let s3 = 3f64.sqrt();
        let eq = mesh2d(&[(0.0, 0.0), (1.0, 0.0), (0.5, s3 / 2.0)], vec![[0, 1, 2]]);
        let q = quality_report(&eq, 15.0);
        assert!((q.min_angles[0] - 60.0).abs() < 1e-9);
        assert!((q.aspect_ratios[0] - 2.0 / s3).abs() < 1e-12);
        assert_eq!(q.histogram[11], 1);
        let right = mesh2d(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], vec![[0, 1, 2]]);
        assert!((quality_report(&right, 15.0).min_angles[0] - 45.0).abs() < 1e-9);
        let needle = mesh2d(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.01)], vec![[0, 1, 2]]);
        let q = quality_report(&needle, 15.0);
        assert!((q.min_angles[0] - (0.01f64 / 0.5).atan().to_degrees()).abs() < 1e-9);
        assert!((q.min_angles[0] - 1.146).abs() < 1e-3);
        assert_eq!(q.below_threshold, vec![0]);
        assert_eq!(q.histogram[0], 1);
    }

    #[test]
    fn flip_to_short_diagonal() {
        // a sheared thin quad; for the axis-aligned rectangle both diagonals
        // give the same minimum angle, so it must stay as is
        let v = [(0.0, 0.0), (1.0, 0.0), (1.5, 0.1), (0.5, 0.1)];
        let m = mesh2d(&v, vec![[0, 1, 2], [0, 2, 3]]);
        let before = quality_report(&m, 15.0).global_min_angle;
        let (out, rep) = remesh_skinny(&m, 15.0, 1).unwrap();
        assert_eq!(rep.flips, 1);
        assert!(rep.min_angle_after > before);
        assert!(out.find_halfedge(1, 3).is_some() || out.find_halfedge(3, 1).is_some());
        assert!(validate_mesh(&out).is_valid());

        let rect = mesh2d(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.1), (0.0, 0.1)], vec![[0, 1, 2], [0, 2, 3]]);
        let (out, rep) = remesh_skinny(&rect, 15.0, 1).unwrap();
        assert_eq!(rep.flips, 0);
        assert_eq!(out.triangles(), rect.triangles());
    }

    #[test]
    fn good_mesh_is_unchanged() {
        let m = mesh2d(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], vec![[0, 1, 2], [0, 2, 3]]);
        let (out, rep) = remesh_skinny(&m, 15.0, 5).unwrap();
        assert_eq!(out.vertices(), m.vertices());
        assert_eq!(out.triangles(), m.triangles());
        assert_eq!(rep.flips + rep.splits, 0);
    }

    #[test]
    fn lone_needle_is_split_without_losing_angle() {
        let m = mesh2d(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.01)], vec![[0, 1, 2]]);
        let (out, rep) = remesh_skinny(&m, 15.0, 5).unwrap();
        assert!(rep.splits >= 1);
        assert!(rep.min_angle_after >= rep.min_angle_before - 1e-12);
        assert!(!rep.remaining.is_empty());
        assert!(validate_mesh(&out).is_valid());
        assert!((out.total_area() - m.total_area()).abs() < 1e-15);
        // the first split lands on the midpoint of the longest edge
        assert_eq!(out.vertices()[3], Point3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn flip_never_creates_duplicate_edge() {
        // the sheared quad again, but its short diagonal already exists through
        // a triangle standing out of the plane
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.5, 0.1, 0.0),
            Point3::new(0.5, 0.1, 0.0),
            Point3::new(1.0, 0.05, 1.0),
        ];
        let m = Mesh::new(v, vec![[0, 1, 2], [0, 2, 3], [3, 1, 4]]).unwrap();
        let mut w = Work::new(&m);
        assert!(!w.try_flip(0, 2));
        let (out, rep) = remesh_skinny(&m, 15.0, 1).unwrap();
        assert_eq!(rep.flips, 0);
        assert!(validate_mesh(&out).is_valid());
    }
}
