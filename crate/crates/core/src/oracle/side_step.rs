//! Side-step error between consecutive tool paths, measured by tracing the
//! metric gradient of the distance field from one path to the next level.

use nalgebra::{Matrix2, Point3, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::metric::ScallopMetricField;
use crate::scalar::Real;
use crate::toolpath::ToolPathSet;

const HISTOGRAM_BINS: usize = 10;
const MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `|traced length - sqrt(h)| / sqrt(h)` per sample.
    pub samples: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub std_dev: f64,
    pub histogram: Vec<HistogramBin>,
    /// Samples whose trace left the mesh before reaching the next level.
    pub dropped: usize,
    pub scallop_mean: f64,
    pub scallop_max: f64,
}

impl ErrorReport {
    pub fn from_samples(samples: Vec<f64>, dropped: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter(format!("no traceable samples ({dropped} dropped)")));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let max = samples.iter().fold(0.0f64, |m, &s| m.max(s));
        let std_dev = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        let width = max.max(f64::MIN_POSITIVE) / HISTOGRAM_BINS as f64;
        let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
            .map(|i| HistogramBin {
                lo: i as f64 * width,
                hi: (i + 1) as f64 * width,
                count: 0,
            })
            .collect();
        for &s in &samples {
            let bin = ((s / width) as usize).min(HISTOGRAM_BINS - 1);
            histogram[bin].count += 1;
        }
        Ok(Self {
            samples,
            mean,
            max,
            std_dev,
            histogram,
            dropped,
            scallop_mean: 2.0 * mean,
            scallop_max: 2.0 * max,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideStepOptions {
    pub samples_per_path: usize,
    /// Samples closer than the radius to any of these points are skipped.
    pub exclusion: Vec<(Point3<f64>, f64)>,
}

impl Default for SideStepOptions {
    fn default() -> Self {
        Self {
            samples_per_path: 50,
            exclusion: Vec::new(),
        }
    }
}

/// Intrinsic layout of every triangle from its metric lengths plus the
/// gradient of `g` in that layout.
struct Tracer<'a, T: Real> {
    mesh: &'a Mesh<T>,
    g: &'a [f64],
    layouts: Vec<[Vector2<f64>; 3]>,
    grads: Vec<Vector2<f64>>,
}

/// `(triangle, barycentric)` position.
type Location = (usize, [f64; 3]);

impl<'a, T: Real> Tracer<'a, T> {
    fn new(mesh: &'a Mesh<T>, metric: &ScallopMetricField<T>, g: &'a [f64]) -> Self {
        let mut layouts = Vec::with_capacity(mesh.triangle_count());
        let mut grads = Vec::with_capacity(mesh.triangle_count());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let l = metric.edge_lengths[t].map(|x| x.as_f64());
            let x = (l[0] * l[0] + l[2] * l[2] - l[1] * l[1]) / (2.0 * l[0]);
            let q = [
                Vector2::zeros(),
                Vector2::new(l[0], 0.0),
                Vector2::new(x, (l[2] * l[2] - x * x).max(0.0).sqrt()),
            ];
            let m = Matrix2::from_rows(&[(q[1] - q[0]).transpose(), (q[2] - q[0]).transpose()]);
            let rhs = Vector2::new(g[tri[1]] - g[tri[0]], g[tri[2]] - g[tri[0]]);
            grads.push(m.try_inverse().map(|inv| inv * rhs).unwrap_or_else(Vector2::zeros));
            layouts.push(q);
        }
        Self { mesh, g, layouts, grads }
    }

    fn barycentric(&self, t: usize, p: &Vector2<f64>) -> [f64; 3] {
        let q = &self.layouts[t];
        let m = Matrix2::from_columns(&[q[1] - q[0], q[2] - q[0]]);
        let s = m.try_inverse().map(|inv| inv * (p - q[0])).unwrap_or_else(Vector2::zeros);
        [1.0 - s.x - s.y, s.x, s.y]
    }

    fn point(&self, t: usize, b: &[f64; 3]) -> Vector2<f64> {
        let q = &self.layouts[t];
        q[0] * b[0] + q[1] * b[1] + q[2] * b[2]
    }

    /// Unit ascent direction and its barycentric rate, if `t` has a gradient.
    fn direction(&self, t: usize) -> Option<(f64, [f64; 3])> {
        let grad = self.grads[t];
        let norm = grad.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        let d = grad / norm;
        let b0 = self.barycentric(t, &Vector2::zeros());
        let b1 = self.barycentric(t, &d);
        Some((norm, [b1[0] - b0[0], b1[1] - b0[1], b1[2] - b0[2]]))
    }

    /// Picks a triangle containing all `support` vertices into which the ascent
    /// direction points.
    fn enter(&self, support: &[(usize, f64)]) -> Option<Location> {
        let first = support[0].0;
        let mut best: Option<(Location, f64)> = None;
        for &t in self.mesh.incident_triangles(first) {
            let tri = self.mesh.triangle(t);
            if !support.iter().all(|(v, _)| tri.contains(v)) {
                continue;
            }
            let Some((_, rate)) = self.direction(t) else { continue };
            let mut b = [0.0; 3];
            for &(v, w) in support {
                b[tri.iter().position(|&x| x == v).unwrap()] = w;
            }
            let scale = rate.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let ok = (0..3).all(|i| b[i] > 1e-12 || rate[i] >= -1e-9 * scale);
            if !ok {
                continue;
            }
            let exit = (0..3)
                .filter(|&i| rate[i] < 0.0)
                .map(|i| b[i] / -rate[i])
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(_, e)| exit > *e) {
                best = Some(((t, b), exit));
            }
        }
        best.map(|(loc, _)| loc)
    }

    fn value(&self, (t, b): &Location) -> f64 {
        let tri = self.mesh.triangle(*t);
        b[0] * self.g[tri[0]] + b[1] * self.g[tri[1]] + b[2] * self.g[tri[2]]
    }

    /// Metric arc length of the ascent trace from `support` up to `target`,
    /// or `None` if it leaves the mesh or stalls.
    fn trace(&self, start: &[(usize, f64)], target: f64, metric: &ScallopMetricField<T>) -> Option<f64> {
        let mut support: Vec<(usize, f64)> = start.iter().copied().filter(|&(_, w)| w > 1e-12).collect();
        let mut length = 0.0;
        for _ in 0..MAX_STEPS {
            let Some(loc) = self.enter(&support) else {
                // slide along the edge when both sides push into it
                if support.len() != 2 {
                    return None;
                }
                let (u, wu) = support[0];
                let (v, wv) = support[1];
                let (lo, hi) = if self.g[u] > self.g[v] { ((v, wv), (u, wu)) } else { ((u, wu), (v, wv)) };
                let current = self.g[lo.0] * lo.1 + self.g[hi.0] * hi.1;
                let h = self.mesh.find_halfedge(u, v).or_else(|| self.mesh.find_halfedge(v, u))?;
                let edge = metric.edge_lengths[h / 3][h % 3].as_f64();
                let span = self.g[hi.0] - self.g[lo.0];
                if !(span > 0.0) {
                    return None;
                }
                if self.g[hi.0] >= target {
                    return Some(length + (target - current) / span * edge);
                }
                length += lo.1 * edge;
                support = vec![(hi.0, 1.0)];
                continue;
            };
            let (t, b) = loc;
            let current = self.value(&loc);
            if current >= target {
                return Some(length);
            }
            let (speed, rate) = self.direction(t)?;
            let (exit, corner) = (0..3)
                .filter(|&i| rate[i] < 0.0)
                .map(|i| (b[i] / -rate[i], i))
                .fold((f64::INFINITY, 3), |m, x| if x.0 < m.0 { x } else { m });
            let reach = (target - current) / speed;
            if reach <= exit {
                return Some(length + reach);
            }
            if corner == 3 {
                return None;
            }
            length += exit;
            let p = self.point(t, &b) + (self.grads[t] / speed) * exit;
            let mut nb = self.barycentric(t, &p);
            nb[corner] = 0.0;
            let sum: f64 = nb.iter().map(|x| x.max(0.0)).sum();
            let tri = self.mesh.triangle(t);
            support = (0..3)
                .filter(|&i| i != corner && nb[i] > 1e-12)
                .map(|i| (tri[i], nb[i].max(0.0) / sum))
                .collect();
            if support.is_empty() {
                return None;
            }
            // leaving through a boundary edge ends the trace
            if support.len() == 2 {
                let h = 3 * t + (corner + 1) % 3;
                self.mesh.twin(h)?;
            }
        }
        None
    }
}

/// Traces from samples on every path above the source to the next level
/// `level + sqrt(h)` and reports the relative deviation of the traced metric
/// length from `sqrt(h)`.
pub fn side_step_error<T: Real>(
    mesh: &Mesh<T>,
    metric: &ScallopMetricField<T>,
    g: &[T],
    set: &ToolPathSet<T>,
    h: f64,
    options: &SideStepOptions,
) -> Result<ErrorReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("scallop height must be positive, got {h}")));
    }
    if set.paths.len() < 2 {
        return Err(Error::InvalidParameter("need at least two tool paths".into()));
    }
    if g.len() != mesh.vertex_count() || metric.edge_lengths.len() != mesh.triangle_count() {
        return Err(Error::InvalidParameter("field sizes do not match the mesh".into()));
    }
    if options.samples_per_path == 0 {
        return Err(Error::InvalidParameter("samples per path must be positive".into()));
    }
    let g64: Vec<f64> = g.iter().map(|x| x.as_f64()).collect();
    let tracer = Tracer::new(mesh, metric, &g64);
    let step = h.sqrt();
    let top = g64.iter().fold(0.0f64, |m, &x| m.max(x));
    let mut samples = Vec::new();
    let mut dropped = 0;
    for path in set.paths.iter().filter(|p| p.level > T::zero()) {
        let target = path.level.as_f64() + step;
        if target > top || path.locations.is_empty() {
            continue;
        }
        let n = path.locations.len();
        let count = options.samples_per_path.min(n);
        let mut last = usize::MAX;
        for j in 0..count {
            let i = j * n / count;
            if i == last {
                continue;
            }
            last = i;
            let p = path.points[i];
            let p64 = Point3::new(p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
            if options.exclusion.iter().any(|(c, r)| (p64 - c).norm() < *r) {
                continue;
            }
            let loc = &path.locations[i];
            let start = [(loc.a, 1.0 - loc.t), (loc.b, loc.t)];
            let start: Vec<(usize, f64)> = if loc.a == loc.b { vec![(loc.a, 1.0)] } else { start.to_vec() };
            match tracer.trace(&start, target, metric) {
                Some(len) => samples.push((len - step).abs() / step),
                None => dropped += 1,
            }
        }
    }
    ErrorReport::from_samples(samples, dropped)
}
