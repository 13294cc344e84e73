//! Graph shortest paths under the metric edge lengths, as an independent
//! check on the heat-method distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::heat::{ScalarField, SourceSet};
use crate::mesh::Mesh;
use crate::metric::ScallopMetricField;
use crate::scalar::Real;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Point at distances `la` from `(0,0)` and `lb` from `(base,0)`, above the axis.
fn place(base: f64, la: f64, lb: f64) -> (f64, f64) {
    let x = (base * base + la * la - lb * lb) / (2.0 * base);
    (x, (la * la - x * x).max(0.0).sqrt())
}

/// Weighted adjacency: every mesh edge (lengths averaged over its triangles)
/// plus the straight segment between the two opposite vertices of each
/// interior edge whenever it crosses that edge in the unfolded pair.
pub fn metric_graph<T: Real>(mesh: &Mesh<T>, metric: &ScallopMetricField<T>) -> Result<Vec<Vec<(usize, f64)>>> {
    if metric.edge_lengths.len() != mesh.triangle_count() {
        return Err(Error::InvalidParameter("metric field lacks edge lengths for this mesh".into()));
    }
    let len = |h: usize| metric.edge_lengths[h / 3][h % 3].as_f64();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mesh.vertex_count()];
    for h in 0..mesh.halfedge_count() {
        let (a, b) = (mesh.origin(h), mesh.target(h));
        match mesh.twin(h) {
            Some(tw) if tw < h => continue,
            Some(tw) => {
                let w = 0.5 * (len(h) + len(tw));
                adj[a].push((b, w));
                adj[b].push((a, w));
                // unfold: triangle of h above the edge, its twin below
                let base = 0.5 * (len(h) + len(tw));
                let n1 = mesh.next(h);
                let c = mesh.target(n1);
                let (cx, cy) = place(base, len(mesh.next(n1)), len(n1));
                let n2 = mesh.next(tw);
                let d = mesh.target(n2);
                let (dx, dy) = place(base, len(n2), len(mesh.next(n2)));
                let dy = -dy;
                if cy - dy <= 0.0 {
                    continue;
                }
                let cross = cx + (dx - cx) * cy / (cy - dy);
                if cross > 0.0 && cross < base {
                    let w = (cx - dx).hypot(cy - dy);
                    adj[c].push((d, w));
                    adj[d].push((c, w));
                }
            }
            None => {
                let w = len(h);
                adj[a].push((b, w));
                adj[b].push((a, w));
            }
        }
    }
    Ok(adj)
}

/// Distances from the source set; unreachable vertices get `f64::INFINITY`.
pub fn dijkstra_geodesic<T: Real>(
    mesh: &Mesh<T>,
    metric: &ScallopMetricField<T>,
    source: &SourceSet,
) -> Result<ScalarField<f64>> {
    let adj = metric_graph(mesh, metric)?;
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    let mut heap = BinaryHeap::new();
    for &s in source.vertices() {
        if s >= dist.len() {
            return Err(Error::NoSource(format!("source vertex {s} out of range")));
        }
        dist[s] = 0.0;
        heap.push(Entry(0.0, s));
    }
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, w) in &adj[v] {
            let nd = d + w;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Entry(nd, u));
            }
        }
    }
    Ok(ScalarField(dist))
}
