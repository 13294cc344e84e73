#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use isoscallop::mesh::Mesh;
use isoscallop::oracle::{synth_surface, AnalyticSurface, SynthSpec};
use isoscallop::pipeline::SourceSelection;
use isoscallop::ToolPathSet;

pub fn plate(size: f64, edge: f64) -> Mesh<f64> {
    synth_surface(&SynthSpec::new(AnalyticSurface::Plane { width: size, height: size }, edge)).unwrap().0
}

pub const CAP: AnalyticSurface = AnalyticSurface::SphereCap { radius: 10.0, max_polar: PI / 3.0 };

pub fn cap(edge: f64) -> Mesh<f64> {
    synth_surface(&SynthSpec::new(CAP, edge)).unwrap().0
}

/// Vertices on `x = 0`, ordered by `y`.
pub fn left_edge(mesh: &Mesh<f64>) -> SourceSelection {
    let mut v: Vec<usize> = (0..mesh.vertex_count()).filter(|&i| mesh.position(i).x == 0.0).collect();
    v.sort_by(|&a, &b| mesh.position(a).y.total_cmp(&mesh.position(b).y));
    SourceSelection::Vertices(v)
}

/// Mean of `f` over the points of each level above the source, by level.
pub fn level_means(set: &ToolPathSet<f64>, f: impl Fn(&nalgebra::Point3<f64>) -> f64) -> Vec<f64> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for p in set.paths.iter().filter(|p| p.level > 0.0) {
        let e = acc.entry(p.level.to_bits()).or_default();
        for q in &p.points {
            e.0 += f(q);
            e.1 += 1;
        }
    }
    acc.values().map(|(s, n)| s / *n as f64).collect()
}

/// Relative errors of consecutive level spacings against `expected`.
pub fn spacing_errors(means: &[f64], expected: f64) -> Vec<f64> {
    means.windows(2).map(|w| ((w[1] - w[0]).abs() - expected).abs() / expected).collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn polar(p: &nalgebra::Point3<f64>) -> f64 {
    (p.z / p.coords.norm()).clamp(-1.0, 1.0).acos()
}

/// Subdivided icosahedron on the unit sphere.
pub fn icosphere(levels: usize) -> Mesh<f64> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<nalgebra::Vector3<f64>> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| nalgebra::Vector3::new(x, y, z).normalize())
    .collect();
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6],
        [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10],
        [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid = std::collections::HashMap::new();
        let mut next = Vec::new();
        for tri in &f {
            let mut m = [0; 3];
            for c in 0..3 {
                let (a, b) = (tri[c], tri[(c + 1) % 3]);
                m[c] = *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push((v[a] + v[b]).normalize());
                    v.len() - 1
                });
            }
            next.extend([[tri[0], m[0], m[2]], [tri[1], m[1], m[0]], [tri[2], m[2], m[1]], [m[0], m[1], m[2]]]);
        }
        f = next;
    }
    Mesh::new(v.into_iter().map(nalgebra::Point3::from).collect(), f).unwrap()
}
