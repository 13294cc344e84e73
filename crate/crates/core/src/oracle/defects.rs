//! Seeded noise and hole injection for robustness tests.

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{geometry_cache, mean_edge_length, validate_mesh, Mesh};
use crate::scalar::Real;

/// Removes every triangle with a vertex closer than `radius` to `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DefectSpec {
    /// Standard deviation of the normal displacement as a fraction of the
    /// mean edge length.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub holes: Vec<HoleSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// Displaces interior vertices along their normals by Gaussian noise, then
/// punches the holes and repairs vertex fans that became non-manifold by
/// dropping their triangles. Boundary vertices never move. With no noise and
/// no holes the input comes back unchanged.
pub fn inject_defects<T: Real>(mesh: &Mesh<T>, spec: &DefectSpec) -> Result<Mesh<T>> {
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("noise sigma must be non-negative, got {}", spec.noise_sigma)));
    }
    if let Some(h) = spec.holes.iter().find(|h| !(h.radius > 0.0)) {
        return Err(Error::InvalidParameter(format!("hole radius must be positive, got {}", h.radius)));
    }

    let mut out = mesh.clone();
    if spec.noise_sigma > 0.0 {
        let cache = geometry_cache(mesh)?;
        let sigma = spec.noise_sigma * mean_edge_length(mesh).as_f64();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Defect(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut verts = mesh.vertices().to_vec();
        for (v, p) in verts.iter_mut().enumerate() {
            // draw for every vertex so the sequence does not depend on the boundary
            let d = normal.sample(&mut rng);
            if !mesh.is_boundary_vertex(v) {
                *p += cache.vertex_normals[v] * T::lit(d);
            }
        }
        out = out.with_vertices(verts)?;
    }
    if spec.holes.is_empty() {
        return Ok(out);
    }

    let inside = |p: &Point3<T>| {
        spec.holes.iter().any(|h| {
            let c = Point3::new(T::lit(h.center[0]), T::lit(h.center[1]), T::lit(h.center[2]));
            (p - c).norm().as_f64() < h.radius
        })
    };
    let mut keep: Vec<bool> = out
        .triangles()
        .iter()
        .map(|t| !t.iter().any(|&v| inside(out.position(v))))
        .collect();

    for _ in 0..out.triangle_count() {
        let tris: Vec<[usize; 3]> = out.triangles().iter().zip(&keep).filter(|(_, &k)| k).map(|(t, _)| *t).collect();
        if tris.is_empty() {
            return Err(Error::Defect("holes removed the whole mesh".into()));
        }
        let trial = Mesh::new(out.vertices().to_vec(), tris)?;
        let bad = validate_mesh(&trial).non_manifold_vertices;
        if bad.is_empty() {
            let result = trial.compacted()?;
            let report = validate_mesh(&result);
            if !report.is_valid() {
                return Err(Error::Defect(report.summary()));
            }
            return Ok(result);
        }
        for (t, tri) in out.triangles().iter().enumerate() {
            if tri.iter().any(|v| bad.contains(v)) {
                keep[t] = false;
            }
        }
    }
    Err(Error::Defect("could not restore a manifold mesh around the holes".into()))
}
