//! Curvature tensors from local quadric fits.
//!
//! Curvature signs follow the machining convention: a surface that bends away
//! from its normal (a sphere with outward normal, seen by a cutter standing on
//! the normal side) has positive curvature.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{GeometryCache, Mesh};
use crate::scalar::Real;

/// Neighbourhoods are grown up to this many rings when the requested ring
/// holds fewer than [`MIN_NEIGHBORS`] vertices.
pub const MAX_RING: usize = 4;
pub const MIN_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexCurvature<T: Real> {
    pub k1: T,
    pub k2: T,
    pub d1: Vector3<T>,
    pub d2: Vector3<T>,
}

impl<T: Real> VertexCurvature<T> {
    /// `k1 d1 d1ᵀ + k2 d2 d2ᵀ`.
    pub fn tensor(&self) -> Matrix3<T> {
        self.d1 * self.d1.transpose() * self.k1 + self.d2 * self.d2.transpose() * self.k2
    }
}

/// Per-vertex and per-triangle curvature tensors.
#[derive(Debug, Clone)]
pub struct TensorField<T: Real> {
    pub vertex: Vec<Matrix3<T>>,
    pub triangle: Vec<Matrix3<T>>,
    pub curvatures: Vec<Option<VertexCurvature<T>>>,
    /// Vertices whose fit failed and that inherited their neighbours' mean.
    pub failed_vertices: Vec<usize>,
}

/// Orthonormal tangent pair completing `n` to a right-handed frame.
pub fn tangent_basis<T: Real>(n: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let helper = if n.x.abs() < T::lit(0.9) { Vector3::x() } else { Vector3::y() };
    let u = (helper - n * helper.dot(n)).normalize();
    let w = n.cross(&u);
    (u, w)
}

/// Least-squares fit of `z = a x²/2 + b xy + c y²/2 + d x + e y` over the
/// `ring`-neighbourhood of `vertex`, in the tangent frame of its normal.
pub fn fit_vertex_curvature<T: Real>(
    mesh: &Mesh<T>,
    cache: &GeometryCache<T>,
    vertex: usize,
    ring: usize,
) -> Result<VertexCurvature<T>> {
    let fail = |reason: &str| Error::CurvatureFit {
        vertex,
        reason: reason.to_string(),
    };
    let n = cache.vertex_normals[vertex];
    if !(n.norm() > T::lit(0.5)) {
        return Err(fail("vertex has no normal"));
    }
    let mut rings = ring.max(1);
    let mut nbrs = mesh.k_ring(vertex, rings);
    while nbrs.len() < MIN_NEIGHBORS && rings < MAX_RING.max(ring) {
        rings += 1;
        nbrs = mesh.k_ring(vertex, rings);
    }
    if nbrs.len() < MIN_NEIGHBORS {
        return Err(fail(&format!("only {} neighbours within {} rings", nbrs.len(), rings)));
    }

    let (u, w) = tangent_basis(&n);
    let p = mesh.position(vertex);
    let local: Vec<Vector3<T>> = nbrs
        .iter()
        .map(|&q| {
            let d = mesh.position(q) - p;
            Vector3::new(d.dot(&u), d.dot(&w), d.dot(&n))
        })
        .collect();
    // fit in units of the mean planar distance for conditioning
    let scale = local.iter().fold(T::zero(), |acc, l| acc + (l.x * l.x + l.y * l.y).sqrt())
        / T::from_usize_lossy(local.len());
    if !(scale > T::zero()) {
        return Err(fail("neighbourhood collapses onto the vertex"));
    }
    let half = T::lit(0.5);
    let design = DMatrix::from_fn(local.len(), 5, |r, c| {
        let (x, y) = (local[r].x / scale, local[r].y / scale);
        match c {
            0 => half * x * x,
            1 => x * y,
            2 => half * y * y,
            3 => x,
            _ => y,
        }
    });
    let rhs = DVector::from_fn(local.len(), |r, _| local[r].z / scale);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * T::epsilon().sqrt()) {
        return Err(fail("rank-deficient quadric fit"));
    }
    let coef = svd
        .solve(&rhs, T::zero())
        .map_err(|_| fail("least-squares solve failed"))?;
    let (a, b, c) = (coef[0] / scale, coef[1] / scale, coef[2] / scale);
    let (dx, dy) = (coef[3], coef[4]);

    // shape operator of the fitted graph at the origin: II y = k I y
    let first = Matrix2::new(T::one() + dx * dx, dx * dy, dx * dy, T::one() + dy * dy);
    let g = (T::one() + dx * dx + dy * dy).sqrt();
    let second = Matrix2::new(a, b, b, c) * (-T::one() / g);
    let chol = first.cholesky().ok_or_else(|| fail("first fundamental form not SPD"))?;
    let l_inv = chol.l().try_inverse().ok_or_else(|| fail("singular frame"))?;
    let reduced = l_inv * second * l_inv.transpose();
    let reduced = (reduced + reduced.transpose()) * half;
    let eig = reduced.symmetric_eigen();
    let (i1, i2) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let y1: Vector2<T> = eig.eigenvectors.column(i1).into();
    let x1 = l_inv.transpose() * y1;
    let t1 = (u + n * dx) * x1[0] + (w + n * dy) * x1[1];
    let t1 = t1 - n * t1.dot(&n);
    let len = t1.norm();
    if !(len > T::zero()) {
        return Err(fail("degenerate principal direction"));
    }
    let d1 = t1 / len;
    let d2 = n.cross(&d1);
    Ok(VertexCurvature {
        k1: eig.eigenvalues[i1],
        k2: eig.eigenvalues[i2],
        d1,
        d2,
    })
}

/// Per-vertex tensors plus the fits behind them. Vertices whose fit fails take
/// the Voronoi-area-weighted mean tensor of their successfully fitted 1-ring.
pub fn vertex_tensor_field<T: Real>(
    mesh: &Mesh<T>,
    cache: &GeometryCache<T>,
    ring: usize,
) -> Result<(Vec<Matrix3<T>>, Vec<Option<VertexCurvature<T>>>, Vec<usize>)> {
    let nv = mesh.vertex_count();
    let curvatures: Vec<Option<VertexCurvature<T>>> =
        (0..nv).map(|v| fit_vertex_curvature(mesh, cache, v, ring).ok()).collect();
    let failed: Vec<usize> = (0..nv).filter(|&v| curvatures[v].is_none()).collect();
    if failed.len() * 10 > nv {
        return Err(Error::TooManyFitFailures {
            failed: failed.len(),
            total: nv,
        });
    }
    let mut tensors: Vec<Matrix3<T>> = curvatures
        .iter()
        .map(|c| c.map(|c| c.tensor()).unwrap_or_else(Matrix3::zeros))
        .collect();
    for &v in &failed {
        let mut acc = Matrix3::zeros();
        let mut wsum = T::zero();
        for &q in mesh.neighbors(v) {
            if let Some(c) = &curvatures[q] {
                acc += c.tensor() * cache.voronoi_areas[q];
                wsum += cache.voronoi_areas[q];
            }
        }
        if wsum > T::zero() {
            tensors[v] = acc / wsum;
        }
    }
    Ok((tensors, curvatures, failed))
}

/// Per-triangle tensor: corner tensors weighted by corner Voronoi areas.
pub fn triangle_tensor_field<T: Real>(
    mesh: &Mesh<T>,
    cache: &GeometryCache<T>,
    vertex_tensors: &[Matrix3<T>],
) -> Vec<Matrix3<T>> {
    mesh.triangles()
        .iter()
        .map(|tri| {
            let mut acc = Matrix3::zeros();
            let mut wsum = T::zero();
            for &v in tri {
                let w = cache.voronoi_areas[v];
                acc += vertex_tensors[v] * w;
                wsum += w;
            }
            if wsum > T::zero() {
                acc / wsum
            } else {
                (vertex_tensors[tri[0]] + vertex_tensors[tri[1]] + vertex_tensors[tri[2]]) / T::lit(3.0)
            }
        })
        .collect()
}

/// Vertex fits followed by triangle averaging.
pub fn estimate_tensors<T: Real>(mesh: &Mesh<T>, cache: &GeometryCache<T>, ring: usize) -> Result<TensorField<T>> {
    let (vertex, curvatures, failed_vertices) = vertex_tensor_field(mesh, cache, ring)?;
    let triangle = triangle_tensor_field(mesh, cache, &vertex);
    Ok(TensorField {
        vertex,
        triangle,
        curvatures,
        failed_vertices,
    })
}
