//! Discrete operators under the scallop metric and the heat method.
//!
//! Each triangle is laid out in 2D from its three metric edge lengths, so the
//! cotan Laplacian, Voronoi masses, gradient and divergence are the usual
//! intrinsic ones. Vector fields are stored per triangle in the frame of the
//! metric-mapped triangle `D p`, which for the identity metric is world space.

use std::ops::{Deref, DerefMut};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::curvature::tangent_basis;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, TriangleShape};
use crate::metric::ScallopMetricField;
use crate::scalar::Real;
use crate::sparse::{SparseSolver, SymmetricBuilder, SymmetricCsr};

/// One value per vertex.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField<T>(pub Vec<T>);

impl<T> Deref for ScalarField<T> {
    type Target = Vec<T>;
    fn deref(&self) -> &Vec<T> {
        &self.0
    }
}

impl<T> DerefMut for ScalarField<T> {
    fn deref_mut(&mut self) -> &mut Vec<T> {
        &mut self.0
    }
}

/// One vector per triangle, in that triangle's metric frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleVectorField<T: Real>(pub Vec<Vector3<T>>);

impl<T: Real> Deref for TriangleVectorField<T> {
    type Target = Vec<Vector3<T>>;
    fn deref(&self) -> &Vec<Vector3<T>> {
        &self.0
    }
}

/// Intrinsic layout of one triangle under the metric.
#[derive(Debug, Clone, Copy)]
pub struct TriangleFrame<T: Real> {
    /// Corner positions in 2D: `q0 = 0`, `q1` on the x axis, `q2` above it.
    pub layout: [Vector2<T>; 3],
    /// Orthonormal basis of the metric-mapped triangle's plane, matching the
    /// layout axes.
    pub axes: [Vector3<T>; 2],
    pub area: T,
    pub cot: [T; 3],
    /// `D⁻¹`, mapping metric-frame vectors back to world space.
    pub inverse_factor: Matrix3<T>,
}

impl<T: Real> TriangleFrame<T> {
    pub fn to_local(&self, v: &Vector3<T>) -> Vector2<T> {
        Vector2::new(v.dot(&self.axes[0]), v.dot(&self.axes[1]))
    }

    pub fn to_frame(&self, v: &Vector2<T>) -> Vector3<T> {
        self.axes[0] * v.x + self.axes[1] * v.y
    }
}

#[derive(Debug, Clone)]
pub struct OperatorSet<T: Real> {
    /// Weak cotan Laplacian: off-diagonal `(cot a + cot b) / 2`, rows summing
    /// to zero, negative semidefinite.
    pub laplacian: SymmetricCsr<T>,
    /// Metric Voronoi areas.
    pub mass: Vec<T>,
    pub frames: Vec<TriangleFrame<T>>,
    pub mean_edge_length: T,
    /// Edges whose total cotan weight is negative.
    pub negative_weights: usize,
    triangles: Vec<[usize; 3]>,
    component_count: usize,
    component: Vec<usize>,
}

impl<T: Real> OperatorSet<T> {
    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn components(&self) -> (usize, &[usize]) {
        (self.component_count, &self.component)
    }

    /// Default diffusion time: `m` times the squared metric mean edge length.
    pub fn time_step(&self, multiplier: T) -> T {
        multiplier * self.mean_edge_length * self.mean_edge_length
    }
}

pub fn build_operators<T: Real>(mesh: &Mesh<T>, metric: &ScallopMetricField<T>) -> Result<OperatorSet<T>> {
    let nv = mesh.vertex_count();
    if metric.edge_lengths.len() != mesh.triangle_count() || metric.factors.len() != mesh.triangle_count() {
        return Err(Error::InvalidParameter("metric field does not match the mesh".into()));
    }
    let mut builder = SymmetricBuilder::new(nv);
    let mut mass = vec![T::zero(); nv];
    let mut frames = Vec::with_capacity(mesh.triangle_count());
    let half = T::lit(0.5);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let l = metric.edge_lengths[t];
        let shape = TriangleShape::from_lengths(l).ok_or(Error::DegenerateTriangle { triangle: t })?;
        for c in 0..3 {
            let (i, j) = (tri[c], tri[(c + 1) % 3]);
            let w = shape.cot[(c + 2) % 3] * half;
            builder.add_pair(i, j, w);
            builder.add_diagonal(i, -w);
            builder.add_diagonal(j, -w);
            mass[tri[c]] += shape.voronoi[c];
        }
        let x = (l[0] * l[0] + l[2] * l[2] - l[1] * l[1]) / (T::lit(2.0) * l[0]);
        let y = T::lit(2.0) * shape.area / l[0];
        let layout = [Vector2::zeros(), Vector2::new(l[0], T::zero()), Vector2::new(x, y)];

        let d = &metric.factors[t];
        let p = mesh.corner_positions(t);
        let a = d * (p[1] - p[0]);
        let b = d * (p[2] - p[0]);
        let e1 = a.normalize();
        let n = a.cross(&b);
        let n = if n.norm() > T::zero() { n.normalize() } else { tangent_basis(&e1).0 };
        let e2 = n.cross(&e1);
        let inverse_factor = d.try_inverse().ok_or(Error::NotPositiveDefinite { triangle: t })?;
        frames.push(TriangleFrame {
            layout,
            axes: [e1, e2],
            area: shape.area,
            cot: shape.cot,
            inverse_factor,
        });
    }
    let laplacian = builder.build();
    let negative_weights = (0..nv)
        .map(|i| laplacian.row(i).filter(|&(j, w)| j > i && w < T::zero()).count())
        .sum();
    let (component_count, component) = mesh.components();
    Ok(OperatorSet {
        laplacian,
        mass,
        frames,
        mean_edge_length: metric.mean_edge_length,
        negative_weights,
        triangles: mesh.triangles().to_vec(),
        component_count,
        component,
    })
}

/// Vertices carrying the initial heat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSet {
    vertices: Vec<usize>,
}

impl SourceSet {
    pub fn new(mut vertices: Vec<usize>, vertex_count: usize) -> Result<Self> {
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.is_empty() {
            return Err(Error::NoSource("source set is empty".into()));
        }
        if let Some(&bad) = vertices.iter().find(|&&v| v >= vertex_count) {
            return Err(Error::NoSource(format!("source vertex {bad} out of range ({vertex_count} vertices)")));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn contains(&self, v: usize) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn indicator<T: Real>(&self, n: usize) -> Vec<T> {
        let mut h = vec![T::zero(); n];
        for &v in &self.vertices {
            h[v] = T::one();
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicOptions<T> {
    pub time_multiplier: T,
    pub refine_iters: usize,
    pub solver_tol: T,
    /// Absolute diffusion time, bypassing the multiplier rule.
    pub time_override: Option<T>,
}

impl<T: Real> Default for GeodesicOptions<T> {
    fn default() -> Self {
        Self {
            time_multiplier: T::one(),
            refine_iters: 0,
            solver_tol: T::lit(1e-10),
            time_override: None,
        }
    }
}

impl<T: Real> GeodesicOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_multiplier > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "time multiplier must be positive, got {}",
                self.time_multiplier
            )));
        }
        if !(self.solver_tol > T::zero()) {
            return Err(Error::InvalidParameter(format!("solver tolerance must be positive, got {}", self.solver_tol)));
        }
        if let Some(t) = self.time_override {
            if !(t > T::zero()) {
                return Err(Error::InvalidParameter(format!("diffusion time must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GeodesicDiagnostics {
    pub time_step: f64,
    pub heat_residual: f64,
    pub poisson_residuals: Vec<f64>,
    pub zero_gradient_triangles: usize,
    pub negative_weights: usize,
    /// Connected components without a source vertex; `g` is zero there.
    pub sourceless_components: usize,
    pub factorizations: usize,
    pub solves: usize,
}

#[derive(Debug, Clone)]
pub struct GeodesicSolution<T: Real> {
    pub g: ScalarField<T>,
    pub h: ScalarField<T>,
    pub diagnostics: GeodesicDiagnostics,
}

fn check_tol<T: Real>(stats_residual: T, tol: T, what: &str) -> Result<()> {
    // residuals a few orders above the target still give usable fields in
    // single precision; only gross failures are fatal
    let limit = tol.max(T::epsilon() * T::lit(1e3)) * T::lit(1e4);
    if stats_residual > limit || !stats_residual.is_finite() {
        return Err(Error::Solver(format!("{what} solve residual {stats_residual} exceeds {limit}")));
    }
    Ok(())
}

/// Backward Euler heat step `(A - t L) h = A h0`.
pub fn solve_heat<T: Real>(ops: &OperatorSet<T>, source: &SourceSet, t: T, tol: T) -> Result<(ScalarField<T>, T)> {
    if !(t > T::zero()) {
        return Err(Error::InvalidParameter(format!("diffusion time must be positive, got {t}")));
    }
    let n = ops.vertex_count();
    let system = ops.laplacian.scaled_plus_diagonal(-t, &ops.mass);
    let solver = SparseSolver::new(system, tol)?;
    let rhs: Vec<T> = source.indicator::<T>(n).iter().zip(&ops.mass).map(|(&h, &a)| h * a).collect();
    let (h, stats) = solver.solve(&rhs)?;
    check_tol(stats.relative_residual, tol, "heat")?;
    Ok((ScalarField(h), stats.relative_residual))
}

/// Piecewise linear gradient per triangle, in the metric frame.
pub fn gradient_field<T: Real>(ops: &OperatorSet<T>, f: &[T]) -> TriangleVectorField<T> {
    TriangleVectorField(
        ops.triangles
            .iter()
            .zip(&ops.frames)
            .map(|(tri, fr)| {
                let f = [f[tri[0]], f[tri[1]], f[tri[2]]];
                let hi = f[0].max(f[1]).max(f[2]);
                let lo = f[0].min(f[1]).min(f[2]);
                // differences at roundoff level carry no direction
                if hi - lo <= T::epsilon() * T::lit(8.0) * hi.abs().max(lo.abs()) {
                    return Vector3::zeros();
                }
                let mut g = Vector2::zeros();
                for c in 0..3 {
                    let e = fr.layout[(c + 2) % 3] - fr.layout[(c + 1) % 3];
                    g += Vector2::new(-e.y, e.x) * f[c];
                }
                fr.to_frame(&(g / (T::lit(2.0) * fr.area)))
            })
            .collect(),
    )
}

fn unit_field<T: Real>(x: &TriangleVectorField<T>, sign: T) -> (TriangleVectorField<T>, usize) {
    // no cutoff relative to the field maximum: heat decays by many orders of
    // magnitude across a mesh yet keeps full relative accuracy, so only exact
    // zeros (see gradient_field) and non-finite vectors are dropped
    let mut zero = 0;
    let out = x
        .iter()
        .map(|v| {
            let n = v.norm();
            if n > T::zero() && n.is_finite() {
                v * (sign / n)
            } else {
                zero += 1;
                Vector3::zeros()
            }
        })
        .collect();
    (TriangleVectorField(out), zero)
}

/// `-X / |X|` per triangle; the count is of zero vectors left at zero.
pub fn normalize_field<T: Real>(x: &TriangleVectorField<T>) -> (TriangleVectorField<T>, usize) {
    unit_field(x, -T::one())
}

/// Pointwise divergence: the integrated cotan divergence over the vertex mass.
pub fn divergence_field<T: Real>(ops: &OperatorSet<T>, x: &TriangleVectorField<T>) -> ScalarField<T> {
    let mut b = integrated_divergence(ops, x);
    for (bi, &a) in b.iter_mut().zip(&ops.mass) {
        *bi = if a > T::zero() { *bi / a } else { T::zero() };
    }
    ScalarField(b)
}

pub fn integrated_divergence<T: Real>(ops: &OperatorSet<T>, x: &TriangleVectorField<T>) -> Vec<T> {
    let mut b = vec![T::zero(); ops.vertex_count()];
    let half = T::lit(0.5);
    for ((tri, fr), v) in ops.triangles.iter().zip(&ops.frames).zip(x.iter()) {
        let x2 = fr.to_local(v);
        for c in 0..3 {
            let e1 = fr.layout[(c + 1) % 3] - fr.layout[c];
            let e2 = fr.layout[(c + 2) % 3] - fr.layout[c];
            b[tri[c]] += (fr.cot[(c + 2) % 3] * e1.dot(&x2) + fr.cot[(c + 1) % 3] * e2.dot(&x2)) * half;
        }
    }
    b
}

/// Factored Poisson system with every source vertex pinned to zero, plus one
/// pin in each component without a source.
pub struct PoissonSolver<'a, T: Real> {
    ops: &'a OperatorSet<T>,
    source: SourceSet,
    pins: Vec<usize>,
    solver: SparseSolver<T>,
    tol: T,
    sourceless: usize,
}

impl<'a, T: Real> PoissonSolver<'a, T> {
    pub fn new(ops: &'a OperatorSet<T>, source: &SourceSet, tol: T) -> Result<Self> {
        let mut has_source = vec![false; ops.component_count];
        for &v in source.vertices() {
            has_source[ops.component[v]] = true;
        }
        let mut pins: Vec<usize> = source.vertices().to_vec();
        let mut sourceless = 0;
        for (v, &c) in ops.component.iter().enumerate() {
            if !has_source[c] {
                has_source[c] = true;
                pins.push(v);
                sourceless += 1;
            }
        }
        pins.sort_unstable();
        let n = ops.vertex_count();
        let system = ops.laplacian.scaled_plus_diagonal(-T::one(), &vec![T::zero(); n]).pinned(&pins);
        Ok(Self {
            ops,
            source: source.clone(),
            pins,
            solver: SparseSolver::new(system, tol)?,
            tol,
            sourceless,
        })
    }

    pub fn sourceless_components(&self) -> usize {
        self.sourceless
    }

    /// Solves `L g = A div` and shifts each component so its minimum over the
    /// sources is zero. Returns the relative residual alongside.
    pub fn solve(&self, div: &[T]) -> Result<(ScalarField<T>, T)> {
        let mut rhs: Vec<T> = div.iter().zip(&self.ops.mass).map(|(&d, &a)| -(d * a)).collect();
        for &p in &self.pins {
            rhs[p] = T::zero();
        }
        let (mut g, stats) = self.solver.solve(&rhs)?;
        check_tol(stats.relative_residual, self.tol, "Poisson")?;
        let mut shift = vec![None::<T>; self.ops.component_count];
        for &v in self.source.vertices() {
            let c = self.ops.component[v];
            shift[c] = Some(shift[c].map_or(g[v], |s: T| s.min(g[v])));
        }
        for (v, gv) in g.iter_mut().enumerate() {
            match shift[self.ops.component[v]] {
                Some(s) => *gv -= s,
                None => *gv = T::zero(),
            }
        }
        Ok((ScalarField(g), stats.relative_residual))
    }
}

pub fn solve_poisson<T: Real>(ops: &OperatorSet<T>, source: &SourceSet, div: &[T], tol: T) -> Result<ScalarField<T>> {
    Ok(PoissonSolver::new(ops, source, tol)?.solve(div)?.0)
}

/// Heat step, normalization, Poisson step, then optional refinement passes
/// that re-normalize `grad g` and re-solve with the same factorization.
pub fn geodesic_from_operators<T: Real>(
    ops: &OperatorSet<T>,
    source: &SourceSet,
    options: &GeodesicOptions<T>,
) -> Result<GeodesicSolution<T>> {
    options.validate()?;
    if let Some(&bad) = source.vertices().iter().find(|&&v| v >= ops.vertex_count()) {
        return Err(Error::NoSource(format!("source vertex {bad} out of range")));
    }
    let before = crate::sparse::solver_calls();
    let t = options.time_override.unwrap_or_else(|| ops.time_step(options.time_multiplier));
    let (h, heat_residual) = solve_heat(ops, source, t, options.solver_tol)?;
    let (x, zero) = normalize_field(&gradient_field(ops, &h));
    let poisson = PoissonSolver::new(ops, source, options.solver_tol)?;
    let (mut g, res) = poisson.solve(&divergence_field(ops, &x))?;
    let mut residuals = vec![res.as_f64()];
    for _ in 0..options.refine_iters {
        let (x, _) = unit_field(&gradient_field(ops, &g), T::one());
        let (next, res) = poisson.solve(&divergence_field(ops, &x))?;
        g = next;
        residuals.push(res.as_f64());
    }
    let calls = crate::sparse::solver_calls().since(before);
    Ok(GeodesicSolution {
        g,
        h,
        diagnostics: GeodesicDiagnostics {
            time_step: t.as_f64(),
            heat_residual: heat_residual.as_f64(),
            poisson_residuals: residuals,
            zero_gradient_triangles: zero,
            negative_weights: ops.negative_weights,
            sourceless_components: poisson.sourceless_components(),
            factorizations: calls.factorizations,
            solves: calls.solves,
        },
    })
}

pub fn compute_geodesic<T: Real>(
    mesh: &Mesh<T>,
    metric: &ScallopMetricField<T>,
    source: &SourceSet,
    options: &GeodesicOptions<T>,
) -> Result<GeodesicSolution<T>> {
    let ops = build_operators(mesh, metric)?;
    geodesic_from_operators(&ops, source, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn right_triangle() -> Mesh<f64> {
        Mesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    /// Equilateral triangles filling a hexagon of the given ring count.
    fn hex_patch(rings: i32) -> Mesh<f64> {
        let s3 = 3f64.sqrt();
        let mut index = std::collections::BTreeMap::new();
        let mut v = Vec::new();
        for j in -rings..=rings {
            for i in -rings..=rings {
                if (i + j).abs() <= rings {
                    index.insert((i, j), v.len());
                    v.push(Point3::new(i as f64 + 0.5 * j as f64, s3 / 2.0 * j as f64, 0.0));
                }
            }
        }
        let mut t = Vec::new();
        for (&(i, j), &a) in &index {
            if let (Some(&b), Some(&c)) = (index.get(&(i + 1, j)), index.get(&(i, j + 1))) {
                t.push([a, b, c]);
            }
            if let (Some(&b), Some(&c)) = (index.get(&(i + 1, j)), index.get(&(i + 1, j - 1))) {
                t.push([a, c, b]);
            }
        }
        Mesh::new(v, t).unwrap()
    }

    fn strip(nx: usize, ny: usize, h: f64) -> Mesh<f64> {
        let mut v = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                v.push(Point3::new(i as f64 * h, j as f64 * h, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::new(v, t).unwrap()
    }

    #[test]
    fn equilateral_weights() {
        let m = hex_patch(2);
        let ops = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        let center = m.vertices().iter().position(|p| p.coords.norm() < 1e-12).unwrap();
        for (j, w) in ops.laplacian.row(center) {
            if j != center {
                assert!((w - 1.0 / 3f64.sqrt()).abs() < 1e-12);
            }
        }
        assert!(ops.laplacian.is_symmetric());
        assert!(ops.laplacian.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(ops.mass.iter().all(|&a| a > 0.0));
        assert_eq!(ops.negative_weights, 0);
    }

    #[test]
    fn scalar_metric_keeps_cotans_and_scales_mass() {
        let m = strip(4, 3, 0.7);
        let e = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        let s = build_operators(&m, &ScallopMetricField::uniform(&m, Matrix3::identity() / 32.0).unwrap()).unwrap();
        for i in 0..m.vertex_count() {
            for (j, w) in e.laplacian.row(i) {
                assert!((s.laplacian.get(i, j) - w).abs() < 1e-12);
            }
            assert!((s.mass[i] - e.mass[i] / 32.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_examples() {
        let m = right_triangle();
        let ops = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        let g = gradient_field(&ops, &[0.0, 1.0, 0.0]);
        assert!((g[0] - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let g = gradient_field(&ops, &[2.5, 2.5, 2.5]);
        assert!(g[0].norm() < 1e-12);

        let m = strip(5, 4, 0.3);
        let ops = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        let f: Vec<f64> = m.vertices().iter().map(|p| p.x + 2.0 * p.y).collect();
        for v in gradient_field(&ops, &f).iter() {
            assert!((v - Vector3::new(1.0, 2.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let x = TriangleVectorField(vec![Vector3::<f64>::new(3.0, 4.0, 0.0), Vector3::zeros(), Vector3::new(1e-3, 0.0, 2.0)]);
        let (y, zero) = normalize_field(&x);
        assert!((y[0] - Vector3::new(-0.6, -0.8, 0.0)).norm() < 1e-15);
        assert_eq!(y[1], Vector3::zeros());
        assert_eq!(zero, 1);
        assert!((y[2].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_matches_laplacian() {
        let m = strip(6, 5, 0.4);
        let m = m.with_vertices(m.vertices().iter().map(|p| Point3::new(p.x + 0.05 * p.y * p.y, p.y, 0.1 * p.x * p.y)).collect()).unwrap();
        let ops = build_operators(&m, &ScallopMetricField::uniform(&m, Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5)).unwrap()).unwrap();
        let f: Vec<f64> = m.vertices().iter().map(|p| (p.x * 1.3).sin() + p.y * p.y).collect();
        let div = divergence_field(&ops, &gradient_field(&ops, &f));
        let lf = ops.laplacian.mul_vec(&f);
        for i in 0..f.len() {
            assert!((div[i] - lf[i] / ops.mass[i]).abs() < 1e-9 * (1.0 + div[i].abs()));
        }
        assert!(divergence_field(&ops, &TriangleVectorField(vec![Vector3::zeros(); m.triangle_count()])).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn divergence_theorem_on_closed_mesh() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let m = Mesh::new(v, vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]).unwrap();
        let ops = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        // a constant world vector seen in each triangle's frame
        let c = Vector3::new(0.3, -0.7, 1.1);
        let x = TriangleVectorField(ops.frames.iter().map(|f| f.to_frame(&f.to_local(&c))).collect());
        let b = integrated_divergence(&ops, &x);
        let total: f64 = b.iter().sum();
        let scale: f64 = b.iter().map(|v| v.abs()).sum();
        assert!(total.abs() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn constant_heat_is_a_fixed_point() {
        let m = strip(5, 5, 0.2);
        let ops = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        let all = SourceSet::new((0..m.vertex_count()).collect(), m.vertex_count()).unwrap();
        for t in [1e-3, 1.0, 1e3] {
            let (h, _) = solve_heat(&ops, &all, t, 1e-12).unwrap();
            assert!(h.iter().all(|&v| (v - 1.0).abs() < 1e-10));
        }
        // constant heat has zero gradient, giving g = 0 everywhere
        let (h, _) = solve_heat(&ops, &all, 1.0, 1e-12).unwrap();
        let (x, _) = normalize_field(&gradient_field(&ops, &h));
        let src = SourceSet::new(vec![0], m.vertex_count()).unwrap();
        let g = solve_poisson(&ops, &src, &divergence_field(&ops, &x), 1e-12).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn heat_is_symmetric_on_hexagon() {
        let m = hex_patch(4);
        let ops = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        let center = m.vertices().iter().position(|p| p.coords.norm() < 1e-12).unwrap();
        let (h, _) = solve_heat(&ops, &SourceSet::new(vec![center], m.vertex_count()).unwrap(), 1.0, 1e-12).unwrap();
        let ring: Vec<usize> = m.neighbors(center).to_vec();
        for &v in &ring {
            assert!((h[v] - h[ring[0]]).abs() < 1e-6);
        }
        assert!(h.iter().all(|&x| x <= h[center] && x >= -1e-12));
    }

    #[test]
    fn heat_decreases_along_strip() {
        let m = strip(40, 1, 0.25);
        let ops = build_operators(&m, &ScallopMetricField::identity(&m).unwrap()).unwrap();
        let src = SourceSet::new(vec![0, 41], m.vertex_count()).unwrap();
        let (h, _) = solve_heat(&ops, &src, ops.time_step(1.0), 1e-12).unwrap();
        for i in 0..40 {
            assert!(h[i + 1] < h[i], "{i}: {} {}", h[i], h[i + 1]);
        }
    }

    #[test]
    fn strip_distance_from_left_edge() {
        let m = strip(40, 8, 0.25);
        let src: Vec<usize> = (0..m.vertex_count()).filter(|&v| m.position(v).x == 0.0).collect();
        let src = SourceSet::new(src, m.vertex_count()).unwrap();
        let metric = ScallopMetricField::identity(&m).unwrap();
        let sol = compute_geodesic(&m, &metric, &src, &GeodesicOptions::default()).unwrap();
        let len = 10.0;
        let mut mean = 0.0;
        for (v, p) in m.vertices().iter().enumerate() {
            let err = (sol.g[v] - p.x).abs();
            assert!(err <= 0.01 * len, "vertex {v}: {} vs {}", sol.g[v], p.x);
            mean += err / p.x.max(1e-12).max(1.0);
        }
        mean /= m.vertex_count() as f64;
        let opts = GeodesicOptions {
            time_multiplier: 10.0,
            refine_iters: 1,
            ..GeodesicOptions::default()
        };
        let sol10 = compute_geodesic(&m, &metric, &src, &opts).unwrap();
        let mut mean10 = 0.0;
        for (v, p) in m.vertices().iter().enumerate() {
            mean10 += (sol10.g[v] - p.x).abs() / p.x.max(1e-12).max(1.0);
        }
        mean10 /= m.vertex_count() as f64;
        assert!(mean10 <= 2.0 * mean.max(1e-3), "{mean10} vs {mean}");
        assert_eq!(sol10.diagnostics.factorizations, 2);
        assert_eq!(sol10.diagnostics.solves, 3);
    }

    #[test]
    fn metric_scaling_scales_distance() {
        let m = strip(12, 6, 0.5);
        let src = SourceSet::new(vec![0], m.vertex_count()).unwrap();
        let metric = ScallopMetricField::uniform(&m, Matrix3::new(2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let a = compute_geodesic(&m, &metric, &src, &GeodesicOptions::default()).unwrap();
        let b = compute_geodesic(&m, &metric.scaled(9.0), &src, &GeodesicOptions::default()).unwrap();
        for v in 0..m.vertex_count() {
            assert!((b.g[v] - 3.0 * a.g[v]).abs() <= 1e-6 * (3.0 * a.g[v]).abs().max(1e-9));
        }
    }

    #[test]
    fn empty_source_is_rejected() {
        assert!(matches!(SourceSet::new(vec![], 4), Err(Error::NoSource(_))));
        assert!(matches!(SourceSet::new(vec![9], 4), Err(Error::NoSource(_))));
    }

    #[test]
    fn sourceless_component_is_reported() {
        let mut v = right_triangle().vertices().to_vec();
        v.extend(v.clone().into_iter().map(|p| p + Vector3::new(5.0, 0.0, 0.0)));
        let m = Mesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let src = SourceSet::new(vec![0], 6).unwrap();
        let sol = compute_geodesic(&m, &ScallopMetricField::identity(&m).unwrap(), &src, &GeodesicOptions::default()).unwrap();
        assert_eq!(sol.diagnostics.sourceless_components, 1);
        assert!(sol.g[3..].iter().all(|&g| g == 0.0));
        assert_eq!(sol.g[0], 0.0);
    }
}
