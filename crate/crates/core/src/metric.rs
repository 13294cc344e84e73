//! The scallop metric `T_s = (T + I/r) / 8` and its per-triangle factor.
//!
//! Under `T_s` the squared length of a side step between neighbouring cutter
//! contact paths is the second-order scallop height, so geodesic distance in
//! this metric measures scallop height directly.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{GeometryCache, Mesh};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig<T> {
    /// Ball-end cutter radius in mm.
    pub cutter_radius: T,
    /// Floor for the eigenvalues of `T + I/r`; `None` means `1e-3 / r`.
    pub spd_floor: Option<T>,
}

impl<T: Real> MetricConfig<T> {
    pub fn new(cutter_radius: T) -> Self {
        Self {
            cutter_radius,
            spd_floor: None,
        }
    }

    pub fn floor(&self) -> T {
        self.spd_floor.unwrap_or_else(|| T::lit(1e-3) / self.cutter_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutter_radius > T::zero()) || !self.cutter_radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cutter radius must be positive, got {}",
                self.cutter_radius
            )));
        }
        if !(self.floor() > T::zero()) {
            return Err(Error::InvalidParameter(format!("SPD floor must be positive, got {}", self.floor())));
        }
        Ok(())
    }
}

/// One clamped triangle: the smallest eigenvalue of `T + I/r` before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GougedTriangle {
    pub triangle: usize,
    pub eigenvalue: f64,
}

/// Triangles where the concave curvature is tighter than the cutter.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GougingReport {
    pub triangles: Vec<GougedTriangle>,
    pub area_fraction: f64,
}

impl GougingReport {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ScallopMetricField<T: Real> {
    pub tensors: Vec<Matrix3<T>>,
    /// Symmetric square roots, `D D = T_s`.
    pub factors: Vec<Matrix3<T>>,
    /// Metric length of halfedge `c` of each triangle.
    pub edge_lengths: Vec<[T; 3]>,
    pub mean_edge_length: T,
    pub gouged: Vec<bool>,
    /// Triangles whose metric lengths were shrunk to restore the triangle inequality.
    pub perturbed: usize,
}

impl<T: Real> ScallopMetricField<T> {
    /// Same tensor on every triangle, with factors and edge lengths filled in.
    pub fn uniform(mesh: &Mesh<T>, tensor: Matrix3<T>) -> Result<Self> {
        let mut field = Self::from_tensors(vec![tensor; mesh.triangle_count()], vec![false; mesh.triangle_count()]);
        factor_metric(&mut field)?;
        metric_edge_lengths(mesh, &mut field);
        Ok(field)
    }

    /// Euclidean metric.
    pub fn identity(mesh: &Mesh<T>) -> Result<Self> {
        Self::uniform(mesh, Matrix3::identity())
    }

    fn from_tensors(tensors: Vec<Matrix3<T>>, gouged: Vec<bool>) -> Self {
        Self {
            tensors,
            factors: Vec::new(),
            edge_lengths: Vec::new(),
            mean_edge_length: T::zero(),
            gouged,
            perturbed: 0,
        }
    }

    pub fn triangle_count(&self) -> usize {
        self.tensors.len()
    }

    /// `sqrt(vᵀ T_s v)` in triangle `t`.
    pub fn length(&self, t: usize, v: &Vector3<T>) -> T {
        (self.factors[t] * v).norm()
    }

    /// Field with every tensor multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        let root = s.sqrt();
        Self {
            tensors: self.tensors.iter().map(|m| m * s).collect(),
            factors: self.factors.iter().map(|m| m * root).collect(),
            edge_lengths: self.edge_lengths.iter().map(|l| [l[0] * root, l[1] * root, l[2] * root]).collect(),
            mean_edge_length: self.mean_edge_length * root,
            gouged: self.gouged.clone(),
            perturbed: self.perturbed,
        }
    }
}

/// `(T + I/r) / 8` per triangle, clamping eigenvalues of `T + I/r` below the
/// floor. Factors and lengths are left empty.
pub fn build_scallop_metric<T: Real>(
    triangle_tensors: &[Matrix3<T>],
    triangle_areas: &[T],
    config: &MetricConfig<T>,
) -> Result<(ScallopMetricField<T>, GougingReport)> {
    config.validate()?;
    let inv_r = T::one() / config.cutter_radius;
    let floor = config.floor();
    let eighth = T::lit(0.125);
    let mut report = GougingReport::default();
    let mut gouged = vec![false; triangle_tensors.len()];
    let mut tensors = Vec::with_capacity(triangle_tensors.len());
    let mut clamped_area = T::zero();
    for (t, tensor) in triangle_tensors.iter().enumerate() {
        let mut m = tensor + Matrix3::identity() * inv_r;
        m = (m + m.transpose()) * T::lit(0.5);
        let eig = m.symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < floor {
            let clamped = eig.eigenvalues.map(|e| if e < floor { floor } else { e });
            m = &eig.eigenvectors * Matrix3::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            m = (m + m.transpose()) * T::lit(0.5);
            gouged[t] = true;
            report.triangles.push(GougedTriangle {
                triangle: t,
                eigenvalue: min.as_f64(),
            });
            clamped_area += triangle_areas.get(t).copied().unwrap_or_else(T::zero);
        }
        tensors.push(m * eighth);
    }
    let total = triangle_areas.iter().fold(T::zero(), |a, &b| a + b);
    if total > T::zero() {
        report.area_fraction = (clamped_area / total).as_f64();
    }
    Ok((ScallopMetricField::from_tensors(tensors, gouged), report))
}

/// Symmetric square root of a symmetric positive definite matrix.
pub fn symmetric_sqrt<T: Real>(m: &Matrix3<T>) -> Option<Matrix3<T>> {
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().any(|e| !(*e > T::zero())) {
        return None;
    }
    let root = eig.eigenvalues.map(|e| e.sqrt());
    let d = &eig.eigenvectors * Matrix3::from_diagonal(&root) * eig.eigenvectors.transpose();
    Some((d + d.transpose()) * T::lit(0.5))
}

pub fn factor_metric<T: Real>(field: &mut ScallopMetricField<T>) -> Result<()> {
    field.factors = field
        .tensors
        .iter()
        .enumerate()
        .map(|(t, m)| symmetric_sqrt(m).ok_or(Error::NotPositiveDefinite { triangle: t }))
        .collect::<Result<_>>()?;
    Ok(())
}

/// `l' = |D e|` for each halfedge, shrinking the longest of three lengths when
/// they violate the triangle inequality.
pub fn metric_edge_lengths<T: Real>(mesh: &Mesh<T>, field: &mut ScallopMetricField<T>) {
    let slack = T::lit(1e-12);
    let shrink = T::one() - T::lit(1e-9).max(T::epsilon() * T::lit(8.0));
    let mut perturbed = 0;
    let mut sum = T::zero();
    field.edge_lengths = (0..mesh.triangle_count())
        .map(|t| {
            let p = mesh.corner_positions(t);
            let d = &field.factors[t];
            let mut l = [0, 1, 2].map(|c| (d * (p[(c + 1) % 3] - p[c])).norm());
            let longest = (0..3).max_by(|&a, &b| l[a].partial_cmp(&l[b]).unwrap()).unwrap();
            let others = l[(longest + 1) % 3] + l[(longest + 2) % 3];
            if l[longest] >= others - slack * others {
                l[longest] = others * shrink;
                perturbed += 1;
            }
            sum += l[0] + l[1] + l[2];
            l
        })
        .collect();
    field.perturbed = perturbed;
    field.mean_edge_length = if mesh.triangle_count() > 0 {
        sum / T::from_usize_lossy(3 * mesh.triangle_count())
    } else {
        T::zero()
    };
}

/// Scallop metric, factors and metric lengths in one pass.
pub fn scallop_metric<T: Real>(
    mesh: &Mesh<T>,
    cache: &GeometryCache<T>,
    triangle_tensors: &[Matrix3<T>],
    config: &MetricConfig<T>,
) -> Result<(ScallopMetricField<T>, GougingReport)> {
    let (mut field, report) = build_scallop_metric(triangle_tensors, &cache.triangle_areas, config)?;
    factor_metric(&mut field)?;
    metric_edge_lengths(mesh, &mut field);
    Ok((field, report))
}
