//! Analytic test surfaces and their triangulations.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Closed-form surfaces with known normals and curvatures. Curvatures use the
/// machining sign: positive where the surface bends away from its normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticSurface {
    /// `[0, width] x [0, height]` in the plane `z = 0`, normal `+z`.
    Plane { width: f64, height: f64 },
    /// Sphere of `radius` about the origin, polar angle up to `max_polar`
    /// radians from `+z`, outward normal.
    SphereCap { radius: f64, max_polar: f64 },
    /// Cylinder about the z axis, angles in `[-half_angle, half_angle]`,
    /// `z` in `[0, length]`, outward normal.
    CylinderPatch { radius: f64, length: f64, half_angle: f64 },
    /// `z = (x² + y²) / (2 apex_radius)` over the disk of radius `extent`,
    /// normal `+z` (the concave side).
    Paraboloid { apex_radius: f64, extent: f64 },
    /// `z = amplitude sin(kx) sin(ky)` with `k = 2π / wavelength` over
    /// `[0, width] x [0, height]`, normal `+z` side.
    Wave { width: f64, height: f64, amplitude: f64, wavelength: f64 },
}

/// Graph `z = f(x, y)` derivatives at a point: `(fx, fy, fxx, fxy, fyy)`.
fn graph_curvatures(fx: f64, fy: f64, fxx: f64, fxy: f64, fyy: f64) -> (f64, f64) {
    let (e, f, g) = (1.0 + fx * fx, fx * fy, 1.0 + fy * fy);
    let w = (1.0 + fx * fx + fy * fy).sqrt();
    let (l, m, n) = (-fxx / w, -fxy / w, -fyy / w);
    let det_i = e * g - f * f;
    let gauss = (l * n - m * m) / det_i;
    let mean = (e * n - 2.0 * f * m + g * l) / (2.0 * det_i);
    let disc = (mean * mean - gauss).max(0.0).sqrt();
    (mean + disc, mean - disc)
}

fn graph_normal(fx: f64, fy: f64) -> Vector3<f64> {
    Vector3::new(-fx, -fy, 1.0).normalize()
}

impl AnalyticSurface {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{what} must be positive and finite")));
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match *self {
            Self::Plane { width, height } => {
                if !pos(width) || !pos(height) {
                    return bad("plane extents");
                }
            }
            Self::SphereCap { radius, max_polar } => {
                if !pos(radius) {
                    return bad("sphere radius");
                }
                if !(max_polar > 0.0 && max_polar < PI) {
                    return Err(Error::InvalidParameter("cap polar angle must lie in (0, π)".into()));
                }
            }
            Self::CylinderPatch { radius, length, half_angle } => {
                if !pos(radius) || !pos(length) {
                    return bad("cylinder radius and length");
                }
                if !(half_angle > 0.0 && half_angle < PI) {
                    return Err(Error::InvalidParameter("cylinder half angle must lie in (0, π)".into()));
                }
            }
            Self::Paraboloid { apex_radius, extent } => {
                if !pos(apex_radius) || !pos(extent) {
                    return bad("paraboloid apex radius and extent");
                }
            }
            Self::Wave { width, height, amplitude, wavelength } => {
                if !pos(width) || !pos(height) || !pos(wavelength) || !(amplitude >= 0.0) {
                    return bad("wave extents, amplitude and wavelength");
                }
            }
        }
        Ok(())
    }

    /// How far `p` is off the surface, along the surface's defining function.
    pub fn residual(&self, p: &Point3<f64>) -> f64 {
        match *self {
            Self::Plane { .. } => p.z,
            Self::SphereCap { radius, .. } => p.coords.norm() - radius,
            Self::CylinderPatch { radius, .. } => p.x.hypot(p.y) - radius,
            Self::Paraboloid { apex_radius, .. } => p.z - (p.x * p.x + p.y * p.y) / (2.0 * apex_radius),
            Self::Wave { amplitude, wavelength, .. } => {
                let k = 2.0 * PI / wavelength;
                p.z - amplitude * (k * p.x).sin() * (k * p.y).sin()
            }
        }
    }

    pub fn normal(&self, p: &Point3<f64>) -> Vector3<f64> {
        match *self {
            Self::Plane { .. } => Vector3::z(),
            Self::SphereCap { .. } => p.coords.normalize(),
            Self::CylinderPatch { .. } => Vector3::new(p.x, p.y, 0.0).normalize(),
            Self::Paraboloid { apex_radius, .. } => graph_normal(p.x / apex_radius, p.y / apex_radius),
            Self::Wave { amplitude, wavelength, .. } => {
                let k = 2.0 * PI / wavelength;
                let (sx, cx, sy, cy) = ((k * p.x).sin(), (k * p.x).cos(), (k * p.y).sin(), (k * p.y).cos());
                graph_normal(amplitude * k * cx * sy, amplitude * k * sx * cy)
            }
        }
    }

    /// `(k1, k2)` with `k1 >= k2` at the surface point nearest `p`.
    pub fn principal_curvatures(&self, p: &Point3<f64>) -> (f64, f64) {
        match *self {
            Self::Plane { .. } => (0.0, 0.0),
            Self::SphereCap { radius, .. } => (1.0 / radius, 1.0 / radius),
            Self::CylinderPatch { radius, .. } => (1.0 / radius, 0.0),
            Self::Paraboloid { apex_radius: a, .. } => graph_curvatures(p.x / a, p.y / a, 1.0 / a, 0.0, 1.0 / a),
            Self::Wave { amplitude, wavelength, .. } => {
                let k = 2.0 * PI / wavelength;
                let (sx, cx, sy, cy) = ((k * p.x).sin(), (k * p.x).cos(), (k * p.y).sin(), (k * p.y).cos());
                let a = amplitude;
                graph_curvatures(a * k * cx * sy, a * k * sx * cy, -a * k * k * sx * sy, a * k * k * cx * cy, -a * k * k * sx * sy)
            }
        }
    }

    /// Smallest radius of curvature over the patch (infinite when flat).
    pub fn min_radius_of_curvature(&self) -> f64 {
        match *self {
            Self::Plane { .. } => f64::INFINITY,
            Self::SphereCap { radius, .. } | Self::CylinderPatch { radius, .. } => radius,
            Self::Paraboloid { apex_radius, .. } => apex_radius,
            Self::Wave { amplitude, wavelength, .. } => {
                let k = 2.0 * PI / wavelength;
                if amplitude > 0.0 {
                    1.0 / (amplitude * k * k)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Edge-length multiplier over the parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Density {
    #[default]
    Uniform,
    /// Multiplier varying linearly from `start` to `end` along parameter
    /// `axis` (0 or 1; radial for cap-like surfaces).
    Linear { axis: usize, start: f64, end: f64 },
}

impl Density {
    fn along(&self, axis: usize) -> (f64, f64) {
        match *self {
            Self::Linear { axis: a, start, end } if a == axis => (start, end),
            _ => (1.0, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Linear { axis, start, end } = *self {
            if axis > 1 || !(start > 0.0) || !(end > 0.0) {
                return Err(Error::InvalidParameter("density needs axis 0 or 1 and positive multipliers".into()));
            }
        }
        Ok(())
    }
}

/// `n + 1` nodes over `[0, length]` whose local spacing is `edge` times a
/// multiplier varying linearly from `start` to `end`.
fn nodes(length: f64, edge: f64, (start, end): (f64, f64)) -> Vec<f64> {
    let ratio = end / start;
    // number of steps = integral of 1 / spacing
    let flat = (ratio - 1.0).abs() < 1e-12;
    let steps = if flat { length / (edge * start) } else { length * ratio.ln() / ((end - start) * edge) };
    let n = (steps.round() as usize).max(1);
    (0..=n)
        .map(|i| {
            let f = i as f64 / n as f64;
            let u = if flat { f } else { (ratio.powf(f) - 1.0) / (ratio - 1.0) };
            if i == n {
                length
            } else {
                u.clamp(0.0, 1.0) * length
            }
        })
        .collect()
}

/// Four triangles per cell around a centre vertex, counter-clockwise in (u, v).
fn cross_grid(us: &[f64], vs: &[f64], map: impl Fn(f64, f64) -> Point3<f64>) -> Result<Mesh<f64>> {
    let (nu, nv) = (us.len(), vs.len());
    let mut verts = Vec::with_capacity(nu * nv + (nu - 1) * (nv - 1));
    for &v in vs {
        for &u in us {
            verts.push(map(u, v));
        }
    }
    let corner = |i: usize, j: usize| j * nu + i;
    let mut tris = Vec::with_capacity(4 * (nu - 1) * (nv - 1));
    for j in 0..nv - 1 {
        for i in 0..nu - 1 {
            let m = verts.len();
            verts.push(map(0.5 * (us[i] + us[i + 1]), 0.5 * (vs[j] + vs[j + 1])));
            let (a, b, c, d) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
            tris.extend([[a, b, m], [b, c, m], [c, d, m], [d, a, m]]);
        }
    }
    Mesh::new(verts, tris)
}

/// Pole plus concentric rings zipped together, counter-clockwise seen from
/// the pole side. `radial(s)` gives `(horizontal radius, height)` at arc
/// length `s` from the pole.
fn ring_mesh(total_arc: f64, edge: f64, density: (f64, f64), radial: impl Fn(f64) -> (f64, f64)) -> Result<Mesh<f64>> {
    let arcs = nodes(total_arc, edge, density);
    let mult = |s: f64| density.0 + (density.1 - density.0) * (s / total_arc);
    let (_, h0) = radial(0.0);
    let mut verts = vec![Point3::new(0.0, 0.0, h0)];
    let mut rings: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, &s) in arcs.iter().enumerate().skip(1) {
        let (rho, z) = radial(s);
        let count = ((2.0 * PI * rho / (edge * mult(s))).round() as usize).max(6);
        let offset = if k % 2 == 0 { 0.5 } else { 0.0 };
        let start = verts.len();
        let angles: Vec<f64> = (0..count).map(|i| 2.0 * PI * (i as f64 + offset) / count as f64).collect();
        for &phi in &angles {
            verts.push(Point3::new(rho * phi.cos(), rho * phi.sin(), z));
        }
        rings.push((start, angles));
    }
    let mut tris = Vec::new();
    let (start, ref angles) = rings[0];
    for i in 0..angles.len() {
        tris.push([0, start + i, start + (i + 1) % angles.len()]);
    }
    for pair in rings.windows(2) {
        let (sa, ref a) = pair[0];
        let (sb, ref b) = pair[1];
        let (na, nb) = (a.len(), b.len());
        let unwrap = |list: &[f64], i: usize| list[i % list.len()] + 2.0 * PI * (i / list.len()) as f64;
        // align the first outer vertex with the first inner one
        let mut j0 = 0;
        while j0 + 1 < nb && (unwrap(b, j0 + 1) - a[0]).abs() < (unwrap(b, j0) - a[0]).abs() {
            j0 += 1;
        }
        let (mut i, mut j) = (0, 0);
        while i < na || j < nb {
            let ia = sa + i % na;
            let jb = sb + (j + j0) % nb;
            let advance_a = if i == na {
                false
            } else if j == nb {
                true
            } else {
                unwrap(a, i + 1) < unwrap(b, j + j0 + 1)
            };
            if advance_a {
                tris.push([ia, jb, sa + (i + 1) % na]);
                i += 1;
            } else {
                tris.push([ia, jb, sb + (j + j0 + 1) % nb]);
                j += 1;
            }
        }
    }
    Mesh::new(verts, tris)
}

/// Requested triangulation of an analytic surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub surface: AnalyticSurface,
    pub edge_length: f64,
    #[serde(default)]
    pub density: Density,
}

impl SynthSpec {
    pub fn new(surface: AnalyticSurface, edge_length: f64) -> Self {
        Self {
            surface,
            edge_length,
            density: Density::Uniform,
        }
    }
}

/// Triangulates the surface with every vertex placed on it exactly (up to
/// rounding of the closed forms).
pub fn synth_surface(spec: &SynthSpec) -> Result<(Mesh<f64>, AnalyticSurface)> {
    spec.surface.validate()?;
    spec.density.validate()?;
    let edge = spec.edge_length;
    if !(edge > 0.0) || !edge.is_finite() {
        return Err(Error::InvalidParameter(format!("edge length must be positive, got {edge}")));
    }
    let d = spec.density;
    let mesh = match spec.surface {
        AnalyticSurface::Plane { width, height } => {
            cross_grid(&nodes(width, edge, d.along(0)), &nodes(height, edge, d.along(1)), |x, y| {
                Point3::new(x, y, 0.0)
            })?
        }
        AnalyticSurface::Wave { width, height, amplitude, wavelength } => {
            let k = 2.0 * PI / wavelength;
            cross_grid(&nodes(width, edge, d.along(0)), &nodes(height, edge, d.along(1)), |x, y| {
                Point3::new(x, y, amplitude * (k * x).sin() * (k * y).sin())
            })?
        }
        AnalyticSurface::CylinderPatch { radius, length, half_angle } => {
            let arc = 2.0 * half_angle * radius;
            cross_grid(&nodes(arc, edge, d.along(0)), &nodes(length, edge, d.along(1)), |s, z| {
                let phi = s / radius - half_angle;
                Point3::new(radius * phi.cos(), radius * phi.sin(), z)
            })?
        }
        AnalyticSurface::SphereCap { radius, max_polar } => {
            ring_mesh(radius * max_polar, edge, d.along(0), |s| {
                let theta = s / radius;
                (radius * theta.sin(), radius * theta.cos())
            })?
        }
        AnalyticSurface::Paraboloid { apex_radius: a, extent } => {
            let arc = |r: f64| 0.5 * r * (1.0 + r * r / (a * a)).sqrt() + 0.5 * a * (r / a).asinh();
            ring_mesh(arc(extent), edge, d.along(0), |s| {
                // invert the arc length by Newton steps from the chord guess
                let mut r = s.min(extent);
                for _ in 0..50 {
                    let step = (arc(r) - s) / (1.0 + r * r / (a * a)).sqrt();
                    r -= step;
                    if step.abs() < 1e-15 * (1.0 + r) {
                        break;
                    }
                }
                (r, r * r / (2.0 * a))
            })?
        }
    };
    Ok((mesh, spec.surface))
}
