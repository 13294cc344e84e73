mod common;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};

use common::*;
use isoscallop::curvature::estimate_tensors;
use isoscallop::heat::{compute_geodesic, GeodesicOptions, SourceSet};
use isoscallop::mesh::{boundary_loops, geometry_cache, load_mesh, save_mesh, Mesh};
use isoscallop::metric::{scallop_metric, MetricConfig, ScallopMetricField};
use isoscallop::oracle::{
    dijkstra_geodesic, exact_scallop_2d, inject_defects, synth_surface, AnalyticSurface, DefectSpec, HoleSpec,
    SynthSpec,
};
use isoscallop::pipeline::{run_pipeline, PipelineConfig};
use isoscallop::sparse::solver_calls;
use isoscallop::toolpath::{extract_iso_curves, generate_toolpaths};
use isoscallop::{Mesh32, TensorField};

/// Mean principal-curvature error over interior vertices, relative to the
/// largest curvature on the patch.
fn curvature_error(mesh: &Mesh<f64>, surface: &AnalyticSurface, field: &TensorField<f64>) -> f64 {
    let scale = 1.0 / surface.min_radius_of_curvature();
    let mut total = 0.0;
    let mut n = 0;
    for v in 0..mesh.vertex_count() {
        if mesh.is_boundary_vertex(v) {
            continue;
        }
        let c = field.curvatures[v].as_ref().unwrap();
        let (k1, k2) = surface.principal_curvatures(mesh.position(v));
        total += ((c.k1 - k1).abs() + (c.k2 - k2).abs()) / (2.0 * scale);
        n += 1;
    }
    total / n as f64
}

#[test]
fn principal_curvatures_on_analytic_surfaces() {
    let cases = [
        (AnalyticSurface::SphereCap { radius: 1.0, max_polar: 2.0 }, 0.05),
        (AnalyticSurface::CylinderPatch { radius: 2.0, length: 3.0, half_angle: 1.2 }, 0.1),
        (AnalyticSurface::Paraboloid { apex_radius: 1.0, extent: 1.0 }, 0.05),
        (AnalyticSurface::Wave { width: 12.0, height: 12.0, amplitude: 0.1, wavelength: 6.0 }, 0.4),
    ];
    for (surface, edge) in cases {
        let (mesh, _) = synth_surface(&SynthSpec::new(surface, edge)).unwrap();
        let cache = geometry_cache(&mesh).unwrap();
        let field = estimate_tensors(&mesh, &cache, 2).unwrap();
        let err = curvature_error(&mesh, &surface, &field);
        assert!(err <= 0.05, "{surface:?}: mean error {err}");
    }
}

#[test]
fn sphere_tensor_is_tangent_projector() {
    let surface = AnalyticSurface::SphereCap { radius: 1.0, max_polar: 2.0 };
    let (mesh, _) = synth_surface(&SynthSpec::new(surface, 0.05)).unwrap();
    let cache = geometry_cache(&mesh).unwrap();
    let field = estimate_tensors(&mesh, &cache, 2).unwrap();
    for v in (0..mesh.vertex_count()).filter(|&v| !mesh.is_boundary_vertex(v)).step_by(37) {
        let n = mesh.position(v).coords.normalize();
        let expect = Matrix3::identity() - n * n.transpose();
        assert!((field.vertex[v] - expect).abs().max() <= 0.05, "vertex {v}");
        assert!((field.vertex[v] * cache.vertex_normals[v]).norm() <= 1e-6 * field.vertex[v].norm());
    }
    for t in (0..mesh.triangle_count()).step_by(53) {
        let mut e: Vec<f64> = field.triangle[t].symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(|a, b| a.total_cmp(b));
        assert!(e[0].abs() < 0.05 && (e[1] - 1.0).abs() < 0.05 && (e[2] - 1.0).abs() < 0.05, "{e:?}");
    }
}

#[test]
fn cylinder_tensor_eigenpairs() {
    let surface = AnalyticSurface::CylinderPatch { radius: 2.0, length: 3.0, half_angle: 1.0 };
    let (mesh, _) = synth_surface(&SynthSpec::new(surface, 0.1)).unwrap();
    let cache = geometry_cache(&mesh).unwrap();
    let field = estimate_tensors(&mesh, &cache, 2).unwrap();
    for v in (0..mesh.vertex_count()).filter(|&v| !mesh.is_boundary_vertex(v)).step_by(29) {
        let eig = field.vertex[v].symmetric_eigen();
        let i = eig.eigenvalues.imax();
        assert!((eig.eigenvalues[i] - 0.5).abs() < 0.025);
        assert!(eig.eigenvectors.column(i).dot(&Vector3::z()).abs() < 0.1);
        let rest: f64 = (0..3).filter(|&j| j != i).map(|j| eig.eigenvalues[j].abs()).sum();
        assert!(rest < 0.05);
    }
}

#[test]
fn curvature_is_rigid_motion_equivariant() {
    let surface = AnalyticSurface::Wave { width: 4.0, height: 4.0, amplitude: 0.3, wavelength: 3.0 };
    let (mesh, _) = synth_surface(&SynthSpec::new(surface, 0.2)).unwrap();
    let base = estimate_tensors(&mesh, &geometry_cache(&mesh).unwrap(), 2).unwrap();
    for (i, angles) in [(0.3, 0.2, -1.0), (2.0, -0.7, 0.4), (PI, 0.0, 0.5)].iter().enumerate() {
        let q = Rotation3::from_euler_angles(angles.0, angles.1, angles.2);
        let shift = Vector3::new(i as f64, -2.0, 10.0);
        let moved = mesh.with_vertices(mesh.vertices().iter().map(|p| q * p + shift).collect()).unwrap();
        let field = estimate_tensors(&moved, &geometry_cache(&moved).unwrap(), 2).unwrap();
        let m = q.matrix();
        for (a, b) in base.vertex.iter().zip(&field.vertex) {
            assert!((m * a * m.transpose() - b).abs().max() <= 1e-6);
        }
    }
}

#[test]
fn disk_iso_curve_is_a_circle() {
    let (mesh, _) = synth_surface(&SynthSpec::new(AnalyticSurface::SphereCap { radius: 1000.0, max_polar: 0.01 }, 0.1))
        .unwrap();
    // nearly flat disk of radius 10 around the pole
    let centre = Point3::new(0.0, 0.0, 1000.0);
    let g: Vec<f64> = mesh.vertices().iter().map(|p| (p - centre).norm()).collect();
    let cache = geometry_cache(&mesh).unwrap();
    let rim = g.iter().fold(0.0f64, |m, &x| m.max(x));
    let curves = extract_iso_curves(&mesh, &cache.vertex_normals, &g, 0.5 * rim);
    assert_eq!(curves.len(), 1);
    assert!(curves[0].closed);
    let pts = &curves[0].points;
    let length: f64 = (0..pts.len()).map(|i| (pts[(i + 1) % pts.len()] - pts[i]).norm()).sum();
    let expect = 2.0 * PI * 0.5 * rim;
    assert!((length / expect - 1.0).abs() < 0.01, "{length} vs {expect}");
}

#[test]
fn quadrupled_height_keeps_every_other_level() {
    let mesh = plate(10.0, 0.25);
    let out = run_pipeline(&mesh, &PipelineConfig::new(4.0, 0.01)).unwrap();
    let before = solver_calls();
    let coarse = out.retarget(0.04).unwrap();
    assert_eq!(solver_calls().since(before).total(), 0);
    let fine_levels = out.toolpaths.levels();
    let coarse_levels = coarse.levels();
    assert!(coarse_levels.len() > 2);
    for (k, level) in coarse_levels.iter().enumerate() {
        assert!((level - fine_levels[2 * k]).abs() <= 1e-12);
    }
    let fine: Vec<_> = out.toolpaths.paths.iter().filter(|p| p.level == fine_levels[2]).collect();
    let same: Vec<_> = coarse.paths.iter().filter(|p| p.level == coarse_levels[1]).collect();
    assert_eq!(fine.len(), same.len());
    for (a, b) in fine.iter().zip(&same) {
        assert_eq!(a.points.len(), b.points.len());
        assert!(a.points.iter().zip(&b.points).all(|(p, q)| (p - q).norm() <= 1e-12));
    }
}

#[test]
fn path_points_sit_on_edges_at_their_level() {
    let mesh = cap(0.4);
    let out = run_pipeline(&mesh, &PipelineConfig::new(4.0, 0.1)).unwrap();
    let g = &out.geodesic.g;
    for path in out.toolpaths.paths.iter().skip(1) {
        for (p, loc) in path.points.iter().zip(&path.locations) {
            let (a, b) = (out.mesh.position(loc.a), out.mesh.position(loc.b));
            let on_edge = a + (b - a) * loc.t;
            assert!((on_edge - p).norm() <= 1e-9);
            let value = g[loc.a] + (g[loc.b] - g[loc.a]) * loc.t;
            assert!((value - path.level).abs() <= 1e-9 * 0.1f64.sqrt());
        }
    }
}

#[test]
fn quadratic_scallop_model_matches_circle_intersection() {
    // at small heights the quadratic model matches the circle intersection
    let (r, rr, h): (f64, f64, f64) = (4.0, 10.0, 0.01);
    let w = (8.0 * h * rr * r / (rr + r)).sqrt();
    let exact = exact_scallop_2d(rr, r, w).unwrap();
    assert!((exact - h).abs() <= 0.01 * h, "{exact}");
}

#[test]
fn scaled_metric_scales_distance() {
    let mesh = plate(8.0, 0.25);
    let src = SourceSet::new(boundary_loops(&mesh)[0].vertices.clone(), mesh.vertex_count()).unwrap();
    let metric = ScallopMetricField::uniform(&mesh, Matrix3::identity() / 32.0).unwrap();
    let opts = GeodesicOptions::default();
    let g1 = compute_geodesic(&mesh, &metric, &src, &opts).unwrap().g;
    let g2 = compute_geodesic(&mesh, &metric.scaled(9.0), &src, &opts).unwrap().g;
    for (a, b) in g1.iter().zip(g2.iter()) {
        assert!((b - 3.0 * a).abs() <= 1e-6 * (1.0 + b.abs()));
    }
}

#[test]
fn dijkstra_overestimates_flat_distance() {
    let coarse = plate(8.0, 0.5);
    let fine = plate(8.0, 0.25);
    let gap = |mesh: &Mesh<f64>| {
        let metric = ScallopMetricField::identity(mesh).unwrap();
        let src = SourceSet::new(boundary_loops(mesh)[0].vertices.clone(), mesh.vertex_count()).unwrap();
        let d = dijkstra_geodesic(mesh, &metric, &src).unwrap();
        let mut total = 0.0;
        for v in 0..mesh.vertex_count() {
            let p = mesh.position(v);
            let exact = p.x.min(8.0 - p.x).min(p.y).min(8.0 - p.y);
            assert!(d[v] >= exact - 1e-9);
            total += d[v] - exact;
        }
        total / mesh.vertex_count() as f64
    };
    assert!(gap(&fine) < gap(&coarse));
}

#[test]
fn hole_in_disk_adds_one_loop() {
    let mesh = cap(0.3);
    assert_eq!(boundary_loops(&mesh).len(), 1);
    let z = 10.0 * 0.3f64.cos();
    let spec = DefectSpec {
        holes: vec![HoleSpec { center: [10.0 * 0.3f64.sin(), 0.0, z], radius: 1.0 }],
        ..Default::default()
    };
    let holed = inject_defects(&mesh, &spec).unwrap();
    let loops = boundary_loops(&holed);
    assert_eq!(loops.len(), 2);
    assert!(loops[0].length > loops[1].length);
}

#[test]
fn disk_round_trip_keeps_loops() {
    let mesh = cap(0.5);
    let dir = tempfile::tempdir().unwrap();
    for name in ["cap.obj", "cap.stl", "cap.ply"] {
        let path = dir.path().join(name);
        save_mesh(&mesh, &path, None).unwrap();
        let back: Mesh<f64> = load_mesh(&path, None).unwrap();
        assert_eq!(back.triangle_count(), mesh.triangle_count());
        assert_eq!(boundary_loops(&back).len(), 1, "{name}");
    }
}

#[test]
fn single_precision_pipeline() {
    let mesh: Mesh32 = plate(10.0, 0.4).cast();
    let out = run_pipeline(&mesh, &PipelineConfig::new(4.0, 0.05)).unwrap();
    let double = run_pipeline(&plate(10.0, 0.4), &PipelineConfig::new(4.0, 0.05)).unwrap();
    assert_eq!(out.toolpaths.paths.len(), double.toolpaths.paths.len());
    let gmax = |g: &[f64]| g.iter().fold(0.0f64, |m, &x| m.max(x));
    let g32: Vec<f64> = out.geodesic.g.iter().map(|&x| x as f64).collect();
    assert!((gmax(&g32) / gmax(&double.geodesic.g) - 1.0).abs() < 1e-3);
}

#[test]
fn toolpaths_reuse_distance_without_solves() {
    let mesh = plate(6.0, 0.3);
    let cache = geometry_cache(&mesh).unwrap();
    let tensors = estimate_tensors(&mesh, &cache, 2).unwrap();
    let (metric, _) = scallop_metric(&mesh, &cache, &tensors.triangle, &MetricConfig::new(4.0)).unwrap();
    let lp = boundary_loops(&mesh).remove(0);
    let src = SourceSet::new(lp.vertices.clone(), mesh.vertex_count()).unwrap();
    let g = compute_geodesic(&mesh, &metric, &src, &GeodesicOptions::default()).unwrap().g;
    let poly = isoscallop::toolpath::SourcePolyline { vertices: lp.vertices, closed: true };
    let before = solver_calls();
    for h in [0.001, 0.004, 0.01] {
        let set = generate_toolpaths(&mesh, &cache.vertex_normals, &g, h, &poly, Default::default()).unwrap();
        assert!(set.paths.len() > 1);
    }
    assert_eq!(solver_calls().since(before).total(), 0);
}
