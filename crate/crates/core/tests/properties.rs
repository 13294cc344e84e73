mod common;

use nalgebra::{Matrix3, Point3};
use proptest::prelude::*;

use isoscallop::curvature::estimate_tensors;
use isoscallop::heat::build_operators;
use isoscallop::mesh::{geometry_cache, Mesh};
use isoscallop::metric::{scallop_metric, MetricConfig, ScallopMetricField};
use isoscallop::oracle::{approx_scallop_height, exact_scallop_2d, inject_defects, DefectSpec};
use isoscallop::pipeline::{run_pipeline, PipelineConfig};
use isoscallop::preprocess::{quality_report, remesh_skinny};

/// Plate with interior vertices jittered by up to `jitter / 2` cell widths
/// (small enough that no triangle folds over) and a smooth height bump.
fn jittered_plate(n: usize, jitter: f64, bump: f64, seed: u64) -> Mesh<f64> {
    let base = common::plate(n as f64, 1.0);
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let moved = (0..base.vertex_count())
        .map(|v| {
            let p = base.position(v);
            let (dx, dy) = (next(), next());
            let (x, y) = if base.is_boundary_vertex(v) {
                (p.x, p.y)
            } else {
                (p.x + dx * jitter, p.y + dy * jitter)
            };
            let s = n as f64;
            Point3::new(x, y, bump * (x * (s - x) * y * (s - y)) / (s * s * s * s))
        })
        .collect();
    base.with_vertices(moved).unwrap()
}

fn spd(a: [f64; 6]) -> Matrix3<f64> {
    let m = Matrix3::new(a[0], a[1], a[2], a[3], a[4], a[5], a[1], a[3], a[0]);
    m * m.transpose() + Matrix3::identity() * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn voronoi_areas_partition_the_surface(n in 3usize..9, jitter in 0.0f64..0.3, bump in 0.0f64..3.0, seed: u64) {
        let mesh = jittered_plate(n, jitter, bump, seed);
        let cache = geometry_cache(&mesh).unwrap();
        let total: f64 = cache.voronoi_areas.iter().sum();
        prop_assert!((total - mesh.total_area()).abs() <= 1e-10 * total);
        prop_assert!(cache.voronoi_areas.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn laplacian_is_symmetric_with_zero_rows(
        n in 3usize..8, jitter in 0.0f64..0.3, a in prop::array::uniform6(-1.0f64..1.0), seed: u64
    ) {
        let mesh = jittered_plate(n, jitter, 1.0, seed);
        let metric = ScallopMetricField::uniform(&mesh, spd(a)).unwrap();
        let ops = build_operators(&mesh, &metric).unwrap();
        prop_assert!(ops.laplacian.is_symmetric());
        let scale = ops.laplacian.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        for s in ops.laplacian.row_sums() {
            prop_assert!(s.abs() <= 1e-10 * scale);
        }
        prop_assert!(ops.mass.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn metric_factor_squares_to_tensor(
        n in 3usize..7, jitter in 0.0f64..0.3, bump in 0.0f64..6.0, r in 0.5f64..10.0, seed: u64
    ) {
        let mesh = jittered_plate(n, jitter, bump, seed);
        let cache = geometry_cache(&mesh).unwrap();
        let tensors = estimate_tensors(&mesh, &cache, 1).unwrap();
        let (metric, _) = scallop_metric(&mesh, &cache, &tensors.triangle, &MetricConfig::new(r)).unwrap();
        for (d, t) in metric.factors.iter().zip(&metric.tensors) {
            prop_assert!((d * d - t).abs().max() <= 1e-10 * t.norm().max(1.0));
            prop_assert!((d - d.transpose()).abs().max() <= 1e-12 * d.norm().max(1.0));
            prop_assert!(t.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn exact_scallop_agrees_to_second_order(radius in 1.0f64..50.0, cutter in 0.5f64..5.0, frac in 0.01f64..0.2) {
        let w = frac * cutter;
        for surface in [radius, -radius.max(cutter * 1.5)] {
            let exact = exact_scallop_2d(surface, cutter, w).unwrap();
            let approx = approx_scallop_height(surface, cutter, w);
            prop_assert!(exact > 0.0);
            // relative gap shrinks like (w / r)^2
            prop_assert!((exact - approx).abs() <= 2.0 * frac * frac * approx.abs() + 1e-15);
        }
    }

    #[test]
    fn remesh_never_lowers_min_angle(n in 3usize..7, jitter in 0.0f64..0.3, seed: u64) {
        let mesh = jittered_plate(n, jitter, 0.0, seed);
        let before = quality_report(&mesh, 20.0).global_min_angle;
        let (out, report) = remesh_skinny(&mesh, 20.0, 5).unwrap();
        let after = quality_report(&out, 20.0).global_min_angle;
        prop_assert!(after >= before - 1e-9);
        prop_assert!((report.min_angle_after - after).abs() < 1e-9);
        prop_assert!((out.total_area() - mesh.total_area()).abs() <= 1e-9 * mesh.total_area());
    }

    #[test]
    fn zero_noise_without_holes_is_identity(n in 2usize..6, seed: u64) {
        let mesh = common::plate(n as f64, 0.5);
        let spec = DefectSpec { seed, ..Default::default() };
        let out = inject_defects(&mesh, &spec).unwrap();
        prop_assert_eq!(out.vertices(), mesh.vertices());
        prop_assert_eq!(out.triangles(), mesh.triangles());
    }

    #[test]
    fn defects_are_reproducible(sigma in 0.0f64..0.3, seed: u64) {
        let mesh = common::plate(4.0, 0.5);
        let spec = DefectSpec { noise_sigma: sigma, seed, ..Default::default() };
        let a = inject_defects(&mesh, &spec).unwrap();
        let b = inject_defects(&mesh, &spec).unwrap();
        prop_assert_eq!(a.vertices(), b.vertices());
        let moved = a.vertices().iter().zip(mesh.vertices()).filter(|(p, q)| p != q).count();
        prop_assert!(sigma == 0.0 || moved > 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn pipeline_is_deterministic_and_levels_are_spaced(jitter in 0.0f64..0.3, seed: u64, h in 0.005f64..0.05) {
        let mesh = jittered_plate(6, jitter, 1.0, seed);
        let config = PipelineConfig::new(3.0, h);
        let a = run_pipeline(&mesh, &config).unwrap();
        let b = run_pipeline(&mesh, &config).unwrap();
        prop_assert_eq!(&a.geodesic.g.0, &b.geodesic.g.0);
        prop_assert_eq!(a.toolpaths.paths.len(), b.toolpaths.paths.len());
        for (k, level) in a.toolpaths.levels().iter().enumerate() {
            prop_assert!((level - k as f64 * h.sqrt()).abs() <= 1e-12);
        }
        prop_assert!(a.geodesic.g.0.iter().all(|&x| x >= -1e-9));
        for (t, n) in a.tensors.vertex.iter().zip(&a.cache.vertex_normals) {
            prop_assert!((t * n).norm() <= 1e-6 * t.norm().max(1e-12));
        }
    }
}
