//! End-to-end run: validate, remesh, curvature, metric, geodesic, tool paths.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::curvature::{estimate_tensors, TensorField};
use crate::error::{Error, Result};
use crate::heat::{build_operators, geodesic_from_operators, GeodesicOptions, GeodesicSolution, OperatorSet, SourceSet};
use crate::mesh::{boundary_loops, geometry_cache, validate_mesh, GeometryCache, Mesh};
use crate::metric::{scallop_metric, GougingReport, MetricConfig, ScallopMetricField};
use crate::preprocess::{remesh_skinny, RemeshReport, DEFAULT_MAX_PASSES, DEFAULT_MIN_ANGLE};
use crate::scalar::Real;
use crate::toolpath::{generate_toolpaths, SourcePolyline, ToolPathParams, ToolPathSet};

/// Where the initial heat goes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSelection {
    /// Longest boundary loop; hole loops are shorter and ignored.
    #[default]
    LongestBoundary,
    /// Boundary loop by index in descending-length order.
    Loop(usize),
    /// Explicit vertices, taken as an open polyline in the given order.
    Vertices(Vec<usize>),
}

impl SourceSelection {
    pub fn describe(&self) -> String {
        match self {
            Self::LongestBoundary => "longest-boundary".into(),
            Self::Loop(i) => format!("loop:{i}"),
            Self::Vertices(v) => format!("vertices:{}", v.len()),
        }
    }

    /// Resolves to the polyline emitted as path 0 and the heat source set.
    pub fn resolve<T: Real>(&self, mesh: &Mesh<T>) -> Result<(SourcePolyline, SourceSet)> {
        let poly = match self {
            Self::Vertices(v) => SourcePolyline {
                vertices: v.clone(),
                closed: false,
            },
            Self::LongestBoundary | Self::Loop(_) => {
                let loops = boundary_loops(mesh);
                if loops.is_empty() {
                    return Err(Error::NoSource("no source loop: the mesh has no boundary".into()));
                }
                let i = if let Self::Loop(i) = self { *i } else { 0 };
                let lp = loops.get(i).ok_or_else(|| {
                    Error::NoSource(format!("boundary loop {i} requested but the mesh has {}", loops.len()))
                })?;
                SourcePolyline {
                    vertices: lp.vertices.clone(),
                    closed: true,
                }
            }
        };
        let set = SourceSet::new(poly.vertices.clone(), mesh.vertex_count())?;
        Ok((poly, set))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cutter_radius: f64,
    pub scallop_height: f64,
    pub remesh: bool,
    pub remesh_min_angle: f64,
    pub remesh_passes: usize,
    pub curvature_ring: usize,
    pub spd_floor: Option<f64>,
    pub time_multiplier: f64,
    pub refine_iters: usize,
    pub solver_tol: f64,
    pub source: SourceSelection,
}

impl PipelineConfig {
    pub fn new(cutter_radius: f64, scallop_height: f64) -> Self {
        Self {
            cutter_radius,
            scallop_height,
            remesh: true,
            remesh_min_angle: DEFAULT_MIN_ANGLE,
            remesh_passes: DEFAULT_MAX_PASSES,
            curvature_ring: 2,
            spd_floor: None,
            time_multiplier: 1.0,
            refine_iters: 1,
            solver_tol: 1e-10,
            source: SourceSelection::LongestBoundary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.cutter_radius) {
            return Err(Error::InvalidParameter(format!("cutter radius must be positive, got {}", self.cutter_radius)));
        }
        if !positive(self.scallop_height) {
            return Err(Error::InvalidParameter(format!("scallop height must be positive, got {}", self.scallop_height)));
        }
        if !(self.remesh_min_angle > 0.0 && self.remesh_min_angle < 60.0) {
            return Err(Error::InvalidParameter(format!(
                "remesh angle must lie in (0, 60) degrees, got {}",
                self.remesh_min_angle
            )));
        }
        if self.curvature_ring == 0 {
            return Err(Error::InvalidParameter("curvature ring must be at least 1".into()));
        }
        self.metric::<f64>().validate()?;
        self.geodesic::<f64>().validate()
    }

    pub fn metric<T: Real>(&self) -> MetricConfig<T> {
        MetricConfig {
            cutter_radius: T::lit(self.cutter_radius),
            spd_floor: self.spd_floor.map(T::lit),
        }
    }

    pub fn geodesic<T: Real>(&self) -> GeodesicOptions<T> {
        GeodesicOptions {
            time_multiplier: T::lit(self.time_multiplier),
            refine_iters: self.refine_iters,
            solver_tol: T::lit(self.solver_tol),
            time_override: None,
        }
    }

    pub fn toolpath_params(&self) -> ToolPathParams {
        ToolPathParams {
            cutter_radius: self.cutter_radius,
            scallop_height: self.scallop_height,
            source: self.source.describe(),
            time_multiplier: Some(self.time_multiplier),
            refine_iters: Some(self.refine_iters),
            solver_tol: Some(self.solver_tol),
        }
    }
}

/// Wall-clock seconds per stage. Preprocessing (validation, remeshing) is
/// reported apart from the solve/extract split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Timings {
    pub preprocess_s: f64,
    pub curvature_s: f64,
    pub metric_s: f64,
    pub operators_s: f64,
    pub geodesic_s: f64,
    pub extract_s: f64,
}

impl Timings {
    /// Curvature, metric, operator assembly and the solves.
    pub fn solve_s(&self) -> f64 {
        self.curvature_s + self.metric_s + self.operators_s + self.geodesic_s
    }

    pub fn total_s(&self) -> f64 {
        self.solve_s() + self.extract_s
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T: Real> {
    /// Mesh the fields live on (after remeshing, if any).
    pub mesh: Mesh<T>,
    pub cache: GeometryCache<T>,
    pub remesh: Option<RemeshReport>,
    pub tensors: TensorField<T>,
    pub metric: ScallopMetricField<T>,
    pub gouging: GougingReport,
    pub operators: OperatorSet<T>,
    pub source_polyline: SourcePolyline,
    pub source: SourceSet,
    pub geodesic: GeodesicSolution<T>,
    pub toolpaths: ToolPathSet<T>,
    pub timings: Timings,
}

impl<T: Real> PipelineOutput<T> {
    /// Paths for another scallop height from the stored distance; no solves.
    pub fn retarget(&self, scallop_height: f64) -> Result<ToolPathSet<T>> {
        let mut params = self.toolpaths.params.clone();
        params.scallop_height = scallop_height;
        generate_toolpaths(
            &self.mesh,
            &self.cache.vertex_normals,
            &self.geodesic.g,
            T::lit(scallop_height),
            &self.source_polyline,
            params,
        )
    }
}

pub fn run_pipeline<T: Real>(input: &Mesh<T>, config: &PipelineConfig) -> Result<PipelineOutput<T>> {
    config.validate()?;
    let mut timings = Timings::default();

    let clock = Instant::now();
    validate_mesh(input).into_result()?;
    // explicit vertex sources index the input mesh, so they pin its connectivity
    let remesh_allowed = config.remesh && !matches!(config.source, SourceSelection::Vertices(_));
    let (mesh, remesh) = if remesh_allowed {
        let (m, report) = remesh_skinny(input, config.remesh_min_angle, config.remesh_passes)?;
        (m, Some(report))
    } else {
        (input.clone(), None)
    };
    let cache = geometry_cache(&mesh)?;
    let (source_polyline, source) = config.source.resolve(&mesh)?;
    timings.preprocess_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let tensors = estimate_tensors(&mesh, &cache, config.curvature_ring)?;
    timings.curvature_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (metric, gouging) = scallop_metric(&mesh, &cache, &tensors.triangle, &config.metric())?;
    timings.metric_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let operators = build_operators(&mesh, &metric)?;
    timings.operators_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let geodesic = geodesic_from_operators(&operators, &source, &config.geodesic())?;
    timings.geodesic_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let toolpaths = generate_toolpaths(
        &mesh,
        &cache.vertex_normals,
        &geodesic.g,
        T::lit(config.scallop_height),
        &source_polyline,
        config.toolpath_params(),
    )?;
    timings.extract_s = clock.elapsed().as_secs_f64();

    Ok(PipelineOutput {
        mesh,
        cache,
        remesh,
        tensors,
        metric,
        gouging,
        operators,
        source_polyline,
        source,
        geodesic,
        toolpaths,
        timings,
    })
}
