//! Constant-scallop-height ball-end tool paths on triangle meshes.
//!
//! The pipeline estimates a curvature tensor per triangle, turns it into the
//! scallop metric `(T + I/r) / 8`, computes a geodesic distance from the source
//! curve with the heat method under that metric and finally extracts iso-level
//! curves every `sqrt(h)` as cutter-contact paths. Under the scallop metric the
//! squared distance between neighbouring paths is the scallop height, so one
//! geodesic solve serves every scallop height.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the common `f64` instantiation.

pub mod curvature;
pub mod error;
pub mod heat;
pub mod mesh;
pub mod metric;
pub mod oracle;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod sparse;
pub mod toolpath;

pub use error::{Error, Result};
pub use scalar::Real;

pub use curvature::{TensorField, VertexCurvature};
pub use heat::{GeodesicOptions, GeodesicSolution, OperatorSet, ScalarField, SourceSet, TriangleVectorField};
pub use mesh::{BoundaryLoop, GeometryCache, Mesh, MeshFormat, ValidationReport};
pub use metric::{GougingReport, MetricConfig, ScallopMetricField};
pub use pipeline::{PipelineConfig, PipelineOutput, SourceSelection};
pub use toolpath::{ClPath, ToolPath, ToolPathSet};

/// Double precision instantiations.
pub type Mesh64 = Mesh<f64>;
pub type GeometryCache64 = GeometryCache<f64>;
pub type TensorField64 = TensorField<f64>;
pub type ScallopMetricField64 = ScallopMetricField<f64>;
pub type OperatorSet64 = OperatorSet<f64>;
pub type ScalarField64 = ScalarField<f64>;
pub type ToolPathSet64 = ToolPathSet<f64>;

/// Single precision instantiations.
pub type Mesh32 = Mesh<f32>;
pub type ScallopMetricField32 = ScallopMetricField<f32>;
pub type ScalarField32 = ScalarField<f32>;
