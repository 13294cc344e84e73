//! Analytic surfaces, defect injection and independent reference
//! computations used to check the pipeline.

pub mod bench;
pub mod defects;
pub mod dijkstra;
pub mod scallop2d;
pub mod side_step;
pub mod synth;

pub use bench::{bench_run, BenchRecord};
pub use defects::{inject_defects, DefectSpec, HoleSpec};
pub use dijkstra::dijkstra_geodesic;
pub use scallop2d::{approx_scallop_height, exact_scallop_2d};
pub use side_step::{side_step_error, ErrorReport, SideStepOptions};
pub use synth::{synth_surface, AnalyticSurface, Density, SynthSpec};
