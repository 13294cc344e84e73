//! Timing runs shaped like a solve / extract / total table.

use serde::Serialize;

use crate::error::Result;
use crate::mesh::Mesh;
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::scalar::Real;

pub const BENCH_REPEATS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub model: String,
    pub triangles: usize,
    pub solve_s: f64,
    pub extract_s: f64,
    pub total_s: f64,
}

impl BenchRecord {
    pub const HEADER: &'static str = "model,triangles,solve_s,extract_s,total_s";

    pub fn row(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4}",
            self.model, self.triangles, self.solve_s, self.extract_s, self.total_s
        )
    }
}

/// Runs the pipeline [`BENCH_REPEATS`] times and keeps the run with the median
/// total, so its parts still add up.
pub fn bench_run<T: Real>(model: &str, mesh: &Mesh<T>, config: &PipelineConfig) -> Result<BenchRecord> {
    let mut runs = Vec::with_capacity(BENCH_REPEATS);
    let mut triangles = mesh.triangle_count();
    for _ in 0..BENCH_REPEATS {
        let out = run_pipeline(mesh, config)?;
        triangles = out.mesh.triangle_count();
        runs.push(out.timings);
    }
    runs.sort_by(|a, b| a.total_s().total_cmp(&b.total_s()));
    let t = runs[BENCH_REPEATS / 2];
    Ok(BenchRecord {
        model: model.to_string(),
        triangles,
        solve_s: t.solve_s(),
        extract_s: t.extract_s,
        total_s: t.total_s(),
    })
}
