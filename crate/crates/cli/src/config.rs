//! Run settings: a `key = value` file merged under command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use isoscallop::toolpath::{ExportFormat, PlotAxis};
use isoscallop::{PipelineConfig, SourceSelection};

use crate::Failure;

/// Pipeline flags shared by `generate` and `bench`. Every field is optional so
/// a config file can supply it; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Ball-end cutter radius in mm (required here or in the config file).
    #[arg(long)]
    pub cutter_radius: Option<f64>,
    /// Target scallop height in mm.
    #[arg(long)]
    pub scallop_height: Option<f64>,
    /// Flip or split triangles whose smallest angle is below this (degrees).
    #[arg(long)]
    pub remesh_min_angle: Option<f64>,
    #[arg(long)]
    pub no_remesh: bool,
    /// Neighbourhood rings used by the curvature fit.
    #[arg(long)]
    pub curvature_ring: Option<usize>,
    /// Lower clamp for metric eigenvalues (default 1e-3 / r).
    #[arg(long)]
    pub spd_floor: Option<f64>,
    /// Diffusion time as a multiple of the squared mean metric edge length.
    #[arg(long)]
    pub time_multiplier: Option<f64>,
    /// Extra Poisson passes that re-normalise the distance gradient.
    #[arg(long)]
    pub refine_iters: Option<usize>,
    #[arg(long)]
    pub solver_tol: Option<f64>,
    /// Source boundary loop, by index in descending length (default 0).
    #[arg(long, conflicts_with = "source_vertices")]
    pub source_loop: Option<usize>,
    /// File of whitespace-separated vertex indices forming the source polyline.
    #[arg(long)]
    pub source_vertices: Option<PathBuf>,
    /// Export formats: json, csv, svg, gcode. Repeat or separate by commas.
    #[arg(long, value_delimiter = ',')]
    pub export: Vec<String>,
    /// Axis the svg plot looks along.
    #[arg(long)]
    pub plot_axis: Option<String>,
    /// Key = value settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    cutter_radius: Option<f64>,
    scallop_height: Option<f64>,
    remesh: Option<bool>,
    remesh_min_angle: Option<f64>,
    curvature_ring: Option<usize>,
    spd_floor: Option<f64>,
    time_multiplier: Option<f64>,
    refine_iters: Option<usize>,
    solver_tol: Option<f64>,
    source_loop: Option<usize>,
    source_vertices: Option<PathBuf>,
    export: Option<Vec<String>>,
    plot_axis: Option<String>,
}

fn read_file_config(path: &Path) -> Result<FileConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    // dashed keys are accepted so the file can mirror flag spellings
    let table: toml::Table = table.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect();
    let mut config: FileConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    // relative paths in a config file are relative to the file
    if let (Some(p), Some(dir)) = (&config.source_vertices, path.parent()) {
        if p.is_relative() {
            config.source_vertices = Some(dir.join(p));
        }
    }
    Ok(config)
}

/// Effective settings after merging.
#[derive(Debug, Clone)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub exports: Vec<ExportFormat>,
    pub plot_axis: PlotAxis,
}

/// Scallop height used when neither flag nor file gives one.
pub const DEFAULT_SCALLOP_HEIGHT: f64 = 0.1;

impl RunArgs {
    pub fn resolve(&self) -> Result<Settings, Failure> {
        let file = match &self.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let cutter_radius = self
            .cutter_radius
            .or(file.cutter_radius)
            .ok_or_else(|| Failure::usage("the following required argument was not provided: --cutter-radius <CUTTER_RADIUS>"))?;
        let scallop_height = self.scallop_height.or(file.scallop_height).unwrap_or(DEFAULT_SCALLOP_HEIGHT);
        let mut c = PipelineConfig::new(cutter_radius, scallop_height);
        c.remesh = !self.no_remesh && file.remesh.unwrap_or(true);
        if let Some(a) = self.remesh_min_angle.or(file.remesh_min_angle) {
            c.remesh_min_angle = a;
        }
        if let Some(n) = self.curvature_ring.or(file.curvature_ring) {
            c.curvature_ring = n;
        }
        c.spd_floor = self.spd_floor.or(file.spd_floor);
        if let Some(m) = self.time_multiplier.or(file.time_multiplier) {
            c.time_multiplier = m;
        }
        if let Some(n) = self.refine_iters.or(file.refine_iters) {
            c.refine_iters = n;
        }
        if let Some(t) = self.solver_tol.or(file.solver_tol) {
            c.solver_tol = t;
        }
        let flag_source = self.source_loop.is_some() || self.source_vertices.is_some();
        let (loop_index, vertex_file) = if flag_source {
            (self.source_loop, self.source_vertices.clone())
        } else {
            (file.source_loop, file.source_vertices)
        };
        c.source = match (loop_index, vertex_file) {
            (_, Some(path)) => SourceSelection::Vertices(read_vertex_list(&path)?),
            (Some(i), None) => SourceSelection::Loop(i),
            (None, None) => SourceSelection::LongestBoundary,
        };
        c.validate().map_err(Failure::from)?;

        let names = if self.export.is_empty() { file.export.unwrap_or_default() } else { self.export.clone() };
        let mut exports = Vec::new();
        for name in names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
            let f: ExportFormat = name.parse().map_err(|e: isoscallop::Error| Failure::usage(e.to_string()))?;
            if !exports.contains(&f) {
                exports.push(f);
            }
        }
        let plot_axis = match self.plot_axis.clone().or(file.plot_axis) {
            Some(s) => s.parse().map_err(|e: isoscallop::Error| Failure::usage(e.to_string()))?,
            None => PlotAxis::default(),
        };
        Ok(Settings {
            pipeline: c,
            exports,
            plot_axis,
        })
    }
}

pub fn read_vertex_list(path: &Path) -> Result<Vec<usize>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let list = text
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::input(format!("{}: bad vertex index: {e}", path.display())))?;
    if list.is_empty() {
        return Err(Failure::input(format!("{}: no vertex indices", path.display())));
    }
    Ok(list)
}
