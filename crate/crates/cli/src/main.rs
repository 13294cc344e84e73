mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use isoscallop::mesh::{boundary_loops, geometry_cache, load_mesh, save_mesh, validate_mesh};
use isoscallop::oracle::{
    bench_run, dijkstra_geodesic, inject_defects, side_step_error, synth_surface, AnalyticSurface, BenchRecord,
    DefectSpec, ErrorReport, HoleSpec, SideStepOptions, SynthSpec,
};
use isoscallop::pipeline::run_pipeline;
use isoscallop::preprocess::quality_report;
use isoscallop::sparse::solver_calls;
use isoscallop::toolpath::{export_toolpaths, generate_toolpaths, ExportFormat, PlotAxis, SourcePolyline};
use isoscallop::{curvature::estimate_tensors, metric::scallop_metric};
use isoscallop::{Error, Mesh64, PipelineConfig, SourceSet, ToolPathSet64};

use config::{RunArgs, Settings};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;
pub const EXIT_NO_SOURCE: u8 = 5;
pub const EXIT_SOLVER: u8 = 6;
pub const EXIT_PARAMETER: u8 = 7;
pub const EXIT_DEFECT: u8 = 8;

/// Error with the exit code of its failure class.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Parse { .. } | Error::UnknownFormat(_) => EXIT_INPUT,
            Error::EmptyMesh
            | Error::InvalidIndex { .. }
            | Error::RepeatedIndex { .. }
            | Error::DegenerateTriangle { .. }
            | Error::Validation(_) => EXIT_VALIDATION,
            Error::NoSource(_) => EXIT_NO_SOURCE,
            Error::CurvatureFit { .. }
            | Error::TooManyFitFailures { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Solver(_) => EXIT_SOLVER,
            Error::InvalidParameter(_) => EXIT_PARAMETER,
            Error::Defect(_) => EXIT_DEFECT,
        };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "isoscallop", version, about = "Constant scallop-height ball-end tool paths on triangle meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a mesh for manifoldness, orientation and triangle quality.
    Validate {
        mesh: PathBuf,
        #[arg(long, default_value_t = isoscallop::preprocess::DEFAULT_MIN_ANGLE)]
        remesh_min_angle: f64,
    },
    /// Triangulate an analytic test surface, optionally with noise and holes.
    #[command(allow_negative_numbers = true)]
    Synth(SynthArgs),
    /// Run the full pipeline and write tool paths, the distance cache and a manifest.
    #[command(allow_negative_numbers = true)]
    Generate {
        mesh: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, short, default_value = "isoscallop-out")]
        out: PathBuf,
    },
    /// New scallop height from a previous run's cached distance; no solves.
    #[command(allow_negative_numbers = true)]
    Retarget {
        /// Output directory of an earlier `generate`.
        run_dir: PathBuf,
        #[arg(long)]
        scallop_height: f64,
        #[arg(long, value_delimiter = ',')]
        export: Vec<String>,
        #[arg(long)]
        plot_axis: Option<String>,
        /// Defaults to the run directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Side-step error of a previous run, optionally against a graph-distance oracle.
    Analyze {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        samples_per_path: usize,
        #[arg(long)]
        dijkstra: bool,
    },
    /// Timing table (solve, extract, total) over meshes or synthetic plates.
    #[command(allow_negative_numbers = true)]
    Bench {
        meshes: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Triangle counts of synthetic plates when no mesh is given.
        #[arg(long, value_delimiter = ',', default_values_t = [7_000usize, 20_000, 40_000, 80_000])]
        sizes: Vec<usize>,
        /// Write the table here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceKind {
    Plane,
    SphereCap,
    Cylinder,
    Paraboloid,
    Wave,
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    surface: SurfaceKind,
    /// Target edge length in mm.
    #[arg(long, default_value_t = 0.3)]
    edge: f64,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    /// Sphere cap opening, degrees from the pole.
    #[arg(long)]
    max_polar: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
    /// Cylinder patch half opening in degrees.
    #[arg(long)]
    half_angle: Option<f64>,
    #[arg(long)]
    apex_radius: Option<f64>,
    #[arg(long)]
    extent: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    wavelength: Option<f64>,
    /// Normal noise as a fraction of the mean edge length.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Round hole `x,y,z,radius`; repeatable.
    #[arg(long)]
    hole: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

impl SynthArgs {
    fn surface(&self) -> AnalyticSurface {
        let size = |v: Option<f64>| v.unwrap_or(20.0);
        match self.surface {
            SurfaceKind::Plane => AnalyticSurface::Plane { width: size(self.width), height: size(self.height) },
            SurfaceKind::SphereCap => AnalyticSurface::SphereCap {
                radius: self.radius.unwrap_or(10.0),
                max_polar: self.max_polar.unwrap_or(60.0).to_radians(),
            },
            SurfaceKind::Cylinder => AnalyticSurface::CylinderPatch {
                radius: self.radius.unwrap_or(10.0),
                length: self.length.unwrap_or(20.0),
                half_angle: self.half_angle.unwrap_or(60.0).to_radians(),
            },
            SurfaceKind::Paraboloid => AnalyticSurface::Paraboloid {
                apex_radius: self.apex_radius.unwrap_or(2.0),
                extent: self.extent.unwrap_or(5.0),
            },
            SurfaceKind::Wave => AnalyticSurface::Wave {
                width: size(self.width),
                height: size(self.height),
                amplitude: self.amplitude.unwrap_or(0.5),
                wavelength: self.wavelength.unwrap_or(8.0),
            },
        }
    }

    fn holes(&self) -> CliResult<Vec<HoleSpec>> {
        self.hole
            .iter()
            .map(|s| {
                let v: Vec<f64> = s
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| Failure::usage(format!("--hole expects x,y,z,radius, got `{s}`")))?;
                match v[..] {
                    [x, y, z, r] => Ok(HoleSpec { center: [x, y, z], radius: r }),
                    _ => Err(Failure::usage(format!("--hole expects x,y,z,radius, got `{s}`"))),
                }
            })
            .collect()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == EXIT_USAGE => {
            let mut cmd = Cli::command();
            cmd.error(clap::error::ErrorKind::MissingRequiredArgument, f.message).exit()
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Validate { mesh, remesh_min_angle } => validate(&mesh, remesh_min_angle),
        Command::Synth(args) => synth(&args),
        Command::Generate { mesh, run, out } => generate(&mesh, &run.resolve()?, &out),
        Command::Retarget { run_dir, scallop_height, export, plot_axis, out } => {
            let exports = parse_exports(&export)?;
            let axis = match plot_axis {
                Some(s) => s.parse().map_err(|e: Error| Failure::usage(e.to_string()))?,
                None => PlotAxis::default(),
            };
            retarget(&run_dir, scallop_height, &exports, axis, out.as_deref().unwrap_or(&run_dir))
        }
        Command::Analyze { run_dir, samples_per_path, dijkstra } => analyze(&run_dir, samples_per_path, dijkstra),
        Command::Bench { meshes, run, sizes, out } => bench(&meshes, &run.resolve()?, &sizes, out.as_deref()),
    }
}

fn parse_exports(names: &[String]) -> CliResult<Vec<ExportFormat>> {
    names
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|e: Error| Failure::usage(e.to_string())))
        .collect()
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::from(Error::Io { path: path.to_path_buf(), source: e })
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn write_json(path: &Path, value: &Value) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("json values always serialise");
    write_text(path, &(text + "\n"))
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn mesh_stats(mesh: &Mesh64) -> Value {
    let loops = boundary_loops(mesh);
    json!({
        "vertices": mesh.vertex_count(),
        "triangles": mesh.triangle_count(),
        "boundary_loops": loops.iter().map(|l| l.length).collect::<Vec<_>>(),
        "mean_edge_length": isoscallop::mesh::mean_edge_length(mesh),
        "area": mesh.total_area(),
    })
}

fn validate(path: &Path, min_angle: f64) -> CliResult {
    let mesh: Mesh64 = load_mesh(path, None)?;
    let report = validate_mesh(&mesh);
    let quality = quality_report(&mesh, min_angle);
    let out = json!({
        "mesh": mesh_stats(&mesh),
        "valid": report.is_valid(),
        "summary": report.summary(),
        "non_manifold_vertices": report.non_manifold_vertices.len(),
        "min_angle_deg": quality.global_min_angle,
        "below_threshold": quality.count_below(),
        "threshold_deg": min_angle,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json values always serialise"));
    report.into_result().map_err(Failure::from)
}

fn synth(args: &SynthArgs) -> CliResult {
    let (mesh, _) = synth_surface(&SynthSpec::new(args.surface(), args.edge))?;
    let spec = DefectSpec { noise_sigma: args.noise, holes: args.holes()?, seed: args.seed };
    let mesh = inject_defects(&mesh, &spec)?;
    save_mesh(&mesh, &args.out, None)?;
    eprintln!("{}: {} vertices, {} triangles", args.out.display(), mesh.vertex_count(), mesh.triangle_count());
    Ok(())
}

/// Per-vertex `h` and `g`, the cache read back by `retarget` and `analyze`.
fn write_geodesic(path: &Path, h: &[f64], g: &[f64]) -> CliResult {
    let mut text = String::from("# vertex heat distance\n");
    for (i, (a, b)) in h.iter().zip(g).enumerate() {
        text.push_str(&format!("{i} {a:e} {b:e}\n"));
    }
    write_text(path, &text)
}

fn read_geodesic(path: &Path, vertex_count: usize) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut g = Vec::with_capacity(vertex_count);
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty()) {
        let value = line
            .split_whitespace()
            .nth(2)
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| Failure::input(format!("{} line {}: expected `vertex h g`", path.display(), ln + 1)))?;
        g.push(value);
    }
    if g.len() != vertex_count {
        return Err(Failure::input(format!(
            "{} has {} values but the mesh has {vertex_count} vertices",
            path.display(),
            g.len()
        )));
    }
    Ok(g)
}

fn write_toolpaths(set: &ToolPathSet64, dir: &Path, stem: &str, exports: &[ExportFormat], axis: PlotAxis) -> CliResult<Vec<String>> {
    let mut files = Vec::new();
    let mut formats = vec![ExportFormat::Json];
    formats.extend(exports.iter().copied().filter(|f| *f != ExportFormat::Json));
    for f in formats {
        let name = format!("{stem}.{}", f.extension());
        export_toolpaths(set, &dir.join(&name), f, axis)?;
        files.push(name);
    }
    Ok(files)
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn generate(input: &Path, settings: &Settings, out: &Path) -> CliResult {
    let mesh: Mesh64 = load_mesh(input, None)?;
    let result = run_pipeline(&mesh, &settings.pipeline)?;
    create_dir(out)?;

    let clock = Instant::now();
    let mut files = write_toolpaths(&result.toolpaths, out, "toolpaths", &settings.exports, settings.plot_axis)?;
    let export_s = clock.elapsed().as_secs_f64();
    save_mesh(&result.mesh, out.join("mesh.obj"), None)?;
    write_geodesic(&out.join("geodesic.txt"), &result.geodesic.h, &result.geodesic.g)?;
    write_json(&out.join("gouging.json"), &json!(result.gouging))?;
    files.extend(["mesh.obj", "geodesic.txt", "gouging.json"].map(String::from));

    let t = result.timings;
    let levels = result.toolpaths.levels();
    let manifest = json!({
        "command": "generate",
        "version": env!("CARGO_PKG_VERSION"),
        "input": input.display().to_string(),
        "config": settings.pipeline,
        "exports": settings.exports.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        "plot_axis": format!("{:?}", settings.plot_axis).to_lowercase(),
        "input_mesh": mesh_stats(&mesh),
        "mesh": mesh_stats(&result.mesh),
        "remesh": result.remesh,
        "source": {
            "selection": settings.pipeline.source.describe(),
            "vertices": result.source_polyline.vertices,
            "closed": result.source_polyline.closed,
        },
        "gouging": {
            "triangles": result.gouging.triangles.len(),
            "area_fraction": result.gouging.area_fraction,
            "clamped_lengths": result.metric.perturbed,
        },
        "geodesic": result.geodesic.diagnostics,
        "toolpaths": {
            "paths": result.toolpaths.paths.len(),
            "levels": levels.len(),
            "max_level": levels.last().copied().unwrap_or(0.0),
            "points": result.toolpaths.point_count(),
        },
        "timings": {
            "preprocess_s": t.preprocess_s,
            "curvature_s": t.curvature_s,
            "metric_s": t.metric_s,
            "operators_s": t.operators_s,
            "geodesic_s": t.geodesic_s,
            "extract_s": t.extract_s,
            "solve_s": t.solve_s(),
            "total_s": t.total_s(),
            "export_s": export_s,
        },
        "files": files,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    eprintln!(
        "{} paths over {} levels; solve {:.3} s, extract {:.3} s; {} gouging triangles",
        result.toolpaths.paths.len(),
        levels.len(),
        t.solve_s(),
        t.extract_s,
        result.gouging.triangles.len()
    );
    Ok(())
}

/// Everything a later command needs from a `generate` directory.
struct CachedRun {
    manifest: Value,
    config: PipelineConfig,
    mesh: Mesh64,
    g: Vec<f64>,
    source: SourcePolyline,
}

fn load_run(dir: &Path) -> CliResult<CachedRun> {
    let manifest = read_json(&dir.join("manifest.json"))?;
    let bad = |what: &str| Failure::input(format!("{}/manifest.json: missing or bad `{what}`", dir.display()));
    let config: PipelineConfig = serde_json::from_value(manifest["config"].clone()).map_err(|_| bad("config"))?;
    let vertices: Vec<usize> =
        serde_json::from_value(manifest["source"]["vertices"].clone()).map_err(|_| bad("source.vertices"))?;
    let closed = manifest["source"]["closed"].as_bool().ok_or_else(|| bad("source.closed"))?;
    let mesh: Mesh64 = load_mesh(dir.join("mesh.obj"), None)?;
    let g = read_geodesic(&dir.join("geodesic.txt"), mesh.vertex_count())?;
    Ok(CachedRun { manifest, config, mesh, g, source: SourcePolyline { vertices, closed } })
}

fn retarget(dir: &Path, h: f64, exports: &[ExportFormat], axis: PlotAxis, out: &Path) -> CliResult {
    let run = load_run(dir)?;
    let before = solver_calls();
    let clock = Instant::now();
    let cache = geometry_cache(&run.mesh)?;
    let mut params = run.config.toolpath_params();
    params.scallop_height = h;
    let set = generate_toolpaths(&run.mesh, &cache.vertex_normals, &run.g, h, &run.source, params)?;
    let elapsed = clock.elapsed().as_secs_f64();
    let calls = solver_calls().since(before);
    assert_eq!(calls.total(), 0, "retargeting must not touch the solver");

    create_dir(out)?;
    let stem = format!("toolpaths_h{h}");
    let files = write_toolpaths(&set, out, &stem, exports, axis)?;
    let original = run.manifest["timings"]["total_s"].as_f64().unwrap_or(f64::NAN);
    let manifest = json!({
        "command": "retarget",
        "version": env!("CARGO_PKG_VERSION"),
        "run_dir": dir.display().to_string(),
        "scallop_height": h,
        "paths": set.paths.len(),
        "levels": set.levels().len(),
        "solver_calls": calls.total(),
        "total_s": elapsed,
        "original_total_s": original,
        "files": files,
    });
    write_json(&out.join(format!("{stem}.manifest.json")), &manifest)?;
    eprintln!("{} paths at h = {h} in {elapsed:.3} s ({} solver calls)", set.paths.len(), calls.total());
    Ok(())
}

fn histogram_svg(report: &ErrorReport) -> String {
    let (w, h, pad) = (400.0, 240.0, 30.0);
    let top = report.histogram.iter().map(|b| b.count).max().unwrap_or(1).max(1) as f64;
    let bar = (w - 2.0 * pad) / report.histogram.len().max(1) as f64;
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    svg.push('\n');
    for (i, b) in report.histogram.iter().enumerate() {
        let bh = (h - 2.0 * pad) * b.count as f64 / top;
        svg.push_str(&format!(
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="steelblue"><title>{:.4}-{:.4}: {}</title></rect>"#,
            pad + i as f64 * bar,
            h - pad - bh,
            bar * 0.9,
            b.lo,
            b.hi,
            b.count
        ));
        svg.push('\n');
    }
    svg.push_str(&format!(
        r#"<text x="{pad}" y="{:.1}" font-size="12">relative side-step error, mean {:.4}, max {:.4}</text>"#,
        h - 8.0,
        report.mean,
        report.max
    ));
    svg.push_str("\n</svg>\n");
    svg
}

fn analyze(dir: &Path, samples_per_path: usize, dijkstra: bool) -> CliResult {
    let run = load_run(dir)?;
    let c = &run.config;
    let cache = geometry_cache(&run.mesh)?;
    let tensors = estimate_tensors(&run.mesh, &cache, c.curvature_ring)?;
    let (metric, _) = scallop_metric(&run.mesh, &cache, &tensors.triangle, &c.metric())?;
    let params = c.toolpath_params();
    let set = generate_toolpaths(&run.mesh, &cache.vertex_normals, &run.g, c.scallop_height, &run.source, params)?;
    let options = SideStepOptions { samples_per_path, ..Default::default() };
    let report = side_step_error(&run.mesh, &metric, &run.g, &set, c.scallop_height, &options)?;

    let mut out = json!({ "side_step": report });
    if dijkstra {
        let source = SourceSet::new(run.source.vertices.clone(), run.mesh.vertex_count())?;
        let reference = dijkstra_geodesic(&run.mesh, &metric, &source)?;
        let (mut total, mut n) = (0.0, 0usize);
        for (g, r) in run.g.iter().zip(reference.iter()) {
            if *r > 0.0 && r.is_finite() {
                total += (g - r).abs() / r;
                n += 1;
            }
        }
        out["dijkstra_mean_relative_gap"] = json!(if n > 0 { total / n as f64 } else { 0.0 });
    }
    write_json(&dir.join("error_report.json"), &out)?;
    write_text(&dir.join("error_histogram.svg"), &histogram_svg(&report))?;
    println!("{}", serde_json::to_string_pretty(&out).expect("json values always serialise"));
    Ok(())
}

/// Plate whose cross-grid triangulation has about `triangles` triangles.
fn bench_plate(triangles: usize) -> CliResult<Mesh64> {
    let size = 20.0;
    let edge = size * 2.0 / (triangles as f64).sqrt();
    let (mesh, _) = synth_surface(&SynthSpec::new(AnalyticSurface::Plane { width: size, height: size }, edge))?;
    Ok(mesh)
}

fn bench(meshes: &[PathBuf], settings: &Settings, sizes: &[usize], out: Option<&Path>) -> CliResult {
    let mut rows = vec![BenchRecord::HEADER.to_string()];
    if meshes.is_empty() {
        for &n in sizes {
            let mesh = bench_plate(n)?;
            rows.push(bench_run(&format!("plate-{n}"), &mesh, &settings.pipeline)?.row());
        }
    } else {
        for path in meshes {
            let mesh: Mesh64 = load_mesh(path, None)?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            rows.push(bench_run(&name, &mesh, &settings.pipeline)?.row());
        }
    }
    let table = rows.join("\n") + "\n";
    match out {
        Some(p) => write_text(p, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
