//! `torsion`: solve, evaluate, optimize, validate, check and render convex
//! shapes for the torsion gradient functionals.
//!
//! Exit codes: 0 success, 1 usage error (including invalid parameters), 2
//! numerical failure (including a failed invariant check).

mod config;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use config::*;
use serde::Serialize;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use torsion_core::checks::run_checks;
use torsion_core::fem::{solve_torsion, superlevel_curve};
use torsion_core::functionals::{evaluate, FunctionalReport};
use torsion_core::geom::Vec2;
use torsion_core::io::{write_history, write_solution, RunReport, ShapeFile};
use torsion_core::mesh::triangulate;
use torsion_core::optimizer::{optimize, Objective, Symmetry};
use torsion_core::render::write_svg;
use torsion_core::shape::{polygon_from_support, ConvexPolygon};
use torsion_core::wos::{auto_points, fem_cross_check, CrossCheckPoint};

#[derive(Parser)]
#[command(name = "torsion", version, about = "Torsion function and gradient-sup functionals of convex shapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the torsion problem and dump nodal values.
    Solve(SolveArgs),
    /// Compute J and JP.
    Eval(EvalArgs),
    /// Search for a maximizer of J or JP.
    Optimize(OptimizeArgs),
    /// Compare walk-on-spheres estimates with the finite element solution.
    Validate(ValidateArgs),
    /// Run the invariant suite.
    Check(CheckArgs),
    /// Draw a shape as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct MeshArgs {
    /// Target edge length as diameter / MESH_DIV.
    #[arg(long)]
    mesh_div: Option<f64>,
    /// Absolute target edge length.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    grading: Option<f64>,
    /// Boundary probe samples.
    #[arg(long)]
    samples: Option<usize>,
}

impl MeshArgs {
    fn apply(&self, m: &mut MeshConfig) {
        set(&mut m.mesh_div, self.mesh_div);
        if self.h.is_some() {
            m.h = self.h;
        }
        set(&mut m.grading, self.grading);
        set(&mut m.samples, self.samples);
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    shape: Option<PathBuf>,
    #[command(flatten)]
    mesh: MeshArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mesh_out: Option<PathBuf>,
    /// Contour level as a fraction of max u.
    #[arg(long)]
    contour_level: Option<f64>,
    #[arg(long)]
    contour_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    shape: Option<PathBuf>,
    #[command(flatten)]
    mesh: MeshArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_objective)]
    objective: Option<Objective>,
    /// Angle count of the first stage.
    #[arg(long)]
    n_start: Option<usize>,
    /// Angle count of the last stage.
    #[arg(long)]
    n_angles: Option<usize>,
    #[arg(long, value_parser = parse_symmetry)]
    symmetry: Option<Symmetry>,
    #[arg(long)]
    max_evals: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    simplex_scale: Option<f64>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    repair_penalty: Option<f64>,
    #[arg(long)]
    search_mesh_div: Option<f64>,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    shape: Option<PathBuf>,
    /// "auto5" or a JSON file of [[x, y], ...].
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    walks: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mesh_div: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    shape: Option<PathBuf>,
    #[command(flatten)]
    mesh: MeshArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    shape: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve and color triangles by the gradient.
    #[arg(long)]
    heatmap: bool,
    #[command(flatten)]
    mesh: MeshArgs,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    match s {
        "J" => Ok(Objective::J),
        "JP" => Ok(Objective::JP),
        _ => Err(format!("unknown objective {s:?} (expected J or JP)")),
    }
}

fn parse_symmetry(s: &str) -> Result<Symmetry, String> {
    match s {
        "axis" => Ok(Symmetry::Axis),
        "none" => Ok(Symmetry::None),
        _ => Err(format!("unknown symmetry {s:?} (expected axis or none)")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Bad input from the user, as opposed to a numerical failure.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(UsageError(e.to_string()))
}

fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    config::load(path).map_err(usage)
}

fn load_shape(path: &Path) -> anyhow::Result<ConvexPolygon> {
    if path.as_os_str().is_empty() {
        return Err(usage("missing --shape"));
    }
    let f = ShapeFile::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    f.to_polygon().map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Writes `value` as pretty JSON to `out`, or to standard output.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

#[derive(Serialize)]
struct SolveSummary {
    node_count: usize,
    triangle_count: usize,
    u_max: f64,
    u_argmax: Vec2,
    residual: f64,
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<ExitCode> {
    let mut c: SolveConfig = load_config(a.config.as_deref())?;
    set(&mut c.shape, a.shape);
    a.mesh.apply(&mut c.mesh);
    if a.out.is_some() {
        c.out = a.out;
    }
    if a.mesh_out.is_some() {
        c.mesh_out = a.mesh_out;
    }
    if a.contour_level.is_some() {
        c.contour_level = a.contour_level;
    }
    if a.contour_out.is_some() {
        c.contour_out = a.contour_out;
    }
    if c.contour_level.is_some() != c.contour_out.is_some() {
        return Err(usage("--contour-level and --contour-out go together"));
    }
    let p = load_shape(&c.shape)?;
    let params = c.mesh.eval_params();
    let mesh = triangulate(&p, params.mesh_size.resolve(&p), params.grading)?;
    if let Some(path) = &c.mesh_out {
        mesh.write_text(std::io::BufWriter::new(create(path)?))?;
    }
    let sol = solve_torsion(mesh)?;
    if let (Some(level), Some(path)) = (c.contour_level, &c.contour_out) {
        let curve = superlevel_curve(&sol, level * sol.u_max())?;
        ShapeFile::from_level_curve(&curve).save(path)?;
    }
    match &c.out {
        Some(path) => {
            write_solution(&sol, create(path)?)?;
            let summary = SolveSummary {
                node_count: sol.mesh().nodes().len(),
                triangle_count: sol.mesh().triangles().len(),
                u_max: sol.u_max(),
                u_argmax: sol.u_argmax(),
                residual: sol.residual(),
            };
            emit(&RunReport::new(&c, summary), None)?;
        }
        None => write_solution(&sol, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<ExitCode> {
    let mut c: EvalConfig = load_config(a.config.as_deref())?;
    set(&mut c.shape, a.shape);
    a.mesh.apply(&mut c.mesh);
    if a.out.is_some() {
        c.out = a.out;
    }
    let p = load_shape(&c.shape)?;
    let e = evaluate(&p, &c.mesh.eval_params())?;
    emit(&RunReport::new(&c, &e.report), c.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_optimize(a: OptimizeArgs) -> anyhow::Result<ExitCode> {
    let mut c: OptimizeConfig = load_config(a.config.as_deref())?;
    set(&mut c.objective, a.objective);
    set(&mut c.n_start, a.n_start);
    set(&mut c.n_angles, a.n_angles);
    set(&mut c.symmetry, a.symmetry);
    set(&mut c.max_evals, a.max_evals);
    set(&mut c.restarts, a.restarts);
    set(&mut c.seed, a.seed);
    set(&mut c.simplex_scale, a.simplex_scale);
    set(&mut c.stop_tol, a.stop_tol);
    set(&mut c.repair_penalty, a.repair_penalty);
    set(&mut c.search_mesh_div, a.search_mesh_div);
    a.mesh.apply(&mut c.mesh);
    set(&mut c.out, a.out);
    let oc = c.opt_config();
    oc.validate().map_err(usage)?;

    let trace = optimize(&oc)?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    ShapeFile::from_support(&trace.best).save(c.out.join("best_shape.json"))?;
    write_history(&trace.history, create(&c.out.join("history.csv"))?)?;
    let p = polygon_from_support(&trace.best)?;
    let e = evaluate(&p, &oc.final_eval)?;
    write_svg(c.out.join("best_shape.svg"), &p, Some(&e.solution), Some(&trace.report))?;
    std::fs::write(c.out.join("report.json"), RunReport::new(&c, &trace).to_json()? + "\n")?;
    eprintln!(
        "{:?} = {:.6} after {} evaluations; run directory {}",
        oc.objective,
        trace.objective_value(),
        trace.history.len(),
        c.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ValidateResult {
    eps: f64,
    points: Vec<CrossCheckPoint>,
    all_pass: bool,
}

fn cmd_validate(a: ValidateArgs) -> anyhow::Result<ExitCode> {
    let mut c: ValidateConfig = load_config(a.config.as_deref())?;
    set(&mut c.shape, a.shape);
    set(&mut c.points, a.points);
    set(&mut c.walks, a.walks);
    if a.eps.is_some() {
        c.eps = a.eps;
    }
    set(&mut c.seed, a.seed);
    set(&mut c.mesh_div, a.mesh_div);
    if a.out.is_some() {
        c.out = a.out;
    }
    let p = load_shape(&c.shape)?;
    let points: Vec<Vec2> = if c.points == "auto5" {
        auto_points(&p)
    } else {
        let text = std::fs::read_to_string(&c.points).map_err(|e| usage(format!("{}: {e}", c.points)))?;
        let raw: Vec<[f64; 2]> = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", c.points)))?;
        raw.into_iter().map(|[x, y]| Vec2::new(x, y)).collect()
    };
    let eps = c.eps.unwrap_or(1e-4 * p.diameter());
    if !(c.mesh_div > 0.0) {
        return Err(usage("mesh_div must be positive"));
    }
    let points = fem_cross_check(&p, &points, c.walks, eps, c.seed, p.diameter() / c.mesh_div)?;
    let all_pass = points.iter().all(|q| q.pass);
    emit(&RunReport::new(&c, ValidateResult { eps, points, all_pass }), c.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(a: CheckArgs) -> anyhow::Result<ExitCode> {
    let mut c: CheckConfig = load_config(a.config.as_deref())?;
    set(&mut c.shape, a.shape);
    a.mesh.apply(&mut c.mesh);
    if a.out.is_some() {
        c.out = a.out;
    }
    let p = load_shape(&c.shape)?;
    let suite = run_checks(&p, &c.mesh.eval_params())?;
    for k in &suite.checks {
        eprintln!("{} {}: {:e} (limit {:e})", if k.pass { "PASS" } else { "FAIL" }, k.name, k.value, k.threshold);
    }
    emit(&RunReport::new(&c, &suite), c.out.as_deref())?;
    Ok(if suite.all_pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_render(a: RenderArgs) -> anyhow::Result<ExitCode> {
    let mut c: RenderConfig = load_config(a.config.as_deref())?;
    set(&mut c.shape, a.shape);
    set(&mut c.out, a.out);
    c.heatmap |= a.heatmap;
    a.mesh.apply(&mut c.mesh);
    let p = load_shape(&c.shape)?;
    if c.heatmap {
        let e = evaluate(&p, &c.mesh.eval_params())?;
        let report: &FunctionalReport = &e.report;
        write_svg(&c.out, &p, Some(&e.solution), Some(report))?;
    } else {
        write_svg(&c.out, &p, None, None)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Caps the worker pool at `TORSION_THREADS` when set.
fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("TORSION_THREADS") {
        let n: usize = v.parse().map_err(|_| usage(format!("TORSION_THREADS={v:?} is not a count")))?;
        if n == 0 {
            return Err(usage("TORSION_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    configure_threads()?;
    match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Check(a) => cmd_check(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let bad_input = matches!(e.downcast_ref::<torsion_core::Error>(), Some(torsion_core::Error::InvalidInput(_)));
            if bad_input || e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
