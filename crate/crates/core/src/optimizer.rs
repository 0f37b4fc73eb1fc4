//! Shape search over support vectors for the maximizers of `J` and `J_P`.
//!
//! Candidates are log-perturbations of a base support vector. Each one is
//! repaired into the convexity cone, turned into a polygon, normalized to
//! unit area (for `J`) or unit perimeter (for `J_P`) and evaluated; the
//! relative size of the repair is charged as a penalty.

use crate::error::{Error, Result};
use crate::functionals::{evaluate, EvalParams, FunctionalReport, MeshSize};
use crate::nelder_mead::{maximize_from, NmOptions};
use crate::shape::{
    default_min_len, default_turn_tol, detect_corners, detect_segments, grid_angle, polygon_from_support,
    project_to_convex, project_to_convex_with_repair, ConvexPolygon, CornerReport, SegmentReport, SupportVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Mutex;


/// A stage stops once the best value gained less than `stop_tol` (relative)
/// over this many evaluations per free coefficient.
pub const STOP_WINDOW_PER_DIM: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    J,
    JP,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    None,
    /// Mirror symmetry across the x axis: `h(θ) = h(−θ)`.
    Axis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub objective: Objective,
    /// Number of support angles of the first stage.
    pub n_start: usize,
    /// Number of support angles of the last stage; stages double from `n_start`.
    pub n_angles: usize,
    pub symmetry: Symmetry,
    /// Evaluation budget of each stage; 0 skips the search entirely.
    pub max_evals: usize,
    pub restarts: usize,
    /// Edge of the initial simplex in `log h`.
    pub simplex_init_scale: f64,
    pub rng_seed: u64,
    /// Evaluation settings inside the search loop.
    pub search_eval: EvalParams,
    /// Evaluation settings for the reported optimum.
    pub final_eval: EvalParams,
    pub stop_tol: f64,
    /// Weight of the relative convexity repair subtracted from the objective.
    pub repair_penalty: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            objective: Objective::J,
            n_start: 64,
            n_angles: 128,
            symmetry: Symmetry::Axis,
            max_evals: 6600,
            restarts: 2,
            simplex_init_scale: 0.3,
            rng_seed: 1,
            search_eval: EvalParams { mesh_size: MeshSize::DiameterOver(30.0), ..EvalParams::default() },
            final_eval: EvalParams::default(),
            stop_tol: 1e-5,
            repair_penalty: 1.0,
        }
    }
}

impl OptConfig {
    fn stages(&self) -> Vec<usize> {
        let mut v = vec![self.n_start];
        while *v.last().expect("non-empty") < self.n_angles {
            v.push(v.last().expect("non-empty") * 2);
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = |n: usize| n >= 16 && n.is_power_of_two();
        if !pow2(self.n_start) || !pow2(self.n_angles) || self.n_start > self.n_angles {
            return Err(Error::InvalidInput(format!(
                "angle counts must be powers of two >= 16 with start <= final, got {} and {}",
                self.n_start, self.n_angles
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("need at least one restart".into()));
        }
        if !(self.simplex_init_scale > 0.0 && self.simplex_init_scale.is_finite()) {
            return Err(Error::InvalidInput("simplex scale must be positive".into()));
        }
        let dim = free_dim(self.n_angles, self.symmetry);
        if self.max_evals != 0 && self.max_evals < 100 * dim {
            return Err(Error::InvalidInput(format!(
                "max_evals {} is below 100 × dimension ({})",
                self.max_evals,
                100 * dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub eval: usize,
    pub objective: f64,
    pub best: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub n_angles: usize,
    pub evals: usize,
    pub best: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    /// Search objective of the restart's best shape, or `None` if it failed.
    pub objective: Option<f64>,
    pub repair_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeAnalysis {
    pub segments: SegmentReport,
    pub corners: CornerReport,
    /// Position of the gradient maximum along the longest segment, 0 at its
    /// start and 1 at its end.
    pub segment_gradient_offset: Option<f64>,
    /// Largest exterior angle over vertices that do not end a segment.
    pub max_exterior_angle_off_segments: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub config: OptConfig,
    pub best: SupportVector,
    pub report: FunctionalReport,
    pub history: Vec<HistoryEntry>,
    pub stages: Vec<StageRecord>,
    pub restarts: Vec<RestartSummary>,
    pub best_restart: usize,
    pub analysis: ShapeAnalysis,
}

impl OptTrace {
    pub fn objective_value(&self) -> f64 {
        match self.config.objective {
            Objective::J => self.report.j,
            Objective::JP => self.report.jp,
        }
    }
}

fn free_dim(n: usize, sym: Symmetry) -> usize {
    match sym {
        Symmetry::None => n,
        Symmetry::Axis => n / 2 + 1,
    }
}

/// Free coefficient driving support index `i`.
fn free_index(i: usize, n: usize, sym: Symmetry) -> usize {
    match sym {
        Symmetry::None => i,
        Symmetry::Axis => i.min(n - i),
    }
}

/// Linear interpolation at the new midpoint angles, scaled by
/// `1/cos(π/n_new)`, then repaired into the convexity cone.
pub fn upsample_support(sv: &SupportVector, n_new: usize) -> Result<SupportVector> {
    let n = sv.n();
    if n_new != 2 * n {
        return Err(Error::InvalidInput(format!("upsampling {n} angles needs n_new = {}, got {n_new}", 2 * n)));
    }
    let h = sv.values();
    let lift = 1.0 / (PI / n_new as f64).cos();
    let mut out = Vec::with_capacity(n_new);
    for i in 0..n {
        out.push(h[i]);
        out.push(0.5 * (h[i] + h[(i + 1) % n]) * lift);
    }
    project_to_convex(&out)
}

/// Segment and corner structure of `sv`, and where the gradient maximum of
/// `report` falls along the longest segment.
pub fn analyze_shape(sv: &SupportVector, report: &FunctionalReport) -> Result<ShapeAnalysis> {
    let p = polygon_from_support(sv)?;
    let n = sv.n();
    let segments = detect_segments(&p, default_turn_tol(n), default_min_len(&p));
    let corners = detect_corners(&p, 3.0 * 2.0 * PI / n as f64);
    // Among segments tied for longest (mirror images), use the one nearest
    // the gradient maximum.
    let z = report.g_max_location;
    let offset_on = |s: &crate::shape::Segment| {
        let a = p.vertex(s.start);
        let d = p.vertex(s.end) - a;
        let t = ((z - a).dot(d) / d.norm2()).clamp(0.0, 1.0);
        (t, z.dist(a + d * t))
    };
    let segment_gradient_offset = segments.longest().map(|l| {
        segments
            .segments
            .iter()
            .filter(|s| s.length >= l.length * (1.0 - 1e-6))
            .map(offset_on)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0.0, |(t, _)| t)
    });
    let ends: Vec<usize> = segments.segments.iter().flat_map(|s| [s.start, s.end]).collect();
    let max_exterior_angle_off_segments = p
        .exterior_angles()
        .iter()
        .enumerate()
        .filter(|(i, _)| !ends.contains(i))
        .map(|(_, &a)| a)
        .fold(0.0, f64::max);
    Ok(ShapeAnalysis { segments, corners, segment_gradient_offset, max_exterior_angle_off_segments })
}

/// A candidate turned into a normalized polygon.
struct Candidate {
    support: SupportVector,
    polygon: ConvexPolygon,
    repair: f64,
}

fn normalize(h_raw: &[f64], objective: Objective) -> Result<Candidate> {
    let proj = project_to_convex_with_repair(h_raw)?;
    let hmax = h_raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let poly = polygon_from_support(&proj.support)?;
    let t = match objective {
        Objective::J => 1.0 / poly.area().sqrt(),
        Objective::JP => 1.0 / poly.perimeter(),
    };
    let support = SupportVector::new(proj.support.values().iter().map(|v| v * t).collect())?;
    let polygon = polygon_from_support(&support)?;
    Ok(Candidate { support, polygon, repair: proj.repair_norm / hmax })
}

fn objective_of(report: &FunctionalReport, objective: Objective) -> f64 {
    match objective {
        Objective::J => report.j,
        Objective::JP => report.jp,
    }
}

/// Errors that only mean the candidate is unusable, as opposed to a failure
/// of the numerics.
fn is_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidInput(_)
            | Error::NotConvex { .. }
            | Error::RepairFailed(_)
            | Error::DegeneratePolygon(_)
            | Error::Meshing(_)
            | Error::ProbeOutside { .. }
    )
}

struct RestartOutcome {
    support: SupportVector,
    objective: f64,
    repair: f64,
    history: Vec<HistoryEntry>,
    stages: Vec<StageRecord>,
}

fn expand(base: &[f64], x: &[f64], sym: Symmetry) -> Vec<f64> {
    let n = base.len();
    (0..n).map(|i| base[i] * x[free_index(i, n, sym)].exp()).collect()
}

/// Low-frequency random log-perturbation for restarts after the first.
fn random_start(rng: &mut ChaCha8Rng, n: usize, sym: Symmetry, scale: f64) -> Vec<f64> {
    let dim = free_dim(n, sym);
    let mut coef = Vec::new();
    for k in 1..=4 {
        let a: f64 = rng.random_range(-scale..scale) / k as f64;
        let b: f64 = rng.random_range(-scale..scale) / k as f64;
        coef.push((k as f64, a, b));
    }
    (0..dim)
        .map(|j| {
            let th = grid_angle(j, n);
            coef.iter()
                .map(|&(k, a, b)| a * (k * th).cos() + if sym == Symmetry::None { b * (k * th).sin() } else { 0.0 })
                .sum()
        })
        .collect()
}

/// Initial simplex edges: cosine (and sine) modes of rising frequency over the
/// free coefficients, damped as `1/(1 + k/4)`.
fn simplex_dirs(n: usize, sym: Symmetry, step: f64) -> Vec<Vec<f64>> {
    let dim = free_dim(n, sym);
    (0..dim)
        .map(|m| {
            // Modes 0, 1, 2, … for axis symmetry; 0, cos 1, sin 1, cos 2, … otherwise.
            let (k, sine) = match sym {
                Symmetry::Axis => (m, false),
                Symmetry::None => ((m + 1) / 2, m % 2 == 0 && m > 0),
            };
            let amp = step / (1.0 + k as f64 / 4.0);
            (0..dim)
                .map(|j| {
                    let th = k as f64 * grid_angle(j, n);
                    amp * if sine { th.sin() } else { th.cos() }
                })
                .collect()
        })
        .collect()
}

fn run_restart(cfg: &OptConfig, restart: usize) -> Result<RestartOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(restart as u64));
    let stages = cfg.stages();
    let mut base = SupportVector::disc(stages[0], 1.0)?.into_values();
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut records = Vec::new();
    let mut best_so_far = f64::NEG_INFINITY;
    let mut current: Option<(SupportVector, f64, f64)> = None;

    for (si, &n) in stages.iter().enumerate() {
        if si > 0 {
            let (sv, _, _) = current.as_ref().expect("previous stage result");
            // Undo the normalization scale; it is irrelevant to the search.
            base = upsample_support(sv, n)?.into_values();
        }
        let dim = free_dim(n, cfg.symmetry);
        let x0 = if si == 0 && restart > 0 {
            random_start(&mut rng, n, cfg.symmetry, cfg.simplex_init_scale)
        } else {
            vec![0.0; dim]
        };
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let f = |x: &[f64]| -> f64 {
            let h = expand(&base, x, cfg.symmetry);
            let run = || -> Result<f64> {
                let c = normalize(&h, cfg.objective)?;
                let r = evaluate(&c.polygon, &cfg.search_eval)?.report;
                Ok(objective_of(&r, cfg.objective) - cfg.repair_penalty * c.repair)
            };
            match run() {
                Ok(v) => v,
                Err(e) if is_rejection(&e) => f64::NAN,
                Err(e) => {
                    failure.lock().expect("no poisoning").get_or_insert(e);
                    f64::NAN
                }
            }
        };
        // Negative steps shrink support values, which keeps the initial
        // simplex inside the convexity cone.
        let step = if si == 0 { -cfg.simplex_init_scale } else { -0.5 * cfg.simplex_init_scale };
        let mut best_x = x0;
        let mut best_f = f64::NEG_INFINITY;
        let mut values: Vec<f64> = Vec::new();
        // Restart the simplex around the incumbent until a run stalls
        // without gain or the budget is spent.
        while values.len() < cfg.max_evals {
            let opts = NmOptions {
                max_evals: cfg.max_evals - values.len(),
                stop_tol: cfg.stop_tol,
                window: STOP_WINDOW_PER_DIM * dim,
            };
            let res = maximize_from(&f, &best_x, &simplex_dirs(n, cfg.symmetry, step), &opts);
            values.extend_from_slice(&res.values);
            let gained = if best_f.is_finite() {
                res.best_f > best_f + cfg.stop_tol * best_f.abs()
            } else {
                res.best_f.is_finite()
            };
            if res.best_f > best_f {
                best_f = res.best_f;
                best_x = res.best_x;
            }
            if !gained || res.evals == 0 {
                break;
            }
        }
        if let Some(e) = failure.into_inner().expect("no poisoning") {
            return Err(e);
        }
        for v in &values {
            if *v > best_so_far {
                best_so_far = *v;
            }
            history.push(HistoryEntry { eval: history.len(), objective: *v, best: best_so_far });
        }
        let h = expand(&base, &best_x, cfg.symmetry);
        let c = normalize(&h, cfg.objective)?;
        if !values.is_empty() && !best_f.is_finite() {
            return Err(Error::Optimization(format!("no finite objective at {n} angles")));
        }
        records.push(StageRecord { n_angles: n, evals: values.len(), best: best_f });
        current = Some((c.support, best_f, c.repair));
    }
    let (support, objective, repair) = current.expect("at least one stage");
    Ok(RestartOutcome { support, objective, repair, history, stages: records })
}

/// Runs all restarts and returns the best, re-evaluated with
/// `cfg.final_eval` and analyzed.
pub fn optimize(cfg: &OptConfig) -> Result<OptTrace> {
    cfg.validate()?;
    let outcomes: Vec<Result<RestartOutcome>> = (0..cfg.restarts).into_par_iter().map(|r| run_restart(cfg, r)).collect();

    let mut summaries = Vec::new();
    let mut best: Option<(usize, &RestartOutcome)> = None;
    for (r, o) in outcomes.iter().enumerate() {
        match o {
            Ok(o) => {
                summaries.push(RestartSummary {
                    restart: r,
                    objective: Some(o.objective),
                    repair_norm: Some(o.repair),
                    error: None,
                });
                let better = match best {
                    None => true,
                    // Highest objective, then smallest repair; earlier restarts win ties.
                    Some((_, b)) => o.objective > b.objective || (o.objective == b.objective && o.repair < b.repair),
                };
                if better {
                    best = Some((r, o));
                }
            }
            Err(e) => summaries.push(RestartSummary {
                restart: r,
                objective: None,
                repair_norm: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let Some((best_restart, outcome)) = best else {
        let msgs: Vec<String> = summaries.iter().filter_map(|s| s.error.clone()).collect();
        return Err(Error::Optimization(format!("every restart failed: {}", msgs.join("; "))));
    };

    let polygon = polygon_from_support(&outcome.support)?;
    let report = evaluate(&polygon, &cfg.final_eval)?.report;
    let analysis = analyze_shape(&outcome.support, &report)?;
    Ok(OptTrace {
        config: cfg.clone(),
        best: outcome.support.clone(),
        report,
        history: outcome.history.clone(),
        stages: outcome.stages.clone(),
        restarts: summaries,
        best_restart,
        analysis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{hausdorff_distance, rectangle, SupportVector};

    fn quick(objective: Objective) -> OptConfig {
        OptConfig {
            objective,
            n_start: 16,
            n_angles: 16,
            max_evals: 900,
            restarts: 1,
            search_eval: EvalParams { mesh_size: MeshSize::DiameterOver(25.0), n_samples: 128, ..EvalParams::default() },
            final_eval: EvalParams { mesh_size: MeshSize::DiameterOver(25.0), n_samples: 128, ..EvalParams::default() },
            stop_tol: 0.0,
            ..OptConfig::default()
        }
    }

    #[test]
    fn upsampled_disc_stays_circular() {
        let sv = SupportVector::disc(64, 1.0).unwrap();
        let up = upsample_support(&sv, 128).unwrap();
        let lift = 1.0 / (PI / 128.0).cos();
        for (i, v) in up.values().iter().enumerate() {
            if i % 2 == 1 {
                assert!((v - lift).abs() < 1e-15);
            }
            assert!((v - 1.0).abs() < 1e-3);
        }
        assert!(upsample_support(&sv, 100).is_err());
    }

    #[test]
    fn upsampled_square_is_close() {
        let sq = rectangle(1.0, 1.0).unwrap();
        let sv = SupportVector::from_fn(64, |t| sq.support(crate::geom::Vec2::from_angle(t))).unwrap();
        let up = upsample_support(&sv, 128).unwrap();
        let a = polygon_from_support(&sv).unwrap();
        let b = polygon_from_support(&up).unwrap();
        assert!(hausdorff_distance(&a, &b) <= 2.0 * (2.0 * PI / 128.0) * a.diameter());
    }

    #[test]
    fn upsampled_smooth_shape_keeps_area() {
        let sv = SupportVector::from_fn(64, |t| 1.0 + 0.2 * (2.0 * t).cos()).unwrap();
        let up = upsample_support(&sv, 128).unwrap();
        let a = polygon_from_support(&sv).unwrap().area();
        let b = polygon_from_support(&up).unwrap().area();
        assert!(((a - b) / a).abs() <= 0.005);
    }

    #[test]
    fn zero_budget_returns_the_disc() {
        let cfg = OptConfig { max_evals: 0, ..quick(Objective::J) };
        let t = optimize(&cfg).unwrap();
        assert!(t.history.is_empty());
        let disc = 1.0 / (2.0 * PI.sqrt());
        // A 16-gon is visibly not a disc; the value sits a few percent above.
        assert!(t.report.j > disc && t.report.j < 1.05 * disc, "{}", t.report.j);
        assert!((t.report.measures.area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_search_improves_and_is_monotone() {
        let cfg = quick(Objective::J);
        let t = optimize(&cfg).unwrap();
        assert!(t.history.windows(2).all(|w| w[1].best >= w[0].best));
        let first = t.history[0].objective;
        assert!(t.history.last().unwrap().best > first);
        assert_eq!(t.stages.len(), 1);
        assert_eq!(t.stages[0].evals, t.history.len());
        // Symmetric across the x axis.
        let h = t.best.values();
        for i in 1..16 {
            assert_eq!(h[i], h[16 - i]);
        }
    }

    #[test]
    fn perimeter_normalization() {
        let cfg = OptConfig { max_evals: 0, ..quick(Objective::JP) };
        let t = optimize(&cfg).unwrap();
        assert!((t.report.measures.perimeter - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(OptConfig { n_start: 12, ..OptConfig::default() }.validate().is_err());
        assert!(OptConfig { n_start: 128, n_angles: 64, ..OptConfig::default() }.validate().is_err());
        assert!(OptConfig { max_evals: 50, ..OptConfig::default() }.validate().is_err());
        assert!(OptConfig { restarts: 0, ..OptConfig::default() }.validate().is_err());
        assert!(OptConfig::default().validate().is_ok());
        assert_eq!(OptConfig::default().stages(), vec![64, 128]);
    }

    #[test]
    fn deterministic_trace() {
        let cfg = OptConfig { restarts: 2, max_evals: 900, ..quick(Objective::J) };
        let a = optimize(&cfg).unwrap();
        let b = optimize(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn stadium_analysis() {
        // Flat sides at θ = ±π/2, round ends.
        let sv = SupportVector::from_fn(64, |t| t.cos().abs() + 0.5).unwrap();
        let p = polygon_from_support(&sv).unwrap();
        let seg = detect_segments(&p, default_turn_tol(64), default_min_len(&p));
        let s = *seg.longest().unwrap();
        let mut report = crate::functionals::eval_functionals(
            &p,
            &EvalParams { mesh_size: MeshSize::DiameterOver(30.0), ..EvalParams::default() },
        )
        .unwrap();
        report.g_max_location = (p.vertex(s.start) + p.vertex(s.end)) * 0.5;
        let a = analyze_shape(&sv, &report).unwrap();
        assert_eq!(a.segments.segments.len(), 2);
        assert!((a.segment_gradient_offset.unwrap() - 0.5).abs() < 1e-12);
        // The circumscribed polygon overshoots the flat side by about r·tan(π/n) per end.
        assert!(a.segments.longest_length > 2.0 && a.segments.longest_length < 2.1);
    }

    #[test]
    fn regular_polygon_has_no_segment() {
        let sv = SupportVector::disc(256, 1.0).unwrap();
        let p = polygon_from_support(&sv).unwrap();
        let report = crate::functionals::eval_functionals(
            &p,
            &EvalParams { mesh_size: MeshSize::DiameterOver(30.0), ..EvalParams::default() },
        )
        .unwrap();
        let a = analyze_shape(&sv, &report).unwrap();
        assert!(a.segments.segments.is_empty());
        assert!(a.segment_gradient_offset.is_none());
    }
}
