//! Walk-on-spheres estimates of the torsion function and of hitting
//! probabilities.
//!
//! Normalization: the expected exit time of standard Brownian motion from a
//! disc of radius `r` started at its centre is `r²/2`. The torsion function
//! with `−Δu = 1` is half the expected exit time, so each jump contributes
//! `r²/4`.

use crate::error::{Error, Result};
use crate::fem::solve_torsion;
use crate::geom::Vec2;
use crate::mesh::{refine, triangulate};
use crate::shape::{inscribed_disc, ConvexPolygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Jumps after which a walk is declared runaway.
pub const MAX_STEPS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WosEstimate {
    pub x: Vec2,
    pub walks: usize,
    pub eps: f64,
    pub mean: f64,
    pub stderr: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub x: Vec2,
    pub target: Disc,
    pub walks: usize,
    pub eps: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    pub depth: f64,
    pub x: Vec2,
    pub u: WosEstimate,
    pub h: HittingEstimate,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhpRatioScan {
    pub z: Vec2,
    pub normal: Vec2,
    pub samples: Vec<RatioSample>,
}

impl BhpRatioScan {
    /// `max ratio / min ratio`.
    pub fn window(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), s| (lo.min(s.ratio), hi.max(s.ratio)));
        hi / lo
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Pairwise sum; the split points depend only on the length.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Mean and standard error `stdev/√n`.
fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = if v.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

fn walk_rng(seed: u64, walk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walk as u64);
    rng
}

fn jump(rng: &mut ChaCha8Rng, x: Vec2, r: f64) -> Vec2 {
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    x + Vec2::from_angle(phi) * r
}

fn check_walk_args(p: &ConvexPolygon, x: Vec2, walks: usize, eps: f64) -> Result<()> {
    if walks == 0 {
        return Err(Error::InvalidInput("need at least one walk".into()));
    }
    let r_in = inscribed_disc(p).1;
    if !(eps > 0.0 && eps < r_in / 10.0) {
        return Err(Error::InvalidInput(format!("eps {eps} must lie in (0, inradius/10 = {})", r_in / 10.0)));
    }
    if !(p.signed_distance(x) > 0.0) {
        return Err(Error::InvalidInput(format!("point ({}, {}) is not interior", x.x, x.y)));
    }
    Ok(())
}

/// Estimates `u(x)` for `−Δu = 1`, `u = 0` on the boundary.
pub fn wos_torsion(p: &ConvexPolygon, x: Vec2, walks: usize, eps: f64, seed: u64) -> Result<WosEstimate> {
    check_walk_args(p, x, walks, eps)?;
    let scores: Vec<Result<f64>> = (0..walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = walk_rng(seed, w);
            let mut pos = x;
            let mut acc = Compensated::default();
            for _ in 0..MAX_STEPS {
                let r = p.signed_distance(pos);
                if r < eps {
                    return Ok(acc.value());
                }
                acc.add(0.25 * r * r);
                pos = jump(&mut rng, pos, r);
            }
            Err(Error::Walk(format!("walk {w} exceeded {MAX_STEPS} steps")))
        })
        .collect();
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    let (mean, stderr) = mean_stderr(&scores);
    Ok(WosEstimate { x, walks, eps, mean, stderr, seed })
}

/// Probability that Brownian motion from `x` reaches the disc `target`
/// before leaving `p`.
pub fn hitting_probability(
    p: &ConvexPolygon,
    target: Disc,
    x: Vec2,
    walks: usize,
    eps: f64,
    seed: u64,
) -> Result<HittingEstimate> {
    check_walk_args(p, x, walks, eps)?;
    if !(target.radius > 0.0) || p.signed_distance(target.center) <= target.radius {
        return Err(Error::InvalidInput("target disc must lie strictly inside the domain".into()));
    }
    if x.dist(target.center) <= target.radius {
        return Err(Error::InvalidInput("start point lies in the target disc".into()));
    }
    let scores: Vec<Result<f64>> = (0..walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = walk_rng(seed, w);
            let mut pos = x;
            for _ in 0..MAX_STEPS {
                let d_out = p.signed_distance(pos);
                let d_in = pos.dist(target.center) - target.radius;
                if d_in < eps {
                    return Ok(1.0);
                }
                if d_out < eps {
                    return Ok(0.0);
                }
                pos = jump(&mut rng, pos, d_out.min(d_in));
            }
            Err(Error::Walk(format!("walk {w} exceeded {MAX_STEPS} steps")))
        })
        .collect();
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    let (p_hat, stderr) = mean_stderr(&scores);
    Ok(HittingEstimate { x, target, walks, eps, p_hat, stderr, seed })
}

/// Ratios `u(x_k)/h(x_k)` along the inward normal at `z`, with
/// `x_k = z + 2^{-k} d₀ n` and `d₀` half the inradius.
pub fn bhp_ratio_scan(
    p: &ConvexPolygon,
    target: Disc,
    z: Vec2,
    normal: Vec2,
    k_range: std::ops::RangeInclusive<u32>,
    walks: usize,
    seed: u64,
) -> Result<BhpRatioScan> {
    let max_ext = p.exterior_angles().iter().copied().fold(0.0, f64::max);
    if max_ext >= PI / 2.0 {
        return Err(Error::InvalidInput(format!("exterior angle {max_ext} is not below π/2")));
    }
    let n = normal.normalized();
    let d0 = 0.5 * inscribed_disc(p).1;
    let eps = 1e-4 * p.diameter();
    let mut samples = Vec::new();
    for k in k_range {
        let depth = d0 * 0.5f64.powi(k as i32);
        let x = z + n * depth;
        if !(p.signed_distance(x) > eps) {
            return Err(Error::InvalidInput(format!("probe at depth {depth} leaves the domain")));
        }
        let u = wos_torsion(p, x, walks, eps, seed.wrapping_add(2 * k as u64))?;
        let h = hitting_probability(p, target, x, walks, eps, seed.wrapping_add(2 * k as u64 + 1))?;
        if !(u.mean > 0.0 && h.p_hat > 0.0) {
            return Err(Error::Walk(format!("no signal at depth {depth}: u {} h {}", u.mean, h.p_hat)));
        }
        let ratio = u.mean / h.p_hat;
        let ratio_stderr = ratio * ((u.stderr / u.mean).powi(2) + (h.stderr / h.p_hat).powi(2)).sqrt();
        samples.push(RatioSample { depth, x, u, h, ratio, ratio_stderr });
    }
    Ok(BhpRatioScan { z, normal: n, samples })
}

/// Five interior points: the incentre and the four points at half the
/// inradius from it along the axes.
pub fn auto_points(p: &ConvexPolygon) -> Vec<Vec2> {
    let (c, r) = inscribed_disc(p);
    let d = 0.5 * r;
    vec![c, c + Vec2::new(d, 0.0), c + Vec2::new(0.0, d), c - Vec2::new(d, 0.0), c - Vec2::new(0.0, d)]
}

/// WoS estimate beside the finite element value at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckPoint {
    pub x: Vec2,
    pub wos: WosEstimate,
    /// Value on the refined mesh.
    pub fem_u: f64,
    /// `|u_h − u_{h/2}|`, the discretization error bound.
    pub fem_error_bound: f64,
    pub deviation: f64,
    /// `3·stderr + 2·fem_error_bound`.
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares walk-on-spheres with the finite element solution on a mesh of
/// size `h` and its uniform refinement. Point `i` uses seed `seed + i`.
pub fn fem_cross_check(
    p: &ConvexPolygon,
    points: &[Vec2],
    walks: usize,
    eps: f64,
    seed: u64,
    h: f64,
) -> Result<Vec<CrossCheckPoint>> {
    let coarse = solve_torsion(triangulate(p, h, 0.5)?)?;
    let fine = solve_torsion(refine(coarse.mesh()))?;
    let mut out = Vec::with_capacity(points.len());
    for (i, &x) in points.iter().enumerate() {
        let wos = wos_torsion(p, x, walks, eps, seed.wrapping_add(i as u64))?;
        let at = |s: &crate::fem::TorsionSolution| s.value_at(x).ok_or(Error::ProbeOutside { x: x.x, y: x.y });
        let fem_u = at(&fine)?;
        let fem_error_bound = (fem_u - at(&coarse)?).abs();
        let deviation = (wos.mean - fem_u).abs();
        let tolerance = 3.0 * wos.stderr + 2.0 * fem_error_bound;
        out.push(CrossCheckPoint { x, wos, fem_u, fem_error_bound, deviation, tolerance, pass: deviation <= tolerance });
    }
    Ok(out)
}
