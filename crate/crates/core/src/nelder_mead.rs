//! Nelder–Mead maximization with dimension-adaptive coefficients:
//! reflection 1, expansion 1 + 2/d, contraction 0.75 − 1/(2d), shrink 1 − 1/d.

use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NmOptions {
    /// Total objective evaluations allowed, including the initial simplex.
    pub max_evals: usize,
    /// Stop when the best value improved by less than this (relative) over
    /// the last `window` evaluations.
    pub stop_tol: f64,
    pub window: usize,
}

#[derive(Clone, Debug)]
pub struct NmResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub evals: usize,
    /// Objective of every evaluation, in order.
    pub values: Vec<f64>,
}

struct Counter<'a, F> {
    f: &'a F,
    values: Vec<f64>,
    max: usize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Counter<'_, F> {
    fn budget(&self) -> usize {
        self.max - self.values.len()
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = sanitize((self.f)(x));
        self.values.push(v);
        v
    }

    /// Evaluates a batch concurrently; results are recorded in input order.
    fn eval_many(&mut self, xs: &[Vec<f64>]) -> Vec<f64> {
        let f = self.f;
        let out: Vec<f64> = xs.par_iter().map(|x| sanitize(f(x))).collect();
        self.values.extend_from_slice(&out);
        out
    }
}

/// NaN ranks below every number.
fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximizes `f` from `x0` with an axis-aligned initial simplex of edge `step`.
pub fn maximize<F>(f: &F, x0: &[f64], step: f64, opts: &NmOptions) -> NmResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = x0.len();
    let dirs: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = step;
            e
        })
        .collect();
    maximize_from(f, x0, &dirs, opts)
}

/// Maximizes `f` from the simplex `x0, x0 + dirs[0], …, x0 + dirs[d−1]`.
pub fn maximize_from<F>(f: &F, x0: &[f64], dirs: &[Vec<f64>], opts: &NmOptions) -> NmResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = x0.len();
    assert_eq!(dirs.len(), d, "one simplex direction per coordinate");
    let mut c = Counter { f, values: Vec::new(), max: opts.max_evals };
    if opts.max_evals == 0 || d == 0 {
        return NmResult { best_x: x0.to_vec(), best_f: f64::NEG_INFINITY, evals: 0, values: Vec::new() };
    }

    let df = d as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / df, 0.75 - 0.5 / df, 1.0 - 1.0 / df);

    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for dir in dirs {
        if pts.len() >= opts.max_evals {
            break;
        }
        pts.push(x0.iter().zip(dir).map(|(a, b)| a + b).collect());
    }
    let vals = c.eval_many(&pts);
    let mut simplex: Vec<(Vec<f64>, f64)> = pts.into_iter().zip(vals).collect();
    if simplex.len() < d + 1 {
        return finish(simplex, c);
    }

    let mut best_hist: Vec<f64> = Vec::new();
    loop {
        // Descending by value; ties keep the earlier vertex first.
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        best_hist.push(simplex[0].1);
        if c.budget() == 0 || stalled(&best_hist, &c.values, opts) {
            break;
        }

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for k in 0..d {
                centroid[k] += x[k] / df;
            }
        }
        let worst = simplex[d].clone();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|k| centroid[k] + t * (worst.0[k] - centroid[k])).collect() };

        let xr = along(-alpha);
        let fr = c.eval(&xr);
        if fr > simplex[0].1 {
            if c.budget() == 0 {
                simplex[d] = (xr, fr);
                continue;
            }
            let xe = along(-alpha * beta);
            let fe = c.eval(&xe);
            simplex[d] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        if c.budget() == 0 {
            continue;
        }
        // Outside contraction if the reflection beat the worst point, else inside.
        let (xc, fc, accept) = if fr > worst.1 {
            let xc = along(-alpha * gamma);
            let fc = c.eval(&xc);
            (xc, fc, fc >= fr)
        } else {
            let xc = along(gamma);
            let fc = c.eval(&xc);
            (xc, fc, fc > worst.1)
        };
        if accept {
            simplex[d] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        let mut shrunk: Vec<Vec<f64>> = simplex[1..]
            .iter()
            .map(|(x, _)| (0..d).map(|k| best[k] + delta * (x[k] - best[k])).collect())
            .collect();
        shrunk.truncate(c.budget());
        let vals = c.eval_many(&shrunk);
        for (i, (x, v)) in shrunk.into_iter().zip(vals).enumerate() {
            simplex[i + 1] = (x, v);
        }
    }
    finish(simplex, c)
}

fn stalled(best_hist: &[f64], values: &[f64], opts: &NmOptions) -> bool {
    if opts.stop_tol <= 0.0 || opts.window == 0 || values.len() <= opts.window {
        return false;
    }
    let now = best_hist[best_hist.len() - 1];
    let then = values[..values.len() - opts.window].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    now.is_finite() && then.is_finite() && (now - then) <= opts.stop_tol * then.abs()
}

fn finish<F>(mut simplex: Vec<(Vec<f64>, f64)>, c: Counter<'_, F>) -> NmResult {
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (best_x, best_f) = simplex.swap_remove(0);
    NmResult { best_x, best_f, evals: c.values.len(), values: c.values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(max_evals: usize) -> NmOptions {
        NmOptions { max_evals, stop_tol: 0.0, window: 0 }
    }

    #[test]
    fn quadratic_peak() {
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 2.0).powi(2) - (x[2] - 0.5).powi(2);
        let r = maximize(&f, &[0.0, 0.0, 0.0], 0.5, &opts(2000));
        assert!((r.best_x[0] - 1.0).abs() < 1e-4);
        assert!((r.best_x[1] + 2.0).abs() < 1e-4);
        assert!(r.best_f > -1e-8);
        assert!(r.evals <= 2000);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
        let r = maximize(&f, &[-1.2, 1.0], 0.5, &opts(5000));
        assert!((r.best_x[0] - 1.0).abs() < 1e-3, "{:?}", r.best_x);
    }

    #[test]
    fn budget_is_exact_and_zero_is_a_no_op() {
        let f = |x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>();
        let r = maximize(&f, &[1.0; 6], 0.1, &opts(57));
        assert_eq!(r.evals, 57);
        assert_eq!(r.values.len(), 57);
        let r = maximize(&f, &[1.0; 6], 0.1, &opts(0));
        assert_eq!(r.evals, 0);
        assert_eq!(r.best_x, vec![1.0; 6]);
    }

    #[test]
    fn nan_is_never_best() {
        let f = |x: &[f64]| if x[0] > 0.2 { f64::NAN } else { -(x[0] - 0.2).powi(2) };
        let r = maximize(&f, &[0.0], 0.1, &opts(200));
        assert!(r.best_f.is_finite());
        assert!(r.best_x[0] <= 0.2);
    }

    #[test]
    fn stop_tol_ends_early() {
        let f = |x: &[f64]| -(x[0] * x[0] + x[1] * x[1]);
        let o = NmOptions { max_evals: 100_000, stop_tol: 1e-6, window: 50 };
        let r = maximize(&f, &[1.0, 1.0], 0.5, &o);
        assert!(r.evals < 100_000);
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - (x[1] * x[0]).sin().powi(2);
        let a = maximize(&f, &[1.0, 1.0], 0.2, &opts(300));
        let b = maximize(&f, &[1.0, 1.0], 0.2, &opts(300));
        assert_eq!(a.values, b.values);
    }
}
