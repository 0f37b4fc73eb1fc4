//! Compressed sparse rows and the two linear solvers used for the stiffness
//! system: sparse Cholesky (via faer) and Jacobi-preconditioned CG.

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Sums duplicate `(row, col, value)` entries; columns sorted per row.
    pub fn from_entries(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(entries.len());
        let mut val: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *val.last_mut().expect("entry exists") += v;
            } else {
                col.push(c);
                val.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, col, val }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col[k], self.val[k]))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).find(|&(c, _)| c == i).map_or(0.0, |(_, v)| v)).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative residual `‖b − A x‖ / ‖b‖`.
pub fn relative_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; a.n];
    a.mul_vec(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Solves the SPD system with a fill-reducing sparse Cholesky factorization,
/// followed by iterative refinement until `rtol` is met.
pub fn solve_cholesky(a: &Csr, b: &[f64], rtol: f64) -> Result<Vec<f64>> {
    let n = a.n;
    let mut trips = Vec::with_capacity(a.val.len());
    for i in 0..n {
        for (j, v) in a.row(i) {
            trips.push(Triplet::new(i, j, v));
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::Solver(format!("matrix construction: {e:?}")))?;
    let llt = mat
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Solver(format!("stiffness matrix is not positive definite: {e:?}")))?;

    let mut x = vec![0.0; n];
    let mut rhs = b.to_vec();
    for _ in 0..4 {
        let mut col = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        llt.solve_in_place(col.as_mut());
        for i in 0..n {
            x[i] += col[(i, 0)];
        }
        if relative_residual(a, &x, b) <= rtol {
            return Ok(x);
        }
        let mut ax = vec![0.0; n];
        a.mul_vec(&x, &mut ax);
        for i in 0..n {
            rhs[i] = b[i] - ax[i];
        }
    }
    let r = relative_residual(a, &x, b);
    if r <= rtol {
        Ok(x)
    } else {
        Err(Error::Solver(format!("direct solve residual {r:e} above {rtol:e}")))
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn solve_pcg(a: &Csr, b: &[f64], rtol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::Solver("non-positive diagonal entry".into()));
    }
    let nb = norm(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        a.mul_vec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Solver("matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= rtol * nb {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!("conjugate gradients did not converge in {max_iter} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0));
            if i > 0 {
                e.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                e.push((i, i + 1, -1.0));
            }
        }
        Csr::from_entries(n, e)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_entries(2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0)]);
        assert_eq!(a.diagonal(), vec![4.0, 2.0]);
    }

    #[test]
    fn both_solvers_agree() {
        let a = laplacian_1d(50);
        let b = vec![1.0; 50];
        let x1 = solve_cholesky(&a, &b, 1e-12).unwrap();
        let x2 = solve_pcg(&a, &b, 1e-12, 1000).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-8);
        }
        // Discrete parabola: x_i = (i+1)(n-i)/2.
        assert!((x1[0] - 25.0).abs() < 1e-9);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = Csr::from_entries(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(solve_cholesky(&a, &[1.0, 1.0], 1e-10).is_err());
    }
}
