//! Nuclear-norm regularized completion by iterative singular value
//! shrinkage, run along a decreasing penalty path with warm starts.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};

use super::edm::{enforce_edm, CompletionResult, EdmInstance};
use crate::Matrix;

/// Number of penalties on the path before the target value.
const PATH_LEN: usize = 8;

/// Shrinks every eigenvalue of a symmetric matrix towards zero by `tau`.
pub fn shrink_symmetric(z: &Matrix, tau: f64) -> Matrix {
    let eig = SymmetricEigen::new(z.clone());
    let mut out = Matrix::zeros(z.nrows(), z.ncols());
    for (e, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.signum() * (l.abs() - tau).max(0.0);
        if s != 0.0 {
            let v = eig.eigenvectors.column(e);
            out.ger(s, &v, &v, 1.0);
        }
    }
    out
}

/// Shrinks every singular value by `tau`.
pub fn shrink_general(z: &Matrix, tau: f64) -> Matrix {
    let mut svd = z.clone().svd(true, true);
    svd.singular_values.apply(|s| *s = (*s - tau).max(0.0));
    svd.recompose().expect("both factors were computed")
}

/// Geometric path from the largest useful penalty down to `lambda`.
/// A zero target gets a path ending six decades below the start, then zero.
pub fn penalty_path(start: f64, lambda: f64) -> Vec<f64> {
    if !(start > 0.0) || lambda >= start {
        return vec![lambda];
    }
    let end = if lambda > 0.0 { lambda } else { start * 1e-6 };
    let ratio = (end / start).powf(1.0 / (PATH_LEN - 1) as f64);
    let mut path: Vec<f64> = (0..PATH_LEN).map(|k| start * ratio.powi(k as i32)).collect();
    *path.last_mut().expect("non-empty") = end;
    if lambda == 0.0 {
        path.push(0.0);
    }
    path
}

/// Completes `observed` on the entries where `mask` is true. The iteration
/// budget `max_iters` is shared by the whole path: each penalty gets an equal
/// share plus whatever earlier ones left unused. Returns the low-rank iterate
/// and the number of iterations spent.
pub fn soft_impute_matrix(
    observed: &Matrix,
    mask: &DMatrix<bool>,
    path: &[f64],
    max_iters: usize,
    tol: f64,
    symmetric: bool,
) -> (Matrix, usize) {
    let mut z = Matrix::zeros(observed.nrows(), observed.ncols());
    let mut spent = 0;
    for (idx, &tau) in path.iter().enumerate() {
        let remaining_steps = path.len() - idx;
        let share = (max_iters - spent) / remaining_steps;
        let share = if idx + 1 == path.len() { max_iters - spent } else { share };
        for _ in 0..share {
            let filled = observed.zip_zip_map(mask, &z, |o, m, zv| if m { o } else { zv });
            let next = if symmetric { shrink_symmetric(&filled, tau) } else { shrink_general(&filled, tau) };
            spent += 1;
            let denom = z.norm_squared();
            let change = (&next - &z).norm_squared();
            z = next;
            if denom > 0.0 && change / denom < tol || denom == 0.0 && change == 0.0 {
                break;
            }
        }
    }
    (z, spent)
}

/// Soft-impute on an instance. `lambda` is the final penalty; the output keeps
/// the observed entries and takes the hidden ones from the low-rank iterate,
/// then is made symmetric, nonnegative and zero on the diagonal.
pub fn soft_impute(inst: &EdmInstance, lambda: f64, max_iters: usize, tol: f64) -> CompletionResult {
    let t0 = Instant::now();
    let observed = inst.observed();
    let start = SymmetricEigen::new(observed.clone()).eigenvalues.amax();
    let path = penalty_path(start, lambda);
    let (z, iters) = soft_impute_matrix(&observed, &inst.mask, &path, max_iters, tol, true);
    let mut d = observed.zip_zip_map(&inst.mask, &z, |o, m, zv| if m { o } else { zv });
    enforce_edm(&mut d);
    inst.result(d, iters, t0.elapsed())
}
