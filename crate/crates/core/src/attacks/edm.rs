//! Partially observed Euclidean distance matrices.

use std::time::Duration;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::{Error, Matrix, Result};

/// Stacked squared-distance matrix over `n` samples followed by `m`
/// landmarks. The sample-to-sample block is hidden from the completion
/// algorithms; `d` keeps it only for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct EdmInstance {
    pub d: Matrix,
    /// `true` where the entry is observed.
    pub mask: DMatrix<bool>,
    pub n: usize,
    pub m: usize,
    pub embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionResult {
    #[serde(skip)]
    pub d_hat: Matrix,
    pub rel_error: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Squared Euclidean distances between the rows of `p`.
pub fn squared_distances(p: &Matrix) -> Matrix {
    let n = p.nrows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let mut s = 0.0;
            for k in 0..p.ncols() {
                let diff = p[(i, k)] - p[(j, k)];
                s += diff * diff;
            }
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    d
}

/// Squared distances from every row of `x` to every row of `w`.
pub fn cross_distances(x: &Matrix, w: &Matrix) -> Matrix {
    Matrix::from_fn(x.nrows(), w.nrows(), |i, j| {
        (0..x.ncols()).map(|k| (x[(i, k)] - w[(j, k)]).powi(2)).sum()
    })
}

/// Mask observing everything except the off-diagonal sample-to-sample block.
pub fn standard_mask(n: usize, m: usize) -> DMatrix<bool> {
    DMatrix::from_fn(n + m, n + m, |i, j| i == j || i >= n || j >= n)
}

/// Exact instance from sample and landmark coordinates.
pub fn assemble_edm(x: &Matrix, w: &Matrix) -> Result<EdmInstance> {
    if x.ncols() != w.ncols() {
        return Err(Error::DimensionMismatch(format!("samples in R^{}, landmarks in R^{}", x.ncols(), w.ncols())));
    }
    let (n, m) = (x.nrows(), w.nrows());
    let mut p = Matrix::zeros(n + m, x.ncols());
    p.rows_mut(0, n).copy_from(x);
    p.rows_mut(n, m).copy_from(w);
    Ok(EdmInstance { d: squared_distances(&p), mask: standard_mask(n, m), n, m, embed_dim: x.ncols() })
}

/// Instance from separately obtained blocks: sample-to-landmark distances
/// (for example inverted from a kernel block), landmark-to-landmark
/// distances, and the true hidden block for scoring.
pub fn edm_from_blocks(d_xw: &Matrix, d_w: &Matrix, d_x: &Matrix, embed_dim: usize) -> Result<EdmInstance> {
    let (n, m) = d_xw.shape();
    if d_w.shape() != (m, m) || d_x.shape() != (n, n) {
        return Err(Error::DimensionMismatch("distance blocks do not fit together".into()));
    }
    let mut d = Matrix::zeros(n + m, n + m);
    d.view_mut((0, 0), (n, n)).copy_from(d_x);
    d.view_mut((0, n), (n, m)).copy_from(d_xw);
    d.view_mut((n, 0), (m, n)).copy_from(&d_xw.transpose());
    d.view_mut((n, n), (m, m)).copy_from(d_w);
    Ok(EdmInstance { d, mask: standard_mask(n, m), n, m, embed_dim })
}

impl EdmInstance {
    pub fn size(&self) -> usize {
        self.n + self.m
    }

    /// Observed entries, zero elsewhere.
    pub fn observed(&self) -> Matrix {
        self.d.zip_map(&self.mask, |v, o| if o { v } else { 0.0 })
    }

    pub fn fully_observed(&self) -> bool {
        self.mask.iter().all(|&o| o)
    }

    pub fn hidden_block(&self) -> Matrix {
        self.d.view((0, 0), (self.n, self.n)).into_owned()
    }

    /// Copies observed entries of the instance into `z`.
    pub fn restore_observed(&self, z: &mut Matrix) {
        for (v, (&d, &o)) in z.iter_mut().zip(self.d.iter().zip(self.mask.iter())) {
            if o {
                *v = d;
            }
        }
    }

    /// Hidden entries start at the mean of the observed off-diagonal entries
    /// in their column; the result is then symmetrized.
    pub fn initial_fill(&self) -> Matrix {
        let size = self.size();
        let mut z = self.observed();
        for j in 0..size {
            let (mut s, mut c) = (0.0, 0usize);
            for i in 0..size {
                if i != j && self.mask[(i, j)] {
                    s += self.d[(i, j)];
                    c += 1;
                }
            }
            let mean = if c > 0 { s / c as f64 } else { 0.0 };
            for i in 0..size {
                if !self.mask[(i, j)] {
                    z[(i, j)] = mean;
                }
            }
        }
        symmetrize(&mut z);
        z
    }

    /// `||D_hat_X - D_X||_F / ||D_X||_F`, or the absolute error when the
    /// true block is zero.
    pub fn rel_error(&self, d_hat: &Matrix) -> f64 {
        let truth = self.hidden_block();
        let est = d_hat.view((0, 0), (self.n, self.n));
        let err = (est - &truth).norm();
        let norm = truth.norm();
        if norm > 0.0 {
            err / norm
        } else {
            err
        }
    }

    pub fn result(&self, d_hat: Matrix, iterations: usize, wall_time: Duration) -> CompletionResult {
        CompletionResult { rel_error: self.rel_error(&d_hat), d_hat, iterations, wall_time }
    }
}

pub fn symmetrize(z: &mut Matrix) {
    let t = z.transpose();
    *z += t;
    *z *= 0.5;
}

/// Zero diagonal, nonnegative, symmetric.
pub fn enforce_edm(z: &mut Matrix) {
    z.apply(|v| *v = v.max(0.0));
    symmetrize(z);
    z.fill_diagonal(0.0);
}

/// Classical multidimensional scaling: `dim` coordinates whose distances best
/// match `d` in the double-centered sense.
pub fn classical_mds(d: &Matrix, dim: usize) -> Matrix {
    let n = d.nrows();
    let row_means: Vec<f64> = d.row_iter().map(|r| r.sum() / n as f64).collect();
    let total = row_means.iter().sum::<f64>() / n as f64;
    let b = Matrix::from_fn(n, n, |i, j| -0.5 * (d[(i, j)] - row_means[i] - row_means[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    Matrix::from_fn(n, dim, |i, k| match order.get(k) {
        Some(&e) => eig.eigenvectors[(i, e)] * eig.eigenvalues[e].max(0.0).sqrt(),
        None => 0.0,
    })
}

/// `sum_k lambda_k v_k v_k^T` over the `rank` eigenpairs of largest magnitude.
pub fn truncate_rank(z: &Matrix, rank: usize) -> Matrix {
    let eig = SymmetricEigen::new(z.clone());
    let mut order: Vec<usize> = (0..z.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let mut out = Matrix::zeros(z.nrows(), z.ncols());
    for &e in order.iter().take(rank) {
        let v = eig.eigenvectors.column(e);
        out.ger(eig.eigenvalues[e], &v, &v, 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_twice_is_zero() {
        let p = Matrix::from_row_slice(1, 2, &[0.3, 0.4]);
        let inst = assemble_edm(&p, &p).unwrap();
        assert_eq!(inst.d, Matrix::zeros(2, 2));
    }

    #[test]
    fn analytic_small_instance() {
        let x = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let w = Matrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let inst = assemble_edm(&x, &w).unwrap();
        assert_eq!(inst.d[(0, 2)], 1.0);
        assert_eq!(inst.d[(1, 2)], 2.0);
        assert_eq!(inst.d[(0, 1)], 1.0);
        assert!(!inst.mask[(0, 1)] && !inst.mask[(1, 0)]);
        assert!(inst.mask[(0, 0)] && inst.mask[(0, 2)] && inst.mask[(2, 2)]);
        assert!(assemble_edm(&x, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn double_centered_rank_at_most_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..4 {
            let x = Matrix::from_fn(9, d, |_, _| rng.random::<f64>());
            let w = Matrix::from_fn(4, d, |_, _| rng.random::<f64>());
            let inst = assemble_edm(&x, &w).unwrap();
            let n = inst.size();
            let j = Matrix::identity(n, n) - Matrix::repeat(n, n, 1.0 / n as f64);
            let g = -0.5 * &j * &inst.d * &j;
            let s = g.singular_values();
            let rank = s.iter().filter(|&&v| v > 1e-10 * s.max()).count();
            assert!(rank <= d);
        }
    }

    #[test]
    fn blocks_match_direct_assembly() {
        let x = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let w = Matrix::from_fn(2, 2, |i, j| (3 * i + j) as f64 * 0.2);
        let direct = assemble_edm(&x, &w).unwrap();
        let blocks = edm_from_blocks(&cross_distances(&x, &w), &squared_distances(&w), &squared_distances(&x), 2).unwrap();
        assert!((direct.d - blocks.d).amax() < 1e-15);
    }

    #[test]
    fn initial_fill_only_touches_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_fn(4, 2, |_, _| rng.random::<f64>());
        let w = Matrix::from_fn(3, 2, |_, _| rng.random::<f64>());
        let inst = assemble_edm(&x, &w).unwrap();
        let z = inst.initial_fill();
        assert_eq!(z, z.transpose());
        for i in 0..7 {
            for j in 0..7 {
                if inst.mask[(i, j)] {
                    assert_eq!(z[(i, j)], inst.d[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn mds_recovers_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = Matrix::from_fn(8, 3, |_, _| rng.random::<f64>());
        let d = squared_distances(&p);
        let q = classical_mds(&d, 3);
        assert!((squared_distances(&q) - d).amax() < 1e-10);
    }
}
