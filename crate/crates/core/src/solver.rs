//! Centralized reference solvers and the conjugate-gradient core shared with
//! the federated protocol.
//!
//! The CG iteration is split into two parts. [`CgState`] holds the replicated
//! state and applies one update given the aggregated `KtKp` vector and the
//! scalar `p^T KtKp`; every party runs exactly this code. The reductions that
//! produce those inputs ([`exact_gradient`], [`ktkp_partial`],
//! [`scalar_with`]) accumulate exactly, so their rounded results do not
//! depend on how the samples are split across parties.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exact::{self, ExactSum};
use crate::{Error, Matrix, Result, Vector};

/// `min ||y - K alpha||^2 + lambda ||alpha||^2` over `alpha in R^m`.
#[derive(Debug, Clone)]
pub struct RrlsProblem {
    /// `n x m` kernel block between samples and landmarks.
    pub k: Matrix,
    pub y: Vec<f64>,
    pub lambda: f64,
}

impl RrlsProblem {
    pub fn new(k: Matrix, y: Vec<f64>, lambda: f64) -> Result<Self> {
        let p = Self { k, y, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.nrows() == 0 || self.k.ncols() == 0 {
            return Err(Error::InvalidSpec("empty kernel block".into()));
        }
        if self.k.nrows() != self.y.len() {
            return Err(Error::DimensionMismatch(format!("{} kernel rows, {} labels", self.k.nrows(), self.y.len())));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidSpec(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("labels"));
        }
        if self.k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel block"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn m(&self) -> usize {
        self.k.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgRecord {
    pub epoch: usize,
    pub residual_sq_sum: f64,
    /// Step length `a`; absent for the initialization record.
    pub step: Option<f64>,
    /// Absent at initialization and on the epoch that converged.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CgTrace {
    pub records: Vec<CgRecord>,
    pub stop_epoch: usize,
    pub converged: bool,
}

/// Replicated CG state.
#[derive(Debug, Clone, PartialEq)]
pub struct CgState {
    pub alpha: Vec<f64>,
    /// Conjugate direction.
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    /// Gradient at the starting point.
    pub g: Vec<f64>,
    pub epoch: usize,
    /// Residual squared sum.
    pub err: f64,
}

impl CgState {
    /// Starts from `alpha` with gradient `g = K^T K alpha - K^T y + lambda alpha`.
    pub fn from_gradient(alpha: Vec<f64>, g: Vec<f64>) -> Self {
        let p: Vec<f64> = g.iter().map(|v| -v).collect();
        let err = exact::dot(&p, &p);
        Self { alpha, r: p.clone(), p, g, epoch: 0, err }
    }

    pub fn initial_record(&self) -> CgRecord {
        CgRecord { epoch: 0, residual_sq_sum: self.err, step: None, beta: None }
    }

    pub fn converged(&self, toll: f64) -> bool {
        self.err < toll
    }

    /// One CG update from the aggregated `A p` and `p^T A p`.
    pub fn apply(&mut self, ktkp: &[f64], pktkp: f64, toll: f64) -> Result<CgRecord> {
        let epoch = self.epoch + 1;
        if ktkp.len() != self.p.len() {
            return Err(Error::DimensionMismatch(format!("KtKp has {} entries, expected {}", ktkp.len(), self.p.len())));
        }
        if !(pktkp > 0.0) || !pktkp.is_finite() {
            return Err(Error::IndefiniteSystem { epoch, value: pktkp });
        }
        let rr_old = self.err;
        let a = rr_old / pktkp;
        for (x, p) in self.alpha.iter_mut().zip(&self.p) {
            *x += a * p;
        }
        for (r, q) in self.r.iter_mut().zip(ktkp) {
            *r -= a * q;
        }
        let err = exact::dot(&self.r, &self.r);
        if !err.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        self.err = err;
        self.epoch = epoch;
        if err < toll {
            return Ok(CgRecord { epoch, residual_sq_sum: err, step: Some(a), beta: None });
        }
        let beta = err / rr_old;
        for (p, r) in self.p.iter_mut().zip(&self.r) {
            *p = r + beta * *p;
        }
        Ok(CgRecord { epoch, residual_sq_sum: err, step: Some(a), beta: Some(beta) })
    }

    /// SHA-256 over the exact bits of the state.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.epoch as u64).to_le_bytes());
        h.update(self.err.to_bits().to_le_bytes());
        for v in [&self.alpha, &self.p, &self.r, &self.g] {
            h.update((v.len() as u64).to_le_bytes());
            for x in v.iter() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        let mut out = [0u8; 32];
        out.copy_from_slice(h.finalize().as_slice());
        out
    }
}

/// Row `i` of `K` is column `i` of `kt = K^T`, which is contiguous.
pub fn row_major(k: &Matrix) -> Matrix {
    k.transpose()
}

/// Correctly rounded `K_i . v` for every row.
pub fn row_dots(kt: &Matrix, v: &[f64]) -> Vec<f64> {
    kt.column_iter().map(|row| exact::dot(row.as_slice(), v)).collect()
}

/// Accumulates `acc_j += sum_i K_ij t_i` where `t_i` is the exact sum of
/// `terms[i * width .. (i + 1) * width]`.
pub fn accumulate_transpose(kt: &Matrix, terms: &[f64], width: usize, acc: &mut [ExactSum]) {
    assert_eq!(terms.len(), kt.ncols() * width, "one term group per row");
    assert_eq!(acc.len(), kt.nrows(), "one accumulator per column");
    for (i, row) in kt.column_iter().enumerate() {
        let t = &terms[i * width..(i + 1) * width];
        for (a, &kij) in acc.iter_mut().zip(row.iter()) {
            for &tv in t {
                a.add_product(kij, tv);
            }
        }
    }
}

/// Per-row residual `fl(K_i alpha) - y_i`, kept exact as two terms.
pub fn residual_terms(kt: &Matrix, alpha: &[f64], y: &[f64]) -> Vec<f64> {
    row_dots(kt, alpha).into_iter().zip(y).flat_map(|(d, &yi)| [d, -yi]).collect()
}

/// `K^T (fl(K alpha) - y) + lambda alpha`, accumulated exactly and rounded
/// once per entry.
pub fn exact_gradient(kt: &Matrix, alpha: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
    let mut acc = vec![ExactSum::new(); kt.nrows()];
    accumulate_transpose(kt, &residual_terms(kt, alpha, y), 2, &mut acc);
    for (a, &x) in acc.iter_mut().zip(alpha) {
        a.add_product(lambda, x);
    }
    exact::round_all(&acc)
}

/// Exact `K^T fl(K p) + weight * lambda * p`.
pub fn ktkp_partial(kt: &Matrix, p: &[f64], lambda: f64, weight: f64) -> Vec<ExactSum> {
    let q = row_dots(kt, p);
    let mut acc = vec![ExactSum::new(); kt.nrows()];
    accumulate_transpose(kt, &q, 1, &mut acc);
    for (a, &pj) in acc.iter_mut().zip(p) {
        a.add_triple_product(weight, lambda, pj);
    }
    acc
}

/// Exact `sum_j p_j acc_j`.
pub fn scalar_with(p: &[f64], acc: &[ExactSum]) -> ExactSum {
    let mut s = ExactSum::new();
    for (&pj, a) in p.iter().zip(acc) {
        s.add_scaled_expansion(pj, &a.to_expansion());
    }
    s
}

/// Weights `w_h` for splitting the regularizer across `n` parties. All equal
/// `fl(1/n)` except the last, chosen so the weights sum to exactly 1.
pub fn reg_weights(n: usize) -> Vec<f64> {
    assert!(n >= 1, "at least one party");
    let w = 1.0 / n as f64;
    let mut rest = ExactSum::from_value(1.0);
    for _ in 1..n {
        rest.add(-w);
    }
    let mut out = vec![w; n - 1];
    out.push(rest.round());
    out
}

/// Objective `||y - K alpha||^2 + lambda ||alpha||^2`.
pub fn objective(p: &RrlsProblem, alpha: &[f64]) -> f64 {
    let a = Vector::from_column_slice(alpha);
    let r = &p.k * &a - Vector::from_column_slice(&p.y);
    r.norm_squared() + p.lambda * a.norm_squared()
}

/// Gradient `2 (K^T K alpha - K^T y + lambda alpha)` of [`objective`].
pub fn gradient(p: &RrlsProblem, alpha: &[f64]) -> Vec<f64> {
    let a = Vector::from_column_slice(alpha);
    let r = &p.k * &a - Vector::from_column_slice(&p.y);
    let g = p.k.tr_mul(&r) + p.lambda * a;
    g.iter().map(|v| 2.0 * v).collect()
}

/// Full KRLS: solves `(K + lambda I) alpha = y` for an `n x n` kernel.
pub fn solve_krls_closed_form(k: &Matrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = k.nrows();
    if k.ncols() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!("kernel {:?}, labels {}", k.shape(), y.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidSpec(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let a = k + Matrix::identity(n, n) * lambda;
    let b = Vector::from_column_slice(y);
    if lambda == 0.0 {
        let s = a.singular_values();
        let tol = n as f64 * f64::EPSILON * s.max();
        if s.iter().any(|&v| v <= tol) {
            return Err(Error::Singular("rank-deficient kernel without regularization".into()));
        }
    }
    let x = match a.clone().cholesky() {
        Some(c) => c.solve(&b),
        None => a.lu().solve(&b).ok_or_else(|| Error::Singular("(K + lambda I) is singular".into()))?,
    };
    Ok(x.iter().copied().collect())
}

/// Solves `(K^T K + lambda I) alpha = K^T y` through the SVD of `K`, which
/// avoids squaring the condition number. With `lambda = 0` and a
/// rank-deficient `K` this is the minimum-norm solution.
pub fn solve_rrls_direct(p: &RrlsProblem) -> Result<Vec<f64>> {
    p.validate()?;
    let svd = p.k.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let tol = p.n().max(p.m()) as f64 * f64::EPSILON * s.max();
    let uty = u.tr_mul(&Vector::from_column_slice(&p.y));
    let scaled = Vector::from_fn(s.len(), |i, _| {
        let si = s[i];
        if p.lambda == 0.0 && si <= tol {
            0.0
        } else {
            si / (si * si + p.lambda) * uty[i]
        }
    });
    let alpha = vt.tr_mul(&scaled);
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("direct solution"));
    }
    Ok(alpha.iter().copied().collect())
}

/// Centralized CG on `(K^T K + lambda I) alpha = K^T y` from `alpha0`.
///
/// Stops when the residual squared sum drops below `toll` or after
/// `max_epochs` updates; non-convergence is reported in the trace.
pub fn solve_rrls_cg(p: &RrlsProblem, alpha0: &[f64], toll: f64, max_epochs: usize) -> Result<(Vec<f64>, CgTrace)> {
    p.validate()?;
    if !(toll > 0.0) {
        return Err(Error::InvalidSpec(format!("toll must be positive, got {toll}")));
    }
    if alpha0.len() != p.m() {
        return Err(Error::DimensionMismatch(format!("alpha0 has {} entries, expected {}", alpha0.len(), p.m())));
    }
    let kt = row_major(&p.k);
    let g = exact_gradient(&kt, alpha0, &p.y, p.lambda);
    let mut state = CgState::from_gradient(alpha0.to_vec(), g);
    let mut trace = CgTrace { records: vec![state.initial_record()], ..CgTrace::default() };
    trace.converged = state.converged(toll);
    while !trace.converged && state.epoch < max_epochs {
        let acc = ktkp_partial(&kt, &state.p, p.lambda, 1.0);
        let pktkp = scalar_with(&state.p, &acc).round();
        let ktkp = exact::round_all(&acc);
        let rec = state.apply(&ktkp, pktkp, toll)?;
        trace.records.push(rec);
        trace.converged = state.converged(toll);
    }
    trace.stop_epoch = state.epoch;
    Ok((state.alpha, trace))
}

/// Plain CG on the full `n x n` KRLS system `(K + lambda I) alpha = y`.
pub fn solve_krls_cg(k: &Matrix, y: &[f64], lambda: f64, toll: f64, max_epochs: usize) -> Result<(Vec<f64>, CgTrace)> {
    let n = k.nrows();
    if k.ncols() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!("kernel {:?}, labels {}", k.shape(), y.len())));
    }
    let a = k + Matrix::identity(n, n) * lambda;
    let mut x = Vector::zeros(n);
    let mut r = Vector::from_column_slice(y);
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut trace = CgTrace {
        records: vec![CgRecord { epoch: 0, residual_sq_sum: rr, step: None, beta: None }],
        ..CgTrace::default()
    };
    let mut epoch = 0;
    trace.converged = rr < toll;
    while !trace.converged && epoch < max_epochs {
        epoch += 1;
        let ap = &a * &p;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::IndefiniteSystem { epoch, value: pap });
        }
        let step = rr / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_new = r.norm_squared();
        if !rr_new.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        trace.converged = rr_new < toll;
        let beta = (!trace.converged).then(|| rr_new / rr);
        if let Some(b) = beta {
            p = &r + &p * b;
        }
        rr = rr_new;
        trace.records.push(CgRecord { epoch, residual_sq_sum: rr, step: Some(step), beta });
    }
    trace.stop_epoch = epoch;
    Ok((x.iter().copied().collect(), trace))
}
