//! Alternating projections between rank-limited matrices and matrices that
//! agree with the observed distances.

use std::time::Instant;

use super::edm::{enforce_edm, truncate_rank, CompletionResult, EdmInstance};

/// Starts from the column-mean fill, then repeatedly keeps the `d + 2`
/// eigenpairs of largest magnitude and puts the observed entries back.
/// Stops when the relative Frobenius change drops below `tol`.
pub fn rank_alternation(inst: &EdmInstance, max_iters: usize, tol: f64) -> CompletionResult {
    let t0 = Instant::now();
    let rank = (inst.embed_dim + 2).min(inst.size());
    let mut d = inst.initial_fill();
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        let mut next = truncate_rank(&d, rank);
        inst.restore_observed(&mut next);
        enforce_edm(&mut next);
        let change = (&next - &d).norm() / d.norm().max(f64::MIN_POSITIVE);
        d = next;
        if change < tol {
            break;
        }
    }
    inst.result(d, iters, t0.elapsed())
}
