//! Coordinate descent on the squared-distance stress over observed entries.

use std::time::Instant;

use super::edm::{classical_mds, squared_distances, CompletionResult, EdmInstance};
use crate::Matrix;

/// Embeds all points in `R^d` by classical scaling of the column-mean fill,
/// then updates one coordinate at a time by exactly minimizing the quartic
/// stress along it. A sweep visits every coordinate once; the run stops after
/// `max_sweeps` or when the relative stress change drops below `tol`.
pub fn alternating_descent(inst: &EdmInstance, max_sweeps: usize, tol: f64) -> CompletionResult {
    let t0 = Instant::now();
    let size = inst.size();
    let mut p = classical_mds(&inst.initial_fill(), inst.embed_dim);
    let mut prev = stress(inst, &p);
    let mut sweeps = 0;
    let mut dist = vec![0.0; size];
    let mut peers: Vec<usize> = Vec::with_capacity(size);
    while sweeps < max_sweeps && prev > 0.0 {
        sweeps += 1;
        for i in 0..size {
            peers.clear();
            peers.extend((0..size).filter(|&j| j != i && inst.mask[(i, j)]));
            if peers.is_empty() {
                continue;
            }
            for &j in &peers {
                dist[j] = (0..inst.embed_dim).map(|k| (p[(i, k)] - p[(j, k)]).powi(2)).sum();
            }
            for k in 0..inst.embed_dim {
                // f(t) = sum_j (b_j + 2 a_j t + t^2)^2
                let (mut sa, mut sa2b, mut sab) = (0.0, 0.0, 0.0);
                for &j in &peers {
                    let a = p[(i, k)] - p[(j, k)];
                    let b = dist[j] - inst.d[(i, j)];
                    sa += a;
                    sa2b += 2.0 * a * a + b;
                    sab += a * b;
                }
                let n = peers.len() as f64;
                let t = best_root(n, 3.0 * sa, sa2b, sab, |t| {
                    peers
                        .iter()
                        .map(|&j| {
                            let a = p[(i, k)] - p[(j, k)];
                            (dist[j] - inst.d[(i, j)] + 2.0 * a * t + t * t).powi(2)
                        })
                        .sum()
                });
                if t != 0.0 {
                    for &j in &peers {
                        let a = p[(i, k)] - p[(j, k)];
                        dist[j] += 2.0 * a * t + t * t;
                    }
                    p[(i, k)] += t;
                }
            }
        }
        let cur = stress(inst, &p);
        let change = (prev - cur).abs() / prev.max(f64::MIN_POSITIVE);
        prev = cur;
        if change < tol {
            break;
        }
    }
    inst.result(squared_distances(&p), sweeps, t0.elapsed())
}

fn stress(inst: &EdmInstance, p: &Matrix) -> f64 {
    let d = squared_distances(p);
    let mut s = 0.0;
    for i in 0..inst.size() {
        for j in 0..i {
            if inst.mask[(i, j)] {
                s += (d[(i, j)] - inst.d[(i, j)]).powi(2);
            }
        }
    }
    s
}

/// Real root of `a t^3 + b t^2 + c t + d` with the smallest `f`; zero is
/// always a candidate so a step never increases `f`.
fn best_root(a: f64, b: f64, c: f64, d: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f(0.0), 0.0);
    for t in cubic_roots(a, b, c, d) {
        let v = f(t);
        if v.is_finite() && v < best.0 {
            best = (v, t);
        }
    }
    best.1
}

/// Real roots of a cubic with `a != 0`, polished by Newton steps.
pub(crate) fn cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let (b, c, d) = (b / a, c / a, d / a);
    // t = s - b/3 gives s^3 + p s + q = 0
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let sq = disc.sqrt();
        vec![(-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt() + shift]
    } else if p == 0.0 {
        vec![shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let phi = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift)
            .collect()
    };
    for t in &mut roots {
        for _ in 0..3 {
            let fv = ((*t + b) * *t + c) * *t + d;
            let dv = (3.0 * *t + 2.0 * b) * *t + c;
            if dv == 0.0 {
                break;
            }
            let next = *t - fv / dv;
            if !next.is_finite() {
                break;
            }
            *t = next;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::edm::assemble_edm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cubic_known_roots() {
        let mut r = cubic_roots(1.0, -6.0, 11.0, -6.0);
        r.sort_by(f64::total_cmp);
        for (got, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let r = cubic_roots(2.0, 0.0, 2.0, 0.0);
        assert_eq!(r.len(), 1);
        assert!(r[0].abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn cubic_roots_are_roots(r1 in -5.0f64..5.0, r2 in -5.0f64..5.0, r3 in -5.0f64..5.0, a in 0.5f64..10.0) {
            let (b, c, d) = (-a * (r1 + r2 + r3), a * (r1 * r2 + r1 * r3 + r2 * r3), -a * r1 * r2 * r3);
            for t in cubic_roots(a, b, c, d) {
                let v = ((a * t + b) * t + c) * t + d;
                prop_assert!(v.abs() < 1e-6 * (1.0 + a * 125.0));
            }
        }
    }

    #[test]
    fn zero_sweeps_returns_scaling_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Matrix::from_fn(5, 2, |_, _| rng.random::<f64>());
        let w = Matrix::from_fn(3, 2, |_, _| rng.random::<f64>());
        let inst = assemble_edm(&x, &w).unwrap();
        let r = alternating_descent(&inst, 0, 1e-8);
        assert_eq!(r.iterations, 0);
        let init = squared_distances(&classical_mds(&inst.initial_fill(), 2));
        assert_eq!(r.d_hat, init);
    }

    #[test]
    fn stress_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::from_fn(8, 3, |_, _| rng.random::<f64>());
        let w = Matrix::from_fn(5, 3, |_, _| rng.random::<f64>());
        let inst = assemble_edm(&x, &w).unwrap();
        let mut last = f64::INFINITY;
        for sweeps in 0..6 {
            let r = alternating_descent(&inst, sweeps, 0.0);
            let s: f64 = (0..inst.size())
                .flat_map(|i| (0..i).map(move |j| (i, j)))
                .filter(|&(i, j)| inst.mask[(i, j)])
                .map(|(i, j)| (r.d_hat[(i, j)] - inst.d[(i, j)]).powi(2))
                .sum();
            assert!(s <= last * (1.0 + 1e-12) + 1e-15);
            last = s;
        }
    }
}
