use fedkrls::attacks::{
    alternating_descent, assemble_edm, leakage_report, rank_alternation, soft_impute, soft_impute_matrix, Algorithm,
    GammaSetting, LeakageConfig,
};
use fedkrls::attacks::soft_impute::penalty_path;
use fedkrls::{Matrix, Sampler};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    Matrix::from_fn(n, d, |_, _| rng.random::<f64>())
}

fn assert_edm(d: &Matrix) {
    assert_eq!(d, &d.transpose());
    assert!(d.diagonal().iter().all(|v| *v == 0.0));
    assert!(d.iter().all(|v| *v >= 0.0));
}

#[test]
fn collinear_points_with_themselves_as_landmarks() {
    let x = Matrix::from_column_slice(4, 1, &[0.0, 0.3, 1.1, 2.0]);
    let inst = assemble_edm(&x, &x).unwrap();
    let r = rank_alternation(&inst, 500, 1e-8);
    assert!(r.rel_error < 1e-3, "{}", r.rel_error);
}

#[test]
fn planted_points_recovered_by_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = cloud(&mut rng, 10, 3);
    let w = cloud(&mut rng, 6, 3);
    let r = alternating_descent(&assemble_edm(&x, &w).unwrap(), 50, 1e-12);
    assert!(r.rel_error < 1e-2, "{}", r.rel_error);
    assert_edm(&r.d_hat);
}

#[test]
fn trilateration_of_a_single_point() {
    let w = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let x = Matrix::from_row_slice(1, 2, &[0.3, 0.6]);
    let inst = assemble_edm(&x, &w).unwrap();
    let r = alternating_descent(&inst, 50, 1e-12);
    // Closed form from the three circle equations.
    let (d0, d1, d2) = (inst.d[(0, 1)], inst.d[(0, 2)], inst.d[(0, 3)]);
    let px = (d0 - d1 + 1.0) / 2.0;
    let py = (d0 - d2 + 1.0) / 2.0;
    assert!((px - 0.3).abs() < 1e-12 && (py - 0.6).abs() < 1e-12);
    assert!((&r.d_hat - &inst.d).amax() < 1e-6, "{}", (&r.d_hat - &inst.d).amax());
}

#[test]
fn trilateration_of_two_points() {
    let w = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let x = Matrix::from_row_slice(2, 2, &[0.3, 0.6, 0.8, 0.1]);
    let r = alternating_descent(&assemble_edm(&x, &w).unwrap(), 50, 1e-12);
    assert!(r.rel_error < 1e-6, "{}", r.rel_error);
}

#[test]
fn soft_impute_recovers_rank_two_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let a = cloud(&mut rng, 40, 2);
    let b = cloud(&mut rng, 40, 2);
    let m = &a * b.transpose();
    let mask = DMatrix::from_fn(40, 40, |_, _| rng.random::<f64>() < 0.5);
    let observed = m.zip_map(&mask, |v, o| if o { v } else { 0.0 });
    let start = observed.singular_values().max();
    let (z, _) = soft_impute_matrix(&observed, &mask, &penalty_path(start, 0.0), 5000, 1e-14, false);
    let hidden = |t: &Matrix| t.zip_map(&mask, |v, o| if o { 0.0 } else { v });
    let err = (hidden(&z) - hidden(&m)).norm() / hidden(&m).norm();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn soft_impute_exact_when_fully_observed() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let inst = assemble_edm(&cloud(&mut rng, 1, 2), &cloud(&mut rng, 5, 2)).unwrap();
    let r = soft_impute(&inst, 0.0, 500, 1e-8);
    assert_eq!(r.d_hat, inst.d);
    assert_eq!(r.rel_error, 0.0);
}

#[test]
fn more_landmarks_help_on_iris_like_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = cloud(&mut rng, 60, 4);
    let cfg = |m_grid| LeakageConfig {
        sampler: Sampler::N,
        m_grid,
        algorithms: vec![Algorithm::RankAlternation],
        seeds: vec![1],
        n_attack: 30,
        gamma: GammaSetting::Shared(0.25),
        tol: 1e-8,
    };
    let cells = leakage_report("synthetic", &x, &cfg(vec![5, 60])).unwrap();
    let (few, many) = (cells[0].outcome.rel_error().unwrap(), cells[1].outcome.rel_error().unwrap());
    assert!(few > many, "{few} vs {many}");
}

fn rotate(p: &Matrix, angle: f64, shift: (f64, f64)) -> Matrix {
    let (s, c) = angle.sin_cos();
    Matrix::from_fn(p.nrows(), 2, |i, k| {
        let (x, y) = (p[(i, 0)], p[(i, 1)]);
        if k == 0 {
            c * x - s * y + shift.0
        } else {
            s * x + c * y + shift.1
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn outputs_are_edms_and_keep_observed(seed in any::<u64>(), n in 2usize..8, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = assemble_edm(&cloud(&mut rng, n, 2), &cloud(&mut rng, m, 2)).unwrap();
        for r in [rank_alternation(&inst, 50, 1e-8), soft_impute(&inst, 0.0, 50, 1e-8), alternating_descent(&inst, 5, 1e-8)] {
            assert_edm(&r.d_hat);
            prop_assert!(r.rel_error.is_finite() && r.rel_error >= 0.0);
        }
        for r in [rank_alternation(&inst, 50, 1e-8), soft_impute(&inst, 0.0, 50, 1e-8)] {
            for i in 0..inst.size() {
                for j in 0..inst.size() {
                    if inst.mask[(i, j)] {
                        prop_assert_eq!(r.d_hat[(i, j)], inst.d[(i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn error_invariant_under_rigid_motion(seed in any::<u64>(), angle in 0.0f64..6.28, tx in -3.0f64..3.0, ty in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, w) = (cloud(&mut rng, 6, 2), cloud(&mut rng, 5, 2));
        let a = assemble_edm(&x, &w).unwrap();
        let b = assemble_edm(&rotate(&x, angle, (tx, ty)), &rotate(&w, angle, (tx, ty))).unwrap();
        for alg in Algorithm::ALL {
            let (ea, eb) = (alg.run(&a, 1e-8).rel_error, alg.run(&b, 1e-8).rel_error);
            prop_assert!((ea - eb).abs() < 1e-4 * (1.0 + ea), "{alg}: {ea} vs {eb}");
        }
    }
}
