use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use qsurrogate::basis::{sample_weights, svd_of, svd_thin, Truncation, WeightBounds};
use qsurrogate::ingest::{build_suite, GroundMotionRecord};
use qsurrogate::linalg::Matrix;
use qsurrogate::pipeline::synthetic::{synthetic_suite, BUNDLED_SEED, BUNDLED_SIZE};
use qsurrogate::seeds::{stream_rng, Namespace};
use rand::Rng;

fn random_matrix(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = stream_rng(seed, Namespace::Test, 0);
    Matrix::from_col_major(n, m, (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn to_na(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(a.rows(), a.cols(), a.as_col_major())
}

fn rel_frob(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).frobenius_norm() / a.frobenius_norm()
}

#[test]
fn random_50x6_matches_independent_decompositions() {
    let a = random_matrix(50, 6, 11);
    let b = svd_of(&a, 0.02).unwrap();
    assert!(rel_frob(&a, &b.u.matmul(&b.sigma)) <= 1e-10);

    let na = to_na(&a);
    let gram_eig = SymmetricEigen::new(na.transpose() * &na);
    let mut from_gram: Vec<f64> = gram_eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    from_gram.sort_by(|x, y| y.total_cmp(x));
    let direct = na.clone().svd(false, false).singular_values;
    for i in 0..6 {
        assert!((b.singular_values[i] - from_gram[i]).abs() <= 1e-10 * from_gram[0]);
        assert!((b.singular_values[i] - direct[i]).abs() <= 1e-12 * direct[0]);
    }
}

#[test]
fn projection_of_a_residual_is_zero() {
    let a = random_matrix(60, 5, 3);
    let b = svd_of(&a, 0.02).unwrap();
    let x: Vec<f64> = random_matrix(60, 1, 4).into_col_major();
    // r = x − U Uᵀ x, formed directly
    let coeffs = b.u.tr_mul_vec(&x);
    let proj = b.u.mul_vec(&coeffs);
    let r: Vec<f64> = x.iter().zip(&proj).map(|(a, b)| a - b).collect();
    let rec = GroundMotionRecord::new("r", 0.02, r, Default::default()).unwrap();
    let w = b.project(&rec).unwrap();
    assert!(w.w.iter().all(|v| v.abs() <= 1e-10), "{:?}", w.w);
}

#[test]
fn synthetic_suite_full_rank_fidelity() {
    let recs = synthetic_suite(BUNDLED_SEED, BUNDLED_SIZE).unwrap();
    let suite = build_suite(&recs, 0.02, 89.98).unwrap();
    assert_eq!((suite.n_steps, suite.n_records()), (4500, 20));
    let b = svd_thin(&suite).unwrap();
    assert!(rel_frob(&suite.data, &b.u.matmul(&b.sigma)) <= 1e-9);
    for j in 0..suite.n_records() {
        let rec = suite.record(j);
        let back = b.reconstruct(&b.project(&rec).unwrap(), "back").unwrap();
        let err: f64 = rec.accel.iter().zip(&back.accel).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = rec.accel.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(err <= 1e-9 * norm);
    }
}

#[test]
fn uniform_sampling_law_of_large_numbers() {
    let bounds = WeightBounds::new(vec![0.0], vec![1.0]).unwrap();
    let a = random_matrix(10, 1, 1);
    let basis = svd_of(&a, 0.02).unwrap();
    let mut rng = stream_rng(5, Namespace::Test, 1);
    let xs: Vec<f64> = (0..100_000).map(|_| sample_weights(&basis, &bounds, &mut rng).w[0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.01);
    assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn orthonormal_after_any_truncation(seed in 0u64..10_000, m in 2usize..9, p in 1usize..9) {
        let a = random_matrix(40, m, seed);
        let b = svd_of(&a, 0.02).unwrap().truncate(Truncation::Rank(p.min(m))).unwrap();
        let utu = b.u.transpose().matmul(&b.u);
        prop_assert!(utu.sub(&Matrix::identity(b.p())).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn eckart_young_identity(seed in 0u64..10_000, m in 2usize..9, p in 1usize..9) {
        let a = random_matrix(40, m, seed);
        let full = svd_of(&a, 0.02).unwrap();
        let p = p.min(m);
        let t = full.truncate(Truncation::Rank(p)).unwrap();
        let resid = a.sub(&t.u.matmul(&t.sigma)).frobenius_norm().powi(2);
        let tail: f64 = full.singular_values[p..].iter().map(|s| s * s).sum();
        let total: f64 = full.singular_values.iter().map(|s| s * s).sum();
        prop_assert!((resid - tail).abs() <= 1e-8 * total, "{} vs {}", resid, tail);
    }

    #[test]
    fn projection_is_non_expansive(seed in 0u64..10_000, xseed in 0u64..10_000) {
        let b = svd_of(&random_matrix(30, 4, seed), 0.02).unwrap();
        let x = random_matrix(30, 1, xseed).into_col_major();
        let w = b.u.tr_mul_vec(&x);
        let nw: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(nw <= nx * (1.0 + 1e-12));
    }

    #[test]
    fn decomposition_is_deterministic(seed in 0u64..10_000) {
        let a = random_matrix(30, 5, seed);
        prop_assert_eq!(svd_of(&a, 0.02).unwrap(), svd_of(&a, 0.02).unwrap());
    }

    #[test]
    fn weight_roundtrip(seed in 0u64..10_000) {
        let b = svd_of(&random_matrix(30, 5, seed), 0.02).unwrap();
        let w0: Vec<f64> = (0..b.p()).map(|i| (i as f64 + 1.0) * 0.3 - 0.7).collect();
        let rec = b.reconstruct_raw(&w0, "x").unwrap();
        let w = b.project(&rec).unwrap();
        for (x, y) in w.w.iter().zip(&w0) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn explained_variance_is_monotone_and_normalized(seed in 0u64..10_000, m in 1usize..9) {
        let ev = svd_of(&random_matrix(20, m, seed), 0.02).unwrap().explained_variance().unwrap();
        prop_assert!((ev.cumulative.last().unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!(ev.cumulative.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(ev.per_vector.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        prop_assert!(ev.per_vector.iter().all(|v| *v >= 0.0));
    }
}
