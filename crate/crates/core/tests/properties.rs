//! Randomized invariants over the numeric kernels.

use proptest::prelude::*;

use rankscope::geometry::{anisotropy, anisotropy_naive};
use rankscope::matrix::DenseMatrix;
use rankscope::ngram::{build_context_matrix, count_ngrams, TokenStream};
use rankscope::scaling::{scaling_loss, ScalingLawParams};
use rankscope::spectral::w_error_curve;
use rankscope::svd::svd_dense;

fn dense(rows: usize, cols: usize, data: Vec<f64>) -> DenseMatrix {
    DenseMatrix::new(rows, cols, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_conserves_energy(
        rows in 1usize..12,
        cols in 1usize..12,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let m = dense(rows, cols, data);
        let svd = svd_dense(&m, true).unwrap();
        // Descending, non-negative spectrum.
        for pair in svd.singular_values.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
        prop_assert!(svd.singular_values.iter().all(|s| *s >= 0.0));
        // Energy: sum of squared singular values equals the squared norm.
        let energy: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let fro2 = m.frobenius_norm().powi(2);
        prop_assert!((energy - fro2).abs() <= 1e-9 * fro2.max(1.0));
        // Factors reproduce the matrix.
        let rec = svd.reconstruct().unwrap();
        let mut err = 0.0;
        for (a, b) in m.data.iter().zip(&rec.data) {
            err += (a - b) * (a - b);
        }
        prop_assert!(err.sqrt() <= 1e-8 * m.frobenius_norm().max(1.0));
    }

    #[test]
    fn anisotropy_bounded_and_matches_naive(
        n in 2usize..40,
        d in 1usize..8,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Keep entries away from zero norm by adding a fixed offset column.
        let data: Vec<f64> = (0..n * d)
            .map(|i| rng.gen_range(-2.0..2.0) + if i % d == 0 { 3.0 } else { 0.0 })
            .collect();
        let m = dense(n, d, data);
        let fast = anisotropy(&m).unwrap();
        let naive = anisotropy_naive(&m).unwrap();
        prop_assert!((fast - naive).abs() < 1e-10);
        prop_assert!(fast >= -1.0 - 1e-12 && fast <= 1.0 + 1e-12);
    }

    #[test]
    fn context_matrix_rows_are_stochastic(
        seed in 0u64..500,
        vocab in 2u32..20,
        order in 2usize..5,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let docs: Vec<Vec<u32>> = (0..4)
            .map(|_| (0..rng.gen_range(order..40)).map(|_| rng.gen_range(0..vocab)).collect())
            .collect();
        let ts = TokenStream::new(docs, vocab).unwrap();
        let counts = count_ngrams(&ts, order).unwrap();
        if counts.total_ngrams() == 0 {
            return Ok(());
        }
        let m1 = build_context_matrix(&counts, 1).unwrap();
        for i in 0..m1.matrix.rows {
            prop_assert!((m1.matrix.row_sum(i) - 1.0).abs() < 1e-12);
        }
        // Raising the threshold never adds rows.
        if let Ok(m2) = build_context_matrix(&counts, 2) {
            prop_assert!(m2.matrix.rows <= m1.matrix.rows);
        }
    }

    #[test]
    fn w_error_is_monotone_and_anchored(seed in 0u64..1000, k in 1usize..30) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut sigma: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..4.0)).collect();
        sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let fro = sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
        if fro <= 0.0 {
            return Ok(());
        }
        let curve = w_error_curve(&sigma, fro, false).unwrap();
        prop_assert!((curve[0].value - 1.0).abs() < 1e-12);
        prop_assert!(curve[k].value.abs() < 1e-9);
        for pair in curve.windows(2) {
            prop_assert!(pair[1].value <= pair[0].value + 1e-12);
        }
    }

    #[test]
    fn scaling_loss_decreases_in_budget(
        n in 1.0f64..1e9,
        t in 1.0f64..1e12,
        factor in 1.01f64..100.0,
    ) {
        let p = ScalingLawParams { a: 119.09, alpha: 0.246, b: 410.7, beta: 0.28, e: 1.69 };
        let base = scaling_loss(&p, n, t).unwrap();
        prop_assert!(scaling_loss(&p, n * factor, t).unwrap() < base);
        prop_assert!(scaling_loss(&p, n, t * factor).unwrap() < base);
        prop_assert!(base > p.e);
    }
}
