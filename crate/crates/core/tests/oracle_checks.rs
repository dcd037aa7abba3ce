//! Cross-checks of the structured linear algebra and the analytic market
//! quantities against independent dense or quadrature references.

mod common;

use ndarray::Array2;

use asianqmc::gauss::norm_cdf;
use asianqmc::kronlin::{
    block_cholesky, boomerang_cholesky, boomerang_cholesky_inverse, boomerang_inverse,
    boomerang_trace_product, build_boomerang, cholesky_lower, kpa_fit, kron, kron_eigen,
    kron_eigen_pairs, lower_triangular_inverse, sym_eigen, BlockCovariance, CovarianceKind,
};
use asianqmc::market::{covariance_blocks, MarketSpec, TimeGrid, VolatilityModel};
use asianqmc::pathgen::{generator_cholesky, generator_kpa, generator_pca, GeneratingMatrix};

use common::{
    adaptive_simpson, brute_force_kron_fit, max_abs_gap, oracle_inverse_normal, oracle_norm_cdf,
    random_matrix, random_spd, relative_frobenius_gap, seeded_rng, two_asset_market,
};

fn dense_product(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    ndarray::linalg::general_mat_mul(1.0, a, b, 0.0, &mut out);
    out
}

fn gram(matrix: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((matrix.nrows(), matrix.nrows()));
    ndarray::linalg::general_mat_mul(1.0, matrix, &matrix.t(), 0.0, &mut out);
    out
}

/// Random blocks Sigma(t_1) .. Sigma(t_N) that grow like a genuine
/// cumulative covariance: each block adds an SPD increment to the previous.
fn random_cumulative_blocks(seed: u64, assets: usize, steps: usize) -> BlockCovariance {
    let mut rng = seeded_rng(seed);
    let mut running = Array2::zeros((assets, assets));
    let mut blocks = Vec::with_capacity(steps);
    for _ in 0..steps {
        let increment = random_spd(&mut rng, assets);
        running = &running + &increment;
        blocks.push(running.clone());
    }
    BlockCovariance::new(blocks, CovarianceKind::TimeDependent).unwrap()
}

#[test]
fn oracle_cdf_agrees_with_library_cdf() {
    let mut worst_central = 0.0_f64;
    let mut worst_tail = 0.0_f64;
    for step in -3600..=3600 {
        let x = step as f64 * 0.01;
        let ours = norm_cdf(x);
        let reference = oracle_norm_cdf(x);
        if x.abs() <= 2.0 {
            worst_central = worst_central.max((ours - reference).abs());
        } else {
            let tail = reference.min(1.0 - reference);
            worst_tail = worst_tail.max((ours - reference).abs() / tail);
        }
    }
    assert!(worst_central < 1e-14, "central gap {worst_central:.3e}");
    assert!(worst_tail < 5e-13, "relative tail gap {worst_tail:.3e}");
}

#[test]
fn oracle_inverse_round_trips_through_oracle_cdf() {
    for step in 1..2000 {
        let u = step as f64 / 2000.0;
        let x = oracle_inverse_normal(u);
        let back = oracle_norm_cdf(x);
        assert!((back - u).abs() < 1e-13, "u {u}: round trip {back}");
    }
    for exponent in 2..=9 {
        let u = 10f64.powi(-exponent);
        for probe in [u, 1.0 - u] {
            let back = oracle_norm_cdf(oracle_inverse_normal(probe));
            let scale = probe.min(1.0 - probe);
            assert!(
                ((back - probe) / scale).abs() < 1e-11,
                "tail probe {probe:e}: round trip {back:e}"
            );
        }
    }
}

#[test]
fn integrated_vol_products_match_adaptive_quadrature() {
    let decay = VolatilityModel::ExpDecay {
        sigma_decay: vec![0.21, 0.05, 0.33],
        sigma_inf: vec![0.09, 0.12, 0.07],
        tau: vec![1.5, 0.4, 3.7],
    };
    for i in 0..3 {
        for k in 0..3 {
            for &t in &[0.08, 0.5, 1.0, 2.5] {
                let closed = decay.integrated_pair(i, k, t);
                let quadrature =
                    adaptive_simpson(&|s| decay.value(i, s) * decay.value(k, s), 0.0, t);
                assert!(
                    ((closed - quadrature) / quadrature).abs() < 1e-12,
                    "pair ({i}, {k}) at t {t}: closed {closed}, quadrature {quadrature}"
                );
            }
        }
    }

    let flat = VolatilityModel::Constant { sigma: vec![0.3, 0.4] };
    let closed = flat.integrated_pair(0, 1, 0.7);
    assert!((closed - 0.3 * 0.4 * 0.7).abs() < 1e-15);
}

#[test]
fn boomerang_forms_match_dense_linear_algebra() {
    for steps in [1usize, 2, 3, 7, 12] {
        let grid = TimeGrid::equally_spaced(steps, 1.3).unwrap();
        let boomerang = build_boomerang(&grid);
        let dense = boomerang.dense();
        for l in 0..steps {
            for j in 0..steps {
                let expected = grid.times()[l.min(j)];
                assert!((dense[[l, j]] - expected).abs() < 1e-15);
            }
        }

        let chol = boomerang_cholesky(&grid);
        assert!(max_abs_gap(&chol, &cholesky_lower(&dense).unwrap()) < 1e-10);

        let chol_inv = boomerang_cholesky_inverse(&grid);
        assert!(max_abs_gap(&chol_inv, &lower_triangular_inverse(&chol).unwrap()) < 1e-10);

        let inverse = boomerang_inverse(&grid);
        let product = dense_product(&dense, &inverse);
        let identity = Array2::eye(steps);
        assert!(max_abs_gap(&product, &identity) < 1e-9);
    }
}

#[test]
fn boomerang_trace_product_matches_dense_trace() {
    let a = [0.2, 0.5, 0.9, 1.4, 2.0];
    let b = [0.1, 0.3, 1.1, 1.15, 3.0];
    let n = a.len();
    let mut dense_trace = 0.0;
    for l in 0..n {
        for j in 0..n {
            dense_trace += a[l.min(j)] * b[l.min(j)];
        }
    }
    let fast = boomerang_trace_product(&a, &b);
    assert!(((fast - dense_trace) / dense_trace).abs() < 1e-13, "fast {fast}, dense {dense_trace}");
}

#[test]
fn block_cholesky_matches_dense_factorization() {
    for (seed, assets, steps) in [(11u64, 1usize, 6usize), (12, 2, 4), (13, 4, 10)] {
        let cov = random_cumulative_blocks(seed, assets, steps);
        let blockwise = block_cholesky(&cov).unwrap().assemble();
        let dense = cholesky_lower(&cov.assemble()).unwrap();
        let gap = max_abs_gap(&blockwise, &dense);
        assert!(gap < 1e-10, "assets {assets}, steps {steps}: gap {gap:.3e}");
    }
}

#[test]
fn kpa_fit_matches_entrywise_least_squares() {
    for (seed, assets, steps) in [(21u64, 2usize, 3usize), (22, 3, 5)] {
        let cov = random_cumulative_blocks(seed, assets, steps);
        let grid = TimeGrid::equally_spaced(steps, 2.0).unwrap();
        let fitted = kpa_fit(&cov, &grid).unwrap();
        let reference =
            brute_force_kron_fit(&cov.assemble(), &build_boomerang(&grid).dense(), assets);
        let gap = max_abs_gap(&fitted, &reference);
        assert!(gap < 1e-10, "assets {assets}, steps {steps}: gap {gap:.3e}");
    }
}

#[test]
fn kron_eigen_matches_dense_eigendecomposition() {
    let mut rng = seeded_rng(31);
    let a = random_spd(&mut rng, 3);
    let b = random_spd(&mut rng, 4);
    let product = kron(&a, &b);

    let combined = kron_eigen(&sym_eigen(&a).unwrap(), &sym_eigen(&b).unwrap());
    let dense = sym_eigen(&product).unwrap();

    for (left, right) in combined.values.iter().zip(dense.values.iter()) {
        assert!((left - right).abs() < 1e-10, "eigenvalue gap {left} vs {right}");
    }
    assert!(max_abs_gap(&combined.reconstruct(), &product) < 1e-9);
}

#[test]
fn kron_eigen_pairs_are_eigenpairs_of_the_product() {
    let mut rng = seeded_rng(32);
    let a = random_spd(&mut rng, 3);
    let b = random_spd(&mut rng, 3);
    let product = kron(&a, &b);
    let eig_a = sym_eigen(&a).unwrap();
    let eig_b = sym_eigen(&b).unwrap();
    let pairs = kron_eigen_pairs(&eig_a, &eig_b);
    assert_eq!(pairs.len(), 9);
    let mut previous = f64::INFINITY;
    for &(value, i, j) in &pairs {
        assert!(value <= previous + 1e-12, "pairs must come sorted descending");
        previous = value;
        assert!((value - eig_a.values[i] * eig_b.values[j]).abs() < 1e-10);
        let mut vector = Array2::zeros((9, 1));
        for row_a in 0..3 {
            for row_b in 0..3 {
                vector[[row_a * 3 + row_b, 0]] =
                    eig_a.vectors[[row_a, i]] * eig_b.vectors[[row_b, j]];
            }
        }
        let mapped = dense_product(&product, &vector);
        for row in 0..9 {
            assert!(
                (mapped[[row, 0]] - value * vector[[row, 0]]).abs() < 1e-10,
                "eigen equation fails at row {row}"
            );
        }
    }
}

#[test]
fn kronecker_product_and_transpose_identities_hold() {
    let mut rng = seeded_rng(41);
    let a = random_matrix(&mut rng, 2, 3);
    let b = random_matrix(&mut rng, 3, 2);
    let c = random_matrix(&mut rng, 3, 2);
    let d = random_matrix(&mut rng, 2, 3);

    let mixed = dense_product(&kron(&a, &c), &kron(&b, &d));
    let direct = kron(&dense_product(&a, &b), &dense_product(&c, &d));
    assert!(max_abs_gap(&mixed, &direct) < 1e-12);

    let transposed = kron(&a, &c).t().to_owned();
    let swapped = kron(&a.t().to_owned(), &c.t().to_owned());
    assert!(max_abs_gap(&transposed, &swapped) < 1e-15);
}

#[test]
fn kronecker_inverse_factorizes() {
    let mut rng = seeded_rng(42);
    let a = cholesky_lower(&random_spd(&mut rng, 3)).unwrap();
    let b = cholesky_lower(&random_spd(&mut rng, 4)).unwrap();
    let product_inverse = lower_triangular_inverse(&kron(&a, &b)).unwrap();
    let factored = kron(
        &lower_triangular_inverse(&a).unwrap(),
        &lower_triangular_inverse(&b).unwrap(),
    );
    assert!(max_abs_gap(&product_inverse, &factored) < 1e-10);
}

#[test]
fn kronecker_trace_factorizes() {
    let mut rng = seeded_rng(43);
    let a = random_matrix(&mut rng, 4, 4);
    let b = random_matrix(&mut rng, 5, 5);
    let trace = |m: &Array2<f64>| (0..m.nrows()).map(|i| m[[i, i]]).sum::<f64>();
    let product_trace = trace(&kron(&a, &b));
    assert!((product_trace - trace(&a) * trace(&b)).abs() < 1e-12);
}

#[test]
fn kronecker_cholesky_factorizes_blockwise() {
    let mut rng = seeded_rng(44);
    let a = random_spd(&mut rng, 3);
    let b = random_spd(&mut rng, 4);
    let product_factor = cholesky_lower(&kron(&a, &b)).unwrap();
    let factored = kron(&cholesky_lower(&a).unwrap(), &cholesky_lower(&b).unwrap());
    assert!(max_abs_gap(&product_factor, &factored) < 1e-10);
}

fn check_full_width_factorization(generator: &GeneratingMatrix, cov: &BlockCovariance) {
    let gap = relative_frobenius_gap(&cov.assemble(), &gram(generator.matrix()));
    assert!(
        gap < 1e-9,
        "{} generator misses the covariance by {gap:.3e}",
        generator.method()
    );
}

#[test]
fn untruncated_generators_reproduce_constant_vol_covariance() {
    let (spec, grid) = two_asset_market(0.4);
    let cov = covariance_blocks(&spec, &grid).unwrap();
    check_full_width_factorization(&generator_cholesky(&cov).unwrap(), &cov);
    check_full_width_factorization(&generator_pca(&cov, &grid).unwrap(), &cov);
    check_full_width_factorization(&generator_kpa(&cov, &grid).unwrap(), &cov);
}

#[test]
fn untruncated_generators_reproduce_time_dependent_covariance() {
    let spec = MarketSpec {
        spots: vec![100.0; 3],
        rate: 0.04,
        correlation: MarketSpec::uniform_correlation(3, 0.4),
        vol: VolatilityModel::ExpDecay {
            sigma_decay: vec![0.21, 0.14, 0.33],
            sigma_inf: vec![0.09; 3],
            tau: vec![1.5; 3],
        },
        weights: MarketSpec::equal_weights(3, 8),
    };
    let grid = TimeGrid::equally_spaced(8, 1.0).unwrap();
    let cov = covariance_blocks(&spec, &grid).unwrap();
    assert!(matches!(cov.kind(), CovarianceKind::TimeDependent));
    check_full_width_factorization(&generator_cholesky(&cov).unwrap(), &cov);
    check_full_width_factorization(&generator_pca(&cov, &grid).unwrap(), &cov);
    check_full_width_factorization(&generator_kpa(&cov, &grid).unwrap(), &cov);
}
