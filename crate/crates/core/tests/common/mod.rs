//! Shared helpers for the integration suites: independent, slower
//! reimplementations that pin the library's fast paths, plus the market
//! configurations the experiments run on.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use asianqmc::market::{MarketSpec, TimeGrid, VolatilityModel};

/// Normal density without any library shortcuts.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Lower tail P(Z <= -t) for t >= 0, accurate relative to the tail size.
///
/// Small t uses the odd Taylor series of the central integral, which has no
/// cancellation because the series sums the deviation from one half. Large t
/// uses the Mills-ratio continued fraction evaluated bottom-up, so the tail
/// keeps close to full relative precision instead of absolute precision.
fn lower_tail(t: f64) -> f64 {
    assert!(t >= 0.0);
    if t < 2.0 {
        let mut term = t;
        let mut sum = t;
        let mut k = 0u32;
        while term.abs() > 1e-20 * sum.abs().max(1.0) && k < 200 {
            k += 1;
            term *= t * t / (2 * k + 1) as f64;
            sum += term;
        }
        0.5 - phi(t) * sum
    } else {
        // Modified Lentz evaluation of t + K(k / t), the reciprocal Mills
        // ratio, stopping once the running product stabilizes.
        let mut f = t;
        let mut c = t;
        let mut d = 0.0;
        for k in 1..=400 {
            let a = k as f64;
            d = 1.0 / (t + a * d);
            c = t + a / c;
            let step = c * d;
            f *= step;
            if (step - 1.0).abs() < 1e-16 {
                break;
            }
        }
        phi(t) / f
    }
}

/// Standard normal distribution function, independent of the library's.
pub fn oracle_norm_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        lower_tail(-x)
    } else {
        1.0 - lower_tail(x)
    }
}

/// Inverts the oracle distribution function by bisection.
///
/// Arguments above one half are reflected through the exact complement
/// 1 - u, so both tails are resolved against the relatively-accurate tail
/// formula rather than against cancellation noise near one.
pub fn oracle_inverse_normal(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0);
    let (sign, p) = if u <= 0.5 { (-1.0, u) } else { (1.0, 1.0 - u) };
    let mut low = 0.0_f64;
    let mut high = 40.0_f64;
    for _ in 0..70 {
        let mid = 0.5 * (low + high);
        if lower_tail(mid) > p {
            low = mid;
        } else {
            high = mid;
        }
    }
    sign * 0.5 * (low + high)
}

/// Adaptive Simpson integration to near machine precision.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let gap = left + right - whole;
        if depth == 0 || gap.abs() <= 15.0 * tol {
            return left + right + gap / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, 1e-14 * (1.0 + whole.abs()), 40)
}

/// Least-squares Kronecker factor of a dense covariance against a dense left
/// factor, entry by entry from the normal equations.
pub fn brute_force_kron_fit(
    dense: &Array2<f64>,
    left: &Array2<f64>,
    assets: usize,
) -> Array2<f64> {
    let steps = left.nrows();
    assert_eq!(dense.nrows(), assets * steps);
    let weight: f64 = left.iter().map(|value| value * value).sum();
    let mut fitted = Array2::zeros((assets, assets));
    for i in 0..assets {
        for k in 0..assets {
            let mut dot = 0.0;
            for l in 0..steps {
                for m in 0..steps {
                    dot += left[[l, m]] * dense[[l * assets + i, m * assets + k]];
                }
            }
            fitted[[i, k]] = dot / weight;
        }
    }
    fitted
}

/// Largest absolute entry difference.
pub fn max_abs_gap(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Frobenius distance relative to the Frobenius size of `a`.
pub fn relative_frobenius_gap(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let mut gap = 0.0;
    let mut size = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        gap += (x - y) * (x - y);
        size += x * x;
    }
    (gap / size).sqrt()
}

/// Dense matrix with independent entries uniform on [-1, 1).
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() * 2.0 - 1.0)
}

/// Well-conditioned symmetric positive definite matrix.
pub fn random_spd(rng: &mut ChaCha8Rng, size: usize) -> Array2<f64> {
    let seedling = random_matrix(rng, size, size);
    let mut spd = seedling.dot(&seedling.t());
    for index in 0..size {
        spd[[index, index]] += size as f64;
    }
    spd
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Volatilities spread evenly from 10% to 50% across ten assets.
pub fn even_vol_grid() -> Vec<f64> {
    (0..10).map(|i| 0.1 + (i as f64 / 9.0) * 0.4).collect()
}

/// Two assets, five dates, one year: the small pricing configuration.
pub fn two_asset_market(rho: f64) -> (MarketSpec, TimeGrid) {
    let spec = MarketSpec {
        spots: vec![100.0, 100.0],
        rate: 0.02,
        correlation: MarketSpec::uniform_correlation(2, rho),
        vol: VolatilityModel::Constant { sigma: vec![0.3, 0.4] },
        weights: MarketSpec::equal_weights(2, 5),
    };
    (spec, TimeGrid::equally_spaced(5, 1.0).unwrap())
}

/// Ten assets, 250 dates, constant volatilities: the 2500-dimensional case.
pub fn ten_asset_constant(rho: f64) -> (MarketSpec, TimeGrid) {
    let spec = MarketSpec {
        spots: vec![100.0; 10],
        rate: 0.04,
        correlation: MarketSpec::uniform_correlation(10, rho),
        vol: VolatilityModel::Constant { sigma: even_vol_grid() },
        weights: MarketSpec::equal_weights(10, 250),
    };
    (spec, TimeGrid::equally_spaced(250, 1.0).unwrap())
}

/// Ten assets, 250 dates, volatilities decaying toward a 9% floor.
pub fn ten_asset_decay(rho: f64) -> (MarketSpec, TimeGrid) {
    let spec = MarketSpec {
        spots: vec![100.0; 10],
        rate: 0.04,
        correlation: MarketSpec::uniform_correlation(10, rho),
        vol: VolatilityModel::ExpDecay {
            sigma_decay: even_vol_grid().iter().map(|total| total - 0.09).collect(),
            sigma_inf: vec![0.09; 10],
            tau: vec![1.5; 10],
        },
        weights: MarketSpec::equal_weights(10, 250),
    };
    (spec, TimeGrid::equally_spaced(250, 1.0).unwrap())
}
