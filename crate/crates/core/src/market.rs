//! Market model for the basket: time grid, volatility term structures, and
//! assembly of the block covariance and drift of the joint log-price vector.
//!
//! The joint vector stacks assets within each monitoring date, so entry
//! k = j * M + i (0-based) holds asset i at date t_{j+1}. With that layout
//! the MN x MN covariance is an N x N grid of M x M blocks where block (l, j)
//! equals the integrated asset covariance at t_min(l,j).

use ndarray::Array2;
use thiserror::Error;

use crate::kronlin::{BlockCovariance, CovarianceKind, NumericError};

/// Relative tolerance for the weight-sum and correlation-shape checks.
const VALIDATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("time grid must contain at least one date")]
    EmptyGrid,
    #[error("time grid must be strictly increasing and start above zero (index {index})")]
    GridNotIncreasing { index: usize },
    #[error("horizon must be positive and finite, got {horizon}")]
    BadHorizon { horizon: f64 },
    #[error("spot price {value} for asset {index} must be positive and finite")]
    BadSpot { index: usize, value: f64 },
    #[error("rate must be finite, got {rate}")]
    BadRate { rate: f64 },
    #[error("correlation matrix must be {expected}x{expected}, got {rows}x{cols}")]
    CorrelationShape { expected: usize, rows: usize, cols: usize },
    #[error("correlation diagonal entry {index} is {value}, expected 1")]
    CorrelationDiagonal { index: usize, value: f64 },
    #[error("correlation matrix is asymmetric (max deviation {max_dev:.3e})")]
    CorrelationAsymmetric { max_dev: f64 },
    #[error("correlation matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    CorrelationNotPsd { min_eig: f64 },
    #[error("volatility model covers {got} assets, expected {expected}")]
    VolatilityLength { expected: usize, got: usize },
    #[error("volatility parameter {name}[{index}] = {value} is out of range")]
    BadVolatility { name: &'static str, index: usize, value: f64 },
    #[error("weights must be {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    WeightShape { expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },
    #[error("weight for asset {asset} at date {date} must be positive")]
    WeightNotPositive { asset: usize, date: usize },
    #[error("weights must sum to 1, got {sum}")]
    WeightSum { sum: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Strictly increasing monitoring dates 0 < t_1 < ... < t_N.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, MarketError> {
        if times.is_empty() {
            return Err(MarketError::EmptyGrid);
        }
        let mut prev = 0.0;
        for (index, &t) in times.iter().enumerate() {
            if !t.is_finite() || t <= prev {
                return Err(MarketError::GridNotIncreasing { index });
            }
            prev = t;
        }
        Ok(Self { times })
    }

    /// Grid t_j = j * horizon / steps for j = 1..=steps.
    pub fn equally_spaced(steps: usize, horizon: f64) -> Result<Self, MarketError> {
        if steps == 0 {
            return Err(MarketError::EmptyGrid);
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(MarketError::BadHorizon { horizon });
        }
        let n = steps as f64;
        Self::new((1..=steps).map(|j| horizon * (j as f64 / n)).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Final date t_N.
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }

    /// Step t_j - t_{j-1} with t_0 = 0.
    pub fn step(&self, j: usize) -> f64 {
        if j == 0 {
            self.times[0]
        } else {
            self.times[j] - self.times[j - 1]
        }
    }
}

/// Deterministic per-asset volatility term structure.
#[derive(Debug, Clone)]
pub enum VolatilityModel {
    /// sigma_i(t) = sigma[i].
    Constant { sigma: Vec<f64> },
    /// sigma_i(t) = sigma_decay[i] * exp(-t / tau[i]) + sigma_inf[i].
    ExpDecay { sigma_decay: Vec<f64>, sigma_inf: Vec<f64>, tau: Vec<f64> },
}

impl VolatilityModel {
    pub fn asset_count(&self) -> usize {
        match self {
            VolatilityModel::Constant { sigma } => sigma.len(),
            VolatilityModel::ExpDecay { sigma_decay, .. } => sigma_decay.len(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, VolatilityModel::Constant { .. })
    }

    /// Spot volatility sigma_i(t).
    pub fn value(&self, asset: usize, t: f64) -> f64 {
        match self {
            VolatilityModel::Constant { sigma } => sigma[asset],
            VolatilityModel::ExpDecay { sigma_decay, sigma_inf, tau } => {
                sigma_decay[asset] * (-t / tau[asset]).exp() + sigma_inf[asset]
            }
        }
    }

    /// Integral of sigma_i(s) * sigma_k(s) over s in [0, t], in closed form.
    ///
    /// For the exponential-decay model the cross terms integrate the decaying
    /// factors against the constant levels, and the product of two decaying
    /// factors decays with the harmonic time scale tau_i tau_k / (tau_i + tau_k).
    pub fn integrated_pair(&self, i: usize, k: usize, t: f64) -> f64 {
        match self {
            VolatilityModel::Constant { sigma } => sigma[i] * sigma[k] * t,
            VolatilityModel::ExpDecay { sigma_decay, sigma_inf, tau } => {
                let (ai, ak) = (sigma_decay[i], sigma_decay[k]);
                let (bi, bk) = (sigma_inf[i], sigma_inf[k]);
                let (ti, tk) = (tau[i], tau[k]);
                let tik = ti * tk / (ti + tk);
                // exp_m1 keeps 1 - exp(-t/tau) accurate for large tau.
                let ramp = |scale: f64| -(-t / scale).exp_m1() * scale;
                ai * ak * ramp(tik) + ai * bk * ramp(ti) + ak * bi * ramp(tk) + bi * bk * t
            }
        }
    }

    fn validate(&self, expected: usize) -> Result<(), MarketError> {
        let check_nonneg = |name: &'static str, values: &[f64]| {
            for (index, &value) in values.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(MarketError::BadVolatility { name, index, value });
                }
            }
            Ok(())
        };
        match self {
            VolatilityModel::Constant { sigma } => {
                if sigma.len() != expected {
                    return Err(MarketError::VolatilityLength { expected, got: sigma.len() });
                }
                check_nonneg("sigma", sigma)
            }
            VolatilityModel::ExpDecay { sigma_decay, sigma_inf, tau } => {
                for values in [sigma_decay, sigma_inf, tau] {
                    if values.len() != expected {
                        return Err(MarketError::VolatilityLength { expected, got: values.len() });
                    }
                }
                check_nonneg("sigma_decay", sigma_decay)?;
                check_nonneg("sigma_inf", sigma_inf)?;
                for (index, &value) in tau.iter().enumerate() {
                    if !value.is_finite() || value <= 0.0 {
                        return Err(MarketError::BadVolatility { name: "tau", index, value });
                    }
                }
                Ok(())
            }
        }
    }
}

/// Basket of M lognormal assets under a constant risk-free rate.
#[derive(Debug, Clone)]
pub struct MarketSpec {
    pub spots: Vec<f64>,
    pub rate: f64,
    pub correlation: Array2<f64>,
    pub vol: VolatilityModel,
    /// Averaging weights, one row per asset and one column per date.
    pub weights: Array2<f64>,
}

impl MarketSpec {
    pub fn asset_count(&self) -> usize {
        self.spots.len()
    }

    /// Correlation matrix with a common off-diagonal value rho.
    pub fn uniform_correlation(assets: usize, rho: f64) -> Array2<f64> {
        Array2::from_shape_fn((assets, assets), |(i, k)| if i == k { 1.0 } else { rho })
    }

    /// Uniform weights 1 / (M * N).
    pub fn equal_weights(assets: usize, dates: usize) -> Array2<f64> {
        Array2::from_elem((assets, dates), 1.0 / (assets * dates) as f64)
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<(), MarketError> {
        let m = self.asset_count();
        let n = grid.len();
        for (index, &value) in self.spots.iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(MarketError::BadSpot { index, value });
            }
        }
        if !self.rate.is_finite() {
            return Err(MarketError::BadRate { rate: self.rate });
        }
        let (rows, cols) = self.correlation.dim();
        if rows != m || cols != m {
            return Err(MarketError::CorrelationShape { expected: m, rows, cols });
        }
        for i in 0..m {
            let value = self.correlation[[i, i]];
            if (value - 1.0).abs() > VALIDATION_TOL {
                return Err(MarketError::CorrelationDiagonal { index: i, value });
            }
        }
        let mut max_dev: f64 = 0.0;
        for i in 0..m {
            for k in (i + 1)..m {
                max_dev = max_dev.max((self.correlation[[i, k]] - self.correlation[[k, i]]).abs());
            }
        }
        if max_dev > VALIDATION_TOL {
            return Err(MarketError::CorrelationAsymmetric { max_dev });
        }
        let eig = crate::kronlin::sym_eigen(&self.correlation)?;
        let min_eig = *eig
            .values
            .last()
            .expect("correlation matrix has at least one eigenvalue");
        if min_eig < -1e-10 * eig.values[0].max(1.0) {
            return Err(MarketError::CorrelationNotPsd { min_eig });
        }
        self.vol.validate(m)?;
        let (wrows, wcols) = self.weights.dim();
        if wrows != m || wcols != n {
            return Err(MarketError::WeightShape {
                expected_rows: m,
                expected_cols: n,
                rows: wrows,
                cols: wcols,
            });
        }
        for i in 0..m {
            for j in 0..n {
                if !(self.weights[[i, j]] > 0.0) {
                    return Err(MarketError::WeightNotPositive { asset: i, date: j });
                }
            }
        }
        let sum = self.weights.sum();
        if (sum - 1.0).abs() > VALIDATION_TOL {
            return Err(MarketError::WeightSum { sum });
        }
        Ok(())
    }
}

/// Integrated covariance blocks Sigma(t_j) of the joint log-price vector,
/// with Sigma_ik(t) = rho_ik * integral of sigma_i sigma_k over [0, t].
pub fn covariance_blocks(spec: &MarketSpec, grid: &TimeGrid) -> Result<BlockCovariance, MarketError> {
    spec.validate(grid)?;
    let m = spec.asset_count();
    let blocks = grid
        .times()
        .iter()
        .map(|&t| {
            Array2::from_shape_fn((m, m), |(i, k)| {
                spec.correlation[[i, k]] * spec.vol.integrated_pair(i, k, t)
            })
        })
        .collect();
    let kind = if spec.vol.is_constant() {
        let asset_cov = Array2::from_shape_fn((m, m), |(i, k)| {
            spec.correlation[[i, k]] * spec.vol.value(i, 0.0) * spec.vol.value(k, 0.0)
        });
        CovarianceKind::ConstantVol { asset_cov }
    } else {
        CovarianceKind::TimeDependent
    };
    Ok(BlockCovariance::new(blocks, kind)?)
}

/// Mean of the joint log-price vector: entry j * M + i carries
/// ln(w_ij S_i(0)) + r t_j - integral of sigma_i^2 / 2 over [0, t_j].
pub fn drift_vector(spec: &MarketSpec, grid: &TimeGrid) -> Result<Vec<f64>, MarketError> {
    spec.validate(grid)?;
    let m = spec.asset_count();
    let mut drift = Vec::with_capacity(m * grid.len());
    for (j, &t) in grid.times().iter().enumerate() {
        for i in 0..m {
            let loaded_spot = spec.weights[[i, j]] * spec.spots[i];
            drift.push(loaded_spot.ln() + spec.rate * t - 0.5 * spec.vol.integrated_pair(i, i, t));
        }
    }
    Ok(drift)
}

/// Log of each weighted observation's forward: ln(w_ij S_i) + r t_j, the
/// drift before any half-variance compensation. Ordered like `drift_vector`.
pub fn log_forward_vector(spec: &MarketSpec, grid: &TimeGrid) -> Result<Vec<f64>, MarketError> {
    spec.validate(grid)?;
    let m = spec.asset_count();
    let mut forwards = Vec::with_capacity(m * grid.len());
    for (j, &t) in grid.times().iter().enumerate() {
        for i in 0..m {
            let loaded_spot = spec.weights[[i, j]] * spec.spots[i];
            forwards.push(loaded_spot.ln() + spec.rate * t);
        }
    }
    Ok(forwards)
}
