//! Generating matrices that map independent standard normals to correlated
//! log-price vectors.
//!
//! Every generator materializes a dense MN x E matrix C with C C^T equal to
//! the assembled covariance; they differ in how variance is ordered across
//! input coordinates. Block Cholesky keeps the time-recursive ordering,
//! principal components sorts coordinates by eigenvalue, and the Kronecker
//! product approximation orders coordinates by the spectrum of the closest
//! Kronecker surrogate while still factoring the exact covariance, which
//! keeps spectral truncation available under time-dependent volatility
//! without an MN x MN eigensolve.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayBase, Data, DataMut, Ix2};
use thiserror::Error;

use crate::kronlin::{
    block_cholesky, build_boomerang, cholesky_lower, kpa_fit, kron_eigen_pairs,
    lower_triangular_inverse, sym_eigen, BlockCovariance, CovarianceKind, EigenDecomposition,
    NumericError,
};
use crate::market::TimeGrid;

/// Relative floor applied to the fitted asset covariance spectrum before its
/// Cholesky factor is inverted.
pub const KPA_SPECTRUM_FLOOR_REL: f64 = 1e-10;

/// Width ratio at or below which a truncated generator is applied by a plain
/// matrix product instead of its structured form.
const DENSE_APPLY_RATIO: usize = 4;

#[derive(Debug, Error)]
pub enum PathGenError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("covariance eigenvalue {index} is negative ({value:e})")]
    NegativeSpectrum { index: usize, value: f64 },
    #[error("variance threshold must lie in (0, 1], got {value}")]
    InvalidThreshold { value: f64 },
    #[error("cannot truncate to {requested} columns, generator has {available}")]
    TruncationRange { requested: usize, available: usize },
    #[error("block Cholesky columns have no variance ordering to truncate by")]
    TruncationUnsupported,
    #[error("fitted asset covariance has no positive eigenvalue")]
    DegenerateFit,
    #[error("generator expects {expected} input coordinates per path, got {actual}")]
    InputWidth { expected: usize, actual: usize },
    #[error("output buffer is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    OutputShape { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
}

/// Which factorization produced a generating matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorMethod {
    Cholesky,
    Pca,
    Kpa,
}

impl std::fmt::Display for GeneratorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeneratorMethod::Cholesky => "cholesky",
            GeneratorMethod::Pca => "pca",
            GeneratorMethod::Kpa => "kpa",
        })
    }
}

impl std::str::FromStr for GeneratorMethod {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        match text {
            "cholesky" => Ok(GeneratorMethod::Cholesky),
            "pca" => Ok(GeneratorMethod::Pca),
            "kpa" => Ok(GeneratorMethod::Kpa),
            other => Err(format!("unknown generator '{other}', expected cholesky, pca or kpa")),
        }
    }
}

/// Smallest coordinate count whose spectrum prefix reaches a variance share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveDimension {
    pub dims: usize,
    pub threshold: f64,
    pub explained: f64,
}

/// Scans a descending spectrum left to right and returns the first prefix
/// whose share of the trace reaches `threshold`. The trace is accumulated in
/// the same order, so a threshold of exactly one keeps every coordinate that
/// carries variance and drops trailing zeros. A zero trace needs no
/// coordinates at all.
pub fn effective_dimension(
    spectrum: &[f64],
    threshold: f64,
) -> Result<EffectiveDimension, PathGenError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PathGenError::InvalidThreshold { value: threshold });
    }
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 {
        return Ok(EffectiveDimension { dims: 0, threshold, explained: 1.0 });
    }
    let target = threshold * total;
    let mut running = 0.0;
    for (index, &value) in spectrum.iter().enumerate() {
        running += value;
        if running >= target {
            return Ok(EffectiveDimension {
                dims: index + 1,
                threshold,
                explained: running / total,
            });
        }
    }
    Ok(EffectiveDimension { dims: spectrum.len(), threshold, explained: 1.0 })
}

/// Structured form of a generating matrix, used to apply it without the full
/// MN x E product when the column count is large.
#[derive(Debug, Clone)]
enum FastApply {
    /// No structure beyond the dense matrix.
    Dense,
    /// z_l = z_(l-1) + C_l eps_l over the M x M time factors C_l.
    BlockCholesky { factors: Vec<Array2<f64>> },
    /// Z = V Theta W^T, with Theta carrying the scaled inputs at the
    /// retained eigenvector index pairs.
    KronPca {
        row_basis: Array2<f64>,
        col_basis: Array2<f64>,
        pairs: Vec<(usize, usize)>,
        scales: Vec<f64>,
    },
    /// Kronecker synthesis through pre-whitened bases, then the exact block
    /// refactoring: Y = D Theta Q^T and z_l = z_(l-1) + C_l y_l.
    Kpa {
        row_basis: Array2<f64>,
        col_basis: Array2<f64>,
        pairs: Vec<(usize, usize)>,
        scales: Vec<f64>,
        factors: Vec<Array2<f64>>,
    },
}

/// Dense MN x E map from independent standard normals to a zero-mean
/// Gaussian vector with the assembled block covariance. Row l * M + k is the
/// log increment of asset k at date l.
#[derive(Debug, Clone)]
pub struct GeneratingMatrix {
    method: GeneratorMethod,
    matrix: Array2<f64>,
    spectrum: Option<Vec<f64>>,
    fast: FastApply,
    asset_count: usize,
    step_count: usize,
    kpa_floor_events: usize,
}

impl GeneratingMatrix {
    pub fn method(&self) -> GeneratorMethod {
        self.method
    }

    /// Input coordinates per path, the current column count E.
    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Output coordinates per path, always M * N.
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn asset_count(&self) -> usize {
        self.asset_count
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Full variance ordering the columns were sorted by, None for Cholesky.
    /// Truncation does not shorten the spectrum.
    pub fn spectrum(&self) -> Option<&[f64]> {
        self.spectrum.as_deref()
    }

    /// How many fitted eigenvalues were raised to the positivity floor.
    pub fn kpa_floor_events(&self) -> usize {
        self.kpa_floor_events
    }

    /// Keeps the leading `dims` columns. Only spectrally ordered generators
    /// can be truncated; Cholesky accepts its full width and nothing else.
    pub fn truncate(&self, dims: usize) -> Result<Self, PathGenError> {
        if self.method == GeneratorMethod::Cholesky {
            if dims == self.input_dim() {
                return Ok(self.clone());
            }
            return Err(PathGenError::TruncationUnsupported);
        }
        if dims > self.input_dim() {
            return Err(PathGenError::TruncationRange {
                requested: dims,
                available: self.input_dim(),
            });
        }
        let matrix = self.matrix.slice(s![.., ..dims]).as_standard_layout().into_owned();
        let fast = match &self.fast {
            FastApply::Dense => FastApply::Dense,
            FastApply::KronPca { row_basis, col_basis, pairs, scales } => FastApply::KronPca {
                row_basis: row_basis.clone(),
                col_basis: col_basis.clone(),
                pairs: pairs[..dims].to_vec(),
                scales: scales[..dims].to_vec(),
            },
            FastApply::Kpa { row_basis, col_basis, pairs, scales, factors } => FastApply::Kpa {
                row_basis: row_basis.clone(),
                col_basis: col_basis.clone(),
                pairs: pairs[..dims].to_vec(),
                scales: scales[..dims].to_vec(),
                factors: factors.clone(),
            },
            FastApply::BlockCholesky { .. } => unreachable!("handled by the method check"),
        };
        Ok(Self {
            method: self.method,
            matrix,
            spectrum: self.spectrum.clone(),
            fast,
            asset_count: self.asset_count,
            step_count: self.step_count,
            kpa_floor_events: self.kpa_floor_events,
        })
    }

    /// Applies the generator to a batch of input rows, one output row per
    /// path. Uses the structured form unless the column count is small
    /// enough that the dense product does less work.
    pub fn apply_batch<S, T>(
        &self,
        inputs: &ArrayBase<S, Ix2>,
        out: &mut ArrayBase<T, Ix2>,
    ) -> Result<(), PathGenError>
    where
        S: Data<Elem = f64>,
        T: DataMut<Elem = f64>,
    {
        let dims = self.input_dim();
        let width = self.output_dim();
        if inputs.ncols() != dims {
            return Err(PathGenError::InputWidth { expected: dims, actual: inputs.ncols() });
        }
        if out.dim() != (inputs.nrows(), width) {
            let (rows, cols) = out.dim();
            return Err(PathGenError::OutputShape {
                rows,
                cols,
                expected_rows: inputs.nrows(),
                expected_cols: width,
            });
        }
        match &self.fast {
            FastApply::Dense => self.apply_dense(inputs, out),
            FastApply::BlockCholesky { factors } => apply_block_cholesky(factors, inputs, out),
            FastApply::KronPca { row_basis, col_basis, pairs, scales } => {
                if dims * DENSE_APPLY_RATIO <= width {
                    self.apply_dense(inputs, out);
                } else {
                    apply_kron_pca(row_basis, col_basis, pairs, scales, inputs, out);
                }
            }
            FastApply::Kpa { row_basis, col_basis, pairs, scales, factors } => {
                if dims * DENSE_APPLY_RATIO <= width {
                    self.apply_dense(inputs, out);
                } else {
                    apply_kpa(row_basis, col_basis, pairs, scales, factors, inputs, out);
                }
            }
        }
        Ok(())
    }

    fn apply_dense<S, T>(&self, inputs: &ArrayBase<S, Ix2>, out: &mut ArrayBase<T, Ix2>)
    where
        S: Data<Elem = f64>,
        T: DataMut<Elem = f64>,
    {
        general_mat_mul(1.0, inputs, &self.matrix.t(), 0.0, out);
    }
}

fn apply_block_cholesky<S, T>(
    factors: &[Array2<f64>],
    inputs: &ArrayBase<S, Ix2>,
    out: &mut ArrayBase<T, Ix2>,
) where
    S: Data<Elem = f64>,
    T: DataMut<Elem = f64>,
{
    let n = factors.len();
    let m = factors[0].nrows();
    let mut acc = vec![0.0; m];
    for (row_in, mut row_out) in inputs.rows().into_iter().zip(out.rows_mut()) {
        acc.fill(0.0);
        for (l, factor) in factors.iter().enumerate().take(n) {
            let base = l * m;
            for k in 0..m {
                let mut sum = 0.0;
                for j in 0..=k {
                    sum += factor[[k, j]] * row_in[base + j];
                }
                acc[k] += sum;
                row_out[base + k] = acc[k];
            }
        }
    }
}

fn apply_kron_pca<S, T>(
    row_basis: &Array2<f64>,
    col_basis: &Array2<f64>,
    pairs: &[(usize, usize)],
    scales: &[f64],
    inputs: &ArrayBase<S, Ix2>,
    out: &mut ArrayBase<T, Ix2>,
) where
    S: Data<Elem = f64>,
    T: DataMut<Elem = f64>,
{
    let n = row_basis.nrows();
    let m = col_basis.nrows();
    let mut theta = Array2::<f64>::zeros((n, m));
    let mut mixed = Array2::<f64>::zeros((n, m));
    let mut synth = Array2::<f64>::zeros((n, m));
    for (row_in, mut row_out) in inputs.rows().into_iter().zip(out.rows_mut()) {
        theta.fill(0.0);
        for (c, &(i, j)) in pairs.iter().enumerate() {
            theta[[i, j]] = scales[c] * row_in[c];
        }
        general_mat_mul(1.0, row_basis, &theta, 0.0, &mut mixed);
        general_mat_mul(1.0, &mixed, &col_basis.t(), 0.0, &mut synth);
        for (target, &value) in row_out.iter_mut().zip(synth.iter()) {
            *target = value;
        }
    }
}

fn apply_kpa<S, T>(
    row_basis: &Array2<f64>,
    col_basis: &Array2<f64>,
    pairs: &[(usize, usize)],
    scales: &[f64],
    factors: &[Array2<f64>],
    inputs: &ArrayBase<S, Ix2>,
    out: &mut ArrayBase<T, Ix2>,
) where
    S: Data<Elem = f64>,
    T: DataMut<Elem = f64>,
{
    let n = row_basis.nrows();
    let m = col_basis.nrows();
    let mut theta = Array2::<f64>::zeros((n, m));
    let mut mixed = Array2::<f64>::zeros((n, m));
    let mut whitened = Array2::<f64>::zeros((n, m));
    let mut acc = vec![0.0; m];
    for (row_in, mut row_out) in inputs.rows().into_iter().zip(out.rows_mut()) {
        theta.fill(0.0);
        for (c, &(i, j)) in pairs.iter().enumerate() {
            theta[[i, j]] = scales[c] * row_in[c];
        }
        general_mat_mul(1.0, row_basis, &theta, 0.0, &mut mixed);
        general_mat_mul(1.0, &mixed, &col_basis.t(), 0.0, &mut whitened);
        acc.fill(0.0);
        for (l, factor) in factors.iter().enumerate().take(n) {
            let y = whitened.row(l);
            let base = l * m;
            for k in 0..m {
                let mut sum = 0.0;
                for j in 0..=k {
                    sum += factor[[k, j]] * y[j];
                }
                acc[k] += sum;
                row_out[base + k] = acc[k];
            }
        }
    }
}

/// Block Cholesky generating matrix. Columns follow the time ordering, so
/// every input coordinate matters equally and nothing can be truncated.
pub fn generator_cholesky(cov: &BlockCovariance) -> Result<GeneratingMatrix, PathGenError> {
    let chol = block_cholesky(cov)?;
    let matrix = chol.assemble();
    Ok(GeneratingMatrix {
        method: GeneratorMethod::Cholesky,
        matrix,
        spectrum: None,
        fast: FastApply::BlockCholesky { factors: chol.factors().to_vec() },
        asset_count: cov.asset_count(),
        step_count: cov.step_count(),
        kpa_floor_events: 0,
    })
}

/// Principal-component generating matrix, columns sorted by eigenvalue.
/// Constant volatility separates the covariance into a Kronecker product and
/// combines the two small eigendecompositions; otherwise the assembled
/// MN x MN matrix is decomposed directly.
pub fn generator_pca(
    cov: &BlockCovariance,
    grid: &TimeGrid,
) -> Result<GeneratingMatrix, PathGenError> {
    check_grid(cov, grid)?;
    let m = cov.asset_count();
    let n = cov.step_count();
    match cov.kind() {
        CovarianceKind::ConstantVol { asset_cov } => {
            let eig_time = sym_eigen(&build_boomerang(grid).dense())?;
            let eig_asset = sym_eigen(asset_cov)?;
            check_spectrum(&eig_time.values)?;
            check_spectrum(&eig_asset.values)?;
            let ordered = kron_eigen_pairs(&eig_time, &eig_asset);
            let mut matrix = Array2::zeros((m * n, m * n));
            let mut pairs = Vec::with_capacity(ordered.len());
            let mut scales = Vec::with_capacity(ordered.len());
            let mut spectrum = Vec::with_capacity(ordered.len());
            for (col, &(value, i, j)) in ordered.iter().enumerate() {
                let scale = value.sqrt();
                for l in 0..n {
                    let weight = scale * eig_time.vectors[[l, i]];
                    for k in 0..m {
                        matrix[[l * m + k, col]] = weight * eig_asset.vectors[[k, j]];
                    }
                }
                pairs.push((i, j));
                scales.push(scale);
                spectrum.push(value);
            }
            Ok(GeneratingMatrix {
                method: GeneratorMethod::Pca,
                matrix,
                spectrum: Some(spectrum),
                fast: FastApply::KronPca {
                    row_basis: eig_time.vectors,
                    col_basis: eig_asset.vectors,
                    pairs,
                    scales,
                },
                asset_count: m,
                step_count: n,
                kpa_floor_events: 0,
            })
        }
        CovarianceKind::TimeDependent => {
            let eig = sym_eigen(&cov.assemble())?;
            check_spectrum(&eig.values)?;
            let EigenDecomposition { values, vectors } = eig;
            let mut matrix = vectors;
            for (col, &value) in values.iter().enumerate() {
                let scale = value.sqrt();
                matrix.column_mut(col).mapv_inplace(|v| v * scale);
            }
            Ok(GeneratingMatrix {
                method: GeneratorMethod::Pca,
                matrix,
                spectrum: Some(values),
                fast: FastApply::Dense,
                asset_count: m,
                step_count: n,
                kpa_floor_events: 0,
            })
        }
    }
}

/// Kronecker product approximation. Coordinates are ordered by the spectrum
/// of the closest Kronecker surrogate to the covariance, while the matrix
/// itself still factors the exact covariance: with the surrogate R (x) K,
/// the columns are C_B (C_R (x) C_K)^-1 E sqrt(Lambda) over the surrogate
/// eigenpairs E, Lambda and the exact block factor C_B, so at full width
/// C C^T telescopes back to the assembled covariance.
pub fn generator_kpa(
    cov: &BlockCovariance,
    grid: &TimeGrid,
) -> Result<GeneratingMatrix, PathGenError> {
    check_grid(cov, grid)?;
    let m = cov.asset_count();
    let n = cov.step_count();
    let fitted = kpa_fit(cov, grid)?;
    let eig_fit = sym_eigen(&fitted)?;
    let top = eig_fit.values[0];
    if !(top > 0.0) {
        return Err(PathGenError::DegenerateFit);
    }
    let floor = KPA_SPECTRUM_FLOOR_REL * top;
    let mut floor_events = 0;
    let mut values = eig_fit.values;
    for value in &mut values {
        if *value < floor {
            *value = floor;
            floor_events += 1;
        }
    }
    let eig_asset = EigenDecomposition { values, vectors: eig_fit.vectors };
    let chol_asset = cholesky_lower(&eig_asset.reconstruct())?;
    let asset_inv = lower_triangular_inverse(&chol_asset)?;
    let eig_time = sym_eigen(&build_boomerang(grid).dense())?;
    check_spectrum(&eig_time.values)?;
    let chol = block_cholesky(cov)?;

    // Fold the whitening into both bases: Q = C_K^-1 W on the asset side and
    // the bidiagonal inverse time factor into D on the date side.
    let mut col_basis = Array2::zeros((m, m));
    general_mat_mul(1.0, &asset_inv, &eig_asset.vectors, 0.0, &mut col_basis);
    let mut row_basis = Array2::zeros((n, n));
    for i in 0..n {
        for l in 0..n {
            let prev = if l == 0 { 0.0 } else { eig_time.vectors[[l - 1, i]] };
            row_basis[[l, i]] = (eig_time.vectors[[l, i]] - prev) / grid.step(l).sqrt();
        }
    }
    // With G_l = C_l Q, column (i, j) accumulates D[l, i] * G_l[., j] down
    // the grid, which avoids an MN x MN product per column.
    let mut refolded = Vec::with_capacity(n);
    for factor in chol.factors() {
        let mut g = Array2::zeros((m, m));
        general_mat_mul(1.0, factor, &col_basis, 0.0, &mut g);
        refolded.push(g);
    }
    let ordered = kron_eigen_pairs(&eig_time, &eig_asset);
    let mut matrix = Array2::zeros((m * n, m * n));
    let mut pairs = Vec::with_capacity(ordered.len());
    let mut scales = Vec::with_capacity(ordered.len());
    let mut spectrum = Vec::with_capacity(ordered.len());
    let mut acc = vec![0.0; m];
    for (col, &(value, i, j)) in ordered.iter().enumerate() {
        let scale = value.sqrt();
        acc.fill(0.0);
        for l in 0..n {
            let weight = row_basis[[l, i]];
            let g = &refolded[l];
            for k in 0..m {
                acc[k] += weight * g[[k, j]];
                matrix[[l * m + k, col]] = scale * acc[k];
            }
        }
        pairs.push((i, j));
        scales.push(scale);
        spectrum.push(value);
    }
    Ok(GeneratingMatrix {
        method: GeneratorMethod::Kpa,
        matrix,
        spectrum: Some(spectrum),
        fast: FastApply::Kpa {
            row_basis,
            col_basis,
            pairs,
            scales,
            factors: chol.factors().to_vec(),
        },
        asset_count: m,
        step_count: n,
        kpa_floor_events: floor_events,
    })
}

fn check_grid(cov: &BlockCovariance, grid: &TimeGrid) -> Result<(), PathGenError> {
    if grid.len() != cov.step_count() {
        return Err(NumericError::DimensionMismatch {
            context: format!(
                "grid has {} dates but covariance has {} blocks",
                grid.len(),
                cov.step_count()
            ),
        }
        .into());
    }
    Ok(())
}

fn check_spectrum(values: &[f64]) -> Result<(), PathGenError> {
    for (index, &value) in values.iter().enumerate() {
        if value < 0.0 {
            return Err(PathGenError::NegativeSpectrum { index, value });
        }
    }
    Ok(())
}
