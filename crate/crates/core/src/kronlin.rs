//! Structured linear algebra for block covariance matrices.
//!
//! The covariance of a basket observed on a time grid factors into two
//! ingredients: the N x N "boomerang" matrix R with R_lm = t_min(l,m), whose
//! inverse and Cholesky factor are known in closed form, and the M x M asset
//! covariance. With constant volatility the full MN x MN covariance is the
//! Kronecker product R (x) Sigma; with time-dependent volatility it is only
//! block-structured, and this module provides:
//!
//! - closed forms for R, its inverse, its Cholesky factor, and that factor's
//!   inverse, all O(N) to describe,
//! - a symmetric eigensolver (Householder tridiagonalization followed by
//!   shifted QL iteration) used for spectra of R, Sigma, and full matrices,
//! - a block Cholesky factorization that exploits the boomerang block
//!   pattern, factoring only M x M increments,
//! - the least-squares Kronecker fit K of a block covariance, i.e. the
//!   minimizer of || Sigma_MN - R (x) K ||_F.

use ndarray::{s, Array2};
use thiserror::Error;

use crate::market::TimeGrid;

/// Cap on QL iterations per eigenvalue before reporting failure.
const MAX_QL_ITERATIONS: usize = 50;

/// Negative eigenvalues of nominally PSD matrices are clamped to zero when
/// they are below this fraction of the largest eigenvalue.
const PSD_CLAMP_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max deviation {max_dev:.3e})")]
    NotSymmetric { max_dev: f64 },
    #[error("eigenvalue iteration did not converge at index {index}")]
    NoConvergence { index: usize },
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("block factorization failed at time index {time_index}: pivot {pivot:.3e}")]
    BlockPivot { time_index: usize, pivot: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// The matrix R with R_lm = t_min(l,m), the covariance pattern of a process
/// with independent increments observed at the grid dates.
#[derive(Debug, Clone)]
pub struct BoomerangMatrix {
    times: Vec<f64>,
}

/// Boomerang matrix of a time grid.
pub fn build_boomerang(grid: &TimeGrid) -> BoomerangMatrix {
    BoomerangMatrix { times: grid.times().to_vec() }
}

impl BoomerangMatrix {
    pub fn order(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dense(&self) -> Array2<f64> {
        let n = self.order();
        Array2::from_shape_fn((n, n), |(l, m)| self.times[l.min(m)])
    }
}

/// Lower-triangular Cholesky factor of R: column k holds sqrt(t_k - t_{k-1})
/// from row k down.
pub fn boomerang_cholesky(grid: &TimeGrid) -> Array2<f64> {
    let times = grid.times();
    let n = times.len();
    let mut c = Array2::zeros((n, n));
    for k in 0..n {
        let root = grid.step(k).sqrt();
        for l in k..n {
            c[[l, k]] = root;
        }
    }
    c
}

/// Inverse of the Cholesky factor of R, a lower bidiagonal matrix.
pub fn boomerang_cholesky_inverse(grid: &TimeGrid) -> Array2<f64> {
    let n = grid.len();
    let mut c = Array2::zeros((n, n));
    for k in 0..n {
        let inv_root = 1.0 / grid.step(k).sqrt();
        c[[k, k]] = inv_root;
        if k > 0 {
            c[[k, k - 1]] = -inv_root;
        }
    }
    c
}

/// Inverse of R, a symmetric tridiagonal matrix.
pub fn boomerang_inverse(grid: &TimeGrid) -> Array2<f64> {
    let times = grid.times();
    let n = times.len();
    let mut r = Array2::zeros((n, n));
    for k in 0..n {
        if k + 1 < n {
            let prev = if k == 0 { 0.0 } else { times[k - 1] };
            r[[k, k]] = (times[k + 1] - prev) / (grid.step(k) * grid.step(k + 1));
            r[[k, k + 1]] = -1.0 / grid.step(k + 1);
            r[[k + 1, k]] = r[[k, k + 1]];
        } else {
            r[[k, k]] = 1.0 / grid.step(k);
        }
    }
    r
}

/// Trace of A * B where both matrices follow the boomerang pattern
/// A_lm = a_min(l,m): only the diagonal profiles enter, each index j
/// appearing with multiplicity 2(N - j) - 1 (1-based: 2(N - j) + 1).
pub fn boomerang_trace_product(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len(), "profiles must have equal length");
    let mut total = 0.0;
    for j in 0..n {
        total += (2 * (n - 1 - j) + 1) as f64 * a[j] * b[j];
    }
    total
}

/// Kronecker product, row-major blocks of B scaled by entries of A.
pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let scale = a[[i, j]];
            if scale == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &v| *o = scale * v);
        }
    }
    out
}

/// Dense lower-triangular Cholesky factorization.
pub fn cholesky_lower(a: &Array2<f64>) -> Result<Array2<f64>, NumericError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(NumericError::NotSquare { rows, cols });
    }
    let n = rows;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if pivot <= 0.0 || !pivot.is_finite() {
            return Err(NumericError::NotPositiveDefinite { index: j, pivot });
        }
        let root = pivot.sqrt();
        l[[j, j]] = root;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / root;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_triangular_inverse(l: &Array2<f64>) -> Result<Array2<f64>, NumericError> {
    let (rows, cols) = l.dim();
    if rows != cols {
        return Err(NumericError::NotSquare { rows, cols });
    }
    let n = rows;
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for i in j..n {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in j..i {
                s -= l[[i, k]] * inv[[k, j]];
            }
            let pivot = l[[i, i]];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(NumericError::NotPositiveDefinite { index: i, pivot });
            }
            inv[[i, j]] = s / pivot;
        }
    }
    Ok(inv)
}

/// Eigendecomposition of a symmetric matrix. Eigenvalues are sorted in
/// descending order and `vectors` holds the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

impl EigenDecomposition {
    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// V diag(values) V^T, for reconstruction checks.
    pub fn reconstruct(&self) -> Array2<f64> {
        let n = self.order();
        let mut scaled = self.vectors.clone();
        for (k, &value) in self.values.iter().enumerate() {
            scaled.column_mut(k).mapv_inplace(|v| v * value);
        }
        let mut out = Array2::zeros((n, n));
        ndarray::linalg::general_mat_mul(1.0, &scaled, &self.vectors.t(), 0.0, &mut out);
        out
    }
}

/// Symmetric eigensolver: Householder tridiagonalization followed by QL
/// iteration with implicit shifts, capped at 50 sweeps per eigenvalue.
///
/// Output is deterministic: eigenvalues descend (ties keep the iteration
/// order), each eigenvector is flipped so its largest-magnitude component is
/// positive, and negative eigenvalues within 1e-12 of the top one are
/// clamped to zero so nominally PSD inputs stay PSD.
pub fn sym_eigen(matrix: &Array2<f64>) -> Result<EigenDecomposition, NumericError> {
    let (rows, cols) = matrix.dim();
    if rows != cols {
        return Err(NumericError::NotSquare { rows, cols });
    }
    let n = rows;
    let mut max_abs: f64 = 0.0;
    let mut max_dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            max_abs = max_abs.max(matrix[[i, j]].abs());
            max_dev = max_dev.max((matrix[[i, j]] - matrix[[j, i]]).abs());
        }
    }
    if max_dev > 1e-9 * max_abs.max(1e-300) {
        return Err(NumericError::NotSymmetric { max_dev });
    }

    // Work on the symmetrized copy so tiny asymmetries cannot bias the result.
    let mut basis = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (matrix[[i, j]] + matrix[[j, i]]));
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    tridiagonalize(&mut basis, &mut diag, &mut off);

    // QL rotations touch pairs of eigenvectors; keeping vectors in rows makes
    // those updates contiguous.
    let mut vectors_rows = basis.t().as_standard_layout().into_owned();
    ql_with_shifts(&mut diag, &mut off, &mut vectors_rows)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).expect("finite eigenvalues").then(a.cmp(&b)));

    let mut values: Vec<f64> = order.iter().map(|&k| diag[k]).collect();
    if let Some(&top) = values.first() {
        let floor = -PSD_CLAMP_REL * top.abs();
        for value in values.iter_mut() {
            if *value < 0.0 && *value >= floor {
                *value = 0.0;
            }
        }
    }

    let mut vectors = Array2::zeros((n, n));
    for (out_col, &src) in order.iter().enumerate() {
        let row = vectors_rows.row(src);
        let mut lead = 0;
        for k in 1..n {
            if row[k].abs() > row[lead].abs() {
                lead = k;
            }
        }
        let flip = if row[lead] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[[k, out_col]] = flip * row[k];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Householder reduction to tridiagonal form with accumulated transforms.
/// On exit `a` holds the orthogonal basis Q with A = Q T Q^T, `diag` the
/// diagonal of T, and `off[i]` the subdiagonal coupling rows i-1 and i.
fn tridiagonalize(a: &mut Array2<f64>, diag: &mut [f64], off: &mut [f64]) {
    let n = diag.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[[i, k]].abs();
            }
            if scale == 0.0 {
                off[i] = a[[i, l]];
            } else {
                for k in 0..=l {
                    a[[i, k]] /= scale;
                    h += a[[i, k]] * a[[i, k]];
                }
                let f = a[[i, l]];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                off[i] = scale * g;
                h -= f * g;
                a[[i, l]] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    a[[j, i]] = a[[i, j]] / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += a[[j, k]] * a[[i, k]];
                    }
                    for k in (j + 1)..=l {
                        g_acc += a[[k, j]] * a[[i, k]];
                    }
                    off[j] = g_acc / h;
                    f_acc += off[j] * a[[i, j]];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a[[i, j]];
                    let g = off[j] - hh * f;
                    off[j] = g;
                    for k in 0..=j {
                        a[[j, k]] -= f * off[k] + g * a[[i, k]];
                    }
                }
            }
        } else {
            off[i] = a[[i, l]];
        }
        diag[i] = h;
    }
    diag[0] = 0.0;
    off[0] = 0.0;
    for i in 0..n {
        if diag[i] != 0.0 {
            // Apply the stored transform to the accumulated basis. The
            // updates run over whole rows to stay cache-friendly.
            let mut g = vec![0.0; i];
            for k in 0..i {
                let f = a[[i, k]];
                if f != 0.0 {
                    let row = a.row(k);
                    for (j, gj) in g.iter_mut().enumerate() {
                        *gj += f * row[j];
                    }
                }
            }
            for k in 0..i {
                let c = a[[k, i]];
                let mut row = a.row_mut(k);
                for (j, &gj) in g.iter().enumerate() {
                    row[j] -= gj * c;
                }
            }
        }
        diag[i] = a[[i, i]];
        a[[i, i]] = 1.0;
        for j in 0..i {
            a[[j, i]] = 0.0;
            a[[i, j]] = 0.0;
        }
    }
}

/// QL iteration with implicit shifts on a tridiagonal matrix, accumulating
/// rotations into `vectors_rows` (one eigenvector per row).
fn ql_with_shifts(
    diag: &mut [f64],
    off: &mut [f64],
    vectors_rows: &mut Array2<f64>,
) -> Result<(), NumericError> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        off[i - 1] = off[i];
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > MAX_QL_ITERATIONS {
                return Err(NumericError::NoConvergence { index: l });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut restart = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    restart = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let (mut lo, mut hi) = vectors_rows.multi_slice_mut((s![i, ..], s![i + 1, ..]));
                let lo = lo.as_slice_mut().expect("row-major rows are contiguous");
                let hi = hi.as_slice_mut().expect("row-major rows are contiguous");
                for k in 0..n {
                    f = hi[k];
                    hi[k] = s * lo[k] + c * f;
                    lo[k] = c * lo[k] - s * f;
                }
            }
            if restart {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigendecomposition of A (x) B from the factors' decompositions: the
/// eigenvalues are all products lambda_i * mu_j and the eigenvectors the
/// Kronecker products of the factor eigenvectors, sorted descending.
pub fn kron_eigen(a: &EigenDecomposition, b: &EigenDecomposition) -> EigenDecomposition {
    let pairs = kron_eigen_pairs(a, b);
    let (na, nb) = (a.order(), b.order());
    let n = na * nb;
    let mut values = Vec::with_capacity(n);
    let mut vectors = Array2::zeros((n, n));
    for (col, &(value, i, j)) in pairs.iter().enumerate() {
        values.push(value);
        let va = a.vectors.column(i);
        let vb = b.vectors.column(j);
        for l in 0..na {
            let scale = va[l];
            for k in 0..nb {
                vectors[[l * nb + k, col]] = scale * vb[k];
            }
        }
    }
    EigenDecomposition { values, vectors }
}

/// Sorted spectrum of A (x) B as (value, index into A, index into B), ties
/// broken by the factor indices so the order is deterministic.
pub fn kron_eigen_pairs(a: &EigenDecomposition, b: &EigenDecomposition) -> Vec<(f64, usize, usize)> {
    let mut pairs = Vec::with_capacity(a.order() * b.order());
    for (i, &va) in a.values.iter().enumerate() {
        for (j, &vb) in b.values.iter().enumerate() {
            pairs.push((va * vb, i, j));
        }
    }
    pairs.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .expect("finite eigenvalues")
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    pairs
}

/// How a block covariance was produced. The constant-volatility tag carries
/// the instantaneous asset covariance so downstream code can use the
/// Kronecker factorization R (x) Sigma directly.
#[derive(Debug, Clone)]
pub enum CovarianceKind {
    ConstantVol { asset_cov: Array2<f64> },
    TimeDependent,
}

/// N blocks Sigma(t_1) .. Sigma(t_N) of size M x M; the assembled MN x MN
/// covariance has block (l, j) = Sigma(t_min(l,j)).
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    blocks: Vec<Array2<f64>>,
    kind: CovarianceKind,
}

impl BlockCovariance {
    pub fn new(blocks: Vec<Array2<f64>>, kind: CovarianceKind) -> Result<Self, NumericError> {
        if blocks.is_empty() {
            return Err(NumericError::DimensionMismatch { context: "no covariance blocks".into() });
        }
        let (rows, cols) = blocks[0].dim();
        if rows != cols {
            return Err(NumericError::NotSquare { rows, cols });
        }
        for block in &blocks {
            if block.dim() != (rows, cols) {
                return Err(NumericError::DimensionMismatch {
                    context: format!("covariance blocks must all be {rows}x{cols}"),
                });
            }
        }
        Ok(Self { blocks, kind })
    }

    pub fn asset_count(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn step_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, j: usize) -> &Array2<f64> {
        &self.blocks[j]
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    /// Dense MN x MN covariance with block (l, j) = Sigma(t_min(l,j)).
    pub fn assemble(&self) -> Array2<f64> {
        let m = self.asset_count();
        let n = self.step_count();
        let mut out = Array2::zeros((m * n, m * n));
        for l in 0..n {
            for j in 0..n {
                let block = &self.blocks[l.min(j)];
                let mut target = out.slice_mut(s![l * m..(l + 1) * m, j * m..(j + 1) * m]);
                target.assign(block);
            }
        }
        out
    }
}

/// Lower-triangular block Cholesky factor of a block covariance: block
/// column j repeats the factor of the increment Sigma(t_j) - Sigma(t_{j-1})
/// from the diagonal down.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    factors: Vec<Array2<f64>>,
}

impl BlockCholesky {
    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn asset_count(&self) -> usize {
        self.factors[0].nrows()
    }

    pub fn step_count(&self) -> usize {
        self.factors.len()
    }

    /// Dense MN x MN lower-triangular factor.
    pub fn assemble(&self) -> Array2<f64> {
        let m = self.asset_count();
        let n = self.step_count();
        let mut out = Array2::zeros((m * n, m * n));
        for j in 0..n {
            for l in j..n {
                let mut target = out.slice_mut(s![l * m..(l + 1) * m, j * m..(j + 1) * m]);
                target.assign(&self.factors[j]);
            }
        }
        out
    }
}

/// Block Cholesky factorization. Only the M x M covariance increments are
/// factored; failure reports the offending time index.
pub fn block_cholesky(cov: &BlockCovariance) -> Result<BlockCholesky, NumericError> {
    let n = cov.step_count();
    let mut remaining: Vec<Array2<f64>> = cov.blocks.clone();
    let mut factors = Vec::with_capacity(n);
    for j in 0..n {
        let factor = cholesky_lower(&remaining[j]).map_err(|err| match err {
            NumericError::NotPositiveDefinite { pivot, .. } => {
                NumericError::BlockPivot { time_index: j, pivot }
            }
            other => other,
        })?;
        if j + 1 < n {
            let mut product = Array2::zeros(factor.dim());
            ndarray::linalg::general_mat_mul(1.0, &factor, &factor.t(), 0.0, &mut product);
            for block in remaining.iter_mut().skip(j + 1) {
                *block -= &product;
            }
        }
        factors.push(factor);
    }
    Ok(BlockCholesky { factors })
}

/// Least-squares Kronecker fit: the M x M matrix K minimizing
/// || Sigma_MN - R (x) K ||_F. Writing the objective blockwise, every block
/// position (l, j) pairs Sigma(t_min(l,j)) with t_min(l,j), and position
/// counts collapse the sums to the grid diagonal:
///
///   K = sum_j (2(N-j)+1) t_j Sigma(t_j) / sum_j (2(N-j)+1) t_j^2
///
/// with j counted 1-based from the grid start.
pub fn kpa_fit(cov: &BlockCovariance, grid: &TimeGrid) -> Result<Array2<f64>, NumericError> {
    let n = cov.step_count();
    if grid.len() != n {
        return Err(NumericError::DimensionMismatch {
            context: format!("grid has {} dates but covariance has {} blocks", grid.len(), n),
        });
    }
    let times = grid.times();
    let m = cov.asset_count();
    let denom = boomerang_trace_product(times, times);
    let mut k = Array2::<f64>::zeros((m, m));
    for j in 0..n {
        let weight = (2 * (n - 1 - j) + 1) as f64 * times[j] / denom;
        k.scaled_add(weight, cov.block(j));
    }
    Ok(k)
}
