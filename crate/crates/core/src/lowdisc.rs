//! Low-discrepancy and stratified point sets on the unit cube.
//!
//! The workhorse is the Sobol' sequence in base 2 with 32-bit precision,
//! initialized from a bundled direction-number file. On top of it sit:
//!
//! - random linear scrambling (Faure-Tezuka style) with a digital shift,
//!   which preserves the digital net structure while randomizing it,
//! - Latin hypercube sampling, stratified per coordinate,
//! - Latin supercube composition, which glues independently scrambled
//!   low-dimensional Sobol' blocks with random row permutations so the
//!   product reaches dimensions the raw sequence covers poorly,
//! - a seeded pseudorandom fallback for plain Monte Carlo.

use std::sync::LazyLock;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Digits carried per coordinate: points live on a 2^-32 grid.
pub const DIGITS: usize = 32;

const SCALE: f64 = 1.0 / 4294967296.0; // 2^-32

#[derive(Debug, Error)]
pub enum LowDiscError {
    #[error("base must be at least 2, got {base}")]
    InvalidBase { base: u32 },
    #[error("dimension {requested} requested but only {available} are initialized")]
    DimensionTooLarge { requested: usize, available: usize },
    #[error("direction file line {line}: {message}")]
    DirectionFile { line: usize, message: String },
    #[error("start index must be at least 1 (index 0 is the origin)")]
    ZeroStart,
    #[error("index range [{start}, {end}) does not fit in {DIGITS} bits")]
    IndexRange { start: u64, end: u64 },
    #[error("point batch has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    BatchShape { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("scramble spec covers {got} dimensions, expected {expected}")]
    ScrambleDimensions { expected: usize, got: usize },
    #[error("block dimensions sum to {sum}, expected {expected}")]
    PartitionSum { sum: usize, expected: usize },
    #[error("block dimensions must be positive")]
    EmptyBlock,
    #[error("batch must contain at least one point")]
    EmptyBatch,
    #[error("value {value} lies outside [0, 1)")]
    UnitRange { value: f64 },
}

/// A set of points in the half-open unit cube, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    values: Array2<f64>,
}

impl PointBatch {
    pub fn new(values: Array2<f64>) -> Result<Self, LowDiscError> {
        for &value in values.iter() {
            if !(0.0..1.0).contains(&value) {
                return Err(LowDiscError::UnitRange { value });
            }
        }
        Ok(Self { values })
    }

    pub fn count(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Base-b digit expansion of a point in [0, 1): value = sum_k digits[k] b^-(k+1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitVector {
    base: u32,
    digits: Vec<u8>,
}

impl DigitVector {
    /// Truncating expansion of `value` to `count` digits.
    pub fn from_unit(value: f64, base: u32, count: usize) -> Result<Self, LowDiscError> {
        if base < 2 {
            return Err(LowDiscError::InvalidBase { base });
        }
        if !(0.0..1.0).contains(&value) {
            return Err(LowDiscError::UnitRange { value });
        }
        let mut rest = value;
        let digits = (0..count)
            .map(|_| {
                rest *= base as f64;
                let digit = rest.floor().min((base - 1) as f64);
                rest -= digit;
                digit as u8
            })
            .collect();
        Ok(Self { base, digits })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn value(&self) -> f64 {
        let mut acc = 0.0;
        for &digit in self.digits.iter().rev() {
            acc = (acc + digit as f64) / self.base as f64;
        }
        acc
    }
}

/// Radical inverse of `index` in base `base`: the digits of the index,
/// mirrored around the radix point.
pub fn radical_inverse(base: u32, index: u64) -> Result<f64, LowDiscError> {
    if base < 2 {
        return Err(LowDiscError::InvalidBase { base });
    }
    let b = base as u64;
    let mut inverse = 0.0;
    let mut denom = 1.0;
    let mut rest = index;
    while rest > 0 {
        denom *= base as f64;
        inverse += (rest % b) as f64 / denom;
        rest /= b;
    }
    Ok(inverse)
}

/// Primitive polynomial and initial values for one Sobol' dimension.
#[derive(Debug, Clone)]
pub struct SobolDimension {
    /// Degree q of the primitive polynomial.
    pub degree: usize,
    /// Coefficient bits of the polynomial, bit q down to bit 0.
    pub poly: u32,
    /// Odd initial values m_1 .. m_q with m_k < 2^k.
    pub initial: Vec<u32>,
}

/// Direction-number initialization for a family of Sobol' dimensions.
#[derive(Debug, Clone)]
pub struct SobolParams {
    dims: Vec<SobolDimension>,
}

static BUNDLED: LazyLock<SobolParams> = LazyLock::new(|| {
    SobolParams::parse(include_str!("../data/sobol_direction_numbers.txt"))
        .expect("bundled direction-number file is valid")
});

impl SobolParams {
    /// Parameters bundled with the crate (80 dimensions).
    pub fn bundled() -> &'static SobolParams {
        &BUNDLED
    }

    /// Parse the direction-number text format: one row per dimension,
    /// `d q p m_1 .. m_q` with `p` the polynomial coefficient bits as a 0/1
    /// string, `#` comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, LowDiscError> {
        let fail = |line: usize, message: String| LowDiscError::DirectionFile { line, message };
        let mut dims = Vec::new();
        for (line_index, raw) in text.lines().enumerate() {
            let line = line_index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if tokens.len() < 3 {
                return Err(fail(line, "expected at least `d q p`".into()));
            }
            let d: usize = tokens[0].parse().map_err(|_| fail(line, "bad dimension index".into()))?;
            if d != dims.len() + 1 {
                return Err(fail(line, format!("dimension index {d} out of order, expected {}", dims.len() + 1)));
            }
            let degree: usize = tokens[1].parse().map_err(|_| fail(line, "bad degree".into()))?;
            if degree >= DIGITS {
                return Err(fail(line, format!("degree {degree} too large")));
            }
            let bits = tokens[2];
            if bits.len() != degree + 1 {
                return Err(fail(line, format!("polynomial must have {} coefficient bits", degree + 1)));
            }
            let mut poly: u32 = 0;
            for ch in bits.chars() {
                poly = (poly << 1) | match ch {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(fail(line, "polynomial bits must be 0 or 1".into())),
                };
            }
            if poly >> degree != 1 || poly & 1 != 1 {
                return Err(fail(line, "polynomial must have leading and constant coefficient 1".into()));
            }
            if tokens.len() != 3 + degree {
                return Err(fail(line, format!("expected {degree} initial values")));
            }
            let mut initial = Vec::with_capacity(degree);
            for (k, token) in tokens[3..].iter().enumerate() {
                let value: u32 = token.parse().map_err(|_| fail(line, "bad initial value".into()))?;
                if value % 2 == 0 || u64::from(value) >= 1u64 << (k + 1) {
                    return Err(fail(line, format!("initial value m_{} = {value} must be odd and below 2^{}", k + 1, k + 1)));
                }
                initial.push(value);
            }
            dims.push(SobolDimension { degree, poly, initial });
        }
        if dims.is_empty() {
            return Err(fail(0, "no dimensions defined".into()));
        }
        Ok(Self { dims })
    }

    pub fn dimension_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dimension(&self, dim: usize) -> Result<&SobolDimension, LowDiscError> {
        self.dims.get(dim).ok_or(LowDiscError::DimensionTooLarge {
            requested: dim + 1,
            available: self.dims.len(),
        })
    }

    /// Direction numbers of one dimension as scaled integers: entry k-1
    /// holds m_k 2^(32-k), the direction number V_k on the 2^-32 grid.
    ///
    /// Values beyond the polynomial degree follow the recurrence
    /// m_k = 2 a_1 m_{k-1} xor ... xor 2^{q-1} a_{q-1} m_{k-q+1}
    ///       xor 2^q m_{k-q} xor m_{k-q}.
    pub fn direction_integers(&self, dim: usize) -> Result<[u32; DIGITS], LowDiscError> {
        let spec = self.dimension(dim)?;
        let q = spec.degree;
        let mut m = [0u32; DIGITS];
        for k in 1..=DIGITS {
            m[k - 1] = if k <= q {
                spec.initial[k - 1]
            } else if q == 0 {
                1
            } else {
                let mut value = m[k - q - 1] ^ (m[k - q - 1] << q);
                for j in 1..q {
                    if (spec.poly >> (q - j)) & 1 == 1 {
                        value ^= m[k - j - 1] << j;
                    }
                }
                value
            };
        }
        let mut directions = [0u32; DIGITS];
        for k in 1..=DIGITS {
            directions[k - 1] = m[k - 1] << (DIGITS - k);
        }
        Ok(directions)
    }

    /// Direction numbers V_k = m_k / 2^k of one dimension, as reals.
    pub fn direction_numbers(&self, dim: usize) -> Result<Vec<f64>, LowDiscError> {
        Ok(self
            .direction_integers(dim)?
            .iter()
            .map(|&d| d as f64 * SCALE)
            .collect())
    }
}

/// Random linear scrambling plus digital shift in base 2.
///
/// Per dimension, a nonsingular lower-triangular 32x32 bit matrix L and a
/// shift vector e act on the digit expansion of each coordinate: the r-th
/// output digit is the parity of (row r of L) AND (input digits), XOR e_r.
/// Digit r corresponds to bit 32 - r of the scaled-integer representation.
#[derive(Debug, Clone)]
pub struct ScrambleSpec {
    rows: Vec<[u32; DIGITS]>,
    shifts: Vec<u32>,
}

impl ScrambleSpec {
    /// Identity matrices and zero shifts: scrambling that changes nothing.
    pub fn identity(dims: usize) -> Self {
        let mut rows = vec![[0u32; DIGITS]; dims];
        for dim_rows in rows.iter_mut() {
            for (r, row) in dim_rows.iter_mut().enumerate() {
                *row = 1 << (DIGITS - 1 - r);
            }
        }
        Self { rows, shifts: vec![0; dims] }
    }

    /// Uniformly random strictly-lower bits, unit diagonal, random shift.
    pub fn random(dims: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut rows = Vec::with_capacity(dims);
        let mut shifts = Vec::with_capacity(dims);
        for _ in 0..dims {
            let mut dim_rows = [0u32; DIGITS];
            for (r, row) in dim_rows.iter_mut().enumerate() {
                let off_diagonal = if r == 0 { 0 } else { rng.gen::<u32>() & (!0u32 << (DIGITS - r)) };
                *row = off_diagonal | 1 << (DIGITS - 1 - r);
            }
            rows.push(dim_rows);
            shifts.push(rng.gen::<u32>());
        }
        Self { rows, shifts }
    }

    pub fn dimension_count(&self) -> usize {
        self.rows.len()
    }

    pub fn shift_bits(&self, dim: usize) -> u32 {
        self.shifts[dim]
    }

    /// Matrix action alone (no shift) on a scaled-integer coordinate.
    pub fn matrix_bits(&self, dim: usize, x: u32) -> u32 {
        let mut y = 0u32;
        for (r, &row) in self.rows[dim].iter().enumerate() {
            y |= ((row & x).count_ones() & 1) << (DIGITS - 1 - r);
        }
        y
    }

    /// Full action: matrix, then digital shift.
    pub fn apply_bits(&self, dim: usize, x: u32) -> u32 {
        self.matrix_bits(dim, x) ^ self.shifts[dim]
    }
}

fn to_bits(value: f64) -> u32 {
    (value * 4294967296.0) as u32
}

/// Scramble every point of a batch. Each coordinate is truncated to 32
/// base-2 digits, mapped through the dimension's linear scramble and shift,
/// and read back as a point in [0, 1).
pub fn faure_tezuka_scramble(batch: &PointBatch, spec: &ScrambleSpec) -> Result<PointBatch, LowDiscError> {
    if spec.dimension_count() != batch.dim() {
        return Err(LowDiscError::ScrambleDimensions {
            expected: batch.dim(),
            got: spec.dimension_count(),
        });
    }
    let mut values = batch.values().clone();
    for mut row in values.rows_mut() {
        for (dim, value) in row.iter_mut().enumerate() {
            *value = spec.apply_bits(dim, to_bits(*value)) as f64 * SCALE;
        }
    }
    PointBatch::new(values)
}

/// Streaming Sobol' generator over a fixed set of leading dimensions,
/// optionally with a scramble fused into its direction numbers.
///
/// Point i is the XOR of direction numbers selected by the bits of the Gray
/// code of i, so consecutive points differ in a single direction number and
/// any aligned block of 2^k consecutive indices covers the same point set as
/// the plain binary-indexed definition.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; DIGITS]>,
    shifts: Vec<u32>,
    state: Vec<u32>,
    index: u64,
}

impl SobolSequence {
    pub fn new(params: &SobolParams, dims: usize, scramble: Option<&ScrambleSpec>) -> Result<Self, LowDiscError> {
        if dims > params.dimension_count() {
            return Err(LowDiscError::DimensionTooLarge {
                requested: dims,
                available: params.dimension_count(),
            });
        }
        if let Some(spec) = scramble {
            if spec.dimension_count() != dims {
                return Err(LowDiscError::ScrambleDimensions { expected: dims, got: spec.dimension_count() });
            }
        }
        let mut directions = Vec::with_capacity(dims);
        let mut shifts = vec![0u32; dims];
        for dim in 0..dims {
            let mut dirs = params.direction_integers(dim)?;
            if let Some(spec) = scramble {
                // The scramble matrix is linear over GF(2), so scrambling the
                // direction numbers scrambles every generated point.
                for d in dirs.iter_mut() {
                    *d = spec.matrix_bits(dim, *d);
                }
                shifts[dim] = spec.shift_bits(dim);
            }
            directions.push(dirs);
        }
        Ok(Self { directions, shifts, state: vec![0; dims], index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    fn check_index(index: u64) -> Result<(), LowDiscError> {
        if index >= 1u64 << DIGITS {
            return Err(LowDiscError::IndexRange { start: index, end: index + 1 });
        }
        Ok(())
    }

    /// Position the stream on `index`, recomputing the state directly from
    /// the Gray code of the index.
    pub fn seek(&mut self, index: u64) -> Result<(), LowDiscError> {
        Self::check_index(index)?;
        let gray = index ^ (index >> 1);
        for (dim, state) in self.state.iter_mut().enumerate() {
            let mut acc = 0u32;
            let mut bits = gray;
            while bits != 0 {
                let k = bits.trailing_zeros();
                acc ^= self.directions[dim][k as usize];
                bits &= bits - 1;
            }
            *state = acc;
        }
        self.index = index;
        Ok(())
    }

    /// Write the current point and step to the next index with a single XOR
    /// per dimension.
    pub fn next_into(&mut self, out: &mut [f64]) -> Result<(), LowDiscError> {
        Self::check_index(self.index)?;
        for dim in 0..self.state.len() {
            out[dim] = (self.state[dim] ^ self.shifts[dim]) as f64 * SCALE;
        }
        let flip = (!self.index).trailing_zeros() as usize;
        self.index += 1;
        if flip < DIGITS {
            for (dim, state) in self.state.iter_mut().enumerate() {
                *state ^= self.directions[dim][flip];
            }
        }
        Ok(())
    }

    /// Random access without touching the stream state.
    pub fn point_at(&self, index: u64, out: &mut [f64]) -> Result<(), LowDiscError> {
        Self::check_index(index)?;
        let gray = index ^ (index >> 1);
        for dim in 0..self.state.len() {
            let mut acc = 0u32;
            let mut bits = gray;
            while bits != 0 {
                let k = bits.trailing_zeros();
                acc ^= self.directions[dim][k as usize];
                bits &= bits - 1;
            }
            out[dim] = (acc ^ self.shifts[dim]) as f64 * SCALE;
        }
        Ok(())
    }
}

fn sobol_batch(
    params: &SobolParams,
    dims: usize,
    start_index: u64,
    count: usize,
    scramble: Option<&ScrambleSpec>,
) -> Result<PointBatch, LowDiscError> {
    if start_index == 0 {
        return Err(LowDiscError::ZeroStart);
    }
    if count == 0 {
        return Err(LowDiscError::EmptyBatch);
    }
    let end = start_index + count as u64;
    if end > 1u64 << DIGITS {
        return Err(LowDiscError::IndexRange { start: start_index, end });
    }
    let mut seq = SobolSequence::new(params, dims, scramble)?;
    seq.seek(start_index)?;
    let mut values = Array2::zeros((count, dims));
    for mut row in values.rows_mut() {
        seq.next_into(row.as_slice_mut().expect("row-major rows are contiguous"))?;
    }
    PointBatch::new(values)
}

/// `count` Sobol' points at indices start_index, start_index + 1, ... in the
/// first `dims` dimensions. Index 0 is the origin and is never emitted, so
/// start_index must be at least 1.
pub fn sobol_points(
    params: &SobolParams,
    dims: usize,
    start_index: u64,
    count: usize,
) -> Result<PointBatch, LowDiscError> {
    sobol_batch(params, dims, start_index, count, None)
}

/// Scrambled Sobol' points, equivalent to `sobol_points` followed by
/// `faure_tezuka_scramble` but generated in one pass through scrambled
/// direction numbers.
pub fn scrambled_sobol_points(
    params: &SobolParams,
    dims: usize,
    start_index: u64,
    count: usize,
    spec: &ScrambleSpec,
) -> Result<PointBatch, LowDiscError> {
    sobol_batch(params, dims, start_index, count, Some(spec))
}

/// Latin hypercube sample: per coordinate, one point in each stratum
/// [j/count, (j+1)/count), at a uniform position within the stratum, with an
/// independent uniform permutation tying strata to rows.
pub fn lhs_points(count: usize, dims: usize, seed: u64) -> Result<PointBatch, LowDiscError> {
    if count == 0 {
        return Err(LowDiscError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((count, dims));
    let scale = 1.0 / count as f64;
    for dim in 0..dims {
        let mut strata: Vec<u32> = (0..count as u32).collect();
        strata.shuffle(&mut rng);
        for (row, &stratum) in strata.iter().enumerate() {
            values[[row, dim]] = (stratum as f64 + rng.gen::<f64>()) * scale;
        }
    }
    PointBatch::new(values)
}

/// Latin supercube sample: concatenate per-block point sets, each with its
/// rows independently permuted, so every block keeps its own low-discrepancy
/// structure while cross-block pairings are randomized.
///
/// `source(block, block_dims, count)` supplies the points of one block.
pub fn lss_points<F>(
    dims: usize,
    block_dims: &[usize],
    count: usize,
    seed: u64,
    mut source: F,
) -> Result<PointBatch, LowDiscError>
where
    F: FnMut(usize, usize, usize) -> Result<PointBatch, LowDiscError>,
{
    if count == 0 {
        return Err(LowDiscError::EmptyBatch);
    }
    let sum: usize = block_dims.iter().sum();
    if sum != dims {
        return Err(LowDiscError::PartitionSum { sum, expected: dims });
    }
    if block_dims.iter().any(|&b| b == 0) {
        return Err(LowDiscError::EmptyBlock);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((count, dims));
    let mut offset = 0;
    for (block, &width) in block_dims.iter().enumerate() {
        let batch = source(block, width, count)?;
        if batch.count() != count || batch.dim() != width {
            return Err(LowDiscError::BatchShape {
                rows: batch.count(),
                cols: batch.dim(),
                expected_rows: count,
                expected_cols: width,
            });
        }
        let mut order: Vec<u32> = (0..count as u32).collect();
        order.shuffle(&mut rng);
        let source_values = batch.values();
        for (row, &src) in order.iter().enumerate() {
            for col in 0..width {
                values[[row, offset + col]] = source_values[[src as usize, col]];
            }
        }
        offset += width;
    }
    PointBatch::new(values)
}

/// Seeded uniform pseudorandom points, row-major draw order.
pub fn pseudorandom_points(count: usize, dims: usize, seed: u64) -> Result<PointBatch, LowDiscError> {
    if count == 0 {
        return Err(LowDiscError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((count, dims), || rng.gen::<f64>());
    PointBatch::new(values)
}
