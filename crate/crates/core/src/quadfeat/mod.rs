//! Symmetric-matrix vectorization for quadratic surface models.
//!
//! A quadratic surface `f(x) = ½ xᵀWx + bᵀx + c` with symmetric `W` is
//! linear in the stacked parameter vector `z = [hvec(W); b]`, where `hvec`
//! stacks the lower triangle column by column (`a11, …, an1, a22, …, ann`).
//! Everything downstream (penalty subproblems, projections, stationarity
//! checks) works on `z`; this module owns the index bookkeeping and the
//! per-dataset precomputation in [`FeatureCache`].

mod cache;

pub use cache::{FeatureCache, ShiftedGram, MAX_FEATURES};

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{QsvmError, Result};

/// Absolute tolerance used when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Index bookkeeping between a symmetric `n×n` matrix and `hvec` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymIndexMap {
    n: usize,
    pairs: Vec<(usize, usize)>,
    // n*n lookup, column-major, both triangles point at the same slot
    slots: Vec<usize>,
}

impl SymIndexMap {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(QsvmError::InvalidArgument(
                "feature count must be at least 1".into(),
            ));
        }
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        let mut slots = vec![0; n * n];
        for col in 0..n {
            for row in col..n {
                let idx = pairs.len();
                slots[row + col * n] = idx;
                slots[col + row * n] = idx;
                pairs.push((row, col));
            }
        }
        Ok(Self { n, pairs, slots })
    }

    /// Number of original features.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Length of `hvec(W)`, `n(n+1)/2`.
    pub fn hvec_len(&self) -> usize {
        self.pairs.len()
    }

    /// Length of `z = [hvec(W); b]`.
    pub fn dim(&self) -> usize {
        self.pairs.len() + self.n
    }

    /// `(row, col)` pairs with `row >= col`, in `hvec` order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Position of entry `(row, col)` (either triangle) inside `hvec`.
    pub fn slot(&self, row: usize, col: usize) -> usize {
        self.slots[row + col * self.n]
    }

    /// Human-readable name of coordinate `j` of `z`: `W[r,c]` or `b[i]` (1-based).
    pub fn coordinate_name(&self, j: usize) -> String {
        if j < self.hvec_len() {
            let (r, c) = self.pairs[j];
            format!("W[{},{}]", r + 1, c + 1)
        } else {
            format!("b[{}]", j - self.hvec_len() + 1)
        }
    }

    /// Original features touched by coordinate `j` of `z`.
    pub fn features_of(&self, j: usize) -> Vec<usize> {
        if j < self.hvec_len() {
            let (r, c) = self.pairs[j];
            if r == c {
                vec![r]
            } else {
                vec![c, r]
            }
        } else {
            vec![j - self.hvec_len()]
        }
    }

    pub fn pack(&self, w: &DMatrix<f64>, b: &DVector<f64>) -> Result<PackedParams> {
        if w.nrows() != self.n || w.ncols() != self.n || b.len() != self.n {
            return Err(QsvmError::InvalidArgument(format!(
                "expected W {n}x{n} and b of length {n}, got W {}x{} and b of length {}",
                w.nrows(),
                w.ncols(),
                b.len(),
                n = self.n
            )));
        }
        let h = hvec(w)?;
        let mut z = DVector::zeros(self.dim());
        z.rows_mut(0, self.hvec_len()).copy_from(&h);
        z.rows_mut(self.hvec_len(), self.n).copy_from(b);
        Ok(PackedParams(z))
    }

    pub fn unpack(&self, z: &PackedParams) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if z.len() != self.dim() {
            return Err(QsvmError::InvalidArgument(format!(
                "packed vector has length {}, expected {}",
                z.len(),
                self.dim()
            )));
        }
        let mut w = DMatrix::zeros(self.n, self.n);
        for (idx, &(r, c)) in self.pairs.iter().enumerate() {
            w[(r, c)] = z[idx];
            w[(c, r)] = z[idx];
        }
        let b = z.rows(self.hvec_len(), self.n).into_owned();
        Ok((w, b))
    }
}

/// Stacked parameter vector `z = [hvec(W); b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedParams(DVector<f64>);

impl PackedParams {
    pub fn new(z: DVector<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(QsvmError::Numeric(
                "packed parameters contain non-finite entries".into(),
            ));
        }
        Ok(Self(z))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Number of nonzero entries.
    pub fn l0_norm(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

impl Deref for PackedParams {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(QsvmError::InvalidArgument(format!(
            "matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    for c in 0..n {
        for r in (c + 1)..n {
            if (a[(r, c)] - a[(c, r)]).abs() > SYMMETRY_TOL {
                return Err(QsvmError::InvalidArgument(format!(
                    "matrix is not symmetric at ({r}, {c})"
                )));
            }
        }
    }
    Ok(n)
}

/// Half-vectorization: lower triangle stacked column by column.
pub fn hvec(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = check_symmetric(a)?;
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for c in 0..n {
        for r in c..n {
            out.push(a[(r, c)]);
        }
    }
    Ok(DVector::from_vec(out))
}

/// Column-stacked vectorization `vec(A)`.
pub fn vectorize(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Duplication matrix `D_n` (`n² × n(n+1)/2`): `D_n hvec(A) = vec(A)`.
///
/// Only meant for small `n`; production code never materializes it.
pub fn duplication_matrix(n: usize) -> Result<DMatrix<f64>> {
    let map = SymIndexMap::new(n)?;
    let mut d = DMatrix::zeros(n * n, map.hvec_len());
    for c in 0..n {
        for r in 0..n {
            d[(r + c * n, map.slot(r, c))] = 1.0;
        }
    }
    Ok(d)
}

/// Elimination matrix `L_n` (`n(n+1)/2 × n²`): `L_n vec(A) = hvec(A)`.
pub fn elimination_matrix(n: usize) -> Result<DMatrix<f64>> {
    let map = SymIndexMap::new(n)?;
    let mut l = DMatrix::zeros(map.hvec_len(), n * n);
    for (idx, &(r, c)) in map.pairs().iter().enumerate() {
        l[(idx, r + c * n)] = 1.0;
    }
    Ok(l)
}
