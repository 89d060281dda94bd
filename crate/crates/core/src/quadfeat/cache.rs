use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::SymIndexMap;
use crate::error::{QsvmError, Result};

/// Largest feature count accepted; `G` is dense `d×d` with `d = n(n+1)/2 + n`.
pub const MAX_FEATURES: usize = 60;

// Shifted factorizations kept per dataset; one per distinct shift.
const SHIFT_CACHE_CAPACITY: usize = 48;

// Relative pivot floor for treating a Cholesky factor as singular.
const PIVOT_FLOOR: f64 = 1e-13;

/// Per-dataset precomputation shared by every solver.
///
/// Holds the lifted samples `r_i = [s_i; x_i]` (rows of `r`), the PSD
/// matrix `G` with `½ zᵀGz = Σ ‖W x_i + b‖²`, the labels, and a cache of
/// factorizations of `G + ρI`. The geometric part is reference counted so
/// [`FeatureCache::with_labels`] can relabel the same data (one-vs-rest)
/// without recomputing `G` or its factorizations.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    design: Arc<Design>,
    labels: Vec<f64>,
}

#[derive(Debug)]
struct Design {
    map: SymIndexMap,
    x: DMatrix<f64>,
    // coordinates of the full z represented by the columns of r and g
    columns: Vec<usize>,
    r: DMatrix<f64>,
    g: DMatrix<f64>,
    shifted: Mutex<Vec<Arc<ShiftedGram>>>,
}

/// Cholesky factor of `G + shift·I` together with the label-free kernel
/// `K = R (G + shift·I)⁻¹ Rᵀ` used by the hinge dual.
#[derive(Debug)]
pub struct ShiftedGram {
    shift: f64,
    chol: Cholesky<f64, Dyn>,
    kernel: DMatrix<f64>,
}

impl ShiftedGram {
    fn new(r: &DMatrix<f64>, g: &DMatrix<f64>, shift: f64) -> Result<Self> {
        let d = g.nrows();
        let mut shifted = g.clone();
        for j in 0..d {
            shifted[(j, j)] += shift;
        }
        let max_diag = (0..d).map(|j| shifted[(j, j)]).fold(0.0_f64, f64::max);
        let chol = Cholesky::new(shifted)
            .ok_or_else(|| QsvmError::Numeric(format!("G + {shift}·I is not positive definite")))?;
        let l = chol.l_dirty();
        let min_pivot = (0..d)
            .map(|j| l[(j, j)] * l[(j, j)])
            .fold(f64::INFINITY, f64::min);
        if d > 0 && min_pivot <= PIVOT_FLOOR * max_diag.max(1.0) {
            return Err(QsvmError::Numeric(format!(
                "G + {shift}·I is numerically singular (pivot {min_pivot:e})"
            )));
        }
        let solved = chol.solve(&r.transpose());
        let kernel = r * solved;
        // symmetrize away rounding so the dual Hessian is exactly symmetric
        let kernel = (&kernel + kernel.transpose()) * 0.5;
        Ok(Self { shift, chol, kernel })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Solves `(G + shift·I) v = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `K_ij = r_iᵀ (G + shift·I)⁻¹ r_j`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }
}

fn check_labels(y: &[f64], m: usize) -> Result<()> {
    if y.len() != m {
        return Err(QsvmError::InvalidArgument(format!(
            "{} labels for {m} samples",
            y.len()
        )));
    }
    for (index, &label) in y.iter().enumerate() {
        if label != 1.0 && label != -1.0 {
            return Err(QsvmError::InvalidLabel { index, label });
        }
    }
    Ok(())
}

impl FeatureCache {
    /// Builds `r_i` and `G` for the rows of `x` (`m×n`) with labels in `{-1, +1}`.
    ///
    /// The quadratic block of `r_i` holds `½x_j²` on diagonal pairs and
    /// `x_j x_k` on off-diagonal pairs, so that `wᵀs_i = ½ x_iᵀ W x_i`.
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (m, n) = x.shape();
        if m == 0 || n == 0 {
            return Err(QsvmError::InvalidData(format!(
                "need at least one sample and one feature, got {m}x{n}"
            )));
        }
        if n > MAX_FEATURES {
            return Err(QsvmError::InvalidData(format!(
                "{n} features exceed the dense limit of {MAX_FEATURES} (G would be {d}x{d})",
                d = n * (n + 1) / 2 + n
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(QsvmError::InvalidData(format!(
                "non-finite feature at sample {}, feature {}",
                pos % m,
                pos / m
            )));
        }
        check_labels(y, m)?;

        let map = SymIndexMap::new(n)?;
        let hlen = map.hvec_len();
        let d = map.dim();
        let mut r = DMatrix::zeros(m, d);
        let mut g = DMatrix::zeros(d, d);
        let mut row_entries: Vec<(usize, f64)> = Vec::with_capacity(n + 1);

        for i in 0..m {
            for (idx, &(a, b)) in map.pairs().iter().enumerate() {
                let v = if a == b {
                    0.5 * x[(i, a)] * x[(i, a)]
                } else {
                    x[(i, a)] * x[(i, b)]
                };
                r[(i, idx)] = v;
            }
            for j in 0..n {
                r[(i, hlen + j)] = x[(i, j)];
            }
            // row p of H_i: (W x_i)_p = Σ_q W_pq x_q, plus b_p
            for p in 0..n {
                row_entries.clear();
                for q in 0..n {
                    row_entries.push((map.slot(p, q), x[(i, q)]));
                }
                row_entries.push((hlen + p, 1.0));
                for &(a, va) in &row_entries {
                    for &(b, vb) in &row_entries {
                        g[(a, b)] += 2.0 * va * vb;
                    }
                }
            }
        }

        Ok(Self {
            design: Arc::new(Design {
                map,
                x: x.clone(),
                columns: (0..d).collect(),
                r,
                g,
                shifted: Mutex::new(Vec::new()),
            }),
            labels: y.to_vec(),
        })
    }

    /// Same geometry, different labels; shares `G` and cached factorizations.
    pub fn with_labels(&self, y: &[f64]) -> Result<Self> {
        check_labels(y, self.m())?;
        Ok(Self {
            design: Arc::clone(&self.design),
            labels: y.to_vec(),
        })
    }

    /// Restricts the problem to a subset of `z` coordinates (indices into
    /// the current coordinates). The result has its own factorization cache.
    pub fn restrict(&self, coords: &[usize]) -> Result<Self> {
        if let Some(&bad) = coords.iter().find(|&&j| j >= self.dim()) {
            return Err(QsvmError::InvalidArgument(format!(
                "coordinate {bad} out of range for dimension {}",
                self.dim()
            )));
        }
        let design = &self.design;
        Ok(Self {
            design: Arc::new(Design {
                map: design.map.clone(),
                x: design.x.clone(),
                columns: coords.iter().map(|&j| design.columns[j]).collect(),
                r: design.r.select_columns(coords),
                g: design.g.select_rows(coords).select_columns(coords),
                shifted: Mutex::new(Vec::new()),
            }),
            labels: self.labels.clone(),
        })
    }

    pub fn m(&self) -> usize {
        self.design.r.nrows()
    }

    /// Number of coordinates of `z` handled by this cache.
    pub fn dim(&self) -> usize {
        self.design.r.ncols()
    }

    pub fn map(&self) -> &SymIndexMap {
        &self.design.map
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.design.x
    }

    /// Lifted samples, one `r_i` per row.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.design.r
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.design.g
    }

    /// Full-`z` coordinates represented here (identity unless restricted).
    pub fn columns(&self) -> &[usize] {
        &self.design.columns
    }

    /// Scatters a restricted vector back into a full-length `z`.
    pub fn embed(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.design.map.dim());
        for (k, &j) in self.design.columns.iter().enumerate() {
            full[j] = z[k];
        }
        full
    }

    /// `zᵀ r_i` for every sample.
    pub fn margins(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.design.r * z
    }

    /// `H_i` (`n×d`) with `H_i z = W x_i + b`; full coordinates only.
    pub fn h_matrix(&self, i: usize) -> DMatrix<f64> {
        let map = &self.design.map;
        let n = map.n();
        let mut h = DMatrix::zeros(n, map.dim());
        for p in 0..n {
            for q in 0..n {
                h[(p, map.slot(p, q))] += self.design.x[(i, q)];
            }
            h[(p, map.hvec_len() + p)] = 1.0;
        }
        h
    }

    /// Factorization of `G + shift·I`, computed on first use and cached.
    ///
    /// `shift = 0` is allowed here (unpenalized refits); it fails with a
    /// numeric error when `G` is singular.
    pub fn shifted(&self, shift: f64) -> Result<Arc<ShiftedGram>> {
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(QsvmError::Numeric(format!("invalid shift {shift}")));
        }
        {
            let cache = self.design.shifted.lock().expect("shift cache poisoned");
            if let Some(hit) = cache.iter().find(|s| s.shift.to_bits() == shift.to_bits()) {
                return Ok(Arc::clone(hit));
            }
        }
        let fresh = Arc::new(ShiftedGram::new(&self.design.r, &self.design.g, shift)?);
        let mut cache = self.design.shifted.lock().expect("shift cache poisoned");
        if let Some(hit) = cache.iter().find(|s| s.shift.to_bits() == shift.to_bits()) {
            return Ok(Arc::clone(hit));
        }
        if cache.len() >= SHIFT_CACHE_CAPACITY {
            cache.remove(0);
        }
        cache.push(Arc::clone(&fresh));
        Ok(fresh)
    }
}
