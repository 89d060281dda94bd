//! Quadratic-loss (z, c)-step.
//!
//! `T(z, c) = ½ zᵀ(G+ρI)z + C ‖1 − D(Az + c1)‖² − ρuᵀz` with `A` stacking the
//! `r_iᵀ` and `D = diag(y)`. Setting its gradient to zero gives a symmetric
//! positive definite `(d+1)×(d+1)` system; with `y_i = ±1` every `D²`
//! block is the identity.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{QsvmError, Result};
use crate::quadfeat::{FeatureCache, PackedParams};

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub z: PackedParams,
    pub c: f64,
    /// `ξ_i = 1 − y_i(zᵀr_i + c)`
    pub xi: DVector<f64>,
}

/// Factorized normal equations for fixed `(ρ, C)`; only the right-hand
/// side changes with `u`.
#[derive(Debug)]
pub struct LsSystem {
    shift: f64,
    chol: Cholesky<f64, Dyn>,
    base_rhs: DVector<f64>,
}

/// Coefficient matrix with the `D² = I` simplification.
pub fn ls_system(cache: &FeatureCache, rho: f64, c_weight: f64) -> DMatrix<f64> {
    let a = cache.r();
    let (m, d) = a.shape();
    let mut sys = DMatrix::zeros(d + 1, d + 1);
    let mut top = cache.g() + a.tr_mul(a) * (2.0 * c_weight);
    for j in 0..d {
        top[(j, j)] += rho;
    }
    sys.view_mut((0, 0), (d, d)).copy_from(&top);
    let col_sums = a.row_sum().transpose() * (2.0 * c_weight);
    sys.view_mut((0, d), (d, 1)).copy_from(&col_sums);
    sys.view_mut((d, 0), (1, d)).copy_from(&col_sums.transpose());
    sys[(d, d)] = 2.0 * c_weight * m as f64;
    sys
}

/// Coefficient matrix assembled with an explicit `D = diag(y)`.
///
/// Both off-diagonal blocks carry `D²`: the `c` column is
/// `2C AᵀD²1`, which is what differentiating `T` produces.
pub fn ls_system_unsimplified(cache: &FeatureCache, rho: f64, c_weight: f64) -> DMatrix<f64> {
    let a = cache.r();
    let (m, d) = a.shape();
    let dmat = DMatrix::from_diagonal(&DVector::from_column_slice(cache.labels()));
    let d2 = &dmat * &dmat;
    let ones = DVector::from_element(m, 1.0);
    let mut shifted = cache.g().clone();
    for j in 0..d {
        shifted[(j, j)] += rho;
    }
    let top = shifted + a.transpose() * &d2 * a * (2.0 * c_weight);
    let right = a.transpose() * &d2 * &ones * (2.0 * c_weight);
    let bottom = ones.transpose() * &d2 * a * (2.0 * c_weight);
    let corner = (ones.transpose() * &d2 * &ones)[(0, 0)] * 2.0 * c_weight;
    let mut sys = DMatrix::zeros(d + 1, d + 1);
    sys.view_mut((0, 0), (d, d)).copy_from(&top);
    sys.view_mut((0, d), (d, 1)).copy_from(&right);
    sys.view_mut((d, 0), (1, d)).copy_from(&bottom);
    sys[(d, d)] = corner;
    sys
}

impl LsSystem {
    pub fn new(cache: &FeatureCache, rho: f64, c_weight: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(QsvmError::Numeric(format!(
                "penalty parameter must be positive, got {rho}"
            )));
        }
        Self::with_shift(cache, rho, c_weight)
    }

    /// Same as [`LsSystem::new`] but allows `shift = 0` (unpenalized refits).
    pub(crate) fn with_shift(cache: &FeatureCache, shift: f64, c_weight: f64) -> Result<Self> {
        if !(c_weight > 0.0) || !c_weight.is_finite() {
            return Err(QsvmError::InvalidArgument(format!(
                "C must be positive, got {c_weight}"
            )));
        }
        let sys = ls_system(cache, shift, c_weight);
        let n = sys.nrows();
        let max_diag = (0..n).map(|j| sys[(j, j)]).fold(0.0_f64, f64::max);
        let chol = Cholesky::new(sys)
            .ok_or_else(|| QsvmError::Numeric("least-squares system is not positive definite".into()))?;
        let l = chol.l_dirty();
        let min_pivot = (0..n)
            .map(|j| l[(j, j)] * l[(j, j)])
            .fold(f64::INFINITY, f64::min);
        if min_pivot <= 1e-13 * max_diag.max(1.0) {
            return Err(QsvmError::Numeric(format!(
                "least-squares system is numerically singular (pivot {min_pivot:e})"
            )));
        }
        let y = DVector::from_column_slice(cache.labels());
        let d = cache.dim();
        let mut base_rhs = DVector::zeros(d + 1);
        base_rhs
            .rows_mut(0, d)
            .copy_from(&(cache.r().tr_mul(&y) * (2.0 * c_weight)));
        base_rhs[d] = 2.0 * c_weight * y.sum();
        Ok(Self {
            shift,
            chol,
            base_rhs,
        })
    }

    pub fn solve(&self, cache: &FeatureCache, u: &DVector<f64>) -> Result<LsSolution> {
        let d = cache.dim();
        if u.len() != d || self.base_rhs.len() != d + 1 {
            return Err(QsvmError::InvalidArgument(format!(
                "u has length {}, expected {d}",
                u.len()
            )));
        }
        let mut rhs = self.base_rhs.clone();
        if self.shift > 0.0 {
            let mut top = rhs.rows_mut(0, d);
            top.axpy(self.shift, u, 1.0);
        }
        let sol = self.chol.solve(&rhs);
        let z = sol.rows(0, d).into_owned();
        let c = sol[d];
        let f = cache.margins(&z);
        let y = cache.labels();
        let xi = DVector::from_fn(cache.m(), |i, _| 1.0 - y[i] * (f[i] + c));
        Ok(LsSolution {
            z: PackedParams::new(z)?,
            c,
            xi,
        })
    }
}

/// Minimizes `T(z, c)` for the given `u`.
pub fn solve_ls_subproblem(
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    c_weight: f64,
) -> Result<LsSolution> {
    LsSystem::new(cache, rho, c_weight)?.solve(cache, u)
}

/// `T(z, c)` without the `u`-only constant.
pub fn ls_objective(
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    c_weight: f64,
    z: &DVector<f64>,
    c: f64,
) -> f64 {
    let f = cache.margins(z);
    let resid: f64 = cache
        .labels()
        .iter()
        .zip(f.iter())
        .map(|(y, fi)| (1.0 - y * (fi + c)).powi(2))
        .sum();
    0.5 * z.dot(&(cache.g() * z)) + 0.5 * rho * z.norm_squared() + c_weight * resid - rho * u.dot(z)
}

/// Analytic gradient `(∂T/∂z, ∂T/∂c)`.
pub fn ls_gradient(
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    c_weight: f64,
    z: &DVector<f64>,
    c: f64,
) -> (DVector<f64>, f64) {
    let f = cache.margins(z);
    let y = cache.labels();
    // ∂/∂(zᵀr_i + c) of C(1 − y_i(·))² is −2C y_i ξ_i
    let w = DVector::from_fn(cache.m(), |i, _| {
        -2.0 * c_weight * y[i] * (1.0 - y[i] * (f[i] + c))
    });
    let gz = cache.g() * z + z * rho - u * rho + cache.r().tr_mul(&w);
    (gz, w.sum())
}
