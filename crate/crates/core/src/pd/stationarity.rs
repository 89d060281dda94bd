//! First-order certificate for the cardinality-constrained problem.
//!
//! A k-sparse `(z, c, ξ)` is stationary when, for a support `L` of size at
//! most `k` containing every nonzero of `z`, there are multipliers making
//! the Lagrangian gradient vanish on `L`:
//!
//! * hinge: `(Gz − Σ λ_i y_i r_i)_L = 0`, `Σ λ_i y_i = 0`, `λ + λ̄ = C`,
//!   `λ, λ̄ ≥ 0`, complementary slackness and primal feasibility;
//! * quadratic: `(Gz − Σ μ_i y_i r_i)_L = 0`, `Σ μ_i y_i = 0`,
//!   `μ_i = 2Cξ_i` and `y_i(zᵀr_i + c) = 1 − ξ_i`.
//!
//! `ω = Gz − Σ (multiplier)_i y_i r_i` absorbs the gradient off the support.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::quadfeat::FeatureCache;
use crate::solvers::Loss;

use super::SparseSolution;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StationarityResiduals {
    /// `max_{j∈L} |ω_j|`
    pub gradient_on_support: f64,
    /// `|Σ multiplier_i y_i|`
    pub multiplier_balance: f64,
    /// negative parts of `λ`, `λ̄` (hinge only)
    pub multiplier_sign: f64,
    /// `max |λ_i (y_i(zᵀr_i + c) + ξ_i − 1)|` (hinge only)
    pub complementarity: f64,
    /// `max |λ̄_i ξ_i|` (hinge only)
    pub slack_complementarity: f64,
    /// primal constraint violation (inequalities for hinge, equalities for ls)
    pub feasibility: f64,
    /// `max |μ_i − 2Cξ_i|` (quadratic only)
    pub multiplier_definition: f64,
    /// largest `|z_j|` outside the support
    pub off_support: f64,
}

impl StationarityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.gradient_on_support,
            self.multiplier_balance,
            self.multiplier_sign,
            self.complementarity,
            self.slack_complementarity,
            self.feasibility,
            self.multiplier_definition,
            self.off_support,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub loss: Loss,
    pub support: Vec<usize>,
    /// `λ` (hinge) or `μ` (quadratic)
    pub multipliers: DVector<f64>,
    /// `λ̄ = C − λ` (hinge only)
    pub upper_multipliers: Option<DVector<f64>>,
    /// `ω`, zeroed on the support after its residual has been measured.
    pub omega: DVector<f64>,
    pub xi: DVector<f64>,
    pub residuals: StationarityResiduals,
    pub tol: f64,
    pub is_lu_zhang: bool,
}

impl StationarityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.max()
    }
}

/// Checks the stationarity system at `solution`; never fails, only reports.
///
/// For the hinge loss the multipliers are `solution.multipliers` (the dual
/// solution of the final refit); when absent they are taken as zero.
pub fn check_lu_zhang(
    solution: &SparseSolution,
    cache: &FeatureCache,
    loss: Loss,
    c_weight: f64,
    k: usize,
    tol: f64,
) -> StationarityReport {
    let m = cache.m();
    let y = cache.labels();
    let z: &DVector<f64> = &solution.z;
    let f = cache.margins(z);
    let c = solution.c;
    let mut res = StationarityResiduals::default();

    let (multipliers, upper, xi) = match loss {
        Loss::Hinge => {
            let lambda = solution.multipliers.clone().unwrap_or_else(|| DVector::zeros(m));
            let upper = lambda.map(|l| c_weight - l);
            let xi = DVector::from_fn(m, |i, _| (1.0 - y[i] * (f[i] + c)).max(0.0));
            for i in 0..m {
                let slackened = y[i] * (f[i] + c) + xi[i] - 1.0;
                res.multiplier_sign = res
                    .multiplier_sign
                    .max((-lambda[i]).max(0.0))
                    .max((-upper[i]).max(0.0));
                res.complementarity = res.complementarity.max((lambda[i] * slackened).abs());
                res.slack_complementarity = res.slack_complementarity.max((upper[i] * xi[i]).abs());
                res.feasibility = res.feasibility.max((-slackened).max(0.0)).max((-xi[i]).max(0.0));
            }
            (lambda, Some(upper), xi)
        }
        Loss::Quadratic => {
            let xi = DVector::from_fn(m, |i, _| 1.0 - y[i] * (f[i] + c));
            let mu = xi.map(|v| 2.0 * c_weight * v);
            for i in 0..m {
                res.feasibility = res.feasibility.max((y[i] * (f[i] + c) - (1.0 - xi[i])).abs());
                if let Some(given) = &solution.multipliers {
                    res.multiplier_definition = res.multiplier_definition.max((given[i] - mu[i]).abs());
                }
            }
            (mu, None, xi)
        }
    };

    let weights = DVector::from_fn(m, |i, _| multipliers[i] * y[i]);
    let mut omega = cache.g() * z - cache.r().tr_mul(&weights);
    res.multiplier_balance = weights.sum().abs();
    let mut in_support = vec![false; z.len()];
    for &j in &solution.support {
        if j < z.len() {
            in_support[j] = true;
            res.gradient_on_support = res.gradient_on_support.max(omega[j].abs());
            omega[j] = 0.0;
        }
    }
    for (j, &inside) in in_support.iter().enumerate() {
        if !inside {
            res.off_support = res.off_support.max(z[j].abs());
        }
    }
    let oversized = solution.support.len() > k;

    StationarityReport {
        loss,
        support: solution.support.clone(),
        multipliers,
        upper_multipliers: upper,
        omega,
        xi,
        residuals: res,
        tol,
        is_lu_zhang: !oversized && res.max() <= tol,
    }
}
