//! Block subproblems of the penalty method.
//!
//! * u-step: projection onto k-sparse vectors ([`hard_threshold`]).
//! * hinge (z, c, ξ)-step: dual QP solved by SMO, then primal recovery.
//! * quadratic-loss (z, c)-step: one symmetric positive definite solve.

mod dual;
mod ls;
mod threshold;

pub use dual::{
    hinge_kkt_residuals, hinge_primal_objective, recover_primal_hinge, solve_dual_qp, DualState, HingeKkt,
    HingeSolution, OffsetRule, SmoOptions,
};
pub(crate) use dual::{recover_with, solve_dual_shifted};
pub use ls::{
    ls_gradient, ls_objective, ls_system, ls_system_unsimplified, solve_ls_subproblem, LsSolution, LsSystem,
};
pub use threshold::{hard_threshold, top_k_support};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::quadfeat::FeatureCache;

/// Loss attached to the margin violations `1 - y_i (zᵀr_i + c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Loss {
    /// `max(t, 0)`
    #[serde(rename = "hinge")]
    Hinge,
    /// `t²`, least-squares variant
    #[serde(rename = "ls")]
    Quadratic,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Hinge => "hinge",
            Loss::Quadratic => "ls",
        }
    }

    pub fn apply(self, t: f64) -> f64 {
        match self {
            Loss::Hinge => t.max(0.0),
            Loss::Quadratic => t * t,
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hinge" => Ok(Loss::Hinge),
            "ls" | "quadratic" => Ok(Loss::Quadratic),
            other => Err(format!("unknown loss {other:?} (expected hinge or ls)")),
        }
    }
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `½ zᵀGz + C Σ H(1 - y_i(zᵀr_i + c))`, the sparse model's objective.
pub fn loss_objective(cache: &FeatureCache, loss: Loss, c_weight: f64, z: &DVector<f64>, c: f64) -> f64 {
    let gz = cache.g() * z;
    let f = cache.margins(z);
    let data: f64 = cache
        .labels()
        .iter()
        .zip(f.iter())
        .map(|(y, fi)| loss.apply(1.0 - y * (fi + c)))
        .sum();
    0.5 * z.dot(&gz) + c_weight * data
}

/// Penalty function `q_ρ(z, c, u) = objective + ½ρ‖z - u‖²`.
pub fn penalty_objective(
    cache: &FeatureCache,
    loss: Loss,
    c_weight: f64,
    rho: f64,
    z: &DVector<f64>,
    c: f64,
    u: &DVector<f64>,
) -> f64 {
    loss_objective(cache, loss, c_weight, z, c) + 0.5 * rho * (z - u).norm_squared()
}
