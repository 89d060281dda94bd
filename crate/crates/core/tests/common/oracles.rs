//! Reference computations written directly from the model definitions,
//! independent of the library's solver internals.

use l0qsvm::pd::{PdConfig, PdOutcome, STATIONARITY_TOL};
use l0qsvm::solvers::HingeSolution;
use l0qsvm::{FeatureCache, Loss, PackedParams};
use nalgebra::{DMatrix, DVector};

/// `min ‖z − u‖²` over every support of size `k`, by enumeration.
pub fn brute_force_projection(z: &DVector<f64>, k: usize) -> f64 {
    let d = z.len();
    let total: f64 = z.iter().map(|v| v * v).sum();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << d) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let kept: f64 = (0..d).filter(|j| mask & (1 << j) != 0).map(|j| z[j] * z[j]).sum();
        best = best.min(total - kept);
    }
    best
}

/// Dual objective evaluated from scratch with an explicit inverse.
pub fn dual_value(cache: &FeatureCache, u: &DVector<f64>, rho: f64, alpha: &DVector<f64>) -> f64 {
    let d = cache.dim();
    let minv = (cache.g() + DMatrix::identity(d, d) * rho).try_inverse().unwrap();
    let y = DVector::from_column_slice(cache.labels());
    let v = cache.r().tr_mul(&alpha.component_mul(&y));
    let s = &v + u * rho;
    // −min_z L(z, c, ξ; α) for the hinge subproblem
    0.5 * s.dot(&(&minv * &s)) - alpha.sum()
}

/// `½zᵀ(G+ρI)z − ρuᵀz + C Σ max(0, 1 − y(zᵀr + c))`, written out directly.
pub fn primal_value(
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    cw: f64,
    z: &DVector<f64>,
    c: f64,
) -> f64 {
    let x = cache.x();
    let (w, b) = cache
        .map()
        .unpack(&PackedParams::new(z.clone()).unwrap())
        .unwrap();
    let mut energy = 0.0;
    let mut hinge = 0.0;
    for i in 0..cache.m() {
        let xi = x.row(i).transpose();
        energy += (&w * &xi + &b).norm_squared();
        let f = 0.5 * xi.dot(&(&w * &xi)) + b.dot(&xi) + c;
        hinge += (1.0 - cache.labels()[i] * f).max(0.0);
    }
    energy + 0.5 * rho * z.norm_squared() - rho * u.dot(z) + cw * hinge
}

/// Fraction of training points whose sign of `zᵀr + c` (zero counted as
/// positive) matches the label.
pub fn training_accuracy(cache: &FeatureCache, z: &DVector<f64>, c: f64) -> f64 {
    let x = cache.x();
    let (w, b) = cache
        .map()
        .unpack(&PackedParams::new(z.clone()).unwrap())
        .unwrap();
    let hits = (0..cache.m())
        .filter(|&i| {
            let xi = x.row(i).transpose();
            let f = 0.5 * xi.dot(&(&w * &xi)) + b.dot(&xi) + c;
            (if f >= 0.0 { 1.0 } else { -1.0 }) == cache.labels()[i]
        })
        .count();
    hits as f64 / cache.m() as f64
}

/// Every documented property of a converged run; empty when all hold.
pub fn contract_violations(cache: &FeatureCache, config: &PdConfig, out: &PdOutcome) -> Vec<String> {
    let mut bad = Vec::new();
    let last = out.trace.outer.last().unwrap();
    if last.z_minus_u_inf > config.eps_outer {
        bad.push(format!(
            "|z-u|_inf = {:e} > {:e}",
            last.z_minus_u_inf, config.eps_outer
        ));
    }
    let nonzeros = out.model.packed().iter().filter(|v| **v != 0.0).count();
    if nonzeros > out.k || out.model.l0_norm() > out.k {
        bad.push(format!("{nonzeros} nonzeros with budget {}", out.k));
    }
    if out.u.iter().filter(|v| **v != 0.0).count() > out.k {
        bad.push("projected iterate exceeds the budget".into());
    }
    for (j, rec) in out.trace.outer.iter().enumerate() {
        if rec.rho != config.rho0 * config.beta.powi(j as i32) {
            bad.push(format!("outer {j}: rho {} is not rho0*beta^{j}", rec.rho));
        }
        for pair in rec.q_values.windows(2) {
            if pair[1] > pair[0] + 1e-10 * (1.0 + pair[0].abs()) {
                bad.push(format!("outer {j}: q rose from {} to {}", pair[0], pair[1]));
            }
        }
        if rec.safeguard_triggered && rec.q_values[0] > out.trace.upsilon + 1e-10 {
            bad.push(format!("outer {j}: safeguarded start above the cap"));
        }
    }
    if config.loss == Loss::Hinge && out.trace.upsilon < config.c * cache.m() as f64 - 1e-12 {
        bad.push("cap below the feasible hinge value".into());
    }
    if out.report.max_residual() > STATIONARITY_TOL || !out.report.is_lu_zhang {
        bad.push(format!("stationarity residuals {:?}", out.report.residuals));
    }
    bad
}

/// Largest violation among the hinge subproblem's optimality conditions:
/// gradient balance in `z`, `Σ αᵢyᵢ = 0`, `0 ≤ α ≤ C`, margin feasibility
/// `ξᵢ ≥ max(0, 1 − yᵢfᵢ)` and both complementary-slackness products.
/// Each term is relative to the size of the quantities it compares.
pub fn hinge_kkt(cache: &FeatureCache, u: &DVector<f64>, rho: f64, cw: f64, sol: &HingeSolution) -> f64 {
    let (z, c, xi, alpha) = (&*sol.z, sol.c, &sol.xi, &sol.alpha.alpha);
    let d = cache.dim();
    let y = DVector::from_column_slice(cache.labels());
    let pull = cache.r().tr_mul(&alpha.component_mul(&y));
    let lhs = (cache.g() + DMatrix::identity(d, d) * rho) * z;
    let rhs = u * rho + &pull;
    let stationarity = (&lhs - &rhs).amax() / (1.0 + lhs.amax().max(rhs.amax()));
    let equality = alpha.dot(&y).abs() / (1.0 + alpha.amax());
    let bounds = alpha
        .iter()
        .map(|a| (-a).max(a - cw).max(0.0))
        .fold(0.0, f64::max)
        / (1.0 + cw);
    let f = cache.r() * z + DVector::from_element(cache.m(), c);
    let mut worst = stationarity.max(equality).max(bounds);
    for i in 0..cache.m() {
        let slack = 1.0 - y[i] * f[i];
        let scale = 1.0 + f[i].abs();
        worst = worst
            .max((slack - xi[i]).max(-xi[i]).max(0.0) / scale)
            .max((alpha[i] * (slack - xi[i])).abs() / (scale * (1.0 + cw)))
            .max(((cw - alpha[i]) * xi[i]).abs() / (scale * (1.0 + cw)));
    }
    worst
}
