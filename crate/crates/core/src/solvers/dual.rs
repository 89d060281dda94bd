//! Hinge-loss (z, c, ξ)-step through its dual.
//!
//! The primal subproblem
//!
//! ```text
//! min ½ zᵀ(G+ρI)z − ρuᵀz + C Σ ξ_i   s.t.  y_i(zᵀr_i + c) ≥ 1 − ξ_i,  ξ ≥ 0
//! ```
//!
//! has the dual `min ½αᵀQα + pᵀα + const` over `0 ≤ α ≤ C`, `yᵀα = 0`, with
//! `Q_ij = y_i y_j r_iᵀ(G+ρI)⁻¹r_j` and `p_i = −1 + ρ y_i r_iᵀ(G+ρI)⁻¹u`.
//! It is solved with SMO (maximal violating pair, second-order selection).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{QsvmError, Result};
use crate::quadfeat::{FeatureCache, PackedParams, ShiftedGram};

// curvature floor for pairs with zero second derivative
const TAU: f64 = 1e-12;

// relative margin separating free multipliers from the box bounds
const FREE_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Stop when the maximal KKT violation over violating pairs is below this.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iterations: 100_000,
        }
    }
}

/// Dual iterate.
///
/// `objective` includes the constant `½ρ² uᵀ(G+ρI)⁻¹u`, so `−objective` is
/// the Lagrange dual value and `primal + objective` is the duality gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub alpha: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// How the offset `c` is recovered from a dual solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetRule {
    /// Average of `y_i − zᵀr_i` over free multipliers; midpoint of the
    /// KKT-feasible interval when there are none.
    #[default]
    KktAverage,
    /// `max { −zᵀr_i : y_i = 1, α_i > 0 }`, kept for comparison only.
    MaxPositiveSupport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HingeSolution {
    pub z: PackedParams,
    pub c: f64,
    pub xi: DVector<f64>,
    pub alpha: DualState,
}

/// Per-condition KKT violations of the hinge subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HingeKkt {
    pub stationarity: f64,
    pub complementarity: f64,
    pub slack_complementarity: f64,
    pub feasibility: f64,
    pub equality: f64,
    pub bounds: f64,
}

impl HingeKkt {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.complementarity,
            self.slack_complementarity,
            self.feasibility,
            self.equality,
            self.bounds,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn validate(cache: &FeatureCache, u: &DVector<f64>, rho: f64, c_weight: f64) -> Result<()> {
    if u.len() != cache.dim() {
        return Err(QsvmError::InvalidArgument(format!(
            "u has length {}, expected {}",
            u.len(),
            cache.dim()
        )));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(QsvmError::Numeric(format!(
            "penalty parameter must be positive, got {rho}"
        )));
    }
    if !(c_weight > 0.0) || !c_weight.is_finite() {
        return Err(QsvmError::InvalidArgument(format!(
            "C must be positive, got {c_weight}"
        )));
    }
    Ok(())
}

/// Solves the hinge dual at penalty `rho` towards `u`.
pub fn solve_dual_qp(
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    c_weight: f64,
    tol: f64,
) -> Result<DualState> {
    validate(cache, u, rho, c_weight)?;
    if !(tol > 0.0) {
        return Err(QsvmError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let shifted = cache.shifted(rho)?;
    let options = SmoOptions {
        tol,
        ..SmoOptions::default()
    };
    solve_dual_shifted(cache, &shifted, u, c_weight, options, None)
}

/// SMO on a prepared factorization; the penalty weight is `shifted.shift()`.
pub(crate) fn solve_dual_shifted(
    cache: &FeatureCache,
    shifted: &ShiftedGram,
    u: &DVector<f64>,
    c_weight: f64,
    options: SmoOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<DualState> {
    let m = cache.m();
    let y = cache.labels();
    let kernel = shifted.kernel();
    let rho = shifted.shift();

    // p_i = -1 + ρ y_i r_iᵀ (G+ρI)⁻¹ u
    let (linear, constant) = if rho > 0.0 && u.iter().any(|v| *v != 0.0) {
        let minv_u = shifted.solve(u);
        let ru = cache.margins(&minv_u);
        let p = DVector::from_fn(m, |i, _| -1.0 + rho * y[i] * ru[i]);
        (p, 0.5 * rho * rho * u.dot(&minv_u))
    } else {
        (DVector::from_element(m, -1.0), 0.0)
    };
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[(i, j)];

    let mut alpha = match warm_start {
        Some(a) if a.len() == m => a.map(|v| v.clamp(0.0, c_weight)),
        _ => DVector::zeros(m),
    };
    // restore yᵀα = 0 if clamping (or a change of C) broke it
    fix_equality(&mut alpha, y, c_weight);

    let mut grad = linear.clone();
    for j in 0..m {
        if alpha[j] != 0.0 {
            for i in 0..m {
                grad[i] += q(i, j) * alpha[j];
            }
        }
    }

    let upper = |a: f64| a >= c_weight;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let residual;

    loop {
        // i: maximal violator in I_up
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..m {
            let cand = if y[t] > 0.0 {
                (!upper(alpha[t])).then(|| -grad[t])
            } else {
                (!lower(alpha[t])).then_some(grad[t])
            };
            if let Some(v) = cand {
                if v >= g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        // j: second-order choice in I_low
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            let qii = kernel[(i, i)];
            for t in 0..m {
                let (in_low, score) = if y[t] > 0.0 {
                    (!lower(alpha[t]), grad[t])
                } else {
                    (!upper(alpha[t]), -grad[t])
                };
                if !in_low {
                    continue;
                }
                if score >= g_max2 {
                    g_max2 = score;
                }
                let grad_diff = g_max + score;
                if grad_diff > 0.0 {
                    // Q_ii + Q_tt - 2 y_i y_t Q_it = K_ii + K_tt - 2 K_it
                    let quad = qii + kernel[(t, t)] - 2.0 * kernel[(i, t)];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }

        let gap = if i_sel.is_some() && g_max2 > f64::NEG_INFINITY {
            (g_max + g_max2).max(0.0)
        } else {
            0.0
        };
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gap >= options.tol => (i, j),
            _ => {
                residual = gap;
                break;
            }
        };
        if iterations >= options.max_iterations {
            let objective = 0.5 * alpha.dot(&(&grad + &linear)) + constant;
            return Err(QsvmError::DualNotConverged {
                iterations,
                residual: gap,
                best: Box::new(DualState {
                    alpha,
                    objective,
                    kkt_residual: gap,
                    iterations,
                }),
            });
        }
        iterations += 1;

        let old_i = alpha[i];
        let old_j = alpha[j];
        let qij = q(i, j);
        let (qii, qjj) = (kernel[(i, i)], kernel[(j, j)]);
        let cap = c_weight;
        if y[i] != y[j] {
            let quad = qii + qjj + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > cap {
                    alpha[i] = cap;
                    alpha[j] = cap - diff;
                }
            } else if alpha[j] > cap {
                alpha[j] = cap;
                alpha[i] = cap + diff;
            }
        } else {
            let quad = qii + qjj - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > cap {
                if alpha[i] > cap {
                    alpha[i] = cap;
                    alpha[j] = sum - cap;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cap {
                if alpha[j] > cap {
                    alpha[j] = cap;
                    alpha[i] = sum - cap;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        alpha[i] = alpha[i].clamp(0.0, cap);
        alpha[j] = alpha[j].clamp(0.0, cap);

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        if di == 0.0 && dj == 0.0 {
            // no progress possible at this precision
            residual = gap;
            break;
        }
        for t in 0..m {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    fix_equality(&mut alpha, y, c_weight);
    let objective = 0.5 * alpha.dot(&(&grad + &linear)) + constant;
    Ok(DualState {
        alpha,
        objective,
        kkt_residual: residual,
        iterations,
    })
}

// Pushes Σ y_i α_i back to zero by moving the multipliers with the most room.
fn fix_equality(alpha: &mut DVector<f64>, y: &[f64], c_weight: f64) {
    for _ in 0..alpha.len() {
        let s: f64 = alpha.iter().zip(y).map(|(a, yi)| a * yi).sum();
        if s == 0.0 {
            return;
        }
        // lowering y_t α_t by s: α_t -= y_t s
        let mut best: Option<(usize, f64)> = None;
        for t in 0..alpha.len() {
            let target = alpha[t] - y[t] * s;
            let room = if target < 0.0 {
                alpha[t]
            } else if target > c_weight {
                c_weight - alpha[t]
            } else {
                f64::INFINITY
            };
            if best.is_none_or(|(_, r)| room > r) {
                best = Some((t, room));
            }
        }
        let Some((t, _)) = best else { return };
        let before = alpha[t];
        alpha[t] = (alpha[t] - y[t] * s).clamp(0.0, c_weight);
        if alpha[t] == before {
            return;
        }
    }
}

/// Recovers `(z, c, ξ)` from a dual solution of the subproblem at `(u, rho)`.
pub fn recover_primal_hinge(
    alpha: &DualState,
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    c_weight: f64,
) -> Result<HingeSolution> {
    validate(cache, u, rho, c_weight)?;
    if alpha.alpha.len() != cache.m() {
        return Err(QsvmError::InvalidArgument(format!(
            "dual vector has length {}, expected {}",
            alpha.alpha.len(),
            cache.m()
        )));
    }
    let shifted = cache.shifted(rho)?;
    recover_with(alpha, cache, &shifted, u, c_weight, OffsetRule::KktAverage)
}

pub(crate) fn recover_with(
    alpha: &DualState,
    cache: &FeatureCache,
    shifted: &ShiftedGram,
    u: &DVector<f64>,
    c_weight: f64,
    rule: OffsetRule,
) -> Result<HingeSolution> {
    let y = cache.labels();
    let a = &alpha.alpha;
    let weights = DVector::from_fn(cache.m(), |i, _| a[i] * y[i]);
    let rhs = cache.r().tr_mul(&weights) + u * shifted.shift();
    let z = shifted.solve(&rhs);
    let f = cache.margins(&z);

    let eps = FREE_MARGIN * c_weight;
    let c = match rule {
        OffsetRule::KktAverage => {
            let (sum, count) = (0..cache.m())
                .filter(|&i| a[i] > eps && a[i] < c_weight - eps)
                .fold((0.0, 0usize), |(s, n), i| (s + y[i] - f[i], n + 1));
            if count > 0 {
                sum / count as f64
            } else {
                feasible_offset_midpoint(a, y, &f, eps)
            }
        }
        OffsetRule::MaxPositiveSupport => (0..cache.m())
            .filter(|&i| y[i] > 0.0 && a[i] > 0.0)
            .map(|i| -f[i])
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v))))
            .unwrap_or(0.0),
    };
    let xi = DVector::from_fn(cache.m(), |i, _| (1.0 - y[i] * (f[i] + c)).max(0.0));
    Ok(HingeSolution {
        z: PackedParams::new(z)?,
        c,
        xi,
        alpha: alpha.clone(),
    })
}

// Offsets consistent with all multipliers at their bounds:
// α_i = 0 needs y_i(f_i + c) ≥ 1, α_i = C needs y_i(f_i + c) ≤ 1.
fn feasible_offset_midpoint(a: &DVector<f64>, y: &[f64], f: &DVector<f64>, eps: f64) -> f64 {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..a.len() {
        let at_zero = a[i] <= eps;
        let bound = y[i] - f[i];
        match (at_zero, y[i] > 0.0) {
            (true, true) | (false, false) => lo = lo.max(bound),
            (true, false) | (false, true) => hi = hi.min(bound),
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// `½ zᵀ(G+ρI)z − ρuᵀz + C Σ max(0, 1 − y_i(zᵀr_i + c))`.
pub fn hinge_primal_objective(
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    c_weight: f64,
    z: &DVector<f64>,
    c: f64,
) -> f64 {
    let quad = 0.5 * z.dot(&(cache.g() * z)) + 0.5 * rho * z.norm_squared() - rho * u.dot(z);
    let f = cache.margins(z);
    let slack: f64 = cache
        .labels()
        .iter()
        .zip(f.iter())
        .map(|(y, fi)| (1.0 - y * (fi + c)).max(0.0))
        .sum();
    quad + c_weight * slack
}

/// Evaluates the six KKT conditions of the hinge subproblem at `sol`.
pub fn hinge_kkt_residuals(
    sol: &HingeSolution,
    cache: &FeatureCache,
    u: &DVector<f64>,
    rho: f64,
    c_weight: f64,
) -> HingeKkt {
    let y = cache.labels();
    let a = &sol.alpha.alpha;
    let z: &DVector<f64> = &sol.z;
    let weights = DVector::from_fn(cache.m(), |i, _| a[i] * y[i]);
    let station = cache.g() * z + z * rho - cache.r().tr_mul(&weights) - u * rho;
    let f = cache.margins(z);
    let mut kkt = HingeKkt {
        stationarity: station.amax(),
        equality: weights.sum().abs(),
        ..HingeKkt::default()
    };
    for i in 0..cache.m() {
        let slackened = y[i] * (f[i] + sol.c) - 1.0 + sol.xi[i];
        kkt.complementarity = kkt.complementarity.max((a[i] * slackened).abs());
        kkt.slack_complementarity = kkt
            .slack_complementarity
            .max(((c_weight - a[i]) * sol.xi[i]).abs());
        kkt.feasibility = kkt.feasibility.max((-slackened).max(0.0));
        kkt.bounds = kkt
            .bounds
            .max((-sol.xi[i]).max(0.0))
            .max((-a[i]).max(0.0))
            .max((a[i] - c_weight).max(0.0));
    }
    kkt
}
