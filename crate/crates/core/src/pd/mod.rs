//! Penalty decomposition for `min objective(z, c)` s.t. `‖z‖₀ ≤ k`.
//!
//! The constraint is moved onto a copy `u` of `z` and `‖z − u‖²` is
//! penalized with weight `ρ`. For fixed `ρ`, block coordinate descent
//! alternates an exact `(z, c)` minimization (hinge dual or least-squares
//! solve) with hard thresholding of `z`. The outer loop multiplies `ρ` by
//! `β` until `‖z − u‖∞ ≤ ε_O`. A threshold `Υ` built from the all-zero
//! feasible point resets `u` whenever escalation makes the penalized
//! minimum exceed it.

mod stationarity;

pub use stationarity::{check_lu_zhang, StationarityReport, StationarityResiduals};

use std::io::Write;
use std::sync::Arc;

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::classifier::QuadraticSurfaceModel;
use crate::error::{QsvmError, Result};
use crate::quadfeat::{FeatureCache, PackedParams, ShiftedGram};
use crate::solvers::{
    hard_threshold, loss_objective, penalty_objective, recover_with, solve_dual_shifted, top_k_support, Loss,
    LsSystem, OffsetRule, SmoOptions,
};

/// Tolerance attached to the stationarity report of every fit.
pub const STATIONARITY_TOL: f64 = 1e-4;

// SMO tolerance ceiling for the final support refit
const REFIT_DUAL_TOL: f64 = 1e-9;

// ridge (relative to the largest diagonal of G) when the restricted G is singular
const REFIT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdConfig {
    /// initial penalty `ρ⁽⁰⁾ > 0`
    pub rho0: f64,
    /// penalty growth factor `β > 1`
    pub beta: f64,
    pub eps_inner: f64,
    pub eps_outer: f64,
    /// misclassification weight `C > 0`
    pub c: f64,
    /// sparsity budget on `z = [hvec(W); b]`
    pub k: usize,
    pub loss: Loss,
    pub max_outer: usize,
    pub max_inner: usize,
    pub dual_tol: f64,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            beta: 10.0,
            eps_inner: 1e-4,
            eps_outer: 1e-4,
            c: 1.0,
            k: 1,
            loss: Loss::Hinge,
            max_outer: 30,
            max_inner: 50,
            dual_tol: 1e-6,
        }
    }
}

impl PdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(QsvmError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("rho0", self.rho0)?;
        positive("eps_inner", self.eps_inner)?;
        positive("eps_outer", self.eps_outer)?;
        positive("C", self.c)?;
        positive("dual_tol", self.dual_tol)?;
        if !(self.beta > 1.0) || !self.beta.is_finite() {
            return Err(QsvmError::Config(format!(
                "beta must exceed 1, got {}",
                self.beta
            )));
        }
        if self.k == 0 {
            return Err(QsvmError::Config("k must be at least 1".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(QsvmError::Config("iteration limits must be at least 1".into()));
        }
        Ok(())
    }
}

/// One outer round of the penalty method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub rho: f64,
    pub inner_iterations: usize,
    /// `q_ρ` after every block step: `q(z₁,c₁,u₀), q(z₁,c₁,u₁), q(z₂,c₂,u₁), …`
    pub q_values: Vec<f64>,
    pub z_minus_u_inf: f64,
    /// `u` was reset to the feasible point before this round
    pub safeguard_triggered: bool,
    /// `min q_ρ(·, ·, u_prev)` compared against `Υ` before this round
    pub safeguard_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PdTrace {
    /// safeguard threshold `Υ`
    pub upsilon: f64,
    pub feasible_objective: f64,
    pub outer: Vec<OuterRecord>,
}

impl PdTrace {
    /// Tab-separated records `outer, step, rho, q, z_minus_u_inf`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "outer\tstep\trho\tq\tz_minus_u_inf\tsafeguard")?;
        for (j, rec) in self.outer.iter().enumerate() {
            for (s, q) in rec.q_values.iter().enumerate() {
                writeln!(
                    out,
                    "{j}\t{s}\t{}\t{q}\t{}\t{}",
                    rec.rho,
                    rec.z_minus_u_inf,
                    u8::from(rec.safeguard_triggered)
                )?;
            }
        }
        Ok(())
    }
}

/// A k-sparse point `(z, c)` with its support and, for the hinge loss, the
/// dual multipliers that certify it.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub z: PackedParams,
    pub c: f64,
    pub support: Vec<usize>,
    pub multipliers: Option<DVector<f64>>,
}

/// Result of [`penalty_decompose`].
#[derive(Debug, Clone)]
pub struct PdOutcome {
    pub model: QuadraticSurfaceModel,
    pub trace: PdTrace,
    pub report: StationarityReport,
    pub solution: SparseSolution,
    /// `½zᵀGz + C Σ H(·)` at `solution`
    pub objective: f64,
    /// last `z` iterate of the penalty loop, before extraction
    pub z_penalty: DVector<f64>,
    /// last `u` iterate
    pub u: DVector<f64>,
    /// effective sparsity budget (clamped to the dimension)
    pub k: usize,
}

/// Result of [`inner_bcd`].
#[derive(Debug, Clone)]
pub struct InnerResult {
    pub z: DVector<f64>,
    pub c: f64,
    pub u: DVector<f64>,
    pub record: OuterRecord,
}

/// The all-zero point `(z, c) = (0, 0)`, feasible for every `k`, and its
/// objective `C·m` (every margin is violated by exactly one).
pub fn feasible_point(cache: &FeatureCache, loss: Loss, c_weight: f64) -> (DVector<f64>, f64, f64) {
    let z = DVector::zeros(cache.dim());
    let value = loss_objective(cache, loss, c_weight, &z, 0.0);
    (z, 0.0, value)
}

// Exact (z, c)-minimizer of q_ρ(·, ·, u) for one penalty value.
enum ZStep {
    Hinge {
        shifted: Arc<ShiftedGram>,
        warm: Option<DVector<f64>>,
    },
    Quadratic(LsSystem),
}

struct ZIterate {
    z: DVector<f64>,
    c: f64,
}

impl ZStep {
    fn new(cache: &FeatureCache, loss: Loss, c_weight: f64, rho: f64) -> Result<Self> {
        Ok(match loss {
            Loss::Hinge => ZStep::Hinge {
                shifted: cache.shifted(rho)?,
                warm: None,
            },
            Loss::Quadratic => ZStep::Quadratic(LsSystem::with_shift(cache, rho, c_weight)?),
        })
    }

    fn with_warm_start(self, warm: Option<DVector<f64>>) -> Self {
        match self {
            ZStep::Hinge { shifted, .. } => ZStep::Hinge { shifted, warm },
            other => other,
        }
    }

    fn warm(&self) -> Option<DVector<f64>> {
        match self {
            ZStep::Hinge { warm, .. } => warm.clone(),
            ZStep::Quadratic(_) => None,
        }
    }

    fn solve(&mut self, cache: &FeatureCache, u: &DVector<f64>, config: &PdConfig) -> Result<ZIterate> {
        match self {
            ZStep::Hinge { shifted, warm } => {
                let options = SmoOptions {
                    tol: config.dual_tol,
                    ..SmoOptions::default()
                };
                let state = solve_dual_shifted(cache, shifted, u, config.c, options, warm.as_ref())?;
                let sol = recover_with(&state, cache, shifted, u, config.c, OffsetRule::KktAverage)?;
                *warm = Some(state.alpha);
                Ok(ZIterate {
                    z: sol.z.into_inner(),
                    c: sol.c,
                })
            }
            ZStep::Quadratic(sys) => {
                let sol = sys.solve(cache, u)?;
                Ok(ZIterate {
                    z: sol.z.into_inner(),
                    c: sol.c,
                })
            }
        }
    }
}

fn rel_change_vec(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    (new - old).amax() / new.amax().max(1.0)
}

fn rel_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / new.abs().max(1.0)
}

fn clamp_k(config: &PdConfig, dim: usize) -> usize {
    if config.k > dim {
        warn!("k = {} exceeds the parameter dimension {dim}; clamping", config.k);
        dim
    } else {
        config.k
    }
}

/// Block coordinate descent on `q_ρ` starting from `u0`.
pub fn inner_bcd(
    cache: &FeatureCache,
    u0: &DVector<f64>,
    rho: f64,
    config: &PdConfig,
) -> Result<InnerResult> {
    config.validate()?;
    if !(rho > 0.0) {
        return Err(QsvmError::Numeric(format!(
            "penalty parameter must be positive, got {rho}"
        )));
    }
    if u0.len() != cache.dim() {
        return Err(QsvmError::InvalidArgument(format!(
            "u0 has length {}, expected {}",
            u0.len(),
            cache.dim()
        )));
    }
    let k = clamp_k(config, cache.dim());
    if u0.iter().filter(|v| **v != 0.0).count() > k {
        return Err(QsvmError::InvalidArgument(format!(
            "u0 has more than {k} nonzeros"
        )));
    }
    let mut step = ZStep::new(cache, config.loss, config.c, rho)?;
    run_inner(cache, &mut step, rho, k, u0, None, None, config, 0)
}

#[allow(clippy::too_many_arguments)]
fn run_inner(
    cache: &FeatureCache,
    step: &mut ZStep,
    rho: f64,
    k: usize,
    u0: &DVector<f64>,
    mut first: Option<ZIterate>,
    reference: Option<ZIterate>,
    config: &PdConfig,
    outer: usize,
) -> Result<InnerResult> {
    let q = |z: &DVector<f64>, c: f64, u: &DVector<f64>| {
        penalty_objective(cache, config.loss, config.c, rho, z, c, u)
    };
    let mut u = u0.clone();
    let mut previous: Option<(DVector<f64>, f64, DVector<f64>)> =
        reference.as_ref().map(|r| (r.z.clone(), r.c, u0.clone()));
    let mut best = reference;
    let mut q_values = Vec::with_capacity(2 * config.max_inner);
    let mut iterations = 0;

    for l in 0..config.max_inner {
        let candidate = match first.take() {
            Some(it) => it,
            None => step.solve(cache, &u, config).map_err(|e| QsvmError::Subproblem {
                outer,
                inner: l,
                source: Box::new(e),
            })?,
        };
        // keep the previous block iterate if the (inexact) solve did not improve on it
        let mut q_z = q(&candidate.z, candidate.c, &u);
        let current = match best.take() {
            Some(prev) => {
                let q_prev = q(&prev.z, prev.c, &u);
                if q_prev < q_z {
                    q_z = q_prev;
                    prev
                } else {
                    candidate
                }
            }
            None => candidate,
        };
        q_values.push(q_z);

        let u_next = hard_threshold(&current.z, k)?;
        q_values.push(q(&current.z, current.c, &u_next));
        iterations = l + 1;

        let done = previous.as_ref().is_some_and(|(zp, cp, up)| {
            let crit = rel_change_vec(&current.z, zp)
                .max(rel_change(current.c, *cp))
                .max(rel_change_vec(&u_next, up));
            crit <= config.eps_inner
        });
        previous = Some((current.z.clone(), current.c, u_next.clone()));
        u = u_next;
        best = Some(current);
        if done {
            break;
        }
    }

    let last = best.expect("max_inner >= 1");
    Ok(InnerResult {
        record: OuterRecord {
            rho,
            inner_iterations: iterations,
            q_values,
            z_minus_u_inf: (&last.z - &u).amax(),
            safeguard_triggered: false,
            safeguard_value: None,
        },
        z: last.z,
        c: last.c,
        u,
    })
}

/// Runs the full penalty method and extracts a k-sparse model.
///
/// The returned model is built from `hard_threshold(z, k)`, with `(z, c)`
/// refit on that support without penalty, so `‖[hvec(W); b]‖₀ ≤ k` holds
/// exactly. Hitting `max_outer` yields [`QsvmError::PenaltyNotConverged`]
/// carrying the model extracted from the last iterate.
pub fn penalty_decompose(cache: &FeatureCache, config: &PdConfig) -> Result<PdOutcome> {
    config.validate()?;
    let k = clamp_k(config, cache.dim());
    let (z_feas, _, feasible_objective) = feasible_point(cache, config.loss, config.c);

    let mut rho = config.rho0;
    let mut step = ZStep::new(cache, config.loss, config.c, rho)?;
    let mut u = z_feas.clone();
    let first = step.solve(cache, &u, config).map_err(|e| QsvmError::Subproblem {
        outer: 0,
        inner: 0,
        source: Box::new(e),
    })?;
    let initial_min = penalty_objective(cache, config.loss, config.c, rho, &first.z, first.c, &u);
    let upsilon = feasible_objective.max(initial_min);

    let mut trace = PdTrace {
        upsilon,
        feasible_objective,
        outer: Vec::new(),
    };
    let mut first = Some(first);
    let mut reference: Option<ZIterate> = None;
    let mut pending_safeguard: (bool, Option<f64>) = (false, None);

    for j in 0..config.max_outer {
        let inner = run_inner(
            cache,
            &mut step,
            rho,
            k,
            &u,
            first.take(),
            reference.take(),
            config,
            j,
        )?;
        let mut record = inner.record;
        record.safeguard_triggered = pending_safeguard.0;
        record.safeguard_value = pending_safeguard.1;
        let gap = record.z_minus_u_inf;
        trace.outer.push(record);

        if gap <= config.eps_outer {
            return finish(cache, config, k, trace, inner.z, inner.u);
        }
        if j + 1 == config.max_outer {
            let best = finish(cache, config, k, trace, inner.z, inner.u)?;
            return Err(QsvmError::PenaltyNotConverged {
                outer: config.max_outer,
                gap,
                best: Box::new(best),
            });
        }

        rho *= config.beta;
        let warm = step.warm();
        step = ZStep::new(cache, config.loss, config.c, rho)?.with_warm_start(warm);
        let probe = step
            .solve(cache, &inner.u, config)
            .map_err(|e| QsvmError::Subproblem {
                outer: j + 1,
                inner: 0,
                source: Box::new(e),
            })?;
        let probe_value = penalty_objective(cache, config.loss, config.c, rho, &probe.z, probe.c, &inner.u);
        if probe_value > upsilon {
            u = z_feas.clone();
            first = None;
            // guard reference: the feasible point itself, so the first value stays below Υ
            reference = Some(ZIterate {
                z: z_feas.clone(),
                c: 0.0,
            });
            pending_safeguard = (true, Some(probe_value));
        } else {
            u = inner.u;
            first = Some(probe);
            reference = Some(ZIterate {
                z: inner.z,
                c: inner.c,
            });
            pending_safeguard = (false, Some(probe_value));
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn finish(
    cache: &FeatureCache,
    config: &PdConfig,
    k: usize,
    trace: PdTrace,
    z_penalty: DVector<f64>,
    u: DVector<f64>,
) -> Result<PdOutcome> {
    let support = top_k_support(&z_penalty, k)?;
    let solution = refit_on_support(cache, config.loss, config.c, config.dual_tol, &support)?;
    let report = check_lu_zhang(&solution, cache, config.loss, config.c, k, STATIONARITY_TOL);
    let objective = loss_objective(cache, config.loss, config.c, &solution.z, solution.c);
    let (w, b) = cache.map().unpack(&solution.z)?;
    let model = QuadraticSurfaceModel::new(w, b, solution.c, k, config.loss)?;
    Ok(PdOutcome {
        model,
        trace,
        report,
        solution,
        objective,
        z_penalty,
        u,
        k,
    })
}

/// Minimizes the unpenalized objective over `z` supported on `support`.
///
/// Uses `G_LL` directly; if it is numerically singular a tiny ridge is
/// added instead.
pub fn refit_on_support(
    cache: &FeatureCache,
    loss: Loss,
    c_weight: f64,
    dual_tol: f64,
    support: &[usize],
) -> Result<SparseSolution> {
    let sub = cache.restrict(support)?;
    let ridge = {
        let g = sub.g();
        let max_diag = (0..g.nrows()).map(|j| g[(j, j)]).fold(0.0_f64, f64::max);
        REFIT_RIDGE * max_diag.max(1.0)
    };
    let zeros = DVector::zeros(sub.dim());
    let (z_sub, c, multipliers) = match loss {
        Loss::Hinge => {
            let shifted = match sub.shifted(0.0) {
                Ok(s) => s,
                Err(QsvmError::Numeric(msg)) => {
                    warn!("restricted Gram singular ({msg}); refitting with ridge {ridge:e}");
                    sub.shifted(ridge)?
                }
                Err(e) => return Err(e),
            };
            let options = SmoOptions {
                tol: dual_tol.min(REFIT_DUAL_TOL),
                ..SmoOptions::default()
            };
            // the ridge variant penalizes towards u = 0, which leaves the dual unchanged
            let state = solve_dual_shifted(&sub, &shifted, &zeros, c_weight, options, None)?;
            let sol = recover_with(&state, &sub, &shifted, &zeros, c_weight, OffsetRule::KktAverage)?;
            (sol.z.into_inner(), sol.c, Some(state.alpha))
        }
        Loss::Quadratic => {
            let sys = match LsSystem::with_shift(&sub, 0.0, c_weight) {
                Ok(s) => s,
                Err(QsvmError::Numeric(msg)) => {
                    warn!("restricted system singular ({msg}); refitting with ridge {ridge:e}");
                    LsSystem::with_shift(&sub, ridge, c_weight)?
                }
                Err(e) => return Err(e),
            };
            let sol = sys.solve(&sub, &zeros)?;
            (sol.z.into_inner(), sol.c, None)
        }
    };
    Ok(SparseSolution {
        z: PackedParams::new(sub.embed(&z_sub))?,
        c,
        support: support.to_vec(),
        multipliers,
    })
}

/// Dense (k = d) quadratic surface SVM, solved directly without penalty.
pub fn dense_qsvm(
    cache: &FeatureCache,
    loss: Loss,
    c_weight: f64,
    dual_tol: f64,
) -> Result<(SparseSolution, f64)> {
    let support: Vec<usize> = (0..cache.dim()).collect();
    let sol = refit_on_support(cache, loss, c_weight, dual_tol, &support)?;
    let objective = loss_objective(cache, loss, c_weight, &sol.z, sol.c);
    Ok((sol, objective))
}
