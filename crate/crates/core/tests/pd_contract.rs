mod common;

use l0qsvm::harness::{accuracy, ellipse, fit_classifier, standardize, FitOptions};
use l0qsvm::pd::{
    check_lu_zhang, dense_qsvm, feasible_point, inner_bcd, penalty_decompose, PdConfig, PdOutcome,
    STATIONARITY_TOL,
};
use l0qsvm::solvers::hard_threshold;
use l0qsvm::{FeatureCache, Loss, PackedParams, QsvmError};
use nalgebra::DVector;
use proptest::prelude::*;

fn assert_contract(cache: &FeatureCache, config: &PdConfig, out: &PdOutcome) {
    let bad = common::oracles::contract_violations(cache, config, out);
    assert!(bad.is_empty(), "{bad:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn converged_runs_honor_the_contract(
        seed in any::<u64>(),
        m in 6usize..24,
        n in 1usize..4,
        k_frac in 0.1f64..1.0,
        hinge in any::<bool>(),
        c_pick in 0usize..3,
    ) {
        let cache = common::surface_problem(seed, m, n);
        let k = ((cache.dim() as f64 * k_frac).ceil() as usize).max(1);
        let config = PdConfig {
            c: [0.1, 1.0, 10.0][c_pick],
            k,
            loss: if hinge { Loss::Hinge } else { Loss::Quadratic },
            ..PdConfig::default()
        };
        match penalty_decompose(&cache, &config) {
            Ok(out) => assert_contract(&cache, &config, &out),
            Err(QsvmError::PenaltyNotConverged { best, .. }) => {
                prop_assert!(best.model.l0_norm() <= k);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn feasible_point_objectives() {
    let cache = common::noisy_problem(1, 7, 2);
    let (z, c, value) = feasible_point(&cache, Loss::Hinge, 1.0);
    assert_eq!(z, DVector::zeros(cache.dim()));
    assert_eq!((c, value), (0.0, 7.0));
    let cache = common::noisy_problem(2, 5, 3);
    assert_eq!(feasible_point(&cache, Loss::Quadratic, 2.0).2, 10.0);
}

#[test]
fn inner_loop_ends_with_projected_z_and_fixed_points_stop_fast() {
    let cache = common::noisy_problem(3, 4, 2);
    let config = PdConfig {
        k: 2,
        c: 1.0,
        ..PdConfig::default()
    };
    let res = inner_bcd(&cache, &DVector::zeros(cache.dim()), 1.0, &config).unwrap();
    assert_eq!(res.u, hard_threshold(&res.z, 2).unwrap());

    // restarting from the converged u changes nothing
    let again = inner_bcd(&cache, &res.u, 1.0, &config).unwrap();
    assert!(res.record.inner_iterations < config.max_inner);
    assert!(
        again.record.inner_iterations <= 2,
        "{}",
        again.record.inner_iterations
    );

    let too_dense = DVector::from_element(cache.dim(), 1.0);
    assert!(matches!(
        inner_bcd(&cache, &too_dense, 1.0, &config),
        Err(QsvmError::InvalidArgument(_))
    ));
}

#[test]
fn ellipse_inner_loop_is_monotone_and_final_point_is_stationary() {
    let data = ellipse(200, 0.1, 1).unwrap();
    let (xs, _) = standardize(&data.x);
    let y: Vec<f64> = data
        .labels
        .iter()
        .map(|l| if l == "1" { 1.0 } else { -1.0 })
        .collect();
    let cache = FeatureCache::new(&xs, &y).unwrap();
    for loss in [Loss::Hinge, Loss::Quadratic] {
        let config = PdConfig {
            k: 3,
            c: 1000.0,
            loss,
            ..PdConfig::default()
        };
        let res = inner_bcd(&cache, &DVector::zeros(cache.dim()), 1.0, &config).unwrap();
        for pair in res.record.q_values.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10 * pair[0].abs());
        }
        let out = penalty_decompose(&cache, &config).unwrap();
        assert_contract(&cache, &config, &out);
    }
}

#[test]
fn corrupting_the_solution_breaks_stationarity() {
    let cache = common::surface_problem(11, 16, 2);
    let config = PdConfig {
        k: 3,
        c: 1.0,
        ..PdConfig::default()
    };
    let out = penalty_decompose(&cache, &config).unwrap();
    assert!(out.report.is_lu_zhang);
    let mut broken = out.solution.clone();
    let j = *broken.support.iter().find(|&&j| broken.z[j] != 0.0).unwrap();
    let mut z = broken.z.clone().into_inner();
    z[j] = 0.0;
    broken.z = PackedParams::new(z).unwrap();
    let report = check_lu_zhang(&broken, &cache, Loss::Hinge, 1.0, 3, STATIONARITY_TOL);
    assert!(report.residuals.gradient_on_support > STATIONARITY_TOL);
    assert!(!report.is_lu_zhang);
}

#[test]
fn full_budget_reduces_to_the_dense_problem() {
    for loss in [Loss::Hinge, Loss::Quadratic] {
        let cache = common::surface_problem(4, 20, 2);
        let d = cache.dim();
        let config = PdConfig {
            k: d,
            c: 1.0,
            loss,
            ..PdConfig::default()
        };
        let out = penalty_decompose(&cache, &config).unwrap();
        assert!(out.trace.outer.len() <= 2);
        let (dense, objective) = dense_qsvm(&cache, loss, 1.0, config.dual_tol).unwrap();
        assert!((out.objective - objective).abs() <= 1e-4 * objective.abs());
        assert!((&*out.solution.z - &*dense.z).amax() <= 1e-4 * (1.0 + dense.z.amax()));

        // an oversized budget is clamped, not rejected
        let big = penalty_decompose(
            &cache,
            &PdConfig {
                k: d + 5,
                ..config.clone()
            },
        )
        .unwrap();
        assert_eq!(big.k, d);
    }
}

#[test]
fn outer_cap_returns_last_model() {
    let cache = common::noisy_problem(8, 20, 3);
    let config = PdConfig {
        k: 2,
        max_outer: 1,
        c: 10.0,
        ..PdConfig::default()
    };
    match penalty_decompose(&cache, &config) {
        Err(QsvmError::PenaltyNotConverged { outer, gap, best }) => {
            assert_eq!(outer, 1);
            assert!(gap > config.eps_outer);
            assert!(best.model.l0_norm() <= 2);
            assert_eq!(best.trace.outer.len(), 1);
        }
        other => panic!(
            "expected non-convergence, got {:?}",
            other.map(|o| o.trace.outer.len())
        ),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let cache = common::noisy_problem(0, 4, 1);
    for bad in [
        PdConfig {
            rho0: 0.0,
            ..PdConfig::default()
        },
        PdConfig {
            beta: 1.0,
            ..PdConfig::default()
        },
        PdConfig {
            c: -1.0,
            ..PdConfig::default()
        },
        PdConfig {
            k: 0,
            ..PdConfig::default()
        },
        PdConfig {
            eps_outer: f64::NAN,
            ..PdConfig::default()
        },
    ] {
        assert!(matches!(
            penalty_decompose(&cache, &bad),
            Err(QsvmError::Config(_))
        ));
    }
}

#[test]
fn separable_blobs_are_fit_exactly() {
    let mut rng = common::rng(99);
    let m = 40;
    let mut x = common::matrix(&mut rng, m, 2) * 0.4;
    let mut labels = Vec::new();
    for i in 0..m {
        let shift = if i % 2 == 0 { 1.5 } else { -1.5 };
        x[(i, 0)] += shift;
        x[(i, 1)] += shift;
        labels.push(if i % 2 == 0 {
            "pos".to_string()
        } else {
            "neg".to_string()
        });
    }
    let data = l0qsvm::harness::Dataset::new("blobs", vec!["a".into(), "b".into()], x, labels).unwrap();
    for loss in [Loss::Hinge, Loss::Quadratic] {
        let config = PdConfig {
            k: 2,
            c: 10.0,
            loss,
            ..PdConfig::default()
        };
        let trained = fit_classifier(&data, &config, FitOptions::default()).unwrap();
        assert_eq!(accuracy(&trained.classifier, &data).unwrap(), 1.0, "{loss:?}");
    }
}

#[test]
fn trace_table_has_one_row_per_block_step() {
    let cache = common::surface_problem(5, 12, 2);
    let out = penalty_decompose(
        &cache,
        &PdConfig {
            k: 2,
            ..PdConfig::default()
        },
    )
    .unwrap();
    let mut buf = Vec::new();
    out.trace.write_tsv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let steps: usize = out.trace.outer.iter().map(|r| r.q_values.len()).sum();
    assert_eq!(text.lines().count(), steps + 1);
    assert!(text.starts_with("outer\tstep\trho\tq\tz_minus_u_inf\tsafeguard\n"));
}
