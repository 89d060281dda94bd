//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::oracles::{
    brute_force_projection, contract_violations, dual_value, hinge_kkt, primal_value, training_accuracy,
};
use l0qsvm::harness::{
    accuracy, cross_validate, ellipse, fit_classifier, iris, sweep_k, ExperimentConfig, FitOptions,
};
use l0qsvm::pd::{dense_qsvm, penalty_decompose, PdConfig};
use l0qsvm::quadfeat::{duplication_matrix, elimination_matrix};
use l0qsvm::solvers::{
    hard_threshold, hinge_kkt_residuals, ls_gradient, ls_objective, recover_primal_hinge, solve_dual_qp,
    solve_ls_subproblem,
};
use l0qsvm::{FeatureCache, Loss, QsvmError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
/// Iris reports from criterion 8, reused by criterion 10.
type Reports = Vec<(Loss, String)>;
type Check = Box<dyn FnOnce(&mut Reports) -> Outcome>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn algebraic_identities() -> Outcome {
    for n in 1..=8 {
        let h = n * (n + 1) / 2;
        let prod = elimination_matrix(n).unwrap() * duplication_matrix(n).unwrap();
        ensure(prod == DMatrix::identity(h, h), || {
            format!("L·D != I for n = {n}")
        })?;
    }
    let mut rng = common::rng(1);
    let mut worst: f64 = 0.0;
    for n in [1, 2, 3, 5] {
        for _ in 0..1000 {
            let m = rng.random_range(1..=6);
            let x = common::matrix(&mut rng, m, n);
            let cache = FeatureCache::new(&x, &vec![1.0; m]).unwrap();
            let w = common::symmetric(&mut rng, n);
            let b = common::vector(&mut rng, n);
            let c: f64 = rng.random_range(-2.0..2.0);
            let z = common::packed(cache.map(), &w, &b);
            let margins = cache.margins(&z);
            let mut energy = 0.0;
            for i in 0..m {
                let xi = x.row(i).transpose();
                energy += (&w * &xi + &b).norm_squared();
                let direct = 0.5 * xi.dot(&(&w * &xi)) + b.dot(&xi) + c;
                worst = worst.max((margins[i] + c - direct).abs() / (1.0 + direct.abs()));
            }
            let quad = 0.5 * z.dot(&(cache.g() * &z));
            worst = worst.max((quad - energy).abs() / (1.0 + energy));
        }
    }
    ensure(worst <= 1e-10, || format!("identity error {worst:e}"))?;
    Ok(format!(
        "L·D = I for n ≤ 8; worst identity error {worst:.1e} over 4000 draws"
    ))
}

fn projection_oracle() -> Outcome {
    let mut rng = common::rng(2);
    let mut cases = 0;
    for d in 1..=12 {
        for _ in 0..20 {
            // half-integers force ties and zeros
            let z = DVector::from_fn(d, |_, _| rng.random_range(-4i32..=4) as f64 * 0.5);
            for k in 1..=d {
                let u = hard_threshold(&z, k).unwrap();
                let value = (&z - &u).norm_squared();
                let best = brute_force_projection(&z, k);
                ensure(u.iter().filter(|v| **v != 0.0).count() <= k, || {
                    format!("d={d} k={k}: too many nonzeros")
                })?;
                ensure((value - best).abs() <= 1e-12, || {
                    format!("d={d} k={k}: {value} vs {best}")
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} (d, k) cases match enumeration"))
}

fn hinge_subproblem() -> Outcome {
    let mut rng = common::rng(3);
    let (mut worst_gap, mut worst_kkt, mut worst_lib): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for trial in 0..50 {
        let m = rng.random_range(2..=20);
        let n = rng.random_range(1..=3);
        let rho = [0.1, 1.0, 10.0][trial % 3];
        let cw = [0.1, 1.0, 10.0][(trial / 3) % 3];
        let cache = common::surface_problem(1000 + trial as u64, m, n);
        let u = if trial % 2 == 0 {
            DVector::zeros(cache.dim())
        } else {
            common::vector(&mut rng, cache.dim())
        };
        let state = solve_dual_qp(&cache, &u, rho, cw, 1e-8).map_err(|e| e.to_string())?;
        let sol = recover_primal_hinge(&state, &cache, &u, rho, cw).map_err(|e| e.to_string())?;
        let z = sol.z.clone().into_inner();
        let primal = primal_value(&cache, &u, rho, cw, &z, sol.c);
        let gap = primal + dual_value(&cache, &u, rho, &state.alpha);
        worst_gap = worst_gap.max(gap.abs() / (1.0 + primal.abs()));
        worst_kkt = worst_kkt.max(hinge_kkt(&cache, &u, rho, cw, &sol));
        worst_lib = worst_lib.max(hinge_kkt_residuals(&sol, &cache, &u, rho, cw).max());
    }
    ensure(worst_gap <= 1e-5, || format!("relative gap {worst_gap:e}"))?;
    ensure(worst_kkt <= 1e-5 && worst_lib <= 1e-5, || {
        format!("KKT residual {worst_kkt:e} (library {worst_lib:e})")
    })?;
    Ok(format!(
        "50 instances; gap {worst_gap:.1e}, KKT {worst_kkt:.1e} (library {worst_lib:.1e})"
    ))
}

fn ls_subproblem() -> Outcome {
    let mut rng = common::rng(4);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let m = rng.random_range(3..=20);
        let n = rng.random_range(1..=3);
        let cache = common::noisy_problem(2000 + trial, m, n);
        let rho = [0.1, 1.0, 10.0][trial as usize % 3];
        let cw = rng.random_range(0.1..10.0);
        let u = common::vector(&mut rng, cache.dim());
        let sol = solve_ls_subproblem(&cache, &u, rho, cw).map_err(|e| e.to_string())?;
        let z = sol.z.clone().into_inner();
        let t = |z: &DVector<f64>, c: f64| ls_objective(&cache, &u, rho, cw, z, c);
        let h = 1e-5;
        let scale = 1.0 + t(&z, sol.c).abs();
        for j in 0..=cache.dim() {
            let (mut zp, mut zm, mut cp, mut cm) = (z.clone(), z.clone(), sol.c, sol.c);
            if j < cache.dim() {
                zp[j] += h;
                zm[j] -= h;
            } else {
                cp += h;
                cm -= h;
            }
            let fd = (t(&zp, cp) - t(&zm, cm)) / (2.0 * h);
            worst = worst.max(fd.abs() / scale);
        }
        // the analytic gradient is the one that vanishes
        let (gz, gc) = ls_gradient(&cache, &u, rho, cw, &z, sol.c);
        worst = worst.max(gz.amax().max(gc.abs()) / scale);
    }
    ensure(worst <= 1e-5, || format!("relative gradient {worst:e}"))?;
    Ok(format!("50 instances; largest relative gradient {worst:.1e}"))
}

fn pd_contract() -> Outcome {
    let mut rng = common::rng(5);
    let (mut converged, mut capped) = (0, 0);
    for run in 0..60u64 {
        let m = rng.random_range(6..=30);
        let n = rng.random_range(1..=4);
        let cache = common::surface_problem(3000 + run, m, n);
        let config = PdConfig {
            c: [0.1, 1.0, 10.0][run as usize % 3],
            k: rng.random_range(1..=cache.dim()),
            loss: if run % 2 == 0 {
                Loss::Hinge
            } else {
                Loss::Quadratic
            },
            ..PdConfig::default()
        };
        match penalty_decompose(&cache, &config) {
            Ok(out) => {
                let bad = contract_violations(&cache, &config, &out);
                ensure(bad.is_empty(), || format!("run {run}: {bad:?}"))?;
                converged += 1;
            }
            Err(QsvmError::PenaltyNotConverged { .. }) => capped += 1,
            Err(e) => return Err(format!("run {run}: {e}")),
        }
    }
    ensure(converged > 0, || "no run converged".into())?;
    Ok(format!(
        "{converged} converged runs satisfy every property ({capped} hit the outer cap)"
    ))
}

fn reduction_to_dense() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for seed in 0..6u64 {
        for loss in [Loss::Hinge, Loss::Quadratic] {
            for cw in [0.1, 1.0, 10.0] {
                let cache =
                    common::surface_problem(4000 + seed, 12 + 3 * seed as usize, 1 + seed as usize % 3);
                let config = PdConfig {
                    k: cache.dim(),
                    c: cw,
                    loss,
                    ..PdConfig::default()
                };
                let out = penalty_decompose(&cache, &config).map_err(|e| e.to_string())?;
                let (dense, objective) =
                    dense_qsvm(&cache, loss, cw, config.dual_tol).map_err(|e| e.to_string())?;
                let sparse_acc = training_accuracy(&cache, &out.solution.z, out.solution.c);
                let dense_acc = training_accuracy(&cache, &dense.z, dense.c);
                ensure(sparse_acc == dense_acc, || {
                    format!("seed {seed} {loss:?} C={cw}: accuracy {sparse_acc} vs {dense_acc}")
                })?;
                let rel = (out.objective - objective).abs() / objective.abs().max(f64::MIN_POSITIVE);
                ensure(rel <= 1e-4, || {
                    format!(
                        "seed {seed} {loss:?} C={cw}: objective {} vs {objective}",
                        out.objective
                    )
                })?;
                worst = worst.max(rel);
                runs += 1;
            }
        }
    }
    Ok(format!(
        "{runs} full-budget runs; accuracy identical, worst objective difference {worst:.1e}"
    ))
}

fn ellipse_recovery() -> Outcome {
    let (seed, c) = (1, 1000.0);
    let train = ellipse(200, 0.1, seed).map_err(|e| e.to_string())?;
    let test = ellipse(200, 0.1, seed + 1000).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for loss in [Loss::Hinge, Loss::Quadratic] {
        let config = PdConfig {
            k: 3,
            c,
            loss,
            ..PdConfig::default()
        };
        let trained = fit_classifier(&train, &config, FitOptions::default()).map_err(|e| e.to_string())?;
        let train_acc = accuracy(&trained.classifier, &train).unwrap();
        let test_acc = accuracy(&trained.classifier, &test).unwrap();
        let w = trained.classifier.models()[0].w().clone();
        let diagonal = w.diagonal().norm_squared() / w.norm_squared();
        ensure(train_acc == 1.0 && test_acc == 1.0, || {
            format!("{loss:?}: train {train_acc}, test {test_acc}")
        })?;
        ensure(diagonal >= 0.95, || {
            format!("{loss:?}: diagonal share {diagonal:.4}")
        })?;
        notes.push(format!("{loss:?} diagonal share {diagonal:.4}"));
    }
    Ok(format!("train and test accuracy 1.0; {}", notes.join(", ")))
}

fn iris_cv(reports: &mut Reports) -> Outcome {
    let data = iris();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for loss in [Loss::Hinge, Loss::Quadratic] {
        let config = ExperimentConfig {
            seed: 0,
            ..ExperimentConfig::default()
        }
        .with_loss(loss);
        let report = cross_validate(&data, &config).map_err(|e| e.to_string())?;
        notes.push(format!("{loss:?} {:.3} ± {:.3}", report.mean, report.std));
        if report.mean < 0.90 {
            failures.push(format!("{loss:?} mean {:.4} < 0.90", report.mean));
        }
        reports.push((loss, report.to_json()));
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(notes.join(", "))
}

fn sparsity_sweep() -> Outcome {
    let data = iris();
    let n = data.n();
    let ks: Vec<usize> = (1..=n * (n + 3) / 2).collect();
    let mut notes = Vec::new();
    for loss in [Loss::Hinge, Loss::Quadratic] {
        let mut config = ExperimentConfig {
            seed: 0,
            ..ExperimentConfig::default()
        }
        .with_loss(loss);
        config.pd.c = 10.0;
        let table = sweep_k(&data, &config, &ks).map_err(|e| e.to_string())?;
        let peak = table.rows.iter().map(|r| r.accuracy).fold(0.0, f64::max);
        let small = table
            .rows
            .iter()
            .find(|r| r.k <= 2 * n && r.accuracy >= peak - 0.02);
        let row = small.ok_or_else(|| format!("{loss:?}: no k ≤ {} within 0.02 of {peak:.3}", 2 * n))?;
        notes.push(format!(
            "{loss:?} k={} {:.3} vs peak {peak:.3}",
            row.k, row.accuracy
        ));
    }
    Ok(notes.join(", "))
}

fn determinism(reports: &Reports) -> Outcome {
    let data = iris();
    for (loss, first) in reports {
        let config = ExperimentConfig {
            seed: 0,
            ..ExperimentConfig::default()
        }
        .with_loss(*loss);
        let again = cross_validate(&data, &config)
            .map_err(|e| e.to_string())?
            .to_json();
        ensure(&again == first, || format!("{loss:?}: concurrent reruns differ"))?;
        let serial = ExperimentConfig {
            parallel: false,
            ..config
        };
        let serial = cross_validate(&data, &serial)
            .map_err(|e| e.to_string())?
            .to_json();
        ensure(&serial == first, || format!("{loss:?}: sequential run differs"))?;
    }
    Ok("two concurrent runs and one sequential run give identical reports for both losses".into())
}

fn main() -> ExitCode {
    let mut reports = Vec::new();
    let criteria: Vec<(&str, Duration, Check)> = vec![
        (
            "1 algebraic identities",
            Duration::from_secs(5),
            Box::new(|_| algebraic_identities()),
        ),
        (
            "2 projection oracle",
            Duration::from_secs(10),
            Box::new(|_| projection_oracle()),
        ),
        (
            "3 hinge subproblem",
            Duration::from_secs(30),
            Box::new(|_| hinge_subproblem()),
        ),
        (
            "4 least-squares subproblem",
            Duration::from_secs(10),
            Box::new(|_| ls_subproblem()),
        ),
        (
            "5 penalty loop contract",
            Duration::MAX,
            Box::new(|_| pd_contract()),
        ),
        (
            "6 full budget matches dense",
            Duration::MAX,
            Box::new(|_| reduction_to_dense()),
        ),
        (
            "7 ellipse recovery",
            Duration::from_secs(30),
            Box::new(|_| ellipse_recovery()),
        ),
        (
            "8 iris cross-validation",
            Duration::from_secs(600),
            Box::new(iris_cv),
        ),
        (
            "9 accuracy vs sparsity",
            Duration::MAX,
            Box::new(|_| sparsity_sweep()),
        ),
        (
            "10 deterministic reports",
            Duration::MAX,
            Box::new(|r| determinism(r)),
        ),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check(&mut reports);
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(note) if elapsed > budget => Err(format!("{note}; took {elapsed:.1?}, limit {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(note) => println!("PASS  {name}: {note} [{elapsed:.1?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{elapsed:.1?}]");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
