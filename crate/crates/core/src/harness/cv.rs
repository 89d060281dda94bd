use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::VoteRule;
use crate::error::{QsvmError, Result};
use crate::pd::PdConfig;
use crate::solvers::Loss;

use super::fit::{accuracy, fit_classifier, FitOptions};
use super::Dataset;

/// Parts the non-test rows are dealt into; one becomes validation.
const INNER_PARTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub trials: usize,
    /// `C` is drawn log-uniformly from this interval.
    pub c_range: (f64, f64),
    /// Inclusive; `None` means `[1, min(2n, d)]`.
    pub k_range: Option<(usize, usize)>,
    pub seed: u64,
    /// Solver settings; `c` and `k` are replaced per trial.
    pub pd: PdConfig,
    pub vote: VoteRule,
    /// Run folds and trials on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            trials: 100,
            c_range: (1e-2, 1e2),
            k_range: None,
            seed: 0,
            pd: PdConfig::default(),
            vote: VoteRule::default(),
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.pd.loss = loss;
        self
    }

    /// Resolved inclusive `k` interval for `n` raw features.
    pub fn k_bounds(&self, n: usize) -> (usize, usize) {
        let d = n * (n + 3) / 2;
        self.k_range.unwrap_or((1, (2 * n).min(d)))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.folds < 2 {
            return Err(QsvmError::Config(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if self.trials == 0 {
            return Err(QsvmError::Config("trials must be at least 1".into()));
        }
        let (lo, hi) = self.c_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(QsvmError::Config(format!(
                "C range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        let d = n * (n + 3) / 2;
        let (klo, khi) = self.k_bounds(n);
        if klo == 0 || klo > khi || khi > d {
            return Err(QsvmError::Config(format!(
                "k range [{klo}, {khi}] must lie within [1, {d}]"
            )));
        }
        PdConfig {
            k: 1,
            ..self.pd.clone()
        }
        .validate()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Shuffles each class and deals its rows round-robin, continuing the deal
/// across classes so fold sizes differ by at most one. Rows within a part
/// are sorted.
fn deal(labels: &[String], rows: &[usize], parts: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut classes: Vec<&String> = rows.iter().map(|&i| &labels[i]).collect();
    classes.sort();
    classes.dedup();
    let mut out = vec![Vec::new(); parts];
    let mut next = 0;
    for class in classes {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&i| &labels[i] == class).collect();
        members.shuffle(rng);
        for i in members {
            out[next].push(i);
            next = (next + 1) % parts;
        }
    }
    for part in &mut out {
        part.sort_unstable();
    }
    out
}

/// Stratified assignment of all rows to `folds` test folds.
pub fn stratified_folds(labels: &[String], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(QsvmError::Config(format!(
            "folds must be at least 2, got {folds}"
        )));
    }
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    if let Some((class, &count)) = counts.iter().find(|(_, &c)| c < folds) {
        return Err(QsvmError::Stratification {
            class: class.to_string(),
            count,
            folds,
        });
    }
    let rows: Vec<usize> = (0..labels.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(deal(labels, &rows, folds, &mut rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub c: f64,
    pub k: usize,
    pub validation_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: TrialRecord,
    pub trials: Vec<TrialRecord>,
}

/// Draws `(C, k)` pairs up front so the sequence depends only on `rng`.
pub fn draw_trials(config: &ExperimentConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, usize)> {
    let (lo, hi) = config.c_range;
    let (klo, khi) = config.k_bounds(n);
    (0..config.trials)
        .map(|_| {
            let c = if lo == hi {
                lo
            } else {
                rng.random_range(lo.ln()..hi.ln()).exp()
            };
            (c, rng.random_range(klo..=khi))
        })
        .collect()
}

/// Better validation accuracy, then smaller `k`, then smaller `C`.
fn better(a: &TrialRecord, b: &TrialRecord) -> bool {
    let (Some(acc_a), Some(acc_b)) = (a.validation_accuracy, b.validation_accuracy) else {
        return a.validation_accuracy.is_some();
    };
    if acc_a != acc_b {
        return acc_a > acc_b;
    }
    if a.k != b.k {
        return a.k < b.k;
    }
    a.c < b.c
}

/// Best trial by validation accuracy; failed trials are logged and skipped.
pub fn select_best(trials: Vec<TrialRecord>) -> Result<SearchOutcome> {
    let best = trials
        .iter()
        .filter(|t| t.validation_accuracy.is_some())
        .fold(None::<&TrialRecord>, |acc, t| match acc {
            Some(b) if !better(t, b) => Some(b),
            _ => Some(t),
        })
        .cloned();
    match best {
        Some(best) => Ok(SearchOutcome { best, trials }),
        None => Err(QsvmError::SearchFailure {
            trials: trials.len(),
            log: trials
                .iter()
                .map(|t| {
                    format!(
                        "trial {} (C={}, k={}): {}",
                        t.index,
                        t.c,
                        t.k,
                        t.error.as_deref().unwrap_or("?")
                    )
                })
                .collect(),
        }),
    }
}

fn map_maybe_par<T: Sync, R: Send>(parallel: bool, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Random search over `(C, k)`, fitting on `train` and scoring on `val`.
pub fn random_search(
    train: &Dataset,
    val: &Dataset,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SearchOutcome> {
    config.validate(train.n())?;
    let draws: Vec<(usize, (f64, usize))> = draw_trials(config, train.n(), rng)
        .into_iter()
        .enumerate()
        .collect();
    let options = FitOptions {
        vote: config.vote,
        accept_unconverged: false,
    };
    let trials = map_maybe_par(config.parallel, &draws, |&(index, (c, k))| {
        let pd = PdConfig {
            c,
            k,
            ..config.pd.clone()
        };
        let result = fit_classifier(train, &pd, options).and_then(|t| accuracy(&t.classifier, val));
        match result {
            Ok(acc) => TrialRecord {
                index,
                c,
                k,
                validation_accuracy: Some(acc),
                error: None,
            },
            Err(e) => {
                log::debug!("trial {index} (C={c}, k={k}) failed: {e}");
                TrialRecord {
                    index,
                    c,
                    k,
                    validation_accuracy: None,
                    error: Some(e.to_string()),
                }
            }
        }
    });
    select_best(trials)
}

/// Random search on one stratified 75/25 split of all of `data`: the same
/// search that runs inside each cross-validation fold, without a test fold.
pub fn holdout_search(data: &Dataset, config: &ExperimentConfig) -> Result<SearchOutcome> {
    config.validate(data.n())?;
    let mut parts = stratified_folds(&data.labels, INNER_PARTS, config.seed)?;
    let validation_rows = std::mem::take(&mut parts[0]);
    let mut training_rows: Vec<usize> = parts.into_iter().flatten().collect();
    training_rows.sort_unstable();
    let mut rng = config.rng(0);
    random_search(
        &data.subset(&training_rows),
        &data.subset(&validation_rows),
        config,
        &mut rng,
    )
}

impl SearchOutcome {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial\tc\tk\tvalidation_accuracy\terror")?;
        for t in &self.trials {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                t.index,
                t.c,
                t.k,
                t.validation_accuracy.map(|a| a.to_string()).unwrap_or_default(),
                t.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ")
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_rows: Vec<usize>,
    pub training_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
    pub best_c: f64,
    pub best_k: usize,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    /// Standardization fitted on training + validation rows.
    pub fitted_mean: Vec<f64>,
    pub fitted_scale: Vec<f64>,
    pub trials: Vec<TrialRecord>,
    /// Wall-clock seconds; excluded from serialized reports.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub dataset: String,
    pub loss: Loss,
    pub seed: u64,
    pub folds: usize,
    pub trials: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `accuracies`.
    pub std: f64,
    pub fold_reports: Vec<FoldReport>,
}

/// `(mean, population std)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CVReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn write_folds_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "fold\ttest_accuracy\tvalidation_accuracy\tbest_c\tbest_k\ttest_size"
        )?;
        for f in &self.fold_reports {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                f.fold,
                f.test_accuracy,
                f.validation_accuracy,
                f.best_c,
                f.best_k,
                f.test_rows.len()
            )?;
        }
        writeln!(out, "mean\t{}\t\t\t\t", self.mean)?;
        writeln!(out, "std\t{}\t\t\t\t", self.std)
    }

    pub fn write_trials_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "fold\ttrial\tc\tk\tvalidation_accuracy\terror")?;
        for f in &self.fold_reports {
            for t in &f.trials {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    f.fold,
                    t.index,
                    t.c,
                    t.k,
                    t.validation_accuracy.map(|a| a.to_string()).unwrap_or_default(),
                    t.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ")
                )?;
            }
        }
        Ok(())
    }
}

fn complement(m: usize, rows: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; m];
    for &i in rows {
        mask[i] = false;
    }
    (0..m).filter(|&i| mask[i]).collect()
}

fn run_fold(
    data: &Dataset,
    config: &ExperimentConfig,
    fold: usize,
    test_rows: &[usize],
) -> Result<FoldReport> {
    let started = Instant::now();
    let mut rng = config.rng(fold as u64 + 1);
    let rest = complement(data.m(), test_rows);
    let mut parts = deal(&data.labels, &rest, INNER_PARTS, &mut rng);
    let validation_rows = std::mem::take(&mut parts[0]);
    let mut training_rows: Vec<usize> = parts.into_iter().flatten().collect();
    training_rows.sort_unstable();

    let search = random_search(
        &data.subset(&training_rows),
        &data.subset(&validation_rows),
        config,
        &mut rng,
    )?;
    let pd = PdConfig {
        c: search.best.c,
        k: search.best.k,
        ..config.pd.clone()
    };
    let trained = fit_classifier(
        &data.subset(&rest),
        &pd,
        FitOptions {
            vote: config.vote,
            accept_unconverged: true,
        },
    )?;
    let test_accuracy = accuracy(&trained.classifier, &data.subset(test_rows))?;
    Ok(FoldReport {
        fold,
        test_rows: test_rows.to_vec(),
        training_rows,
        validation_rows,
        best_c: search.best.c,
        best_k: search.best.k,
        validation_accuracy: search.best.validation_accuracy.unwrap_or(0.0),
        test_accuracy,
        fitted_mean: trained.standardizer.mean,
        fitted_scale: trained.standardizer.scale,
        trials: search.trials,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Stratified k-fold evaluation with a random search inside every fold.
///
/// For each test fold the remaining rows are split (stratified) into three
/// training parts and one validation part; the best `(C, k)` on validation
/// is refit on all remaining rows and scored on the test fold.
pub fn cross_validate(data: &Dataset, config: &ExperimentConfig) -> Result<CVReport> {
    config.validate(data.n())?;
    let folds = stratified_folds(&data.labels, config.folds, config.seed)?;
    let indexed: Vec<(usize, &Vec<usize>)> = folds.iter().enumerate().collect();
    let reports = map_maybe_par(config.parallel, &indexed, |&(t, rows)| {
        run_fold(data, config, t, rows)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    let (mean, std) = mean_std(&accuracies);
    Ok(CVReport {
        dataset: data.name.clone(),
        loss: config.pd.loss,
        seed: config.seed,
        folds: config.folds,
        trials: config.trials,
        accuracies,
        mean,
        std,
        fold_reports: reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub accuracy: f64,
    pub std: f64,
    /// Best accuracy over all budgets up to this `k`.
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub c: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k\taccuracy\tstd\tenvelope")?;
        for r in &self.rows {
            writeln!(out, "{}\t{}\t{}\t{}", r.k, r.accuracy, r.std, r.envelope)?;
        }
        Ok(())
    }
}

/// Cross-validated test accuracy for each budget in `ks` at fixed
/// `config.pd.c` (no search).
pub fn sweep_k(data: &Dataset, config: &ExperimentConfig, ks: &[usize]) -> Result<SweepTable> {
    config.validate(data.n())?;
    let d = data.n() * (data.n() + 3) / 2;
    if ks.is_empty() || ks.iter().any(|&k| k == 0 || k > d) {
        return Err(QsvmError::Config(format!(
            "sweep budgets must lie within [1, {d}]"
        )));
    }
    let folds = stratified_folds(&data.labels, config.folds, config.seed)?;
    let jobs: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..folds.len()).map(move |t| (k, t)))
        .collect();
    let options = FitOptions {
        vote: config.vote,
        accept_unconverged: true,
    };
    let scores = map_maybe_par(config.parallel, &jobs, |&(k, t)| {
        let pd = PdConfig {
            k,
            ..config.pd.clone()
        };
        let rest = complement(data.m(), &folds[t]);
        fit_classifier(&data.subset(&rest), &pd, options)
            .and_then(|trained| accuracy(&trained.classifier, &data.subset(&folds[t])))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(ks.len());
    let mut envelope = f64::NEG_INFINITY;
    for (i, &k) in ks.iter().enumerate() {
        let (accuracy, std) = mean_std(&scores[i * folds.len()..(i + 1) * folds.len()]);
        envelope = envelope.max(accuracy);
        rows.push(SweepRow {
            k,
            accuracy,
            std,
            envelope,
        });
    }
    Ok(SweepTable { c: config.pd.c, rows })
}
