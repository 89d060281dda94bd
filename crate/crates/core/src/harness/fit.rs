use log::warn;
use nalgebra::DMatrix;

use crate::classifier::{Classifier, OvRModel, Standardizer, VoteRule};
use crate::error::{QsvmError, Result};
use crate::pd::{penalty_decompose, PdConfig, PdOutcome};
use crate::quadfeat::FeatureCache;

use super::Dataset;

/// Z-scores every column (population standard deviation). Constant columns
/// keep scale 1 and are reported with a warning.
pub fn standardize(x: &DMatrix<f64>) -> (DMatrix<f64>, Standardizer) {
    let m = x.nrows().max(1) as f64;
    let mut mean = Vec::with_capacity(x.ncols());
    let mut scale = Vec::with_capacity(x.ncols());
    for (j, col) in x.column_iter().enumerate() {
        let mu = col.sum() / m;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m;
        let sd = var.sqrt();
        mean.push(mu);
        if sd > 1e-12 * mu.abs().max(1.0) {
            scale.push(sd);
        } else {
            warn!("feature {j} has zero variance; leaving it unscaled");
            scale.push(1.0);
        }
    }
    let params = Standardizer { mean, scale };
    (params.apply_rows(x), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub vote: VoteRule,
    /// Use the model extracted from the last iterate when the outer loop
    /// hits its cap instead of failing.
    pub accept_unconverged: bool,
}

/// A trained classifier with the per-model solver outcomes.
#[derive(Debug, Clone)]
pub struct Trained {
    pub classifier: Classifier,
    /// One per binary model, in class order (one-vs-rest) or a single entry.
    pub outcomes: Vec<PdOutcome>,
    pub standardizer: Standardizer,
}

fn run(cache: &FeatureCache, config: &PdConfig, options: FitOptions) -> Result<PdOutcome> {
    match penalty_decompose(cache, config) {
        Err(QsvmError::PenaltyNotConverged { outer, gap, best }) if options.accept_unconverged => {
            warn!("penalty loop stopped after {outer} rounds with |z-u|_inf = {gap:e}; using last iterate");
            Ok(*best)
        }
        other => other,
    }
}

/// Standardizes `train`, then fits one binary model (two classes) or one
/// model per class against the rest, sharing `(C, k)` across them.
pub fn fit_classifier(train: &Dataset, config: &PdConfig, options: FitOptions) -> Result<Trained> {
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(QsvmError::InvalidData(format!(
            "training data has {} class(es); at least two are needed",
            classes.len()
        )));
    }
    let (xs, standardizer) = standardize(&train.x);
    let signs = |positive: &str| -> Vec<f64> {
        train
            .labels
            .iter()
            .map(|l| if l == positive { 1.0 } else { -1.0 })
            .collect()
    };
    let base = FeatureCache::new(&xs, &signs(&classes[classes.len() - 1]))?;
    if classes.len() == 2 {
        let outcome = run(&base, config, options)?;
        let model = outcome.model.clone().with_standardizer(standardizer.clone())?;
        return Ok(Trained {
            classifier: Classifier::Binary {
                negative: classes[0].clone(),
                positive: classes[1].clone(),
                model,
            },
            outcomes: vec![outcome],
            standardizer,
        });
    }
    let mut outcomes = Vec::with_capacity(classes.len());
    let mut models = Vec::with_capacity(classes.len());
    for class in &classes {
        let outcome = run(&base.with_labels(&signs(class))?, config, options)?;
        models.push(outcome.model.clone().with_standardizer(standardizer.clone())?);
        outcomes.push(outcome);
    }
    Ok(Trained {
        classifier: Classifier::OneVsRest(OvRModel::new(classes, models)?.with_vote(options.vote)),
        outcomes,
        standardizer,
    })
}

/// Fraction of rows of `data` classified correctly.
pub fn accuracy(classifier: &Classifier, data: &Dataset) -> Result<f64> {
    let rows: Vec<Vec<f64>> = (0..data.m()).map(|i| data.row(i)).collect();
    classifier.accuracy(
        rows.iter()
            .map(Vec::as_slice)
            .zip(data.labels.iter().map(String::as_str)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_examples() {
        let (xs, p) = standardize(&DMatrix::from_row_slice(2, 1, &[1.0, 3.0]));
        assert_eq!(p.mean, vec![2.0]);
        assert_eq!(p.scale, vec![1.0]);
        assert_eq!(xs.as_slice(), &[-1.0, 1.0]);

        let (xs, p) = standardize(&DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]));
        assert_eq!(p.scale, vec![1.0]);
        assert_eq!(xs.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn test_points_use_training_parameters() {
        let (_, p) = standardize(&DMatrix::from_row_slice(2, 1, &[1.0, 3.0]));
        assert_eq!(p.apply(&[7.0]), vec![5.0]);
    }

    #[test]
    fn single_class_is_rejected() {
        let ds = Dataset::new(
            "t",
            vec!["a".into()],
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            vec!["x".into(), "x".into()],
        )
        .unwrap();
        assert!(matches!(
            fit_classifier(&ds, &PdConfig::default(), FitOptions::default()),
            Err(QsvmError::InvalidData(_))
        ));
    }
}
