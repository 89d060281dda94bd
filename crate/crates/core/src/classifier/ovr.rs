use serde::{Deserialize, Serialize};

use crate::error::{QsvmError, Result};

use super::QuadraticSurfaceModel;

/// How per-class decision values are combined into one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteRule {
    /// Class with the largest decision value.
    #[default]
    Argmax,
    /// A nonnegative model votes for its class, a negative one votes for
    /// every other class; ties fall back to the largest decision value.
    SignMajority,
}

/// One binary model per class, each trained as "class vs rest".
#[derive(Debug, Clone, PartialEq)]
pub struct OvRModel {
    classes: Vec<String>,
    models: Vec<QuadraticSurfaceModel>,
    vote: VoteRule,
}

impl OvRModel {
    pub fn new(classes: Vec<String>, models: Vec<QuadraticSurfaceModel>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(QsvmError::InvalidArgument(
                "one-vs-rest needs at least two classes".into(),
            ));
        }
        if classes.len() != models.len() {
            return Err(QsvmError::InvalidArgument(format!(
                "{} classes but {} models",
                classes.len(),
                models.len()
            )));
        }
        let n = models[0].n();
        if models.iter().any(|m| m.n() != n) {
            return Err(QsvmError::InvalidArgument(
                "per-class models disagree on feature count".into(),
            ));
        }
        Ok(Self {
            classes,
            models,
            vote: VoteRule::default(),
        })
    }

    pub fn with_vote(mut self, vote: VoteRule) -> Self {
        self.vote = vote;
        self
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn models(&self) -> &[QuadraticSurfaceModel] {
        &self.models
    }

    pub fn vote(&self) -> VoteRule {
        self.vote
    }

    pub fn n(&self) -> usize {
        self.models[0].n()
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.decision_value(x)).collect()
    }

    /// Index into [`OvRModel::classes`] of the predicted class.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let f = self.decision_values(x)?;
        Ok(match self.vote {
            VoteRule::Argmax => argmax(&f, |_| true),
            VoteRule::SignMajority => {
                let k = f.len();
                let mut votes = vec![0usize; k];
                for (j, &v) in f.iter().enumerate() {
                    if v >= 0.0 {
                        votes[j] += 1;
                    } else {
                        for (other, count) in votes.iter_mut().enumerate() {
                            if other != j {
                                *count += 1;
                            }
                        }
                    }
                }
                let top = *votes.iter().max().expect("at least two classes");
                argmax(&f, |j| votes[j] == top)
            }
        })
    }

    pub fn predict_multi(&self, x: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict_index(x)?])
    }
}

/// First index with the largest value among `eligible` ones.
fn argmax(f: &[f64], eligible: impl Fn(usize) -> bool) -> usize {
    let mut best: Option<usize> = None;
    for (j, &v) in f.iter().enumerate() {
        if eligible(j) && best.is_none_or(|b| v > f[b]) {
            best = Some(j);
        }
    }
    best.unwrap_or(0)
}

/// A trained classifier over string class labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    /// `model ≥ 0` predicts `positive`.
    Binary {
        negative: String,
        positive: String,
        model: QuadraticSurfaceModel,
    },
    OneVsRest(OvRModel),
}

impl Classifier {
    pub fn classes(&self) -> Vec<String> {
        match self {
            Classifier::Binary {
                negative, positive, ..
            } => vec![negative.clone(), positive.clone()],
            Classifier::OneVsRest(ovr) => ovr.classes().to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Classifier::Binary { model, .. } => model.n(),
            Classifier::OneVsRest(ovr) => ovr.n(),
        }
    }

    pub fn models(&self) -> Vec<&QuadraticSurfaceModel> {
        match self {
            Classifier::Binary { model, .. } => vec![model],
            Classifier::OneVsRest(ovr) => ovr.models().iter().collect(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        match self {
            Classifier::Binary {
                negative,
                positive,
                model,
            } => Ok(if model.predict(x)? > 0.0 {
                positive
            } else {
                negative
            }),
            Classifier::OneVsRest(ovr) => ovr.predict_multi(x),
        }
    }

    /// Fraction of rows whose prediction equals the given label.
    pub fn accuracy<'a>(&self, rows: impl IntoIterator<Item = (&'a [f64], &'a str)>) -> Result<f64> {
        let mut total = 0usize;
        let mut hits = 0usize;
        for (x, label) in rows {
            total += 1;
            if self.predict(x)? == label {
                hits += 1;
            }
        }
        if total == 0 {
            return Err(QsvmError::InvalidData("accuracy of an empty set".into()));
        }
        Ok(hits as f64 / total as f64)
    }
}
