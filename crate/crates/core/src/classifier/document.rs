//! Versioned JSON documents for trained models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QsvmError, Result};
use crate::solvers::Loss;

use super::{Classifier, OvRModel, QuadraticSurfaceModel, Standardizer, VoteRule};

pub const DOCUMENT_VERSION: u64 = 1;

/// One binary model. `W` holds the lower triangle row by row:
/// `W[0,0], W[1,0], W[1,1], W[2,0], …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u64,
    pub n: usize,
    pub k: usize,
    pub loss: Loss,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Binary,
    OneVsRest,
}

/// A full classifier: class labels plus one model document per binary model.
/// For `binary`, `classes = [negative, positive]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierDocument {
    pub version: u64,
    pub kind: ClassifierKind,
    pub classes: Vec<String>,
    #[serde(default)]
    pub vote: VoteRule,
    pub models: Vec<ModelDocument>,
}

impl From<&QuadraticSurfaceModel> for ModelDocument {
    fn from(model: &QuadraticSurfaceModel) -> Self {
        let n = model.n();
        let w = model.w();
        let lower = (0..n).flat_map(|i| (0..=i).map(move |j| w[(i, j)])).collect();
        Self {
            version: DOCUMENT_VERSION,
            n,
            k: model.k(),
            loss: model.loss(),
            mean: model.standardizer().mean.clone(),
            scale: model.standardizer().scale.clone(),
            w: lower,
            b: model.b().iter().copied().collect(),
            c: model.c(),
        }
    }
}

impl ModelDocument {
    pub fn into_model(self) -> Result<QuadraticSurfaceModel> {
        check_version(self.version)?;
        let n = self.n;
        let field_len = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(QsvmError::Parse(format!(
                    "field {name} has {got} entries, expected {want} for n = {n}"
                )))
            }
        };
        field_len("W", self.w.len(), n * (n + 1) / 2)?;
        field_len("b", self.b.len(), n)?;
        field_len("mean", self.mean.len(), n)?;
        field_len("scale", self.scale.len(), n)?;
        let mut w = DMatrix::zeros(n, n);
        let mut entries = self.w.iter();
        for i in 0..n {
            for j in 0..=i {
                let v = *entries.next().expect("length checked");
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let model = QuadraticSurfaceModel::new(w, DVector::from_vec(self.b), self.c, self.k, self.loss)
            .map_err(as_parse)?;
        model
            .with_standardizer(Standardizer {
                mean: self.mean,
                scale: self.scale,
            })
            .map_err(as_parse)
    }
}

fn as_parse(e: QsvmError) -> QsvmError {
    QsvmError::Parse(e.to_string())
}

fn check_version(found: u64) -> Result<()> {
    if found == DOCUMENT_VERSION {
        Ok(())
    } else {
        Err(QsvmError::Version {
            found,
            expected: DOCUMENT_VERSION,
        })
    }
}

/// Reads `version` before anything else so an unknown schema is reported as
/// such rather than as a field mismatch.
fn parse_versioned<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| QsvmError::Parse(e.to_string()))?;
    let version = value
        .get("version")
        .ok_or_else(|| QsvmError::Parse("missing field `version`".into()))?
        .as_u64()
        .ok_or_else(|| QsvmError::Parse("field `version` is not an unsigned integer".into()))?;
    check_version(version)?;
    serde_json::from_value(value).map_err(|e| QsvmError::Parse(e.to_string()))
}

impl QuadraticSurfaceModel {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument::from(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_versioned::<ModelDocument>(text)?.into_model()
    }
}

impl Classifier {
    pub fn to_document(&self) -> ClassifierDocument {
        match self {
            Classifier::Binary {
                negative,
                positive,
                model,
            } => ClassifierDocument {
                version: DOCUMENT_VERSION,
                kind: ClassifierKind::Binary,
                classes: vec![negative.clone(), positive.clone()],
                vote: VoteRule::default(),
                models: vec![model.into()],
            },
            Classifier::OneVsRest(ovr) => ClassifierDocument {
                version: DOCUMENT_VERSION,
                kind: ClassifierKind::OneVsRest,
                classes: ovr.classes().to_vec(),
                vote: ovr.vote(),
                models: ovr.models().iter().map(ModelDocument::from).collect(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ClassifierDocument = parse_versioned(text)?;
        let models = doc
            .models
            .into_iter()
            .map(ModelDocument::into_model)
            .collect::<Result<Vec<_>>>()?;
        match doc.kind {
            ClassifierKind::Binary => {
                let [negative, positive]: [String; 2] = doc
                    .classes
                    .try_into()
                    .map_err(|_| QsvmError::Parse("binary classifier needs exactly two classes".into()))?;
                let [model]: [QuadraticSurfaceModel; 1] = models
                    .try_into()
                    .map_err(|_| QsvmError::Parse("binary classifier needs exactly one model".into()))?;
                Ok(Classifier::Binary {
                    negative,
                    positive,
                    model,
                })
            }
            ClassifierKind::OneVsRest => Ok(Classifier::OneVsRest(
                OvRModel::new(doc.classes, models)
                    .map_err(as_parse)?
                    .with_vote(doc.vote),
            )),
        }
    }
}
