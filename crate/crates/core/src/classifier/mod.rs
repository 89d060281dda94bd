//! Deployable quadratic surface classifiers.

mod document;
mod ovr;

pub use document::{ClassifierDocument, ClassifierKind, ModelDocument, DOCUMENT_VERSION};
pub use ovr::{Classifier, OvRModel, VoteRule};

use nalgebra::{DMatrix, DVector};

use crate::error::{QsvmError, Result};
use crate::quadfeat::{PackedParams, SymIndexMap};
use crate::solvers::Loss;

/// Per-feature affine map `x ↦ (x − mean) / scale` baked into a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Applies the map to every row of `x` (`m×n`).
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.mean[j]) / self.scale[j]
        })
    }
}

/// `f(x) = ½ xᵀWx + bᵀx + c` evaluated on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurfaceModel {
    w: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    k: usize,
    loss: Loss,
    standardizer: Standardizer,
}

impl QuadraticSurfaceModel {
    /// Builds a model with identity standardization.
    pub fn new(w: DMatrix<f64>, b: DVector<f64>, c: f64, k: usize, loss: Loss) -> Result<Self> {
        let n = b.len();
        if w.nrows() != n || w.ncols() != n {
            return Err(QsvmError::InvalidArgument(format!(
                "W is {}x{} but b has length {n}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w != w.transpose() {
            return Err(QsvmError::InvalidArgument("W must be exactly symmetric".into()));
        }
        if w.iter()
            .chain(b.iter())
            .chain(std::iter::once(&c))
            .any(|v| !v.is_finite())
        {
            return Err(QsvmError::InvalidData("model parameters must be finite".into()));
        }
        let model = Self {
            w,
            b,
            c,
            k,
            loss,
            standardizer: Standardizer::identity(n),
        };
        if model.l0_norm() > k {
            return Err(QsvmError::InvalidArgument(format!(
                "model has {} nonzero parameters, more than k = {k}",
                model.l0_norm()
            )));
        }
        Ok(model)
    }

    pub fn with_standardizer(mut self, standardizer: Standardizer) -> Result<Self> {
        if standardizer.n() != self.n() || standardizer.scale.len() != self.n() {
            return Err(QsvmError::InvalidArgument(format!(
                "standardizer has {} features, model has {}",
                standardizer.n(),
                self.n()
            )));
        }
        if standardizer.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite())
            || standardizer.mean.iter().any(|m| !m.is_finite())
        {
            return Err(QsvmError::InvalidData(
                "standardization scales must be positive".into(),
            ));
        }
        self.standardizer = standardizer;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// `[hvec(W); b]`.
    pub fn packed(&self) -> PackedParams {
        let map = SymIndexMap::new(self.n()).expect("n >= 1");
        map.pack(&self.w, &self.b)
            .expect("dimensions checked at construction")
    }

    pub fn l0_norm(&self) -> usize {
        self.packed().l0_norm()
    }

    /// Features with a nonzero coefficient anywhere in `W` or `b`.
    pub fn active_features(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&j| self.b[j] != 0.0 || self.w.column(j).iter().any(|v| *v != 0.0))
            .collect()
    }

    /// Same classifier scaled by `gamma` (predictions unchanged for `gamma > 0`).
    pub fn scaled(&self, gamma: f64) -> Self {
        Self {
            w: &self.w * gamma,
            b: &self.b * gamma,
            c: self.c * gamma,
            ..self.clone()
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(QsvmError::InvalidArgument(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// `f` at an input already on the standardized scale.
    pub fn decision_standardized(&self, xs: &[f64]) -> Result<f64> {
        self.check_dim(xs)?;
        let x = DVector::from_column_slice(xs);
        Ok(0.5 * x.dot(&(&self.w * &x)) + self.b.dot(&x) + self.c)
    }

    /// `f` at a raw input; standardization is applied internally.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.decision_standardized(&self.standardizer.apply(x))
    }

    /// `+1` when `f(x) ≥ 0`, else `−1`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(sign_label(self.decision_value(x)?))
    }
}

/// Label for a decision value; zero maps to `+1`.
pub fn sign_label(f: f64) -> f64 {
    if f >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
