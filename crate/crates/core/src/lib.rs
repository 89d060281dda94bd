//! Sparse kernel-free quadratic surface support vector machines.
//!
//! A classifier `f(x) = ½ xᵀWx + bᵀx + c` is trained with an ℓ0 budget on
//! `[hvec(W); b]` by penalty decomposition: alternating a convex
//! `(z, c)`-step (hinge dual or closed-form least squares) with hard
//! thresholding of an auxiliary copy, while the coupling penalty grows.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod harness;
pub mod pd;
pub mod quadfeat;
pub mod solvers;

pub use classifier::{Classifier, OvRModel, QuadraticSurfaceModel, Standardizer, VoteRule};
pub use error::{QsvmError, Result};
pub use pd::{penalty_decompose, PdConfig, PdOutcome};
pub use quadfeat::{FeatureCache, PackedParams, SymIndexMap};
pub use solvers::Loss;
