//! Experiment plumbing: data loading, standardization, stratified
//! cross-validation with random search, and plot-data export.

mod cv;
mod data;
pub mod export;
mod fit;

pub use cv::{
    cross_validate, draw_trials, holdout_search, mean_std, random_search, select_best, stratified_folds,
    sweep_k, CVReport, ExperimentConfig, FoldReport, SearchOutcome, SweepRow, SweepTable, TrialRecord,
};
pub use data::{ellipse, iris, load_csv, load_unlabeled_csv, read_csv, read_unlabeled_csv, Dataset};
pub use fit::{accuracy, fit_classifier, standardize, FitOptions, Trained};
