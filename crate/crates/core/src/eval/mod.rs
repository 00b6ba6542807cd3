//! Evaluation harness: dataset records, metrics, baselines, statistics,
//! and report emission.

mod baselines;
mod harness;
mod metrics;
mod record;
mod report;
mod stats;

use thiserror::Error;

pub use baselines::{baseline_constant_velocity, baseline_random_goal, baseline_random_walk};
pub use harness::{
    evaluate_dataset, evaluate_record, EvalConfig, MethodOutcome, MetricsReport, PredictorChoice,
    RecordEvaluation, METHOD_CONST_VELOCITY, METHOD_CTMC, METHOD_DETERMINISTIC, METHOD_RANDOM_GOAL,
    METHOD_RANDOM_WALK,
};
pub use metrics::{
    bon_ade, interaction_top10_accuracy, interpolate, nll_kde, nll_mixture, standard_windows,
    AccuracyHits, AdeTable, NllCurve, Window, DENSITY_FLOOR, KDE_BANDWIDTH_FLOOR_M, TOP_K,
};
pub use record::{Dataset, InteractionSpan, Split, TrajectoryRecord};
pub use report::{
    write_accuracy, write_ade_table, write_failures, write_horizons, write_nll_curves,
    write_stats, write_windowed_nll, RunManifest,
};
pub use stats::{dataset_stats, levenshtein, subset_filter, DatasetStats, MeanStd, SubsetFilter};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation data: {0}")]
    Data(String),
    #[error("record cannot be split: {0}")]
    Split(String),
    #[error("invalid evaluation argument: {0}")]
    Argument(String),
    #[error("report output failed: {0}")]
    Io(String),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Predict(#[from] crate::predict::PredictError),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeError),
    #[error(transparent)]
    Ctmc(#[from] crate::ctmc::CtmcError),
    #[error(transparent)]
    Spatial(#[from] crate::spatial::SpatialError),
}
