//! Expert-guided goodness-of-fit screening for sensor-network event catalogs.
//!
//! The crate implements a likelihood-decomposition pipeline for deciding
//! whether a catalog event is consistent with a physical forward model:
//!
//! 1. [`model`] — class-conditional event model API and per-sensor
//!    log-likelihood decomposition (detection / non-detection / observed-value
//!    components).
//! 2. [`simgen`] — synthetic data generator with valid, composite-invalid and
//!    malformed-invalid event classes.
//! 3. [`fitter`] — bound-constrained maximum-likelihood estimation of the
//!    per-event latent state.
//! 4. [`features`] — feature representations built from fitted scores.
//! 5. [`classifiers`] — logistic regression, decision tree and random forest
//!    trained from scratch on those representations.
//! 6. [`metrics`] — threshold-free and threshold-based evaluation metrics.
//! 7. [`experiments`] — replicated simulation studies with seeded substreams.
//! 8. [`io`] — CSV/TOML/JSON serialization of datasets, scores and results.

mod optim;

pub mod classifiers;
pub mod experiments;
pub mod features;
pub mod fitter;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod simgen;


pub use classifiers::{
    fit_decision_tree, fit_logistic, fit_random_forest, ClassifierError, Condition,
    ForestConfig, ForestModel, LogisticConfig, LogisticModel, Rule, TreeConfig, TreeModel,
};
pub use experiments::{
    coefficient_stability, decomp_coefficient_stability, paired_gains, perturbed_params,
    run_decomp_grid, run_grid, run_misspecified, run_replicate, run_replicate_decomp,
    run_replicate_with, summarize, summary_cell, CoefficientStabilityRow, DecompReplicate,
    ExperimentError, GainComparison, Method, MisspecComparison, MisspecSummaryRow, PairedGainRow,
    ReplicateResult, Scenario, ScoreCoefficient, StudyConfig, SummaryRow, DEFAULT_TEST_SIZE,
    TRAIN_SIZES,
};
pub use features::{
    auxiliary_features, build_features, residuals, AuxiliaryFeatures, FeatureError,
    FeatureVector, Representation,
};
pub use fitter::{fit_latent_state, grid_search, neg_log_likelihood_and_gradient, FitConfig, FitResult};
pub use io::{
    read_coef_replicates_csv, read_dataset_csvs, read_manifest, read_network_csv,
    read_results_raw_csv, score_rows, write_coef_replicates_csv, write_coef_stability_csv,
    write_events_csv, write_features_csv, write_gains_csv, write_manifest, write_misspec_csv,
    write_network_csv, write_plot_data_csv, write_results_raw_csv, write_scores_csv,
    write_sensors_csv, write_summary_csv, EventClass, IoError, Manifest, ScoreRow,
};
pub use metrics::{
    auprc, auroc, brier_and_logloss, evaluate, tnr_at_tpr, MetricError, MetricSet,
};

pub use model::{
    normalize, score_decomposition, sensor_contributions, ClassConditionalModel, Instance, Label,
    LatentState, NormalizedScores, ScoreDecomposition,
};
pub use rng::{substream, StreamPurpose, StreamRng};
pub use simgen::{
    detection_probability, observation_mean, sample_dataset, sample_invalid_composite,
    sample_invalid_malformed, sample_network, sample_valid_event, GenError, LabeledDataset,
    LambdaLevel, SensorNetwork, SimModel, SimulationParams, ThetaBox,
};
