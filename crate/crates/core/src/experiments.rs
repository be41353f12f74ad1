//! Replicated Monte Carlo studies over the scenario grid.
//!
//! One replicate draws a fresh sensor network plus a training and a test
//! set, fits every instance's latent state, assembles the five input
//! representations, trains the matching classifiers, and evaluates them on
//! the shared test set — so method comparisons are paired within each
//! replicate. Grid drivers aggregate replicate rows into mean and
//! standard-error summaries; the misspecification driver reruns only the
//! fitting and feature stage under perturbed analyst parameters while the
//! data-generating parameters and every seed stay fixed, which leaves the
//! raw-representation forest bit-identical by construction.
//!
//! Seed discipline: replicate `r` of a scenario touches only substreams
//! keyed by `(base_seed, r, purpose)`, so any single replicate can be rerun
//! in isolation — or replicates can run concurrently — with identical
//! results. Within a replicate, instance fitting and forest growth fan out
//! across the worker pool; both are free of shared mutable state and reduce
//! in input order.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    fit_logistic, fit_random_forest, ClassifierError, ForestConfig, LogisticConfig,
};
use crate::features::{build_features, FeatureError, Representation};
use crate::fitter::{fit_latent_state, FitConfig, FitResult};
use crate::metrics::{evaluate, MetricError, MetricSet};
use crate::model::Label;
use crate::rng::{substream, StreamPurpose, StreamRng};
use crate::simgen::{
    sample_dataset, sample_network, GenError, LabeledDataset, LambdaLevel, SensorNetwork,
    SimulationParams,
};

/// Training-set sizes of the standard grid.
pub const TRAIN_SIZES: [usize; 3] = [100, 1_000, 10_000];

/// Shared test-set size of the standard grid.
pub const DEFAULT_TEST_SIZE: usize = 5_000;

/// The five compared methods: classifier plus input representation.
///
/// Discriminants index [`ReplicateResult::metrics`] and fix the reporting
/// order of every summary table.
#[derive(Clone, Copy, Debug, Eq, Hash, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(usize)]
pub enum Method {
    /// Logistic regression on the decomposed normalized scores.
    LrDecomp = 0,
    /// Logistic regression on the observed-value score only.
    LrObs = 1,
    /// Logistic regression on the auxiliary block only.
    LrBaseline = 2,
    /// Random forest on the raw zero-imputed values and detection flags.
    RfRaw = 3,
    /// Random forest on the raw block plus the decomposed score block.
    RfRawPlusFeatures = 4,
}

impl Method {
    /// All methods in reporting order.
    pub const ALL: [Method; 5] = [
        Method::LrDecomp,
        Method::LrObs,
        Method::LrBaseline,
        Method::RfRaw,
        Method::RfRawPlusFeatures,
    ];

    /// The input representation this method consumes.
    pub fn representation(self) -> Representation {
        match self {
            Method::LrDecomp => Representation::Decomp,
            Method::LrObs => Representation::Obs,
            Method::LrBaseline => Representation::Baseline,
            Method::RfRaw => Representation::Raw,
            Method::RfRawPlusFeatures => Representation::RawPlusFeatures,
        }
    }

    /// Whether the method trains a forest (as opposed to a logistic model).
    pub fn is_forest(self) -> bool {
        matches!(self, Method::RfRaw | Method::RfRawPlusFeatures)
    }

    /// Stable identifier used in file schemas and CLI filters.
    pub fn id(self) -> &'static str {
        match self {
            Method::LrDecomp => "lr_decomp",
            Method::LrObs => "lr_obs",
            Method::LrBaseline => "lr_baseline",
            Method::RfRaw => "rf_raw",
            Method::RfRawPlusFeatures => "rf_raw_plus_features",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.id())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown method {s:?}; expected one of lr_decomp, lr_obs, lr_baseline, rf_raw, rf_raw_plus_features"))
    }
}

/// One cell of the scenario grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub lambda_level: LambdaLevel,
    pub train_size: usize,
    pub test_size: usize,
    pub base_seed: u64,
}

impl Scenario {
    /// A scenario with the standard shared test size.
    pub fn new(lambda_level: LambdaLevel, train_size: usize, base_seed: u64) -> Self {
        Self { lambda_level, train_size, test_size: DEFAULT_TEST_SIZE, base_seed }
    }

    /// The full 2 x 3 grid (both levels, all training sizes) on one seed.
    pub fn full_grid(base_seed: u64) -> Vec<Scenario> {
        let mut grid = Vec::with_capacity(6);
        for level in [LambdaLevel::Low, LambdaLevel::High] {
            for n in TRAIN_SIZES {
                grid.push(Scenario::new(level, n, base_seed));
            }
        }
        grid
    }

    /// Generating parameters implied by the informativeness level.
    pub fn params(&self) -> SimulationParams {
        SimulationParams::for_level(self.lambda_level)
    }

    /// Compact tag for file names and error context, e.g. `high_n10000`.
    pub fn id(&self) -> String {
        format!("{}_n{}", self.lambda_level, self.train_size)
    }
}

/// Tunables shared by every replicate of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub fit: FitConfig,
    pub logistic: LogisticConfig,
    pub forest: ForestConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            logistic: LogisticConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

/// Failures of a replicate, carrying scenario and replicate context.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("scenario {scenario} replicate {replicate}: data generation failed: {source}")]
    Generation {
        scenario: String,
        replicate: u64,
        #[source]
        source: GenError,
    },
    #[error("scenario {scenario} replicate {replicate}: feature assembly failed: {source}")]
    Features {
        scenario: String,
        replicate: u64,
        #[source]
        source: FeatureError,
    },
    #[error("scenario {scenario} replicate {replicate}: classifier training failed: {source}")]
    Training {
        scenario: String,
        replicate: u64,
        #[source]
        source: ClassifierError,
    },
    #[error("scenario {scenario} replicate {replicate}: metric evaluation failed: {source}")]
    Evaluation {
        scenario: String,
        replicate: u64,
        #[source]
        source: MetricError,
    },
}

/// One replicate's paired evaluation of all five methods.
///
/// Equality deliberately ignores `seconds`: a rerun of the same replicate
/// must compare equal even though its wall-clock time differs, and persisted
/// outputs exclude the timing for the same reason.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub lambda_level: LambdaLevel,
    pub train_size: usize,
    pub test_size: usize,
    pub base_seed: u64,
    pub replicate: u64,
    /// Whether fitting and features used perturbed analyst parameters.
    pub misspecified: bool,
    /// One metric set per method, indexed by [`Method::ALL`] order.
    pub metrics: [MetricSet; 5],
    /// Standardized coefficient of the observed-value score in the
    /// decomposed logistic model.
    pub coef_bar_obs: f64,
    /// Standardized coefficient of the detection score.
    pub coef_bar_det: f64,
    /// Standardized coefficient of the non-detection score.
    pub coef_bar_nondet: f64,
    /// Training-set fits whose winning start did not converge.
    pub train_fit_failures: usize,
    /// Test-set fits whose winning start did not converge.
    pub test_fit_failures: usize,
    /// Wall-clock duration of the replicate.
    pub seconds: f64,
}

impl ReplicateResult {
    /// This replicate's metrics for one method.
    pub fn metric(&self, method: Method) -> &MetricSet {
        &self.metrics[method as usize]
    }

    /// Total latent-state fits performed (train plus test instances).
    pub fn fit_total(&self) -> usize {
        self.train_size + self.test_size
    }

    /// Fraction of fits whose winning start did not converge.
    pub fn fit_failure_rate(&self) -> f64 {
        (self.train_fit_failures + self.test_fit_failures) as f64 / self.fit_total() as f64
    }
}

impl PartialEq for ReplicateResult {
    fn eq(&self, other: &Self) -> bool {
        self.lambda_level == other.lambda_level
            && self.train_size == other.train_size
            && self.test_size == other.test_size
            && self.base_seed == other.base_seed
            && self.replicate == other.replicate
            && self.misspecified == other.misspecified
            && self.metrics == other.metrics
            && self.coef_bar_obs == other.coef_bar_obs
            && self.coef_bar_det == other.coef_bar_det
            && self.coef_bar_nondet == other.coef_bar_nondet
            && self.train_fit_failures == other.train_fit_failures
            && self.test_fit_failures == other.test_fit_failures
    }
}

/// Multiplies each analyst-facing parameter — `alpha_0`, `alpha_M`,
/// `alpha_d`, `beta_0`, `beta_M`, `beta_d`, `sigma_x`, in that fixed draw
/// order — by an independent factor from {0.75, 1.25}.
pub fn perturbed_params(params: &SimulationParams, rng: &mut StreamRng) -> SimulationParams {
    let mut factor = || if rng.random::<f64>() < 0.5 { 0.75 } else { 1.25 };
    let mut assumed = params.clone();
    assumed.alpha_0 *= factor();
    assumed.alpha_m *= factor();
    assumed.alpha_d *= factor();
    assumed.beta_0 *= factor();
    assumed.beta_m *= factor();
    assumed.beta_d *= factor();
    assumed.sigma_x *= factor();
    assumed
}

/// Stacks one representation's feature vectors into a row-major matrix.
fn feature_matrix(
    dataset: &LabeledDataset,
    fits: &[FitResult],
    assumed: &SimulationParams,
    network: &SensorNetwork,
    representation: Representation,
) -> Result<Array2<f64>, FeatureError> {
    let p = representation.len(network.sensor_count());
    let mut data = Vec::with_capacity(dataset.len() * p);
    for (instance, fit) in dataset.instances.iter().zip(fits) {
        data.extend(build_features(instance, Some(fit), assumed, network, representation)?.values);
    }
    Ok(Array2::from_shape_vec((dataset.len(), p), data).expect("row-major feature layout"))
}

/// Runs one well-specified replicate. See [`run_replicate_with`].
pub fn run_replicate(
    scenario: &Scenario,
    replicate: u64,
    config: &StudyConfig,
) -> Result<ReplicateResult, ExperimentError> {
    run_replicate_with(scenario, replicate, config, false)
}

/// Everything a replicate shares across classifiers: the sampled network and
/// datasets, the analyst's (possibly perturbed) parameters, per-event fits,
/// and labels.
struct Prepared {
    network: SensorNetwork,
    train: LabeledDataset,
    test: LabeledDataset,
    assumed: SimulationParams,
    train_fits: Vec<FitResult>,
    test_fits: Vec<FitResult>,
    y_train: Vec<Label>,
    y_test: Vec<Label>,
    train_fit_failures: usize,
    test_fit_failures: usize,
}

/// Samples the replicate's network and datasets from their dedicated seed
/// streams and fits every event's latent state. Both the full five-method run
/// and the logistic-only coefficient path start here, so their outputs agree
/// bit for bit.
fn prepare_replicate(
    scenario: &Scenario,
    replicate: u64,
    config: &StudyConfig,
    misspecified: bool,
) -> Result<Prepared, ExperimentError> {
    let ctx = scenario.id();
    let gen_err = |source| ExperimentError::Generation {
        scenario: ctx.clone(),
        replicate,
        source,
    };

    let params = scenario.params();
    let seed = scenario.base_seed;
    let mut net_rng = substream(seed, replicate, StreamPurpose::Network);
    let network = sample_network(&params, &mut net_rng);
    let mut train_rng = substream(seed, replicate, StreamPurpose::TrainData);
    let train =
        sample_dataset(scenario.train_size, &params, &network, &mut train_rng).map_err(gen_err)?;
    let mut test_rng = substream(seed, replicate, StreamPurpose::TestData);
    let test =
        sample_dataset(scenario.test_size, &params, &network, &mut test_rng).map_err(gen_err)?;

    let assumed = if misspecified {
        let mut mis_rng = substream(seed, replicate, StreamPurpose::Misspecification);
        perturbed_params(&params, &mut mis_rng)
    } else {
        params.clone()
    };

    // Latent-state fits are deterministic given the instance, so they can
    // fan out across the pool and collect back in input order.
    let fit_all = |dataset: &LabeledDataset| -> Vec<FitResult> {
        dataset
            .instances
            .par_iter()
            .map(|instance| fit_latent_state(instance, &assumed, &network, &config.fit))
            .collect()
    };
    let train_fits = fit_all(&train);
    let test_fits = fit_all(&test);
    let train_fit_failures = train_fits.iter().filter(|f| !f.converged).count();
    let test_fit_failures = test_fits.iter().filter(|f| !f.converged).count();

    let labels = |dataset: &LabeledDataset| -> Vec<Label> {
        dataset.instances.iter().map(|i| i.label.expect("generator labels every instance")).collect()
    };
    let y_train = labels(&train);
    let y_test = labels(&test);

    Ok(Prepared {
        network,
        train,
        test,
        assumed,
        train_fits,
        test_fits,
        y_train,
        y_test,
        train_fit_failures,
        test_fit_failures,
    })
}

/// Runs one replicate end to end: network, train/test generation, per-event
/// fitting, all five representations, training, and paired evaluation on the
/// shared test set.
///
/// With `misspecified` set, the generating parameters stay untouched while
/// fitting and feature assembly use a perturbed copy drawn from the
/// replicate's misspecification substream; the raw-representation forest
/// never reads those parameters, so its results match the well-specified run
/// exactly under the same seeds.
pub fn run_replicate_with(
    scenario: &Scenario,
    replicate: u64,
    config: &StudyConfig,
    misspecified: bool,
) -> Result<ReplicateResult, ExperimentError> {
    let started = Instant::now();
    let ctx = scenario.id();
    let Prepared {
        network,
        train,
        test,
        assumed,
        train_fits,
        test_fits,
        y_train,
        y_test,
        train_fit_failures,
        test_fit_failures,
    } = prepare_replicate(scenario, replicate, config, misspecified)?;
    let seed = scenario.base_seed;

    let mut metrics = Vec::with_capacity(Method::ALL.len());
    let mut decomp_coefs = [0.0_f64; 3];
    for method in Method::ALL {
        let representation = method.representation();
        let features_err = |source| ExperimentError::Features {
            scenario: ctx.clone(),
            replicate,
            source,
        };
        let x_train = feature_matrix(&train, &train_fits, &assumed, &network, representation)
            .map_err(features_err)?;
        let features_err = |source| ExperimentError::Features {
            scenario: ctx.clone(),
            replicate,
            source,
        };
        let x_test = feature_matrix(&test, &test_fits, &assumed, &network, representation)
            .map_err(features_err)?;

        let train_err = |source| ExperimentError::Training {
            scenario: ctx.clone(),
            replicate,
            source,
        };
        let probs = if method.is_forest() {
            let purpose = match method {
                Method::RfRaw => StreamPurpose::ForestRaw,
                _ => StreamPurpose::ForestRawPlusFeatures,
            };
            let forest_seed = substream(seed, replicate, purpose).random::<u64>();
            let forest = fit_random_forest(x_train.view(), &y_train, &config.forest, forest_seed, 0)
                .map_err(train_err)?;
            forest.predict_proba(x_test.view()).map_err(|source| ExperimentError::Training {
                scenario: ctx.clone(),
                replicate,
                source,
            })?
        } else {
            let model = fit_logistic(x_train.view(), &y_train, &config.logistic).map_err(train_err)?;
            if method == Method::LrDecomp {
                let w = model.standardized_coefficients();
                decomp_coefs = [w[0], w[1], w[2]];
            }
            model.predict_proba(x_test.view()).map_err(|source| ExperimentError::Training {
                scenario: ctx.clone(),
                replicate,
                source,
            })?
        };
        let metric_set = evaluate(&probs, &y_test).map_err(|source| ExperimentError::Evaluation {
            scenario: ctx.clone(),
            replicate,
            source,
        })?;
        metrics.push(metric_set);
    }
    let metrics: [MetricSet; 5] = metrics.try_into().expect("one metric set per method");

    Ok(ReplicateResult {
        lambda_level: scenario.lambda_level,
        train_size: scenario.train_size,
        test_size: scenario.test_size,
        base_seed: seed,
        replicate,
        misspecified,
        metrics,
        coef_bar_obs: decomp_coefs[0],
        coef_bar_det: decomp_coefs[1],
        coef_bar_nondet: decomp_coefs[2],
        train_fit_failures,
        test_fit_failures,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs `replicates` replicates of every scenario, replicates concurrently
/// within a scenario, and returns the raw rows in (scenario, replicate)
/// order. A failed replicate aborts the whole grid with its context; nothing
/// is silently dropped.
pub fn run_grid(
    scenarios: &[Scenario],
    replicates: u64,
    config: &StudyConfig,
) -> Result<Vec<ReplicateResult>, ExperimentError> {
    let mut rows = Vec::with_capacity(scenarios.len() * replicates as usize);
    for scenario in scenarios {
        let scenario_rows: Vec<ReplicateResult> = (0..replicates)
            .into_par_iter()
            .map(|r| run_replicate(scenario, r, config))
            .collect::<Result<_, _>>()?;
        rows.extend(scenario_rows);
    }
    Ok(rows)
}

/// Per-replicate record from the logistic-only path: the decomposed model's
/// standardized score coefficients and test metrics, without the other four
/// methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompReplicate {
    pub lambda_level: LambdaLevel,
    pub train_size: usize,
    pub test_size: usize,
    pub base_seed: u64,
    pub replicate: u64,
    pub misspecified: bool,
    /// Test-set metrics of the decomposed logistic model.
    pub metrics: MetricSet,
    pub coef_bar_obs: f64,
    pub coef_bar_det: f64,
    pub coef_bar_nondet: f64,
    pub train_fit_failures: usize,
    pub test_fit_failures: usize,
}

/// Runs only the decomposed logistic model for one replicate. Generation and
/// fitting reuse the exact seed streams of [`run_replicate_with`], so the
/// coefficients and metrics equal the corresponding entries of the full run
/// while skipping both forests — the dominant cost at large training sizes.
pub fn run_replicate_decomp(
    scenario: &Scenario,
    replicate: u64,
    config: &StudyConfig,
    misspecified: bool,
) -> Result<DecompReplicate, ExperimentError> {
    let ctx = scenario.id();
    let prepared = prepare_replicate(scenario, replicate, config, misspecified)?;
    let representation = Method::LrDecomp.representation();
    let features_err = |source| ExperimentError::Features {
        scenario: ctx.clone(),
        replicate,
        source,
    };
    let x_train = feature_matrix(
        &prepared.train,
        &prepared.train_fits,
        &prepared.assumed,
        &prepared.network,
        representation,
    )
    .map_err(features_err)?;
    let features_err = |source| ExperimentError::Features {
        scenario: ctx.clone(),
        replicate,
        source,
    };
    let x_test = feature_matrix(
        &prepared.test,
        &prepared.test_fits,
        &prepared.assumed,
        &prepared.network,
        representation,
    )
    .map_err(features_err)?;

    let train_err = |source| ExperimentError::Training {
        scenario: ctx.clone(),
        replicate,
        source,
    };
    let model =
        fit_logistic(x_train.view(), &prepared.y_train, &config.logistic).map_err(train_err)?;
    let w = model.standardized_coefficients();
    let probs = model.predict_proba(x_test.view()).map_err(|source| ExperimentError::Training {
        scenario: ctx.clone(),
        replicate,
        source,
    })?;
    let metrics =
        evaluate(&probs, &prepared.y_test).map_err(|source| ExperimentError::Evaluation {
            scenario: ctx.clone(),
            replicate,
            source,
        })?;

    Ok(DecompReplicate {
        lambda_level: scenario.lambda_level,
        train_size: scenario.train_size,
        test_size: scenario.test_size,
        base_seed: scenario.base_seed,
        replicate,
        misspecified,
        metrics,
        coef_bar_obs: w[0],
        coef_bar_det: w[1],
        coef_bar_nondet: w[2],
        train_fit_failures: prepared.train_fit_failures,
        test_fit_failures: prepared.test_fit_failures,
    })
}

/// Runs the logistic-only path over every scenario; ordering and failure
/// semantics match [`run_grid`].
pub fn run_decomp_grid(
    scenarios: &[Scenario],
    replicates: u64,
    config: &StudyConfig,
    misspecified: bool,
) -> Result<Vec<DecompReplicate>, ExperimentError> {
    let mut rows = Vec::with_capacity(scenarios.len() * replicates as usize);
    for scenario in scenarios {
        let scenario_rows: Vec<DecompReplicate> = (0..replicates)
            .into_par_iter()
            .map(|r| run_replicate_decomp(scenario, r, config, misspecified))
            .collect::<Result<_, _>>()?;
        rows.extend(scenario_rows);
    }
    Ok(rows)
}

/// A misspecification study: the same replicates run twice, once
/// well-specified and once with perturbed analyst parameters, sharing every
/// seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisspecComparison {
    pub well_specified: Vec<ReplicateResult>,
    pub misspecified: Vec<ReplicateResult>,
}

impl MisspecComparison {
    /// Mean paired degradation (well-specified minus misspecified AUROC).
    pub fn mean_auroc_degradation(&self, method: Method) -> f64 {
        let diffs: Vec<f64> = self
            .well_specified
            .iter()
            .zip(&self.misspecified)
            .map(|(w, m)| w.metric(method).auroc - m.metric(method).auroc)
            .collect();
        diffs.iter().sum::<f64>() / diffs.len() as f64
    }

    /// All raw rows, well-specified first.
    pub fn rows(&self) -> Vec<ReplicateResult> {
        let mut rows = self.well_specified.clone();
        rows.extend(self.misspecified.iter().cloned());
        rows
    }

    /// Per-method robustness table: mean AUROC and TNR@TPR=0.95 under both
    /// specifications plus the paired degradations, grouped per scenario.
    /// The two arms must be aligned replicate by replicate.
    pub fn summary(&self) -> Vec<MisspecSummaryRow> {
        assert_eq!(
            self.well_specified.len(),
            self.misspecified.len(),
            "misspecification arms must pair up"
        );
        let mut groups: BTreeMap<(u8, usize), Vec<(&ReplicateResult, &ReplicateResult)>> =
            BTreeMap::new();
        for (well, miss) in self.well_specified.iter().zip(&self.misspecified) {
            assert_eq!(
                (well.lambda_level, well.train_size, well.replicate),
                (miss.lambda_level, miss.train_size, miss.replicate),
                "misspecification arms must pair up"
            );
            groups.entry((well.lambda_level as u8, well.train_size)).or_default().push((well, miss));
        }
        let mut rows = Vec::new();
        for ((level, train_size), pairs) in groups {
            let r = pairs.len() as f64;
            for method in Method::ALL {
                let mean = |pick: &dyn Fn(&ReplicateResult) -> f64| {
                    pairs.iter().map(|(w, _)| pick(w)).sum::<f64>() / r
                };
                let mean_miss = |pick: &dyn Fn(&ReplicateResult) -> f64| {
                    pairs.iter().map(|(_, m)| pick(m)).sum::<f64>() / r
                };
                let auroc = &|row: &ReplicateResult| row.metric(method).auroc;
                let tnr = &|row: &ReplicateResult| row.metric(method).tnr_at_tpr95;
                let (auroc_well, auroc_misspecified) = (mean(auroc), mean_miss(auroc));
                let (tnr_well, tnr_misspecified) = (mean(tnr), mean_miss(tnr));
                rows.push(MisspecSummaryRow {
                    lambda_level: level_from_u8(level),
                    train_size,
                    method,
                    replicates: pairs.len(),
                    auroc_well,
                    auroc_misspecified,
                    auroc_degradation: auroc_well - auroc_misspecified,
                    tnr_well,
                    tnr_misspecified,
                    tnr_degradation: tnr_well - tnr_misspecified,
                });
            }
        }
        rows
    }
}

/// One row of the misspecification table: a method's mean AUROC and
/// TNR@TPR=0.95 under both specifications and the paired degradations
/// (well-specified minus misspecified).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisspecSummaryRow {
    pub lambda_level: LambdaLevel,
    pub train_size: usize,
    pub method: Method,
    pub replicates: usize,
    pub auroc_well: f64,
    pub auroc_misspecified: f64,
    pub auroc_degradation: f64,
    pub tnr_well: f64,
    pub tnr_misspecified: f64,
    pub tnr_degradation: f64,
}

/// Runs the paired misspecification study on one scenario.
pub fn run_misspecified(
    scenario: &Scenario,
    replicates: u64,
    config: &StudyConfig,
) -> Result<MisspecComparison, ExperimentError> {
    let run_all = |misspecified: bool| -> Result<Vec<ReplicateResult>, ExperimentError> {
        (0..replicates)
            .into_par_iter()
            .map(|r| run_replicate_with(scenario, r, config, misspecified))
            .collect()
    };
    Ok(MisspecComparison { well_specified: run_all(false)?, misspecified: run_all(true)? })
}

/// Number of scalar metrics in a [`MetricSet`].
const METRIC_COUNT: usize = 5;

fn metric_array(m: &MetricSet) -> [f64; METRIC_COUNT] {
    [m.auroc, m.auprc, m.brier, m.log_loss, m.tnr_at_tpr95]
}

fn metric_from_array(a: [f64; METRIC_COUNT]) -> MetricSet {
    MetricSet { auroc: a[0], auprc: a[1], brier: a[2], log_loss: a[3], tnr_at_tpr95: a[4] }
}

/// Componentwise mean and standard error (sample SD over the square root of
/// the count); the SE is `None` below two values.
fn mean_and_se(values: &[[f64; METRIC_COUNT]]) -> (MetricSet, Option<MetricSet>) {
    let r = values.len();
    assert!(r > 0, "mean of an empty group");
    let mut mean = [0.0; METRIC_COUNT];
    for v in values {
        for (acc, x) in mean.iter_mut().zip(v) {
            *acc += x;
        }
    }
    for acc in &mut mean {
        *acc /= r as f64;
    }
    if r < 2 {
        return (metric_from_array(mean), None);
    }
    let mut se = [0.0; METRIC_COUNT];
    for v in values {
        for k in 0..METRIC_COUNT {
            se[k] += (v[k] - mean[k]) * (v[k] - mean[k]);
        }
    }
    for s in &mut se {
        *s = (*s / (r - 1) as f64 / r as f64).sqrt();
    }
    (metric_from_array(mean), Some(metric_from_array(se)))
}

/// Deterministic grouping key: level, size, specification, then a tag index.
type GroupKey = (u8, usize, bool, usize);

fn group_rows<'a>(
    rows: &'a [ReplicateResult],
    tag_count: usize,
    mut tag_values: impl FnMut(&ReplicateResult, usize) -> [f64; METRIC_COUNT],
) -> BTreeMap<GroupKey, Vec<[f64; METRIC_COUNT]>> {
    let mut groups: BTreeMap<GroupKey, Vec<[f64; METRIC_COUNT]>> = BTreeMap::new();
    for row in rows {
        for tag in 0..tag_count {
            let key = (row.lambda_level as u8, row.train_size, row.misspecified, tag);
            groups.entry(key).or_default().push(tag_values(row, tag));
        }
    }
    groups
}

fn level_from_u8(code: u8) -> LambdaLevel {
    if code == 0 {
        LambdaLevel::Low
    } else {
        LambdaLevel::High
    }
}

/// One cell of the main summary: a (scenario, method) pair's Monte Carlo
/// mean metrics with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub lambda_level: LambdaLevel,
    pub train_size: usize,
    pub misspecified: bool,
    pub method: Method,
    pub replicates: usize,
    pub mean: MetricSet,
    /// `None` when fewer than two replicates contributed.
    pub se: Option<MetricSet>,
}

/// Aggregates raw rows into the main summary table, ordered by level,
/// training size, specification, then method.
pub fn summarize(rows: &[ReplicateResult]) -> Vec<SummaryRow> {
    group_rows(rows, Method::ALL.len(), |row, tag| metric_array(&row.metrics[tag]))
        .into_iter()
        .map(|((level, train_size, misspecified, tag), values)| {
            let (mean, se) = mean_and_se(&values);
            SummaryRow {
                lambda_level: level_from_u8(level),
                train_size,
                misspecified,
                method: Method::ALL[tag],
                replicates: values.len(),
                mean,
                se,
            }
        })
        .collect()
}

/// Looks up one summary cell.
pub fn summary_cell<'a>(
    summary: &'a [SummaryRow],
    lambda_level: LambdaLevel,
    train_size: usize,
    method: Method,
) -> Option<&'a SummaryRow> {
    summary.iter().find(|row| {
        row.lambda_level == lambda_level
            && row.train_size == train_size
            && row.method == method
            && !row.misspecified
    })
}

/// The two paired score-representation contrasts.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainComparison {
    /// LR-decomp minus LR-obs.
    DecompOverObs = 0,
    /// RF-raw+features minus RF-raw.
    FeaturesOverRaw = 1,
}

impl GainComparison {
    pub const ALL: [GainComparison; 2] =
        [GainComparison::DecompOverObs, GainComparison::FeaturesOverRaw];

    /// The (improved, base) method pair being differenced.
    pub fn pair(self) -> (Method, Method) {
        match self {
            GainComparison::DecompOverObs => (Method::LrDecomp, Method::LrObs),
            GainComparison::FeaturesOverRaw => (Method::RfRawPlusFeatures, Method::RfRaw),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            GainComparison::DecompOverObs => "lr_decomp_minus_lr_obs",
            GainComparison::FeaturesOverRaw => "rf_raw_plus_features_minus_rf_raw",
        }
    }
}

impl std::fmt::Display for GainComparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Per-replicate paired difference summary for one contrast in one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedGainRow {
    pub lambda_level: LambdaLevel,
    pub train_size: usize,
    pub misspecified: bool,
    pub comparison: GainComparison,
    pub replicates: usize,
    /// Mean of the per-replicate metric differences (improved minus base).
    pub mean: MetricSet,
    pub se: Option<MetricSet>,
}

/// Computes both paired contrasts from raw rows. Differences are taken
/// within a replicate, so shared sampling noise cancels.
pub fn paired_gains(rows: &[ReplicateResult]) -> Vec<PairedGainRow> {
    group_rows(rows, GainComparison::ALL.len(), |row, tag| {
        let (better, base) = GainComparison::ALL[tag].pair();
        let b = metric_array(row.metric(better));
        let a = metric_array(row.metric(base));
        std::array::from_fn(|k| b[k] - a[k])
    })
    .into_iter()
    .map(|((level, train_size, misspecified, tag), values)| {
        let (mean, se) = mean_and_se(&values);
        PairedGainRow {
            lambda_level: level_from_u8(level),
            train_size,
            misspecified,
            comparison: GainComparison::ALL[tag],
            replicates: values.len(),
            mean,
            se,
        }
    })
    .collect()
}

/// The three decomposed-score coefficients of the LR-decomp model.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCoefficient {
    BarObs = 0,
    BarDet = 1,
    BarNondet = 2,
}

impl ScoreCoefficient {
    pub const ALL: [ScoreCoefficient; 3] =
        [ScoreCoefficient::BarObs, ScoreCoefficient::BarDet, ScoreCoefficient::BarNondet];

    /// Column name in the decomposed feature schema.
    pub fn id(self) -> &'static str {
        match self {
            ScoreCoefficient::BarObs => "bar_ell_obs",
            ScoreCoefficient::BarDet => "bar_ell_det",
            ScoreCoefficient::BarNondet => "bar_ell_nondet",
        }
    }

    fn value(self, row: &ReplicateResult) -> f64 {
        match self {
            ScoreCoefficient::BarObs => row.coef_bar_obs,
            ScoreCoefficient::BarDet => row.coef_bar_det,
            ScoreCoefficient::BarNondet => row.coef_bar_nondet,
        }
    }
}

impl std::fmt::Display for ScoreCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Stability of one standardized coefficient across replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStabilityRow {
    pub lambda_level: LambdaLevel,
    pub train_size: usize,
    pub misspecified: bool,
    pub coefficient: ScoreCoefficient,
    pub replicates: usize,
    /// Median standardized coefficient across replicates.
    pub median: f64,
    /// Fraction of replicates whose coefficient carries the modal sign.
    pub sign_stability: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite coefficients"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median and sign stability of every decomposed coefficient per cell.
/// Needs at least two replicates per cell for the notion of stability to
/// carry meaning, but degrades gracefully (stability 1.0) below that.
pub fn coefficient_stability(rows: &[ReplicateResult]) -> Vec<CoefficientStabilityRow> {
    stability_rows(rows.iter().map(|row| {
        (
            (row.lambda_level as u8, row.train_size, row.misspecified),
            ScoreCoefficient::ALL.map(|c| c.value(row)),
        )
    }))
}

/// [`coefficient_stability`] over records from the logistic-only path.
pub fn decomp_coefficient_stability(rows: &[DecompReplicate]) -> Vec<CoefficientStabilityRow> {
    stability_rows(rows.iter().map(|row| {
        (
            (row.lambda_level as u8, row.train_size, row.misspecified),
            [row.coef_bar_obs, row.coef_bar_det, row.coef_bar_nondet],
        )
    }))
}

fn stability_rows(
    samples: impl IntoIterator<Item = ((u8, usize, bool), [f64; 3])>,
) -> Vec<CoefficientStabilityRow> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for ((level, train_size, misspecified), coefs) in samples {
        for (tag, value) in coefs.into_iter().enumerate() {
            groups.entry((level, train_size, misspecified, tag)).or_default().push(value);
        }
    }
    groups
        .into_iter()
        .map(|((level, train_size, misspecified, tag), mut values)| {
            // signum maps +0.0 to +1, so an exactly-zero coefficient counts
            // with the positives.
            let positives = values.iter().filter(|v| v.signum() > 0.0).count();
            let modal = positives.max(values.len() - positives);
            CoefficientStabilityRow {
                lambda_level: level_from_u8(level),
                train_size,
                misspecified,
                coefficient: ScoreCoefficient::ALL[tag],
                replicates: values.len(),
                median: median(&mut values),
                sign_stability: modal as f64 / values.len() as f64,
            }
        })
        .collect()
}
