//! CSV and TOML persistence: datasets, fitted scores, study results, and
//! run manifests.
//!
//! Every float prints in Rust's shortest round-trip form, so re-importing a
//! file reproduces bit-identical values, and rerunning a seeded command
//! reproduces byte-identical files. No CSV carries a timestamp; the
//! manifest's creation field is informational and ignored by
//! [`Manifest::equivalent`].
//!
//! Schemas (one header row each; missing values are empty fields):
//!
//! - `network.csv`: `sensor_id, location, noise_offset`.
//! - `events.csv`: `event_id, label, true_l, true_m, scenario` — label is
//!   1 = valid / 0 = invalid; `true_l`/`true_m` are empty for composite
//!   events, which have no single generating state.
//! - `sensors.csv`: `event_id, sensor_id, detected, x` — one row per
//!   (event, sensor); `x` is empty exactly when `detected` is 0.
//! - `features.csv`: `event_id` followed by the representation's named
//!   columns.
//! - `scores.csv`: per-event fit and score summary (see [`ScoreRow`]).
//! - `results_raw.csv`: one row per (scenario, replicate, method) with all
//!   five metrics, the decomposed-model coefficients, and fit-failure
//!   counts. Wall-clock timing is deliberately not persisted.
//! - `coef_replicates.csv`: like `results_raw.csv` but from the
//!   logistic-only path — one row per replicate, no `method` column.
//! - `summary.csv`, `gains.csv`: per-cell Monte Carlo means with standard
//!   errors (blank below two replicates).
//! - `coef_stability.csv`: per-cell coefficient medians and sign stability.
//! - `misspec_summary.csv`: per-method paired means and degradations from a
//!   misspecification study.
//! - `plot_data.csv`: long-form `(metric, method, cell) -> mean, se` rows
//!   for plotting tools.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{
    CoefficientStabilityRow, DecompReplicate, Method, MisspecSummaryRow, PairedGainRow,
    ReplicateResult, Scenario, StudyConfig, SummaryRow,
};
use crate::features::{auxiliary_features, FeatureVector, Representation};
use crate::fitter::FitResult;
use crate::metrics::MetricSet;
use crate::model::{normalize, score_decomposition, Instance, Label, LatentState};
use crate::simgen::{LabeledDataset, LambdaLevel, SensorNetwork, SimModel, SimulationParams};

/// Persistence failures, each carrying the offending path (and line for
/// malformed content).
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Toml { path: PathBuf, message: String },
}

impl IoError {
    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.to_owned(), source }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        IoError::Csv { path: path.to_owned(), source }
    }

    fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        IoError::Parse { path: path.to_owned(), line, message: message.into() }
    }
}

/// Shortest round-trip float text (what `f64::to_string` emits).
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn open_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    let file = fs::File::create(path).map_err(|e| IoError::file(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::file(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

/// 1-based line number of a record, counting the header.
fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
    path: &Path,
) -> Result<T, IoError> {
    let line = record_line(record);
    let raw = record
        .get(index)
        .ok_or_else(|| IoError::parse(path, line, format!("missing column `{name}`")))?;
    raw.parse::<T>().map_err(|_| {
        IoError::parse(path, line, format!("column `{name}`: cannot parse {raw:?}"))
    })
}

fn parse_opt_f64(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
    path: &Path,
) -> Result<Option<f64>, IoError> {
    match record.get(index) {
        None | Some("") => Ok(None),
        Some(_) => parse_field::<f64>(record, index, name, path).map(Some),
    }
}

// ---------------------------------------------------------------------------
// Sensor network
// ---------------------------------------------------------------------------

/// Writes `network.csv`: one row per sensor with location and offset.
pub fn write_network_csv(path: &Path, network: &SensorNetwork) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["sensor_id", "location", "noise_offset"]).map_err(|e| IoError::csv(path, e))?;
    for s in 0..network.sensor_count() {
        w.write_record([
            s.to_string(),
            fmt_f64(network.locations[s]),
            fmt_f64(network.noise_offsets[s]),
        ])
        .map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Reads a `network.csv` written by [`write_network_csv`]. Sensor ids must
/// be the contiguous range starting at zero.
pub fn read_network_csv(path: &Path) -> Result<SensorNetwork, IoError> {
    let mut r = open_reader(path)?;
    let mut locations = Vec::new();
    let mut noise_offsets = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| IoError::csv(path, e))?;
        let line = record_line(&record);
        let sensor_id: usize = parse_field(&record, 0, "sensor_id", path)?;
        if sensor_id != locations.len() {
            return Err(IoError::parse(
                path,
                line,
                format!("sensor_id {sensor_id} out of order; expected {}", locations.len()),
            ));
        }
        locations.push(parse_field(&record, 1, "location", path)?);
        noise_offsets.push(parse_field(&record, 2, "noise_offset", path)?);
    }
    if locations.is_empty() {
        return Err(IoError::parse(path, 0, "network file has no sensor rows"));
    }
    Ok(SensorNetwork { locations, noise_offsets })
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Event provenance, reconstructible from the label and recorded truth:
/// composite events are the only labeled events without a single generating
/// state.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Valid,
    Composite,
    Malformed,
}

impl EventClass {
    /// Classifies a labeled instance; `None` when the label is unknown.
    pub fn of(instance: &Instance) -> Option<EventClass> {
        match (instance.label?, instance.truth.is_some()) {
            (Label::Valid, _) => Some(EventClass::Valid),
            (Label::Invalid, false) => Some(EventClass::Composite),
            (Label::Invalid, true) => Some(EventClass::Malformed),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            EventClass::Valid => "valid",
            EventClass::Composite => "composite",
            EventClass::Malformed => "malformed",
        }
    }
}

impl std::fmt::Display for EventClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.id())
    }
}

/// Writes `events.csv` for a labeled dataset under a scenario tag.
pub fn write_events_csv(
    path: &Path,
    dataset: &LabeledDataset,
    scenario_tag: &str,
) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["event_id", "label", "true_l", "true_m", "scenario"])
        .map_err(|e| IoError::csv(path, e))?;
    for (event_id, instance) in dataset.instances.iter().enumerate() {
        let label = instance
            .label
            .map(|l| l.as_u8().to_string())
            .unwrap_or_default();
        w.write_record([
            event_id.to_string(),
            label,
            fmt_opt_f64(instance.truth.map(|t| t.l)),
            fmt_opt_f64(instance.truth.map(|t| t.m)),
            scenario_tag.to_string(),
        ])
        .map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Writes `sensors.csv`: one row per (event, sensor), `x` empty on
/// non-detections.
pub fn write_sensors_csv(path: &Path, dataset: &LabeledDataset) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(["event_id", "sensor_id", "detected", "x"])
        .map_err(|e| IoError::csv(path, e))?;
    for (event_id, instance) in dataset.instances.iter().enumerate() {
        for s in 0..instance.sensor_count() {
            w.write_record([
                event_id.to_string(),
                s.to_string(),
                u8::from(instance.detected(s)).to_string(),
                fmt_opt_f64(instance.observed(s)),
            ])
            .map_err(|e| IoError::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

struct EventRow {
    label: Option<Label>,
    truth: Option<LatentState>,
}

/// Reads the pair written by [`write_events_csv`] and [`write_sensors_csv`]
/// back into a labeled dataset, reporting malformed content with line
/// numbers. Returns the dataset and the scenario tag of the first event row.
pub fn read_dataset_csvs(
    events_path: &Path,
    sensors_path: &Path,
) -> Result<(LabeledDataset, String), IoError> {
    let mut events = Vec::new();
    let mut scenario_tag = String::new();
    let mut r = open_reader(events_path)?;
    for record in r.records() {
        let record = record.map_err(|e| IoError::csv(events_path, e))?;
        let line = record_line(&record);
        let event_id: usize = parse_field(&record, 0, "event_id", events_path)?;
        if event_id != events.len() {
            return Err(IoError::parse(
                events_path,
                line,
                format!("event_id {event_id} out of order; expected {}", events.len()),
            ));
        }
        let label = match record.get(1) {
            None | Some("") => None,
            Some(raw) => Some(
                raw.parse::<u8>()
                    .ok()
                    .and_then(Label::from_u8)
                    .ok_or_else(|| {
                        IoError::parse(events_path, line, format!("label: expected 0 or 1, got {raw:?}"))
                    })?,
            ),
        };
        let true_l = parse_opt_f64(&record, 2, "true_l", events_path)?;
        let true_m = parse_opt_f64(&record, 3, "true_m", events_path)?;
        let truth = match (true_l, true_m) {
            (Some(l), Some(m)) => Some(LatentState::new(l, m)),
            (None, None) => None,
            _ => {
                return Err(IoError::parse(
                    events_path,
                    line,
                    "true_l and true_m must be both present or both empty",
                ))
            }
        };
        if events.is_empty() {
            scenario_tag = record.get(4).unwrap_or_default().to_string();
        }
        events.push(EventRow { label, truth });
    }

    let mut detections: Vec<Vec<bool>> = vec![Vec::new(); events.len()];
    let mut observed: Vec<Vec<Option<f64>>> = vec![Vec::new(); events.len()];
    let mut r = open_reader(sensors_path)?;
    for record in r.records() {
        let record = record.map_err(|e| IoError::csv(sensors_path, e))?;
        let line = record_line(&record);
        let event_id: usize = parse_field(&record, 0, "event_id", sensors_path)?;
        if event_id >= events.len() {
            return Err(IoError::parse(
                sensors_path,
                line,
                format!("event_id {event_id} not present in the events file"),
            ));
        }
        let sensor_id: usize = parse_field(&record, 1, "sensor_id", sensors_path)?;
        if sensor_id != detections[event_id].len() {
            return Err(IoError::parse(
                sensors_path,
                line,
                format!(
                    "sensor_id {sensor_id} out of order for event {event_id}; expected {}",
                    detections[event_id].len()
                ),
            ));
        }
        let detected: u8 = parse_field(&record, 2, "detected", sensors_path)?;
        if detected > 1 {
            return Err(IoError::parse(sensors_path, line, "detected must be 0 or 1"));
        }
        let x = parse_opt_f64(&record, 3, "x", sensors_path)?;
        if (detected == 1) != x.is_some() {
            return Err(IoError::parse(
                sensors_path,
                line,
                "x must be present exactly when detected = 1",
            ));
        }
        detections[event_id].push(detected == 1);
        observed[event_id].push(x);
    }

    let mut instances = Vec::with_capacity(events.len());
    for (event_id, (row, (detections, observed))) in
        events.into_iter().zip(detections.into_iter().zip(observed)).enumerate()
    {
        if detections.is_empty() {
            return Err(IoError::parse(
                sensors_path,
                0,
                format!("event {event_id} has no sensor rows"),
            ));
        }
        let mut instance = Instance::new(detections, observed).map_err(|e| {
            IoError::parse(sensors_path, 0, format!("event {event_id}: {e}"))
        })?;
        if let Some(label) = row.label {
            instance = instance.with_label(label);
        }
        if let Some(truth) = row.truth {
            instance = instance.with_truth(truth);
        }
        instances.push(instance);
    }
    Ok((LabeledDataset { instances }, scenario_tag))
}

// ---------------------------------------------------------------------------
// Features and scores
// ---------------------------------------------------------------------------

/// Writes `features.csv`: `event_id` plus the representation's named
/// columns, one row per instance.
pub fn write_features_csv(
    path: &Path,
    representation: Representation,
    sensor_count: usize,
    vectors: &[FeatureVector],
) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    let mut header = vec!["event_id".to_string()];
    header.extend(representation.column_names(sensor_count));
    w.write_record(&header).map_err(|e| IoError::csv(path, e))?;
    for (event_id, vector) in vectors.iter().enumerate() {
        assert_eq!(vector.representation, representation, "mixed representations");
        let mut record = vec![event_id.to_string()];
        record.extend(vector.values.iter().map(|&v| fmt_f64(v)));
        w.write_record(&record).map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// One event's fitted state and score summary, as persisted in `scores.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub event_id: usize,
    /// 1 = valid, 0 = invalid, empty when unlabeled.
    pub label: Option<Label>,
    /// Event provenance when derivable from the labeled data.
    pub event_class: Option<EventClass>,
    pub theta_hat_l: f64,
    pub theta_hat_m: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub bar_ell_obs: f64,
    pub bar_ell_det: f64,
    pub bar_ell_nondet: f64,
    pub m: usize,
    pub m_hat: f64,
    pub r_bar: f64,
    pub s_r: f64,
}

/// Builds the per-event score rows for a fitted dataset.
pub fn score_rows(
    dataset: &LabeledDataset,
    fits: &[FitResult],
    params: &SimulationParams,
    network: &SensorNetwork,
) -> Vec<ScoreRow> {
    let model = SimModel::new(params, network);
    dataset
        .instances
        .iter()
        .zip(fits)
        .enumerate()
        .map(|(event_id, (instance, fit))| {
            let scores = normalize(
                &score_decomposition(&model, &fit.theta_hat, instance)
                    .expect("fitted instance matches the network"),
            );
            let aux = auxiliary_features(instance, &fit.theta_hat, params, network);
            ScoreRow {
                event_id,
                label: instance.label,
                event_class: EventClass::of(instance),
                theta_hat_l: fit.theta_hat.l,
                theta_hat_m: fit.theta_hat.m,
                log_likelihood: fit.log_likelihood,
                converged: fit.converged,
                bar_ell_obs: scores.bar_obs,
                bar_ell_det: scores.bar_det,
                bar_ell_nondet: scores.bar_nondet,
                m: aux.m,
                m_hat: aux.m_hat,
                r_bar: aux.r_bar,
                s_r: aux.s_r,
            }
        })
        .collect()
}

/// Writes `scores.csv` from prepared rows.
pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record([
        "event_id",
        "label",
        "class",
        "theta_hat_l",
        "theta_hat_m",
        "log_likelihood",
        "converged",
        "bar_ell_obs",
        "bar_ell_det",
        "bar_ell_nondet",
        "m",
        "m_hat",
        "r_bar",
        "s_r",
    ])
    .map_err(|e| IoError::csv(path, e))?;
    for row in rows {
        w.write_record([
            row.event_id.to_string(),
            row.label.map(|l| l.as_u8().to_string()).unwrap_or_default(),
            row.event_class.map(|c| c.id().to_string()).unwrap_or_default(),
            fmt_f64(row.theta_hat_l),
            fmt_f64(row.theta_hat_m),
            fmt_f64(row.log_likelihood),
            row.converged.to_string(),
            fmt_f64(row.bar_ell_obs),
            fmt_f64(row.bar_ell_det),
            fmt_f64(row.bar_ell_nondet),
            row.m.to_string(),
            fmt_f64(row.m_hat),
            fmt_f64(row.r_bar),
            fmt_f64(row.s_r),
        ])
        .map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

// ---------------------------------------------------------------------------
// Study results
// ---------------------------------------------------------------------------

const RAW_HEADER: [&str; 17] = [
    "lambda_level",
    "train_size",
    "test_size",
    "base_seed",
    "replicate",
    "misspecified",
    "method",
    "auroc",
    "auprc",
    "brier",
    "log_loss",
    "tnr_at_tpr95",
    "coef_bar_obs",
    "coef_bar_det",
    "coef_bar_nondet",
    "train_fit_failures",
    "test_fit_failures",
];

/// Writes `results_raw.csv`: one row per (scenario, replicate, method),
/// methods in [`Method::ALL`] order. Replicate-level fields (coefficients,
/// failure counts) repeat on each of a replicate's five rows so every row is
/// self-contained.
pub fn write_results_raw_csv(path: &Path, rows: &[ReplicateResult]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(RAW_HEADER).map_err(|e| IoError::csv(path, e))?;
    for row in rows {
        for method in Method::ALL {
            let m = row.metric(method);
            w.write_record([
                row.lambda_level.to_string(),
                row.train_size.to_string(),
                row.test_size.to_string(),
                row.base_seed.to_string(),
                row.replicate.to_string(),
                row.misspecified.to_string(),
                method.to_string(),
                fmt_f64(m.auroc),
                fmt_f64(m.auprc),
                fmt_f64(m.brier),
                fmt_f64(m.log_loss),
                fmt_f64(m.tnr_at_tpr95),
                fmt_f64(row.coef_bar_obs),
                fmt_f64(row.coef_bar_det),
                fmt_f64(row.coef_bar_nondet),
                row.train_fit_failures.to_string(),
                row.test_fit_failures.to_string(),
            ])
            .map_err(|e| IoError::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Reads `results_raw.csv` back into replicate rows. Expects each
/// replicate's five method rows contiguous and in [`Method::ALL`] order, as
/// written; timing is not persisted, so `seconds` reads back as zero (it is
/// excluded from equality).
pub fn read_results_raw_csv(path: &Path) -> Result<Vec<ReplicateResult>, IoError> {
    let mut r = open_reader(path)?;
    let mut rows: Vec<ReplicateResult> = Vec::new();
    let mut fill = 0usize;
    for record in r.records() {
        let record = record.map_err(|e| IoError::csv(path, e))?;
        let line = record_line(&record);
        let lambda_level: LambdaLevel = parse_field(&record, 0, "lambda_level", path)?;
        let method: Method = parse_field(&record, 6, "method", path)?;
        let expected = Method::ALL[fill % Method::ALL.len()];
        if method != expected {
            return Err(IoError::parse(
                path,
                line,
                format!("method {method} out of order; expected {expected}"),
            ));
        }
        let metric_set = MetricSet {
            auroc: parse_field(&record, 7, "auroc", path)?,
            auprc: parse_field(&record, 8, "auprc", path)?,
            brier: parse_field(&record, 9, "brier", path)?,
            log_loss: parse_field(&record, 10, "log_loss", path)?,
            tnr_at_tpr95: parse_field(&record, 11, "tnr_at_tpr95", path)?,
        };
        if fill % Method::ALL.len() == 0 {
            rows.push(ReplicateResult {
                lambda_level,
                train_size: parse_field(&record, 1, "train_size", path)?,
                test_size: parse_field(&record, 2, "test_size", path)?,
                base_seed: parse_field(&record, 3, "base_seed", path)?,
                replicate: parse_field(&record, 4, "replicate", path)?,
                misspecified: parse_field(&record, 5, "misspecified", path)?,
                metrics: [metric_set; 5],
                coef_bar_obs: parse_field(&record, 12, "coef_bar_obs", path)?,
                coef_bar_det: parse_field(&record, 13, "coef_bar_det", path)?,
                coef_bar_nondet: parse_field(&record, 14, "coef_bar_nondet", path)?,
                train_fit_failures: parse_field(&record, 15, "train_fit_failures", path)?,
                test_fit_failures: parse_field(&record, 16, "test_fit_failures", path)?,
                seconds: 0.0,
            });
        } else {
            let current = rows.last_mut().expect("a replicate row is in progress");
            if current.lambda_level != lambda_level
                || current.replicate != parse_field::<u64>(&record, 4, "replicate", path)?
            {
                return Err(IoError::parse(
                    path,
                    line,
                    "replicate rows are interleaved; expected five contiguous method rows",
                ));
            }
            current.metrics[method as usize] = metric_set;
        }
        fill += 1;
    }
    if fill % Method::ALL.len() != 0 {
        return Err(IoError::parse(
            path,
            0,
            format!("row count {fill} is not a multiple of {}", Method::ALL.len()),
        ));
    }
    Ok(rows)
}

const COEF_HEADER: [&str; 16] = [
    "lambda_level",
    "train_size",
    "test_size",
    "base_seed",
    "replicate",
    "misspecified",
    "auroc",
    "auprc",
    "brier",
    "log_loss",
    "tnr_at_tpr95",
    "coef_bar_obs",
    "coef_bar_det",
    "coef_bar_nondet",
    "train_fit_failures",
    "test_fit_failures",
];

/// Writes `coef_replicates.csv`: one row per replicate from the
/// logistic-only path — the same columns as `results_raw.csv` minus
/// `method`, since only the decomposed logistic model runs.
pub fn write_coef_replicates_csv(path: &Path, rows: &[DecompReplicate]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record(COEF_HEADER).map_err(|e| IoError::csv(path, e))?;
    for row in rows {
        w.write_record([
            row.lambda_level.to_string(),
            row.train_size.to_string(),
            row.test_size.to_string(),
            row.base_seed.to_string(),
            row.replicate.to_string(),
            row.misspecified.to_string(),
            fmt_f64(row.metrics.auroc),
            fmt_f64(row.metrics.auprc),
            fmt_f64(row.metrics.brier),
            fmt_f64(row.metrics.log_loss),
            fmt_f64(row.metrics.tnr_at_tpr95),
            fmt_f64(row.coef_bar_obs),
            fmt_f64(row.coef_bar_det),
            fmt_f64(row.coef_bar_nondet),
            row.train_fit_failures.to_string(),
            row.test_fit_failures.to_string(),
        ])
        .map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Reads `coef_replicates.csv` back into logistic-only records.
pub fn read_coef_replicates_csv(path: &Path) -> Result<Vec<DecompReplicate>, IoError> {
    let mut r = open_reader(path)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| IoError::csv(path, e))?;
        rows.push(DecompReplicate {
            lambda_level: parse_field(&record, 0, "lambda_level", path)?,
            train_size: parse_field(&record, 1, "train_size", path)?,
            test_size: parse_field(&record, 2, "test_size", path)?,
            base_seed: parse_field(&record, 3, "base_seed", path)?,
            replicate: parse_field(&record, 4, "replicate", path)?,
            misspecified: parse_field(&record, 5, "misspecified", path)?,
            metrics: MetricSet {
                auroc: parse_field(&record, 6, "auroc", path)?,
                auprc: parse_field(&record, 7, "auprc", path)?,
                brier: parse_field(&record, 8, "brier", path)?,
                log_loss: parse_field(&record, 9, "log_loss", path)?,
                tnr_at_tpr95: parse_field(&record, 10, "tnr_at_tpr95", path)?,
            },
            coef_bar_obs: parse_field(&record, 11, "coef_bar_obs", path)?,
            coef_bar_det: parse_field(&record, 12, "coef_bar_det", path)?,
            coef_bar_nondet: parse_field(&record, 13, "coef_bar_nondet", path)?,
            train_fit_failures: parse_field(&record, 14, "train_fit_failures", path)?,
            test_fit_failures: parse_field(&record, 15, "test_fit_failures", path)?,
        });
    }
    Ok(rows)
}

/// Writes `misspec_summary.csv`: per-method paired means and degradations
/// (well-specified minus misspecified) of AUROC and TNR@TPR=0.95.
pub fn write_misspec_csv(path: &Path, rows: &[MisspecSummaryRow]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record([
        "lambda_level",
        "train_size",
        "method",
        "replicates",
        "auroc_well",
        "auroc_misspecified",
        "auroc_degradation",
        "tnr_at_tpr95_well",
        "tnr_at_tpr95_misspecified",
        "tnr_at_tpr95_degradation",
    ])
    .map_err(|e| IoError::csv(path, e))?;
    for row in rows {
        w.write_record([
            row.lambda_level.to_string(),
            row.train_size.to_string(),
            row.method.to_string(),
            row.replicates.to_string(),
            fmt_f64(row.auroc_well),
            fmt_f64(row.auroc_misspecified),
            fmt_f64(row.auroc_degradation),
            fmt_f64(row.tnr_well),
            fmt_f64(row.tnr_misspecified),
            fmt_f64(row.tnr_degradation),
        ])
        .map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

fn write_mean_se_record(
    w: &mut csv::Writer<fs::File>,
    path: &Path,
    prefix: Vec<String>,
    replicates: usize,
    mean: &MetricSet,
    se: &Option<MetricSet>,
) -> Result<(), IoError> {
    let mut record = prefix;
    record.push(replicates.to_string());
    let pairs = [
        (mean.auroc, se.map(|s| s.auroc)),
        (mean.auprc, se.map(|s| s.auprc)),
        (mean.brier, se.map(|s| s.brier)),
        (mean.log_loss, se.map(|s| s.log_loss)),
        (mean.tnr_at_tpr95, se.map(|s| s.tnr_at_tpr95)),
    ];
    for (mean_value, se_value) in pairs {
        record.push(fmt_f64(mean_value));
        record.push(fmt_opt_f64(se_value));
    }
    w.write_record(&record).map_err(|e| IoError::csv(path, e))
}

const MEAN_SE_COLUMNS: [&str; 10] = [
    "auroc_mean",
    "auroc_se",
    "auprc_mean",
    "auprc_se",
    "brier_mean",
    "brier_se",
    "log_loss_mean",
    "log_loss_se",
    "tnr_at_tpr95_mean",
    "tnr_at_tpr95_se",
];

/// Writes `summary.csv`: per-cell Monte Carlo means and standard errors.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    let mut header =
        vec!["lambda_level", "train_size", "misspecified", "method", "replicates"];
    header.extend(MEAN_SE_COLUMNS);
    w.write_record(&header).map_err(|e| IoError::csv(path, e))?;
    for row in rows {
        write_mean_se_record(
            &mut w,
            path,
            vec![
                row.lambda_level.to_string(),
                row.train_size.to_string(),
                row.misspecified.to_string(),
                row.method.to_string(),
            ],
            row.replicates,
            &row.mean,
            &row.se,
        )?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Writes `gains.csv`: paired per-replicate contrast means and standard
/// errors.
pub fn write_gains_csv(path: &Path, rows: &[PairedGainRow]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    let mut header =
        vec!["lambda_level", "train_size", "misspecified", "comparison", "replicates"];
    header.extend(MEAN_SE_COLUMNS);
    w.write_record(&header).map_err(|e| IoError::csv(path, e))?;
    for row in rows {
        write_mean_se_record(
            &mut w,
            path,
            vec![
                row.lambda_level.to_string(),
                row.train_size.to_string(),
                row.misspecified.to_string(),
                row.comparison.to_string(),
            ],
            row.replicates,
            &row.mean,
            &row.se,
        )?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Writes `coef_stability.csv`.
pub fn write_coef_stability_csv(
    path: &Path,
    rows: &[CoefficientStabilityRow],
) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record([
        "lambda_level",
        "train_size",
        "misspecified",
        "coefficient",
        "replicates",
        "median",
        "sign_stability",
    ])
    .map_err(|e| IoError::csv(path, e))?;
    for row in rows {
        w.write_record([
            row.lambda_level.to_string(),
            row.train_size.to_string(),
            row.misspecified.to_string(),
            row.coefficient.to_string(),
            row.replicates.to_string(),
            fmt_f64(row.median),
            fmt_f64(row.sign_stability),
        ])
        .map_err(|e| IoError::csv(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Writes `plot_data.csv`: long-form series — for each metric and method,
/// the mean (and SE) as a function of training size within a level.
pub fn write_plot_data_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), IoError> {
    let mut w = open_writer(path)?;
    w.write_record([
        "metric",
        "method",
        "lambda_level",
        "misspecified",
        "train_size",
        "mean",
        "se",
    ])
    .map_err(|e| IoError::csv(path, e))?;
    const METRIC_NAMES: [&str; 5] = ["auroc", "auprc", "brier", "log_loss", "tnr_at_tpr95"];
    for row in rows {
        let means = [
            row.mean.auroc,
            row.mean.auprc,
            row.mean.brier,
            row.mean.log_loss,
            row.mean.tnr_at_tpr95,
        ];
        let ses = [
            row.se.map(|s| s.auroc),
            row.se.map(|s| s.auprc),
            row.se.map(|s| s.brier),
            row.se.map(|s| s.log_loss),
            row.se.map(|s| s.tnr_at_tpr95),
        ];
        for ((metric, mean), se) in METRIC_NAMES.into_iter().zip(means).zip(ses) {
            w.write_record([
                metric.to_string(),
                row.method.to_string(),
                row.lambda_level.to_string(),
                row.misspecified.to_string(),
                row.train_size.to_string(),
                fmt_f64(mean),
                fmt_opt_f64(se),
            ])
            .map_err(|e| IoError::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Everything needed to reproduce a run: seeds, scenario set, and tunables.
/// The creation stamp is informational; [`Manifest::equivalent`] ignores it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Unix seconds at creation; excluded from reproducibility comparisons.
    pub created_unix_secs: u64,
    /// The CLI command that produced the artifacts.
    pub command: String,
    pub base_seed: u64,
    pub replicates: u64,
    /// Replicate index for single-replicate commands; 0 for grid runs.
    pub replicate: u64,
    pub misspecified: bool,
    pub scenarios: Vec<Scenario>,
    pub study: StudyConfig,
}

impl Manifest {
    /// A manifest stamped with the current time.
    pub fn new(
        command: impl Into<String>,
        base_seed: u64,
        replicates: u64,
        scenarios: Vec<Scenario>,
        study: StudyConfig,
    ) -> Self {
        let created_unix_secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            tool: "gofscreen".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_secs,
            command: command.into(),
            base_seed,
            replicates,
            replicate: 0,
            misspecified: false,
            scenarios,
            study,
        }
    }

    /// Reproducibility equivalence: everything but the creation stamp.
    pub fn equivalent(&self, other: &Self) -> bool {
        let strip = |m: &Manifest| Manifest { created_unix_secs: 0, ..m.clone() };
        strip(self) == strip(other)
    }
}

/// Writes `manifest.toml`.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), IoError> {
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| IoError::Toml { path: path.to_owned(), message: e.to_string() })?;
    fs::write(path, text).map_err(|e| IoError::file(path, e))
}

/// Reads a `manifest.toml`, rejecting unknown keys.
pub fn read_manifest(path: &Path) -> Result<Manifest, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    toml::from_str(&text)
        .map_err(|e| IoError::Toml { path: path.to_owned(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{StudyConfig, TRAIN_SIZES};
    use crate::fitter::{fit_latent_state, FitConfig};
    use crate::rng::{substream, StreamPurpose};
    use crate::simgen::{sample_dataset, sample_network, LambdaLevel, SimulationParams};
    use tempfile::TempDir;

    fn sample_pair(seed: u64) -> (SimulationParams, SensorNetwork, LabeledDataset) {
        let params = SimulationParams::for_level(LambdaLevel::Low);
        let mut rng = substream(seed, 0, StreamPurpose::Auxiliary);
        let network = sample_network(&params, &mut rng);
        let dataset = sample_dataset(24, &params, &network, &mut rng).unwrap();
        (params, network, dataset)
    }

    #[test]
    fn network_round_trips_bit_exactly() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("network.csv");
        let (_, network, _) = sample_pair(3);
        write_network_csv(&path, &network).unwrap();
        let back = read_network_csv(&path).unwrap();
        assert_eq!(back, network);
    }

    #[test]
    fn dataset_round_trips_bit_exactly() {
        let dir = TempDir::new().unwrap();
        let events = dir.path().join("events.csv");
        let sensors = dir.path().join("sensors.csv");
        let (_, _, dataset) = sample_pair(5);
        write_events_csv(&events, &dataset, "low_n24").unwrap();
        write_sensors_csv(&sensors, &dataset).unwrap();
        let (back, tag) = read_dataset_csvs(&events, &sensors).unwrap();
        assert_eq!(back, dataset);
        assert_eq!(tag, "low_n24");
    }

    #[test]
    fn awkward_floats_survive_the_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("network.csv");
        let network = SensorNetwork {
            locations: vec![1.0 / 3.0, 1e-17, 0.1 + 0.2, f64::MIN_POSITIVE],
            noise_offsets: vec![2.0 / 3.0, 1.0 - 1e-16, 9.999999999999999e22, 1e308],
        };
        write_network_csv(&path, &network).unwrap();
        let back = read_network_csv(&path).unwrap();
        for (a, b) in network.locations.iter().zip(&back.locations) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in network.noise_offsets.iter().zip(&back.noise_offsets) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn event_class_distinguishes_the_three_mechanisms() {
        let (params, network, dataset) = sample_pair(7);
        let mut seen_valid = 0;
        let mut seen_composite = 0;
        let mut seen_malformed = 0;
        for instance in &dataset.instances {
            match EventClass::of(instance).unwrap() {
                EventClass::Valid => {
                    assert_eq!(instance.label, Some(Label::Valid));
                    seen_valid += 1;
                }
                EventClass::Composite => {
                    assert!(instance.truth.is_none());
                    seen_composite += 1;
                }
                EventClass::Malformed => {
                    assert!(instance.truth.is_some());
                    seen_malformed += 1;
                }
            }
        }
        assert_eq!(seen_valid, 12);
        assert_eq!(seen_composite + seen_malformed, 12);
        let _ = (params, network);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = TempDir::new().unwrap();
        let events = dir.path().join("events.csv");
        let sensors = dir.path().join("sensors.csv");
        std::fs::write(
            &events,
            "event_id,label,true_l,true_m,scenario\n0,1,0.5,10,x\n1,7,0.5,10,x\n",
        )
        .unwrap();
        std::fs::write(&sensors, "event_id,sensor_id,detected,x\n").unwrap();
        let err = read_dataset_csvs(&events, &sensors).unwrap_err();
        match err {
            IoError::Parse { line, ref message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("label"), "{message}");
            }
            other => panic!("expected a parse error, got {other}"),
        }

        std::fs::write(&events, "event_id,label,true_l,true_m,scenario\n0,1,0.5,10,x\n").unwrap();
        std::fs::write(
            &sensors,
            "event_id,sensor_id,detected,x\n0,0,1,1.25\n0,1,0,2.5\n",
        )
        .unwrap();
        let err = read_dataset_csvs(&events, &sensors).unwrap_err();
        match err {
            IoError::Parse { line, ref message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("detected"), "{message}");
            }
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn scores_csv_carries_fit_and_class_columns() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("scores.csv");
        let (params, network, dataset) = sample_pair(11);
        let config = FitConfig::for_params(&params);
        let fits: Vec<_> = dataset
            .instances
            .iter()
            .map(|i| fit_latent_state(i, &params, &network, &config))
            .collect();
        let rows = score_rows(&dataset, &fits, &params, &network);
        write_scores_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "event_id,label,class,theta_hat_l,theta_hat_m,log_likelihood,converged,\
             bar_ell_obs,bar_ell_det,bar_ell_nondet,m,m_hat,r_bar,s_r"
        );
        assert_eq!(text.lines().count(), dataset.len() + 1);
        assert!(text.contains(",valid,"));
        // Both invalid mechanisms are present in a 24-event balanced draw
        // with p_mix = 0.5 at this seed.
        assert!(text.contains(",composite,"));
        assert!(text.contains(",malformed,"));
    }

    #[test]
    fn feature_csv_headers_name_every_column() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("features.csv");
        let vectors = vec![
            FeatureVector {
                representation: Representation::Baseline,
                values: vec![4.0, 9.5, 0.25, 1.5],
            },
            FeatureVector {
                representation: Representation::Baseline,
                values: vec![6.0, 10.5, -0.5, 0.75],
            },
        ];
        write_features_csv(&path, Representation::Baseline, 50, &vectors).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "event_id,m,m_hat,r_bar,s_r");
        assert_eq!(text.lines().nth(2).unwrap(), "1,6,10.5,-0.5,0.75");
    }

    fn synthetic_result(replicate: u64, misspecified: bool) -> ReplicateResult {
        let base = MetricSet {
            auroc: 0.8 + replicate as f64 * 1e-3,
            auprc: 0.75,
            brier: 1.0 / 3.0,
            log_loss: 0.42,
            tnr_at_tpr95: 0.6,
        };
        let mut metrics = [base; 5];
        metrics[1].auroc = 0.7;
        ReplicateResult {
            lambda_level: LambdaLevel::High,
            train_size: TRAIN_SIZES[0],
            test_size: 200,
            base_seed: 17,
            replicate,
            misspecified,
            metrics,
            coef_bar_obs: 2.0 / 3.0,
            coef_bar_det: 1.372,
            coef_bar_nondet: -0.1,
            train_fit_failures: 1,
            test_fit_failures: 2,
            seconds: 3.5,
        }
    }

    #[test]
    fn results_raw_round_trips_through_csv() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("results_raw.csv");
        let rows = vec![
            synthetic_result(0, false),
            synthetic_result(1, false),
            synthetic_result(0, true),
        ];
        write_results_raw_csv(&path, &rows).unwrap();
        let back = read_results_raw_csv(&path).unwrap();
        assert_eq!(back, rows); // seconds is excluded from equality
        assert_eq!(back[0].seconds, 0.0);

        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + rows.len() * Method::ALL.len());
        assert_eq!(text.lines().next().unwrap(), RAW_HEADER.join(","));
    }

    #[test]
    fn coef_replicates_round_trip_through_csv() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("coef_replicates.csv");
        let rows: Vec<DecompReplicate> = (0..3)
            .map(|replicate| {
                let full = synthetic_result(replicate, false);
                DecompReplicate {
                    lambda_level: full.lambda_level,
                    train_size: full.train_size,
                    test_size: full.test_size,
                    base_seed: full.base_seed,
                    replicate,
                    misspecified: false,
                    metrics: full.metrics[0],
                    coef_bar_obs: full.coef_bar_obs,
                    coef_bar_det: full.coef_bar_det,
                    coef_bar_nondet: full.coef_bar_nondet,
                    train_fit_failures: full.train_fit_failures,
                    test_fit_failures: full.test_fit_failures,
                }
            })
            .collect();
        write_coef_replicates_csv(&path, &rows).unwrap();
        let back = read_coef_replicates_csv(&path).unwrap();
        assert_eq!(back, rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + rows.len());
        assert_eq!(text.lines().next().unwrap(), COEF_HEADER.join(","));
    }

    #[test]
    fn misspec_summary_writes_one_row_per_method() {
        use crate::experiments::MisspecComparison;
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("misspec_summary.csv");
        let well = vec![synthetic_result(0, false), synthetic_result(1, false)];
        let mut miss = vec![synthetic_result(0, true), synthetic_result(1, true)];
        for row in &mut miss {
            for m in &mut row.metrics {
                m.auroc -= 0.01;
            }
        }
        let comparison = MisspecComparison { well_specified: well, misspecified: miss };
        write_misspec_csv(&path, &comparison.summary()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + Method::ALL.len());
        let first = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields[2], "lr_decomp");
        assert_eq!(fields[3], "2");
        let degradation: f64 = fields[6].parse().unwrap();
        assert!((degradation - 0.01).abs() < 1e-12, "{first}");
    }

    #[test]
    fn reordered_raw_rows_are_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("results_raw.csv");
        write_results_raw_csv(&path, &[synthetic_result(0, false)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = read_results_raw_csv(&path).unwrap_err();
        assert!(matches!(err, IoError::Parse { .. }), "{err}");
    }

    #[test]
    fn summary_blanks_standard_errors_below_two_replicates() {
        use crate::experiments::summarize;
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("summary.csv");
        let summary = summarize(&[synthetic_result(0, false)]);
        write_summary_csv(&path, &summary).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first_data_line = text.lines().nth(1).unwrap();
        assert!(first_data_line.contains(",1,"), "replicate count column: {first_data_line}");
        // Every *_se field is empty: consecutive commas after each mean.
        let fields: Vec<&str> = first_data_line.split(',').collect();
        for k in [6, 8, 10, 12, 14] {
            assert_eq!(fields[k], "", "field {k} of {first_data_line}");
        }
    }

    #[test]
    fn plot_data_is_long_form_per_metric_and_method() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("plot_data.csv");
        let summary = crate::experiments::summarize(&[
            synthetic_result(0, false),
            synthetic_result(1, false),
        ]);
        write_plot_data_csv(&path, &summary).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // 5 methods x 5 metrics + header.
        assert_eq!(text.lines().count(), 26);
        assert!(text.contains("auroc,lr_decomp,high,false,100,"));
        assert!(text.contains("brier,rf_raw,high,false,100,0.3333333333333333,"));
    }

    #[test]
    fn gains_and_stability_files_have_expected_shapes() {
        use crate::experiments::{coefficient_stability, paired_gains};
        let dir = TempDir::new().unwrap();
        let rows = vec![synthetic_result(0, false), synthetic_result(1, false)];

        let gains_path = dir.path().join("gains.csv");
        write_gains_csv(&gains_path, &paired_gains(&rows)).unwrap();
        let text = std::fs::read_to_string(&gains_path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("lr_decomp_minus_lr_obs"));
        assert!(text.contains("rf_raw_plus_features_minus_rf_raw"));

        let stability_path = dir.path().join("coef_stability.csv");
        write_coef_stability_csv(&stability_path, &coefficient_stability(&rows)).unwrap();
        let text = std::fs::read_to_string(&stability_path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("bar_ell_det,2,1.372,1"));
        assert!(text.contains("bar_ell_nondet,2,-0.1,1"));
    }

    #[test]
    fn manifest_round_trips_and_ignores_the_stamp() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.toml");
        let scenarios = vec![crate::experiments::Scenario::new(LambdaLevel::High, 1000, 9)];
        let manifest = Manifest::new("run", 9, 30, scenarios, StudyConfig::default());
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, manifest);

        let mut later = manifest.clone();
        later.created_unix_secs += 3600;
        assert!(later.equivalent(&manifest));
        let mut other_seed = manifest.clone();
        other_seed.base_seed = 10;
        assert!(!other_seed.equivalent(&manifest));
    }

    #[test]
    fn manifests_with_unknown_keys_are_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.toml");
        let scenarios = vec![crate::experiments::Scenario::new(LambdaLevel::Low, 100, 2)];
        let manifest = Manifest::new("simulate", 2, 1, scenarios, StudyConfig::default());
        write_manifest(&path, &manifest).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        // Top-level key that the manifest schema does not know about.
        std::fs::write(&path, format!("mystery_knob = 4\n{text}")).unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(matches!(err, IoError::Toml { .. }), "{err}");
        assert!(err.to_string().contains("mystery_knob"), "{err}");

        // Same for a key buried in the deepest nested config table.
        std::fs::write(&path, format!("{text}\nmystery_knob = 4\n")).unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(matches!(err, IoError::Toml { .. }), "{err}");
        assert!(err.to_string().contains("mystery_knob"), "{err}");
    }
}
