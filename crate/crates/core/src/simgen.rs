//! Synthetic data generator: a one-dimensional sensor network observing
//! point events, with one valid and two invalid event mechanisms.
//!
//! A valid event has latent state `theta = (L, M)` (location, magnitude).
//! Sensor `s` at location `r_s` detects it with probability
//!
//! ```text
//! p_s(L, M) = sigmoid(alpha_0 + alpha_0s + lambda * (alpha_M * M - alpha_d * |L - r_s|))
//! ```
//!
//! and, when detecting, records `X_s ~ Normal(beta_0 + beta_M * M - beta_d * |L - r_s|, sigma_x^2)`.
//! The scale `lambda` controls how informative detections and non-detections
//! are; `alpha_0` is recalibrated per `lambda` level so that the mean number
//! of detecting sensors stays roughly constant across levels.
//!
//! Invalid events come in two flavors:
//!
//! - **Composite**: two pseudo-events `theta_A`, `theta_B` are drawn from the
//!   valid prior and per-sensor selectors `C_s ~ Bernoulli(gamma)` (1 selects
//!   `theta_A`) attribute each sensor to one of them. Each sensor then draws
//!   its detection, and (when detecting) its observed value, from its own
//!   selected pseudo-event. The result is an event whose detection pattern
//!   and observed values are assembled from two incompatible sources: each
//!   pseudo-event contributes a thinned copy of its detection footprint, and
//!   sensors attributed to the other pseudo-event stay silent even where one
//!   pseudo-event alone would have detected. With `gamma = 0` (or 1) every
//!   selector picks the same pseudo-event and the draw degenerates to a
//!   valid-looking event from that single pseudo-event.
//! - **Malformed**: detections are i.i.d. `Bernoulli(p_mal)` independent of
//!   the event's latent state; observed values still follow the observation
//!   model at the event's own `(L, M)`.
//!
//! Any event detected by fewer than two sensors is discarded and redrawn in
//! full (fresh latents, selectors and detections), for valid and invalid
//! classes alike, up to [`RESAMPLE_CAP`] attempts.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClassConditionalModel, Instance, Label, LatentState};
use crate::rng::StreamRng;

/// Maximum number of whole-event redraws while enforcing `m >= 2`.
pub const RESAMPLE_CAP: usize = 10_000;

/// Informativeness level of the detection model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaLevel {
    /// `lambda = 1`, `alpha_0 = -2.2`.
    Low,
    /// `lambda = 2`, `alpha_0 = -2.82`.
    High,
}

impl LambdaLevel {
    pub fn lambda(self) -> f64 {
        match self {
            LambdaLevel::Low => 1.0,
            LambdaLevel::High => 2.0,
        }
    }

    /// Baseline detectability, recalibrated so the mean detecting-sensor
    /// count is comparable across levels.
    pub fn alpha_0(self) -> f64 {
        match self {
            LambdaLevel::Low => -2.2,
            LambdaLevel::High => -2.82,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            LambdaLevel::Low => "low",
            LambdaLevel::High => "high",
        }
    }
}

impl std::str::FromStr for LambdaLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(LambdaLevel::Low),
            "high" => Ok(LambdaLevel::High),
            other => Err(format!("unknown lambda level {other:?}; expected \"low\" or \"high\"")),
        }
    }
}

impl std::fmt::Display for LambdaLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Rectangular search domain for the latent state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBox {
    /// Inclusive bounds for the location coordinate.
    pub l: (f64, f64),
    /// Inclusive bounds for the magnitude coordinate.
    pub m: (f64, f64),
}

impl ThetaBox {
    /// Projects a point onto the box.
    pub fn clamp(&self, theta: LatentState) -> LatentState {
        LatentState::new(theta.l.clamp(self.l.0, self.l.1), theta.m.clamp(self.m.0, self.m.1))
    }

    pub fn contains(&self, theta: LatentState) -> bool {
        (self.l.0..=self.l.1).contains(&theta.l) && (self.m.0..=self.m.1).contains(&theta.m)
    }
}

/// Full parameterization of the generator and of the analyst's assumed model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    /// Number of sensors `S`.
    pub sensor_count: usize,
    /// Baseline detectability.
    pub alpha_0: f64,
    /// Magnitude coefficient in the detection model.
    pub alpha_m: f64,
    /// Distance coefficient in the detection model.
    pub alpha_d: f64,
    /// Informativeness scale multiplying the magnitude/distance terms.
    pub lambda: f64,
    /// Observation-mean intercept.
    pub beta_0: f64,
    /// Observation-mean magnitude coefficient.
    pub beta_m: f64,
    /// Observation-mean distance coefficient.
    pub beta_d: f64,
    /// Observation noise standard deviation.
    pub sigma_x: f64,
    /// Composite-event selector probability (selector 1 picks pseudo-event A).
    pub gamma: f64,
    /// Malformed-event per-sensor detection probability.
    pub p_mal: f64,
    /// Probability that an invalid event is composite rather than malformed.
    pub p_mix: f64,
    /// Magnitude prior mean.
    pub m_mean: f64,
    /// Magnitude prior standard deviation.
    pub m_sd: f64,
    /// Search box for latent-state fitting.
    pub theta_box: ThetaBox,
}

impl SimulationParams {
    /// Canonical settings for a lambda level: `S = 50`,
    /// `(alpha_M, alpha_d) = (0.16, 12)`, `(beta_0, beta_M, beta_d, sigma_x) = (0, 1, 4, 1)`,
    /// `gamma = 0.5`, `p_mal = 0.1`, `p_mix = 0.5`, `L ~ U[0,1]`,
    /// `M ~ Normal(10, 2^2)`, search box `[0,1] x [0,20]`.
    pub fn for_level(level: LambdaLevel) -> Self {
        Self {
            sensor_count: 50,
            alpha_0: level.alpha_0(),
            alpha_m: 0.16,
            alpha_d: 12.0,
            lambda: level.lambda(),
            beta_0: 0.0,
            beta_m: 1.0,
            beta_d: 4.0,
            sigma_x: 1.0,
            gamma: 0.5,
            p_mal: 0.1,
            p_mix: 0.5,
            m_mean: 10.0,
            m_sd: 2.0,
            theta_box: ThetaBox { l: (0.0, 1.0), m: (0.0, 20.0) },
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |reason: &str| Err(GenError::InvalidParams { reason: reason.to_string() });
        if self.sensor_count == 0 {
            return bad("sensor_count must be at least 1");
        }
        if !(self.sigma_x.is_finite() && self.sigma_x > 0.0) {
            return bad("sigma_x must be finite and positive");
        }
        if !(self.m_sd.is_finite() && self.m_sd >= 0.0) {
            return bad("m_sd must be finite and non-negative");
        }
        for (name, p) in [("gamma", self.gamma), ("p_mal", self.p_mal), ("p_mix", self.p_mix)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.theta_box.l.0 < self.theta_box.l.1 && self.theta_box.m.0 < self.theta_box.m.1) {
            return bad("theta_box bounds must satisfy lower < upper componentwise");
        }
        for (name, v) in [
            ("alpha_0", self.alpha_0),
            ("alpha_m", self.alpha_m),
            ("alpha_d", self.alpha_d),
            ("lambda", self.lambda),
            ("beta_0", self.beta_0),
            ("beta_m", self.beta_m),
            ("beta_d", self.beta_d),
        ] {
            if !v.is_finite() {
                return bad(&format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}

/// One replicate's sensor network: locations and per-sensor detectability
/// offsets, both i.i.d. `U[0,1]`, drawn once and shared by that replicate's
/// training and test sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorNetwork {
    pub locations: Vec<f64>,
    pub noise_offsets: Vec<f64>,
}

impl SensorNetwork {
    pub fn sensor_count(&self) -> usize {
        self.locations.len()
    }
}

/// Generation failures.
#[derive(Debug, Error)]
pub enum GenError {
    #[error(
        "event generation exceeded {attempts} resampling attempts while enforcing m >= 2; \
         detection probabilities are likely miscalibrated"
    )]
    ResampleCapExceeded { attempts: usize },
    #[error("invalid simulation parameters: {reason}")]
    InvalidParams { reason: String },
    #[error("dataset size must be at least 2, got {n}")]
    DatasetTooSmall { n: usize },
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Detection probability of sensor `s` for an event at `(l, m)`.
#[inline]
pub fn detection_probability(
    params: &SimulationParams,
    network: &SensorNetwork,
    s: usize,
    l: f64,
    m: f64,
) -> f64 {
    let z = params.alpha_0
        + network.noise_offsets[s]
        + params.lambda * (params.alpha_m * m - params.alpha_d * (l - network.locations[s]).abs());
    sigmoid(z)
}

/// Mean observed value at sensor `s` for an event at `(l, m)`.
#[inline]
pub fn observation_mean(
    params: &SimulationParams,
    network: &SensorNetwork,
    s: usize,
    l: f64,
    m: f64,
) -> f64 {
    params.beta_0 + params.beta_m * m - params.beta_d * (l - network.locations[s]).abs()
}

/// The valid-class forward model over a fixed network, pluggable into the
/// scoring API of [`crate::model`].
#[derive(Clone, Copy, Debug)]
pub struct SimModel<'a> {
    pub params: &'a SimulationParams,
    pub network: &'a SensorNetwork,
}

impl<'a> SimModel<'a> {
    pub fn new(params: &'a SimulationParams, network: &'a SensorNetwork) -> Self {
        Self { params, network }
    }
}

impl ClassConditionalModel for SimModel<'_> {
    type Theta = LatentState;

    fn sensor_count(&self) -> usize {
        self.network.sensor_count()
    }

    fn detection_probability(&self, s: usize, theta: &LatentState) -> f64 {
        detection_probability(self.params, self.network, s, theta.l, theta.m)
    }

    fn observation_log_density(&self, s: usize, x: f64, theta: &LatentState) -> f64 {
        let mu = observation_mean(self.params, self.network, s, theta.l, theta.m);
        let sigma = self.params.sigma_x;
        let z = (x - mu) / sigma;
        -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z
    }
}

/// Draws a replicate's sensor network.
pub fn sample_network(params: &SimulationParams, rng: &mut StreamRng) -> SensorNetwork {
    let locations = (0..params.sensor_count).map(|_| rng.random()).collect();
    let noise_offsets = (0..params.sensor_count).map(|_| rng.random()).collect();
    SensorNetwork { locations, noise_offsets }
}

/// Draws a latent state from the valid-event prior.
fn draw_latent(params: &SimulationParams, rng: &mut StreamRng) -> LatentState {
    let l = rng.random();
    let m = Normal::new(params.m_mean, params.m_sd)
        .expect("validated m_sd")
        .sample(rng);
    LatentState::new(l, m)
}

/// Draws the detection vector, sensor `s` firing with the detection
/// probability of `per_sensor_theta(s)`.
fn draw_detections(
    params: &SimulationParams,
    network: &SensorNetwork,
    mut per_sensor_theta: impl FnMut(usize) -> LatentState,
    rng: &mut StreamRng,
) -> Vec<bool> {
    (0..params.sensor_count)
        .map(|s| {
            let theta = per_sensor_theta(s);
            rng.random::<f64>() < detection_probability(params, network, s, theta.l, theta.m)
        })
        .collect()
}

/// Fills observed values for detecting sensors, sensor `s` drawing from the
/// observation model at `per_sensor_theta(s)`.
fn draw_observations(
    params: &SimulationParams,
    network: &SensorNetwork,
    detections: &[bool],
    mut per_sensor_theta: impl FnMut(usize) -> LatentState,
    rng: &mut StreamRng,
) -> Vec<Option<f64>> {
    let noise = Normal::new(0.0, params.sigma_x).expect("validated sigma_x");
    detections
        .iter()
        .enumerate()
        .map(|(s, &d)| {
            d.then(|| {
                let theta = per_sensor_theta(s);
                observation_mean(params, network, s, theta.l, theta.m) + noise.sample(rng)
            })
        })
        .collect()
}

fn count_true(v: &[bool]) -> usize {
    v.iter().filter(|&&b| b).count()
}

/// Samples one valid event (label 1), redrawing until at least two sensors
/// detect.
pub fn sample_valid_event(
    params: &SimulationParams,
    network: &SensorNetwork,
    rng: &mut StreamRng,
) -> Result<Instance, GenError> {
    for _ in 0..RESAMPLE_CAP {
        let theta = draw_latent(params, rng);
        let detections = draw_detections(params, network, |_| theta, rng);
        if count_true(&detections) >= 2 {
            let observed = draw_observations(params, network, &detections, |_| theta, rng);
            let inst = Instance::new(detections, observed)
                .expect("generator upholds instance invariants");
            return Ok(inst.with_label(Label::Valid).with_truth(theta));
        }
    }
    Err(GenError::ResampleCapExceeded { attempts: RESAMPLE_CAP })
}

/// Samples one composite invalid event (label 0): each sensor's detection and
/// observed value are generated from the pseudo-event its own selector picks,
/// so the instance mixes two incompatible sources. No single generating state
/// exists, so no truth is recorded.
pub fn sample_invalid_composite(
    params: &SimulationParams,
    network: &SensorNetwork,
    rng: &mut StreamRng,
) -> Result<Instance, GenError> {
    for _ in 0..RESAMPLE_CAP {
        let theta_a = draw_latent(params, rng);
        let theta_b = draw_latent(params, rng);
        let selectors: Vec<bool> =
            (0..params.sensor_count).map(|_| rng.random::<f64>() < params.gamma).collect();
        let selected = |s: usize| if selectors[s] { theta_a } else { theta_b };
        let detections = draw_detections(params, network, selected, rng);
        if count_true(&detections) >= 2 {
            let observed = draw_observations(params, network, &detections, selected, rng);
            let inst = Instance::new(detections, observed)
                .expect("generator upholds instance invariants");
            return Ok(inst.with_label(Label::Invalid));
        }
    }
    Err(GenError::ResampleCapExceeded { attempts: RESAMPLE_CAP })
}

/// One un-filtered malformed draw: latent state plus i.i.d. `Bernoulli(p_mal)`
/// detections that ignore the latent state entirely.
fn sample_malformed_parts(
    params: &SimulationParams,
    rng: &mut StreamRng,
) -> (LatentState, Vec<bool>) {
    let theta = draw_latent(params, rng);
    let detections =
        (0..params.sensor_count).map(|_| rng.random::<f64>() < params.p_mal).collect();
    (theta, detections)
}

/// Samples one malformed invalid event (label 0): an irregular detection
/// pattern independent of the event's latent state, observed values from the
/// event's own state.
pub fn sample_invalid_malformed(
    params: &SimulationParams,
    network: &SensorNetwork,
    rng: &mut StreamRng,
) -> Result<Instance, GenError> {
    for _ in 0..RESAMPLE_CAP {
        let (theta, detections) = sample_malformed_parts(params, rng);
        if count_true(&detections) >= 2 {
            let observed = draw_observations(params, network, &detections, |_| theta, rng);
            let inst = Instance::new(detections, observed)
                .expect("generator upholds instance invariants");
            return Ok(inst.with_label(Label::Invalid).with_truth(theta));
        }
    }
    Err(GenError::ResampleCapExceeded { attempts: RESAMPLE_CAP })
}

/// A balanced labeled dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub instances: Vec<Instance>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Class labels as 0/1 codes, in instance order.
    pub fn labels(&self) -> Vec<u8> {
        self.instances
            .iter()
            .map(|i| i.label.expect("labeled dataset").as_u8())
            .collect()
    }

    /// `(valid, invalid)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let valid = self
            .instances
            .iter()
            .filter(|i| i.label == Some(Label::Valid))
            .count();
        (valid, self.len() - valid)
    }
}

/// Samples a shuffled dataset of `n` events: `ceil(n/2)` valid and
/// `floor(n/2)` invalid, each invalid being composite with probability
/// `p_mix` and malformed otherwise.
pub fn sample_dataset(
    n: usize,
    params: &SimulationParams,
    network: &SensorNetwork,
    rng: &mut StreamRng,
) -> Result<LabeledDataset, GenError> {
    if n < 2 {
        return Err(GenError::DatasetTooSmall { n });
    }
    let n_valid = n.div_ceil(2);
    let mut instances = Vec::with_capacity(n);
    for _ in 0..n_valid {
        instances.push(sample_valid_event(params, network, rng)?);
    }
    for _ in n_valid..n {
        let composite = rng.random::<f64>() < params.p_mix;
        instances.push(if composite {
            sample_invalid_composite(params, network, rng)?
        } else {
            sample_invalid_malformed(params, network, rng)?
        });
    }
    instances.shuffle(rng);
    Ok(LabeledDataset { instances })
}
