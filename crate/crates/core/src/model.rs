//! Class-conditional event model API and likelihood decomposition.
//!
//! An event observed by a network of `S` sensors is summarized per sensor by
//! a detection indicator and, where detected, a real-valued observation. A
//! class-conditional model supplies, for any candidate parameter point
//! `theta`, each sensor's detection probability and observed-value
//! log-density. The total instance log-likelihood then splits into three
//! interpretable components:
//!
//! - detection: `sum over detecting sensors of ln pi_s(theta)`,
//! - non-detection: `sum over silent sensors of ln (1 - pi_s(theta))`,
//! - observed value: `sum over detecting sensors of ln g_s(x_s; theta)`.
//!
//! Normalizing each component by the number of terms it aggregates yields
//! per-sensor average scores that are comparable across events with different
//! detection counts; those normalized scores are the core screening features
//! built in [`crate::features`].

use thiserror::Error;

/// Numerical floor used when taking logs of probabilities: detection
/// probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` so that a
/// degenerate model value of exactly 0 or 1 yields a large-but-finite
/// log-score instead of an infinity that would poison downstream sums.
pub const PROB_FLOOR: f64 = 1e-12;

/// Clamps a probability to `[PROB_FLOOR, 1 - PROB_FLOOR]` before a log.
#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Latent state of a single event: location `l` on the unit interval and
/// magnitude `m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentState {
    pub l: f64,
    pub m: f64,
}

impl LatentState {
    pub fn new(l: f64, m: f64) -> Self {
        Self { l, m }
    }
}

/// Binary screening label: `Valid` events are consistent with the forward
/// model, `Invalid` events are not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Invalid,
    Valid,
}

impl Label {
    /// `Valid` is the positive class and codes to 1.
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Invalid => 0,
            Label::Valid => 1,
        }
    }

    pub fn from_u8(code: u8) -> Option<Self> {
        match code {
            0 => Some(Label::Invalid),
            1 => Some(Label::Valid),
            _ => None,
        }
    }
}

/// A class-conditional forward model over a fixed sensor network.
///
/// Implementations must return detection probabilities in `[0, 1]` and
/// finite observation log-densities for finite inputs; [`score_decomposition`]
/// clamps probabilities defensively and flags any non-finite density rather
/// than panicking.
pub trait ClassConditionalModel {
    /// Parameter point the model is evaluated at.
    type Theta;

    /// Number of sensors in the network.
    fn sensor_count(&self) -> usize;

    /// Probability that sensor `s` detects an event at `theta`.
    fn detection_probability(&self, s: usize, theta: &Self::Theta) -> f64;

    /// Log-density of observed value `x` at sensor `s` given detection at
    /// `theta`.
    fn observation_log_density(&self, s: usize, x: f64, theta: &Self::Theta) -> f64;
}

/// Structural errors for instances and scoring.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("instance has {got} sensors but the model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sensor {sensor}: observed value and detection flag disagree")]
    ObservationMismatch { sensor: usize },
    #[error("sensor {sensor}: observed value must be finite, got {value}")]
    NonFiniteObservation { sensor: usize, value: f64 },
}

/// One catalog event: per-sensor detections, observed values for exactly the
/// detecting sensors, and optional ground truth carried through simulations.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    detections: Vec<bool>,
    observed: Vec<Option<f64>>,
    /// Screening label when known (labeled simulation data).
    pub label: Option<Label>,
    /// Generating latent state when known. Valid and malformed events carry
    /// their single generating state; composite events carry none, because
    /// no single state produced them. Diagnostic only — never enters fitting
    /// or features.
    pub truth: Option<LatentState>,
}

impl Instance {
    /// Builds an instance, enforcing that `observed[s]` is present exactly
    /// when `detections[s]` and that every observed value is finite.
    pub fn new(detections: Vec<bool>, observed: Vec<Option<f64>>) -> Result<Self, ModelError> {
        if detections.len() != observed.len() {
            return Err(ModelError::DimensionMismatch {
                expected: detections.len(),
                got: observed.len(),
            });
        }
        for (s, (&d, x)) in detections.iter().zip(&observed).enumerate() {
            match x {
                Some(v) if !d => {
                    let _ = v;
                    return Err(ModelError::ObservationMismatch { sensor: s });
                }
                None if d => return Err(ModelError::ObservationMismatch { sensor: s }),
                Some(v) if !v.is_finite() => {
                    return Err(ModelError::NonFiniteObservation { sensor: s, value: *v })
                }
                _ => {}
            }
        }
        Ok(Self { detections, observed, label: None, truth: None })
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_truth(mut self, truth: LatentState) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn sensor_count(&self) -> usize {
        self.detections.len()
    }

    /// Number of detecting sensors, written `m` throughout.
    pub fn detection_count(&self) -> usize {
        self.detections.iter().filter(|&&d| d).count()
    }

    pub fn detected(&self, s: usize) -> bool {
        self.detections[s]
    }

    pub fn detections(&self) -> &[bool] {
        &self.detections
    }

    /// Observed value at sensor `s`, present iff the sensor detected.
    pub fn observed(&self, s: usize) -> Option<f64> {
        self.observed[s]
    }

    /// Iterates `(sensor, observed value)` over detecting sensors in sensor
    /// order.
    pub fn observed_values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.observed.iter().enumerate().filter_map(|(s, x)| x.map(|v| (s, v)))
    }
}

/// Instance log-likelihood split into detection, non-detection and
/// observed-value components, evaluated at one parameter point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreDecomposition {
    /// Sum of `ln pi_s` over detecting sensors.
    pub ell_det: f64,
    /// Sum of `ln (1 - pi_s)` over silent sensors.
    pub ell_nondet: f64,
    /// Sum of observation log-densities over detecting sensors.
    pub ell_obs: f64,
    /// `ell_det + ell_nondet + ell_obs`.
    pub ell_total: f64,
    /// Number of detecting sensors.
    pub m: usize,
    /// Network size `S`.
    pub sensor_count: usize,
    /// True when any model evaluation was non-finite; the offending
    /// component is propagated as negative infinity.
    pub flagged: bool,
}

/// Detection-count-normalized scores: each component divided by the number
/// of sensors contributing to it (with empty sums mapping to 0 via a
/// denominator floor of one).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedScores {
    pub bar_det: f64,
    pub bar_nondet: f64,
    pub bar_obs: f64,
}

/// Maps a non-finite per-sensor contribution to negative infinity and
/// reports whether it had to intervene.
#[inline]
fn sanitize(term: f64) -> (f64, bool) {
    if term.is_finite() {
        (term, false)
    } else {
        (f64::NEG_INFINITY, true)
    }
}

/// Evaluates the three-way log-likelihood decomposition of `instance` under
/// `model` at `theta`.
pub fn score_decomposition<M: ClassConditionalModel + ?Sized>(
    model: &M,
    theta: &M::Theta,
    instance: &Instance,
) -> Result<ScoreDecomposition, ModelError> {
    let s_count = model.sensor_count();
    if instance.sensor_count() != s_count {
        return Err(ModelError::DimensionMismatch {
            expected: s_count,
            got: instance.sensor_count(),
        });
    }
    let mut ell_det = 0.0;
    let mut ell_nondet = 0.0;
    let mut ell_obs = 0.0;
    let mut flagged = false;
    for s in 0..s_count {
        let p = clamp_prob(model.detection_probability(s, theta));
        if instance.detected(s) {
            let (term, bad) = sanitize(p.ln());
            ell_det += term;
            flagged |= bad;
            let x = instance.observed(s).expect("detection invariant");
            let (term, bad) = sanitize(model.observation_log_density(s, x, theta));
            ell_obs += term;
            flagged |= bad;
        } else {
            let (term, bad) = sanitize((1.0 - p).ln());
            ell_nondet += term;
            flagged |= bad;
        }
    }
    Ok(ScoreDecomposition {
        ell_det,
        ell_nondet,
        ell_obs,
        ell_total: ell_det + ell_nondet + ell_obs,
        m: instance.detection_count(),
        sensor_count: s_count,
        flagged,
    })
}

/// Normalizes a decomposition by its per-component sensor counts.
pub fn normalize(decomposition: &ScoreDecomposition) -> NormalizedScores {
    let m = decomposition.m;
    let silent = decomposition.sensor_count - m;
    NormalizedScores {
        bar_det: decomposition.ell_det / m.max(1) as f64,
        bar_nondet: decomposition.ell_nondet / silent.max(1) as f64,
        bar_obs: decomposition.ell_obs / m.max(1) as f64,
    }
}

/// Per-sensor log-likelihood contributions in sensor order: a detecting
/// sensor contributes `ln pi_s + ln g_s(x_s)`, a silent one `ln (1 - pi_s)`.
/// The contributions sum to the decomposition's `ell_total`.
pub fn sensor_contributions<M: ClassConditionalModel + ?Sized>(
    model: &M,
    theta: &M::Theta,
    instance: &Instance,
) -> Result<Vec<f64>, ModelError> {
    let s_count = model.sensor_count();
    if instance.sensor_count() != s_count {
        return Err(ModelError::DimensionMismatch {
            expected: s_count,
            got: instance.sensor_count(),
        });
    }
    Ok((0..s_count)
        .map(|s| {
            let p = clamp_prob(model.detection_probability(s, theta));
            if instance.detected(s) {
                let x = instance.observed(s).expect("detection invariant");
                let (det, _) = sanitize(p.ln());
                let (obs, _) = sanitize(model.observation_log_density(s, x, theta));
                det + obs
            } else {
                sanitize((1.0 - p).ln()).0
            }
        })
        .collect())
}
