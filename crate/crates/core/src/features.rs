//! Classifier input representations: decomposed normalized scores with
//! auxiliary summaries, the observed-score-only subset, the auxiliary
//! baseline, raw zero-imputed sensor vectors, and the raw-plus-features
//! concatenation.
//!
//! Every representation has a fixed column schema for a given sensor count,
//! so feature matrices are comparable across instances, replicates, and
//! runs, and exportable with stable CSV headers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitter::FitResult;
use crate::model::{normalize, score_decomposition, Instance, LatentState, ModelError};
use crate::simgen::{observation_mean, SensorNetwork, SimModel, SimulationParams};

/// Input representation tags, one per classifier of the method comparison.
#[derive(Clone, Copy, Debug, Eq, Hash, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Normalized decomposed scores followed by the auxiliary block.
    Decomp,
    /// Observed-value score followed by the auxiliary block.
    Obs,
    /// Auxiliary block only.
    Baseline,
    /// Zero-imputed observed values, then detection indicators.
    Raw,
    /// Raw block followed by the full decomposed block.
    RawPlusFeatures,
}

impl Representation {
    /// Number of columns for a network with `sensor_count` sensors.
    pub fn len(self, sensor_count: usize) -> usize {
        match self {
            Representation::Decomp => 7,
            Representation::Obs => 5,
            Representation::Baseline => 4,
            Representation::Raw => 2 * sensor_count,
            Representation::RawPlusFeatures => 2 * sensor_count + 7,
        }
    }

    /// Whether assembling this representation requires a fitted latent state.
    pub fn needs_fit(self) -> bool {
        !matches!(self, Representation::Raw)
    }

    /// Stable column names, matching the value order of [`build_features`].
    pub fn column_names(self, sensor_count: usize) -> Vec<String> {
        let scored = |with_obs: bool, with_det: bool| {
            let mut names = Vec::new();
            if with_obs {
                names.push("bar_ell_obs".to_string());
            }
            if with_det {
                names.push("bar_ell_det".to_string());
                names.push("bar_ell_nondet".to_string());
            }
            names.extend(["m", "m_hat", "r_bar", "s_r"].map(String::from));
            names
        };
        let raw = || {
            (0..sensor_count)
                .map(|s| format!("x{s}"))
                .chain((0..sensor_count).map(|s| format!("d{s}")))
                .collect::<Vec<_>>()
        };
        match self {
            Representation::Decomp => scored(true, true),
            Representation::Obs => scored(true, false),
            Representation::Baseline => scored(false, false),
            Representation::Raw => raw(),
            Representation::RawPlusFeatures => {
                let mut names = raw();
                names.extend(scored(true, true));
                names
            }
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Representation::Decomp => "decomp",
            Representation::Obs => "obs",
            Representation::Baseline => "baseline",
            Representation::Raw => "raw",
            Representation::RawPlusFeatures => "raw_plus_features",
        };
        f.write_str(name)
    }
}

/// Transparent per-instance summaries: detecting count, fitted size, and the
/// residual mean / sample standard deviation over detecting sensors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryFeatures {
    pub m: usize,
    pub m_hat: f64,
    pub r_bar: f64,
    pub s_r: f64,
}

/// One instance's values under a representation, in schema order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub representation: Representation,
    pub values: Vec<f64>,
}

/// Feature-assembly failures.
#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("representation `{representation}` requires a fitted latent state")]
    MissingFit { representation: Representation },
    #[error(transparent)]
    Score(#[from] ModelError),
}

/// Residuals `X^(s) - (beta_0 + beta_M*M_hat - beta_d*|L_hat - r_s|)` over
/// detecting sensors, in sensor order.
pub fn residuals(
    instance: &Instance,
    theta_hat: &LatentState,
    params: &SimulationParams,
    network: &SensorNetwork,
) -> Vec<f64> {
    instance
        .observed_values()
        .map(|(s, x)| x - observation_mean(params, network, s, theta_hat.l, theta_hat.m))
        .collect()
}

/// Computes the auxiliary block at a fitted latent state. The residual mean
/// is 0 when nothing was detected, and the sample standard deviation
/// (divisor `m - 1`) is 0 whenever `m <= 1`.
pub fn auxiliary_features(
    instance: &Instance,
    theta_hat: &LatentState,
    params: &SimulationParams,
    network: &SensorNetwork,
) -> AuxiliaryFeatures {
    let resid = residuals(instance, theta_hat, params, network);
    let m = resid.len();
    let r_bar = if m == 0 { 0.0 } else { resid.iter().sum::<f64>() / m as f64 };
    let s_r = if m <= 1 {
        0.0
    } else {
        let ss: f64 = resid.iter().map(|r| (r - r_bar) * (r - r_bar)).sum();
        (ss / (m - 1) as f64).sqrt()
    };
    AuxiliaryFeatures { m, m_hat: theta_hat.m, r_bar, s_r }
}

fn push_raw(instance: &Instance, values: &mut Vec<f64>) {
    let s_count = instance.sensor_count();
    values.extend((0..s_count).map(|s| instance.observed(s).unwrap_or(0.0)));
    values.extend((0..s_count).map(|s| if instance.detected(s) { 1.0 } else { 0.0 }));
}

fn push_scored(
    instance: &Instance,
    fit: &FitResult,
    params: &SimulationParams,
    network: &SensorNetwork,
    with_obs: bool,
    with_det: bool,
    values: &mut Vec<f64>,
) -> Result<(), FeatureError> {
    let model = SimModel::new(params, network);
    let scores = normalize(&score_decomposition(&model, &fit.theta_hat, instance)?);
    let aux = auxiliary_features(instance, &fit.theta_hat, params, network);
    if with_obs {
        values.push(scores.bar_obs);
    }
    if with_det {
        values.push(scores.bar_det);
        values.push(scores.bar_nondet);
    }
    values.extend([aux.m as f64, aux.m_hat, aux.r_bar, aux.s_r]);
    Ok(())
}

/// Assembles one instance's feature vector under `representation`.
///
/// `fit` may be omitted only for the raw representation; every other tag
/// reads the fitted latent state. Column order per tag: scored blocks are
/// `(bar_ell_obs, bar_ell_det, bar_ell_nondet)` (subset per tag) followed by
/// `(m, M_hat, R_bar, s_R)`; raw blocks are the zero-imputed values
/// `X~(s),0` first, then the detection indicators `D^(s)`; the combined tag
/// is the raw block followed by the complete decomposed block.
pub fn build_features(
    instance: &Instance,
    fit: Option<&FitResult>,
    params: &SimulationParams,
    network: &SensorNetwork,
    representation: Representation,
) -> Result<FeatureVector, FeatureError> {
    let s_count = network.sensor_count();
    if instance.sensor_count() != s_count {
        return Err(ModelError::DimensionMismatch {
            expected: s_count,
            got: instance.sensor_count(),
        }
        .into());
    }
    let require_fit = || fit.ok_or(FeatureError::MissingFit { representation });
    let mut values = Vec::with_capacity(representation.len(s_count));
    match representation {
        Representation::Raw => push_raw(instance, &mut values),
        Representation::Decomp => {
            push_scored(instance, require_fit()?, params, network, true, true, &mut values)?;
        }
        Representation::Obs => {
            push_scored(instance, require_fit()?, params, network, true, false, &mut values)?;
        }
        Representation::Baseline => {
            push_scored(instance, require_fit()?, params, network, false, false, &mut values)?;
        }
        Representation::RawPlusFeatures => {
            let fit = require_fit()?;
            push_raw(instance, &mut values);
            push_scored(instance, fit, params, network, true, true, &mut values)?;
        }
    }
    debug_assert_eq!(values.len(), representation.len(s_count));
    Ok(FeatureVector { representation, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitter::{fit_latent_state, FitConfig};
    use crate::rng::{substream, StreamPurpose, StreamRng};
    use crate::simgen::{
        detection_probability, sample_network, sample_valid_event, LambdaLevel,
    };
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn rng(seed: u64) -> StreamRng {
        substream(seed, 0, StreamPurpose::Auxiliary)
    }

    /// An instance whose observed values sit exactly on the mean surface at
    /// `theta`, detections fixed by `detected`.
    fn on_mean_instance(
        detected: &[bool],
        theta: &LatentState,
        params: &SimulationParams,
        network: &SensorNetwork,
        offsets: &[f64],
    ) -> Instance {
        let observed: Vec<Option<f64>> = detected
            .iter()
            .enumerate()
            .map(|(s, &d)| {
                d.then(|| {
                    observation_mean(params, network, s, theta.l, theta.m) + offsets[s]
                })
            })
            .collect();
        Instance::new(detected.to_vec(), observed).unwrap()
    }

    fn small_setup() -> (SimulationParams, SensorNetwork) {
        let mut params = SimulationParams::for_level(LambdaLevel::Low);
        params.sensor_count = 5;
        let network = SensorNetwork {
            locations: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            noise_offsets: vec![0.0; 5],
        };
        (params, network)
    }

    fn fit_of(theta: LatentState) -> FitResult {
        FitResult {
            theta_hat: theta,
            log_likelihood: 0.0,
            converged: true,
            n_starts: 1,
            per_start_values: vec![0.0],
        }
    }

    #[test]
    fn residuals_vanish_on_the_mean_surface() {
        let (params, network) = small_setup();
        let theta = LatentState::new(0.4, 11.0);
        let detected = [true, false, true, true, false];
        let inst = on_mean_instance(&detected, &theta, &params, &network, &[0.0; 5]);
        let resid = residuals(&inst, &theta, &params, &network);
        assert_eq!(resid.len(), 3);
        assert!(resid.iter().all(|r| r.abs() < 1e-12), "residuals {resid:?}");
        let aux = auxiliary_features(&inst, &theta, &params, &network);
        assert_eq!(aux.m, 3);
        assert_eq!(aux.m_hat, 11.0);
        assert!(aux.r_bar.abs() < 1e-12 && aux.s_r < 1e-12);
    }

    #[test]
    fn residual_summaries_of_a_plus_minus_one_pair() {
        let (params, network) = small_setup();
        let theta = LatentState::new(0.5, 9.0);
        let detected = [true, true, false, false, false];
        let mut offsets = [0.0; 5];
        offsets[0] = 1.0;
        offsets[1] = -1.0;
        let inst = on_mean_instance(&detected, &theta, &params, &network, &offsets);
        let aux = auxiliary_features(&inst, &theta, &params, &network);
        assert_eq!(aux.m, 2);
        assert!((aux.r_bar - 0.0).abs() < 1e-12);
        assert!((aux.s_r - 2.0_f64.sqrt()).abs() < 1e-12, "s_r {}", aux.s_r);
    }

    #[test]
    fn single_detection_has_zero_residual_spread() {
        let (params, network) = small_setup();
        let theta = LatentState::new(0.2, 10.0);
        let detected = [false, true, false, false, false];
        let mut offsets = [0.0; 5];
        offsets[1] = 0.7;
        let inst = on_mean_instance(&detected, &theta, &params, &network, &offsets);
        let aux = auxiliary_features(&inst, &theta, &params, &network);
        assert_eq!(aux.m, 1);
        assert!((aux.r_bar - 0.7).abs() < 1e-12);
        assert_eq!(aux.s_r, 0.0);
    }

    #[test]
    fn pooled_residuals_from_recovered_fits_center_on_zero() {
        // Strong-signal events (magnitude 16, dense sensor patch) are fitted
        // and their residuals pooled; the pooled mean over >= 10^4 residuals
        // should sit within 3 sigma_x / 100 of zero.
        let params = SimulationParams::for_level(LambdaLevel::High);
        let config = FitConfig::for_params(&params);
        let mut r = rng(211);
        let s_count = 60;
        let noise = Normal::new(0.0, params.sigma_x).unwrap();
        let mut pooled: Vec<f64> = Vec::new();
        while pooled.len() < 10_000 {
            let center: f64 = 0.3 + 0.4 * r.random::<f64>();
            let network = SensorNetwork {
                locations: (0..s_count)
                    .map(|_| (center - 0.2 + 0.4 * r.random::<f64>()).clamp(0.0, 1.0))
                    .collect(),
                noise_offsets: (0..s_count).map(|_| r.random()).collect(),
            };
            let truth = LatentState::new(center, 16.0);
            let detected: Vec<bool> = (0..s_count)
                .map(|s| {
                    r.random::<f64>()
                        < detection_probability(&params, &network, s, truth.l, truth.m)
                })
                .collect();
            if detected.iter().filter(|&&d| d).count() < 30 {
                continue;
            }
            let observed: Vec<Option<f64>> = detected
                .iter()
                .enumerate()
                .map(|(s, &d)| {
                    d.then(|| {
                        observation_mean(&params, &network, s, truth.l, truth.m)
                            + noise.sample(&mut r)
                    })
                })
                .collect();
            let inst = Instance::new(detected, observed).unwrap();
            let fit = fit_latent_state(&inst, &params, &network, &config);
            pooled.extend(residuals(&inst, &fit.theta_hat, &params, &network));
        }
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let bound = 3.0 * params.sigma_x / (pooled.len() as f64).sqrt();
        assert!(mean.abs() <= bound, "pooled mean {mean} exceeds {bound}");
    }

    #[test]
    fn baseline_vector_is_the_auxiliary_block_in_order() {
        let (params, network) = small_setup();
        let theta = LatentState::new(0.6, 12.0);
        let detected = [true, true, true, false, false];
        let mut offsets = [0.0; 5];
        offsets[0] = 0.5;
        offsets[1] = -0.25;
        offsets[2] = 0.1;
        let inst = on_mean_instance(&detected, &theta, &params, &network, &offsets);
        let fit = fit_of(theta);
        let aux = auxiliary_features(&inst, &theta, &params, &network);
        let fv = build_features(&inst, Some(&fit), &params, &network, Representation::Baseline)
            .unwrap();
        assert_eq!(fv.values, vec![aux.m as f64, aux.m_hat, aux.r_bar, aux.s_r]);
    }

    #[test]
    fn raw_vector_places_imputed_values_then_indicators() {
        let (params, network) = small_setup();
        let theta = LatentState::new(0.35, 10.5);
        let detected = [true, false, false, true, false];
        let mut offsets = [0.0; 5];
        offsets[0] = 0.2;
        offsets[3] = -0.4;
        let inst = on_mean_instance(&detected, &theta, &params, &network, &offsets);
        let fv =
            build_features(&inst, None, &params, &network, Representation::Raw).unwrap();
        assert_eq!(fv.values.len(), 10);
        for s in 0..5 {
            let expected = inst.observed(s).unwrap_or(0.0);
            assert_eq!(fv.values[s], expected, "value slot {s}");
            assert_eq!(fv.values[5 + s], if detected[s] { 1.0 } else { 0.0 });
        }
        // Undetected sensors hold exactly 0 in the value block.
        assert_eq!(fv.values[1], 0.0);
        assert_eq!(fv.values[2], 0.0);
        assert_eq!(fv.values[4], 0.0);
    }

    #[test]
    fn decomp_vector_matches_independent_recomputation() {
        // Fit real sampled instances, then rebuild the decomp vector from
        // the scoring and auxiliary primitives directly.
        let params = SimulationParams::for_level(LambdaLevel::Low);
        let config = FitConfig::for_params(&params);
        let mut r = rng(97);
        let network = sample_network(&params, &mut r);
        let model = SimModel::new(&params, &network);
        for _ in 0..20 {
            let inst = sample_valid_event(&params, &network, &mut r).unwrap();
            let fit = fit_latent_state(&inst, &params, &network, &config);
            let fv = build_features(&inst, Some(&fit), &params, &network, Representation::Decomp)
                .unwrap();
            let scores =
                normalize(&score_decomposition(&model, &fit.theta_hat, &inst).unwrap());
            let aux = auxiliary_features(&inst, &fit.theta_hat, &params, &network);
            let expected = vec![
                scores.bar_obs,
                scores.bar_det,
                scores.bar_nondet,
                aux.m as f64,
                aux.m_hat,
                aux.r_bar,
                aux.s_r,
            ];
            assert_eq!(fv.values, expected);
            // The obs vector is the decomp vector without the detection scores.
            let obs = build_features(&inst, Some(&fit), &params, &network, Representation::Obs)
                .unwrap();
            assert_eq!(obs.values, vec![expected[0], expected[3], expected[4], expected[5], expected[6]]);
        }
    }

    #[test]
    fn raw_plus_features_ends_with_the_decomp_block() {
        let params = SimulationParams::for_level(LambdaLevel::High);
        let config = FitConfig::for_params(&params);
        let mut r = rng(131);
        let network = sample_network(&params, &mut r);
        let inst = sample_valid_event(&params, &network, &mut r).unwrap();
        let fit = fit_latent_state(&inst, &params, &network, &config);
        let combined = build_features(
            &inst,
            Some(&fit),
            &params,
            &network,
            Representation::RawPlusFeatures,
        )
        .unwrap();
        let raw = build_features(&inst, None, &params, &network, Representation::Raw).unwrap();
        let decomp =
            build_features(&inst, Some(&fit), &params, &network, Representation::Decomp)
                .unwrap();
        let s2 = 2 * params.sensor_count;
        assert_eq!(combined.values.len(), s2 + 7);
        assert_eq!(&combined.values[..s2], raw.values.as_slice());
        assert_eq!(&combined.values[s2..], decomp.values.as_slice());
    }

    #[test]
    fn column_schemas_are_stable_and_sized() {
        for tag in [
            Representation::Decomp,
            Representation::Obs,
            Representation::Baseline,
            Representation::Raw,
            Representation::RawPlusFeatures,
        ] {
            let names = tag.column_names(50);
            assert_eq!(names.len(), tag.len(50), "schema size for {tag}");
            assert_eq!(names, tag.column_names(50), "schema must be deterministic");
        }
        assert_eq!(
            Representation::Decomp.column_names(50),
            ["bar_ell_obs", "bar_ell_det", "bar_ell_nondet", "m", "m_hat", "r_bar", "s_r"]
        );
        let raw = Representation::Raw.column_names(3);
        assert_eq!(raw, ["x0", "x1", "x2", "d0", "d1", "d2"]);
    }

    #[test]
    fn missing_fit_and_dimension_mismatch_are_rejected() {
        let (params, network) = small_setup();
        let theta = LatentState::new(0.5, 10.0);
        let detected = [true, true, false, false, false];
        let inst = on_mean_instance(&detected, &theta, &params, &network, &[0.0; 5]);
        for tag in [
            Representation::Decomp,
            Representation::Obs,
            Representation::Baseline,
            Representation::RawPlusFeatures,
        ] {
            let err = build_features(&inst, None, &params, &network, tag).unwrap_err();
            assert!(matches!(err, FeatureError::MissingFit { representation } if representation == tag));
        }
        let mut wide = params.clone();
        wide.sensor_count = 6;
        let wide_net = SensorNetwork {
            locations: vec![0.0; 6],
            noise_offsets: vec![0.0; 6],
        };
        let err = build_features(&inst, None, &wide, &wide_net, Representation::Raw).unwrap_err();
        assert!(matches!(err, FeatureError::Score(ModelError::DimensionMismatch { .. })));
    }
}
