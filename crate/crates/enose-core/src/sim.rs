//! Seeded physics simulator for stereo MOX recordings.
//!
//! Generates the raw ADC frames a stereo pair of four-sensor boards would
//! produce for a configured sequence of odorant puffs, together with the
//! ground-truth onset times and directions the acceptance checks compare
//! against. The sensor response to a puff is a product of exponentials
//! (first-order binding with first-order recovery), transport is ballistic
//! with order-preserving turbulent delays, and the electrical chain models
//! the ratiometric divider, automatic gain selection, and ADC quantization.
//!
//! All randomness derives from ChaCha8 streams keyed by
//! `(seed, trial, side, sensor pair, purpose)`, so trials can be generated
//! independently, in any order, with bit-identical results.

use crate::acquisition::{
    positive_full_scale, AdcFrame, Gain, GainControllerState, step_gain_controller,
};
use crate::stereo::Direction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid kinetics: rise_tau {rise_tau} must be smaller than decay_tau {decay_tau}")]
    InvalidKinetics { rise_tau: f64, decay_tau: f64 },
    #[error("keep_bits {keep_bits} out of range 1..={max}")]
    OutOfRange { keep_bits: u32, max: u32 },
    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidScenario { field: String, reason: String },
}

fn scenario_err(field: &str, reason: impl Into<String>) -> SimError {
    SimError::InvalidScenario {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
}

impl Side {
    pub fn channel_prefix(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// Puff direction in a scenario file; `by_trial` assigns left-to-right to
/// the first half of the trial batch and right-to-left to the second half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSpec {
    LeftToRight,
    RightToLeft,
    ByTrial,
}

impl DirectionSpec {
    pub fn resolve(self, trial_index: u32, trials: u32) -> Direction {
        match self {
            DirectionSpec::LeftToRight => Direction::LeftToRight,
            DirectionSpec::RightToLeft => Direction::RightToLeft,
            DirectionSpec::ByTrial => {
                if trial_index < trials / 2 {
                    Direction::LeftToRight
                } else {
                    Direction::RightToLeft
                }
            }
        }
    }
}

/// One odorant puff within each trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuffSpec {
    /// Release time relative to the trial start.
    pub release_time_s: f64,
    pub direction: DirectionSpec,
    /// Peak normalized-conductance change at the sensor.
    pub amplitude: f64,
}

/// Response kinetics of one sensor type.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorProfile {
    pub rise_tau_s: f64,
    pub amplitude_scale: f64,
}

/// Slow baseline wander as a Gaussian random walk on `g_rel`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    /// Standard deviation of the walk after one second.
    pub sd_per_sqrt_s: f64,
}

fn default_rng() -> String {
    "chacha8".to_string()
}
fn default_trials() -> u32 {
    1
}
fn default_sample_rate() -> f64 {
    200.0
}
fn default_duration() -> f64 {
    30.0
}
fn default_spacing() -> f64 {
    0.125
}
fn default_speed() -> f64 {
    0.5
}
fn default_rise_tau() -> f64 {
    0.2
}
fn default_decay_tau() -> f64 {
    40.0
}
fn default_noise_sd() -> f64 {
    1e-4
}
fn default_bit_depth() -> u32 {
    24
}
fn default_baseline_grel() -> f64 {
    1.0
}
fn default_outlier_range() -> [f64; 2] {
    [2.3, 4.0]
}
fn default_unit_scale() -> f64 {
    1.0
}
fn default_upshift() -> f64 {
    0.45
}
fn default_downshift() -> f64 {
    0.95
}

/// Full description of a simulated recording batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    /// Random generator identifier; only "chacha8" is recognized.
    #[serde(default = "default_rng")]
    pub rng: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    /// Length of each trial recording.
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Left-right board separation.
    #[serde(default = "default_spacing")]
    pub sensor_spacing_m: f64,
    /// Mean puff travel speed.
    #[serde(default = "default_speed")]
    pub puff_speed_mps: f64,
    /// Scale of the order-preserving turbulent transport delays.
    #[serde(default)]
    pub jitter_sd_s: f64,
    /// Probability that a puff meanders and reaches the far board with a
    /// large extra delay, producing an outlier trial.
    #[serde(default)]
    pub outlier_probability: f64,
    /// Range of the extra far-side delay for outlier trials.
    #[serde(default = "default_outlier_range")]
    pub outlier_extra_delay_s: [f64; 2],
    /// Base rise time constant; per-type profiles may override.
    #[serde(default = "default_rise_tau")]
    pub rise_tau_s: f64,
    /// Recovery time constant back to baseline.
    #[serde(default = "default_decay_tau")]
    pub decay_tau_s: f64,
    /// White measurement noise on `g_rel`.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Constant extra latency of the right board (lateral-flow emulation).
    #[serde(default)]
    pub side_latency_bias_s: f64,
    /// Rise-time scale of the right board's sensors (mismatched-sensor
    /// emulation); 1.0 means both boards respond identically.
    #[serde(default = "default_unit_scale")]
    pub right_rise_tau_scale: f64,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u32,
    /// Relative conductance at rest.
    #[serde(default = "default_baseline_grel")]
    pub baseline_grel: f64,
    #[serde(default = "default_upshift")]
    pub gain_upshift_threshold: f64,
    #[serde(default = "default_downshift")]
    pub gain_downshift_threshold: f64,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    #[serde(default)]
    pub puffs: Vec<PuffSpec>,
    /// Kinetics per sensor pair S0..S3; defaults derive from `rise_tau_s`
    /// with S1 as the visibly slower type.
    #[serde(default)]
    pub profiles: Option<Vec<SensorProfile>>,
}

impl Default for SimScenario {
    fn default() -> Self {
        toml::from_str("").expect("empty scenario deserializes from defaults")
    }
}

impl SimScenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let scenario: SimScenario =
            toml::from_str(text).map_err(|e| scenario_err("<toml>", e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Kinetics per sensor pair, resolving the defaults.
    pub fn resolved_profiles(&self) -> Vec<SensorProfile> {
        match &self.profiles {
            Some(p) => p.clone(),
            None => vec![
                SensorProfile {
                    rise_tau_s: self.rise_tau_s,
                    amplitude_scale: 1.0,
                },
                // Slow sensor type; its conductance is still rising when a
                // second puff lands a few seconds later.
                SensorProfile {
                    rise_tau_s: 3.0,
                    amplitude_scale: 1.0,
                },
                SensorProfile {
                    rise_tau_s: self.rise_tau_s * 2.5,
                    amplitude_scale: 0.9,
                },
                SensorProfile {
                    rise_tau_s: self.rise_tau_s * 0.6,
                    amplitude_scale: 1.1,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.rng != "chacha8" {
            return Err(scenario_err(
                "rng",
                format!("unknown generator {:?}; expected \"chacha8\"", self.rng),
            ));
        }
        if self.trials == 0 {
            return Err(scenario_err("trials", "must be at least 1"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(scenario_err("sample_rate_hz", "must be positive"));
        }
        if !(self.duration_s > 0.0) {
            return Err(scenario_err("duration_s", "must be positive"));
        }
        if !(self.sensor_spacing_m > 0.0) {
            return Err(scenario_err("sensor_spacing_m", "must be positive"));
        }
        if !(self.puff_speed_mps > 0.0) {
            return Err(scenario_err("puff_speed_mps", "must be positive"));
        }
        if !(self.jitter_sd_s >= 0.0) {
            return Err(scenario_err("jitter_sd_s", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.outlier_probability) {
            return Err(scenario_err("outlier_probability", "must be within [0, 1]"));
        }
        if !(self.outlier_extra_delay_s[0] >= 0.0
            && self.outlier_extra_delay_s[1] >= self.outlier_extra_delay_s[0])
        {
            return Err(scenario_err(
                "outlier_extra_delay_s",
                "must be a non-negative ascending pair",
            ));
        }
        if !(self.rise_tau_s > 0.0) || self.rise_tau_s >= self.decay_tau_s {
            return Err(scenario_err(
                "rise_tau_s",
                format!(
                    "rise_tau_s = {} must be positive and smaller than decay_tau_s = {}",
                    self.rise_tau_s, self.decay_tau_s
                ),
            ));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(scenario_err("noise_sd", "must be non-negative"));
        }
        if !(2..=48).contains(&self.bit_depth) {
            return Err(scenario_err("bit_depth", "must be within 2..=48"));
        }
        if !(self.baseline_grel > 0.0) {
            return Err(scenario_err("baseline_grel", "must be positive"));
        }
        if !(0.0 < self.gain_upshift_threshold
            && self.gain_upshift_threshold < self.gain_downshift_threshold
            && self.gain_downshift_threshold < 1.0)
        {
            return Err(scenario_err(
                "gain_upshift_threshold",
                "thresholds must satisfy 0 < upshift < downshift < 1",
            ));
        }
        if let Some(drift) = &self.drift {
            if !(drift.sd_per_sqrt_s >= 0.0) {
                return Err(scenario_err("drift.sd_per_sqrt_s", "must be non-negative"));
            }
        }
        for (i, puff) in self.puffs.iter().enumerate() {
            if !(puff.release_time_s >= 0.0 && puff.release_time_s < self.duration_s) {
                return Err(scenario_err(
                    &format!("puffs[{i}].release_time_s"),
                    "must lie within the trial duration",
                ));
            }
            if !(puff.amplitude > 0.0) {
                return Err(scenario_err(
                    &format!("puffs[{i}].amplitude"),
                    "must be positive",
                ));
            }
        }
        if let Some(profiles) = &self.profiles {
            if profiles.len() != 4 {
                return Err(scenario_err(
                    "profiles",
                    format!("need exactly 4 sensor profiles, got {}", profiles.len()),
                ));
            }
        }
        if !(self.right_rise_tau_scale > 0.0) {
            return Err(scenario_err("right_rise_tau_scale", "must be positive"));
        }
        for (i, profile) in self.resolved_profiles().iter().enumerate() {
            let scaled = profile.rise_tau_s * self.right_rise_tau_scale.max(1.0);
            if !(profile.rise_tau_s > 0.0) || scaled >= self.decay_tau_s {
                return Err(scenario_err(
                    &format!("profiles[{i}].rise_tau_s"),
                    format!(
                        "rise_tau_s = {} (right side x{}) must be positive and smaller than decay_tau_s = {}",
                        profile.rise_tau_s, self.right_rise_tau_scale, self.decay_tau_s
                    ),
                ));
            }
            if !(profile.amplitude_scale > 0.0) {
                return Err(scenario_err(
                    &format!("profiles[{i}].amplitude_scale"),
                    "must be positive",
                ));
            }
        }
        if !(self.sensor_spacing_m / self.puff_speed_mps < self.duration_s) {
            return Err(scenario_err(
                "puff_speed_mps",
                "transit time exceeds the trial duration",
            ));
        }
        Ok(())
    }

    /// Kinematic transit time between the boards.
    pub fn transit_s(&self) -> f64 {
        self.sensor_spacing_m / self.puff_speed_mps
    }
}

/// Ground truth for one (trial, puff, side).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRow {
    pub trial_id: String,
    pub puff_index: usize,
    pub side: Side,
    /// Actual arrival time at this board, including jitter and bias.
    pub onset_time_s: f64,
    pub direction: Direction,
    /// Ideal kinematic delay `t_left - t_right = -/+ spacing/speed`.
    pub expected_delay_s: f64,
}

/// Trial manifest entry consumed by the stereo analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub trial_id: String,
    pub stimulus_time_s: f64,
    pub true_direction: Direction,
}

/// Output of one synthesized trial: per-side frame streams sorted by
/// (timestamp, channel) plus ground truth.
#[derive(Debug, Clone)]
pub struct SimTrial {
    pub trial_index: u32,
    pub left: Vec<AdcFrame>,
    pub right: Vec<AdcFrame>,
    pub ground_truth: Vec<GroundTruthRow>,
    pub manifest: Option<ManifestRow>,
}

/// Conductance change of one puff at time `t`.
///
/// Zero before the onset; afterwards a product of a saturating rise and an
/// exponential recovery, normalized so the curve's maximum equals
/// `amplitude`. The peak sits at `rise_tau * ln(1 + decay_tau/rise_tau)`.
pub fn puff_response(
    t: f64,
    onset: f64,
    amplitude: f64,
    rise_tau: f64,
    decay_tau: f64,
) -> Result<f64, SimError> {
    if !(rise_tau > 0.0) || rise_tau >= decay_tau {
        return Err(SimError::InvalidKinetics { rise_tau, decay_tau });
    }
    if t < onset {
        return Ok(0.0);
    }
    let s = t - onset;
    let raw = (1.0 - (-s / rise_tau).exp()) * (-s / decay_tau).exp();
    Ok(amplitude / peak_response(rise_tau, decay_tau) * raw)
}

/// Maximum of the unnormalized product-of-exponentials response.
fn peak_response(rise_tau: f64, decay_tau: f64) -> f64 {
    let s_peak = rise_tau * (1.0 + decay_tau / rise_tau).ln();
    (1.0 - (-s_peak / rise_tau).exp()) * (-s_peak / decay_tau).exp()
}

/// Time of the response maximum after onset.
pub fn peak_time(rise_tau: f64, decay_tau: f64) -> f64 {
    rise_tau * (1.0 + decay_tau / rise_tau).ln()
}

/// Quantize a supply ratio to the in-gain ADC code.
pub fn encode_ratio(x: f64, gain: Gain, bit_depth: u32) -> i64 {
    let fs = positive_full_scale(bit_depth);
    let code = (x * gain.factor() as f64 * fs as f64).round() as i64;
    code.clamp(0, fs)
}

/// Zero the low-order bits of each positive code, emulating a coarser
/// converter. `keep_bits` counts the retained positive-value bits, so for
/// 24-bit frames (23 positive bits) `keep_bits = 23` is the identity and
/// `keep_bits = 11` emulates a 12-bit ADC.
pub fn quantize(frames: &[AdcFrame], keep_bits: u32) -> Result<Vec<AdcFrame>, SimError> {
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let positive_bits = frame.bit_depth - 1;
        if keep_bits < 1 || keep_bits > positive_bits {
            return Err(SimError::OutOfRange {
                keep_bits,
                max: positive_bits,
            });
        }
        let mask: i64 = !((1i64 << (positive_bits - keep_bits)) - 1);
        let mut f = frame.clone();
        if f.raw_code > 0 {
            f.raw_code &= mask;
        }
        out.push(f);
    }
    Ok(out)
}

/// Input-referred LSB voltage of a converter keeping `keep_bits` positive
/// bits over `full_scale_volts`.
pub fn lsb_volts(keep_bits: u32, full_scale_volts: f64) -> f64 {
    full_scale_volts / (1u64 << keep_bits) as f64
}

// RNG stream purposes; part of the stream key, never reused across uses.
const PURPOSE_JITTER: u8 = 0;
const PURPOSE_NOISE: u8 = 1;
const PURPOSE_DRIFT: u8 = 2;
const PURPOSE_TURBULENCE: u8 = 3;

fn derive_rng(seed: u64, trial: u32, side: Option<Side>, pair: Option<usize>, purpose: u8) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&trial.to_le_bytes());
    key[12] = match side {
        None => 0xff,
        Some(Side::Left) => 0,
        Some(Side::Right) => 1,
    };
    key[13] = pair.map(|p| p as u8).unwrap_or(0xff);
    key[14] = purpose;
    key[16..26].copy_from_slice(b"mox-sim-v1");
    ChaCha8Rng::from_seed(key)
}

struct PuffOnsets {
    direction: Direction,
    onset_left: f64,
    onset_right: f64,
}

/// Arrival times for every puff of one trial.
///
/// The puff reaches the near board at `release + |j_near|` and the far
/// board one transit later plus an extra non-negative meander delay, so
/// arrival order always matches the travel direction. With probability
/// `outlier_probability` the meander delay is drawn from the outlier range
/// instead, pushing the trial past the outlier cutoff. The right board
/// additionally lags by the configured side bias.
fn puff_onsets(scenario: &SimScenario, trial: u32, trial_start: f64) -> Vec<PuffOnsets> {
    let transit = scenario.transit_s();
    let mut jitter_near = derive_rng(scenario.seed, trial, Some(Side::Left), None, PURPOSE_JITTER);
    let mut jitter_far = derive_rng(scenario.seed, trial, Some(Side::Right), None, PURPOSE_JITTER);
    let mut turbulence = derive_rng(scenario.seed, trial, None, None, PURPOSE_TURBULENCE);
    let normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let outlier_range = Uniform::new_inclusive(
        scenario.outlier_extra_delay_s[0],
        scenario.outlier_extra_delay_s[1],
    )
    .unwrap();
    scenario
        .puffs
        .iter()
        .map(|puff| {
            let direction = puff.direction.resolve(trial, scenario.trials);
            let j_near = normal.sample(&mut jitter_near).abs() * scenario.jitter_sd_s;
            let j_far = normal.sample(&mut jitter_far).abs() * scenario.jitter_sd_s;
            let is_outlier = turbulence.random::<f64>() < scenario.outlier_probability;
            let extra = if is_outlier {
                outlier_range.sample(&mut turbulence)
            } else {
                0.0
            };
            let near = trial_start + puff.release_time_s + j_near;
            let far = near + transit + j_far + extra;
            let (onset_left, mut onset_right) = match direction {
                Direction::LeftToRight => (near, far),
                Direction::RightToLeft => (far, near),
            };
            onset_right += scenario.side_latency_bias_s;
            PuffOnsets {
                direction,
                onset_left,
                onset_right,
            }
        })
        .collect()
}

pub fn trial_id(trial_index: u32) -> String {
    format!("T{trial_index:03}")
}

/// Synthesize one trial deterministically from `(scenario, trial_index)`.
///
/// Frames of the four channels share the global sample grid, so each side's
/// stream comes out sorted by (timestamp, channel id). Trial `k` occupies
/// the time span `[k * duration, (k+1) * duration)`.
pub fn synthesize_trial(scenario: &SimScenario, trial_index: u32) -> Result<SimTrial, SimError> {
    scenario.validate()?;
    let dt = 1.0 / scenario.sample_rate_hz;
    let n_samples = (scenario.duration_s * scenario.sample_rate_hz).round() as usize;
    let trial_start = trial_index as f64 * scenario.duration_s;
    let onsets = puff_onsets(scenario, trial_index, trial_start);
    let profiles = scenario.resolved_profiles();
    let id = trial_id(trial_index);

    let mut ground_truth = Vec::with_capacity(onsets.len() * 2);
    for (puff_index, (onset, puff)) in onsets.iter().zip(scenario.puffs.iter()).enumerate() {
        let _ = puff;
        let expected = match onset.direction {
            Direction::LeftToRight => -scenario.transit_s(),
            Direction::RightToLeft => scenario.transit_s(),
        };
        for (side, t) in [(Side::Left, onset.onset_left), (Side::Right, onset.onset_right)] {
            ground_truth.push(GroundTruthRow {
                trial_id: id.clone(),
                puff_index,
                side,
                onset_time_s: t,
                direction: onset.direction,
                expected_delay_s: expected,
            });
        }
    }

    let manifest = onsets.first().map(|first| ManifestRow {
        trial_id: id.clone(),
        stimulus_time_s: trial_start + scenario.puffs[0].release_time_s,
        true_direction: first.direction,
    });

    let mut sides = Vec::with_capacity(2);
    for side in [Side::Left, Side::Right] {
        // Per-channel signal synthesis, then interleave on the shared grid.
        let mut per_channel: Vec<Vec<AdcFrame>> = Vec::with_capacity(4);
        for (pair, profile) in profiles.iter().enumerate() {
            let mut noise_rng =
                derive_rng(scenario.seed, trial_index, Some(side), Some(pair), PURPOSE_NOISE);
            let mut drift_rng =
                derive_rng(scenario.seed, trial_index, Some(side), Some(pair), PURPOSE_DRIFT);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let drift_step_sd = scenario
                .drift
                .as_ref()
                .map(|d| d.sd_per_sqrt_s * dt.sqrt())
                .unwrap_or(0.0);
            let mut drift = 0.0;
            let rise_tau = match side {
                Side::Left => profile.rise_tau_s,
                Side::Right => profile.rise_tau_s * scenario.right_rise_tau_scale,
            };
            let channel_id = format!("{}{}", side.channel_prefix(), pair);
            let mut controller = GainControllerState::new(
                Gain::X1,
                scenario.gain_upshift_threshold,
                scenario.gain_downshift_threshold,
            )
            .map_err(|e| scenario_err("gain_upshift_threshold", e.to_string()))?;
            let fs = positive_full_scale(scenario.bit_depth) as f64;
            let mut frames = Vec::with_capacity(n_samples);
            for i in 0..n_samples {
                let t = trial_start + i as f64 * dt;
                let mut delta_g = 0.0;
                for (onset, puff) in onsets.iter().zip(scenario.puffs.iter()) {
                    let onset_t = match side {
                        Side::Left => onset.onset_left,
                        Side::Right => onset.onset_right,
                    };
                    delta_g += puff_response(
                        t,
                        onset_t,
                        puff.amplitude * profile.amplitude_scale,
                        rise_tau,
                        scenario.decay_tau_s,
                    )?;
                }
                if drift_step_sd > 0.0 {
                    drift += normal.sample(&mut drift_rng) * drift_step_sd;
                }
                let noise = if scenario.noise_sd > 0.0 {
                    normal.sample(&mut noise_rng) * scenario.noise_sd
                } else {
                    0.0
                };
                let g_rel = (scenario.baseline_grel * (1.0 + delta_g) + noise + drift).max(1e-12);
                let x = 1.0 / (1.0 + g_rel);
                let gain = controller.current_gain;
                let code = encode_ratio(x, gain, scenario.bit_depth);
                step_gain_controller(&mut controller, code as f64 / fs);
                frames.push(AdcFrame {
                    timestamp: t,
                    channel_id: channel_id.clone(),
                    raw_code: code,
                    gain,
                    bit_depth: scenario.bit_depth,
                });
            }
            per_channel.push(frames);
        }
        let mut merged = Vec::with_capacity(n_samples * 4);
        for i in 0..n_samples {
            for frames in &per_channel {
                merged.push(frames[i].clone());
            }
        }
        sides.push(merged);
    }
    let right = sides.pop().expect("two sides");
    let left = sides.pop().expect("two sides");
    Ok(SimTrial {
        trial_index,
        left,
        right,
        ground_truth,
        manifest,
    })
}

/// All trials of a scenario, concatenated on the shared timeline.
pub struct SimBatch {
    pub left: Vec<AdcFrame>,
    pub right: Vec<AdcFrame>,
    pub ground_truth: Vec<GroundTruthRow>,
    pub manifest: Vec<ManifestRow>,
}

pub fn synthesize_batch(scenario: &SimScenario) -> Result<SimBatch, SimError> {
    scenario.validate()?;
    let mut batch = SimBatch {
        left: Vec::new(),
        right: Vec::new(),
        ground_truth: Vec::new(),
        manifest: Vec::new(),
    };
    for trial_index in 0..scenario.trials {
        let mut trial = synthesize_trial(scenario, trial_index)?;
        batch.left.append(&mut trial.left);
        batch.right.append(&mut trial.right);
        batch.ground_truth.append(&mut trial.ground_truth);
        if let Some(m) = trial.manifest {
            batch.manifest.push(m);
        }
    }
    Ok(batch)
}
