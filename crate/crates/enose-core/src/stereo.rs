//! Stereo onset-delay direction estimation.
//!
//! Two identical sensor boards sit along the stimulus axis. The first ON
//! event each board produces after a stimulus marks the detected onset, and
//! the signed difference between the left and right onset times encodes the
//! travel direction: `delay = t_left - t_right`, so a left-to-right puff
//! (left fires first) gives a negative delay. Trials whose delay magnitude
//! exceeds a cutoff, or where either side never fires, are flagged as
//! outliers and excluded from the accuracy statistics.

use crate::events::{BoutEvent, Polarity};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StereoError {
    #[error("no trials to classify")]
    NoTrials,
    #[error("channel id {id:?} does not end in a sensor-pair digit 0-3")]
    BadChannelId { id: String },
}

/// One of the four stereo sensor pairs, one per MOX sensor type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorPair {
    S0,
    S1,
    S2,
    S3,
}

impl SensorPair {
    pub const ALL: [SensorPair; 4] = [SensorPair::S0, SensorPair::S1, SensorPair::S2, SensorPair::S3];

    pub fn index(self) -> usize {
        match self {
            SensorPair::S0 => 0,
            SensorPair::S1 => 1,
            SensorPair::S2 => 2,
            SensorPair::S3 => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<SensorPair> {
        Self::ALL.get(i).copied()
    }

    /// Sensor pair of a channel id; the trailing digit selects the pair
    /// (e.g. `L2` and `R2` both belong to `S2`).
    pub fn from_channel_id(id: &str) -> Result<SensorPair, StereoError> {
        id.chars()
            .last()
            .and_then(|c| c.to_digit(10))
            .and_then(|d| Self::from_index(d as usize))
            .ok_or_else(|| StereoError::BadChannelId { id: id.to_string() })
    }
}

impl fmt::Display for SensorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "left_to_right")]
    LeftToRight,
    #[serde(rename = "right_to_left")]
    RightToLeft,
}

impl Direction {
    pub fn flipped(self) -> Direction {
        match self {
            Direction::LeftToRight => Direction::RightToLeft,
            Direction::RightToLeft => Direction::LeftToRight,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::LeftToRight => write!(f, "left_to_right"),
            Direction::RightToLeft => write!(f, "right_to_left"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InferredDirection {
    #[serde(rename = "left_to_right")]
    LeftToRight,
    #[serde(rename = "right_to_left")]
    RightToLeft,
    #[serde(rename = "undetermined")]
    Undetermined,
}

impl InferredDirection {
    pub fn matches(self, truth: Direction) -> bool {
        matches!(
            (self, truth),
            (InferredDirection::LeftToRight, Direction::LeftToRight)
                | (InferredDirection::RightToLeft, Direction::RightToLeft)
        )
    }
}

impl fmt::Display for InferredDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferredDirection::LeftToRight => write!(f, "left_to_right"),
            InferredDirection::RightToLeft => write!(f, "right_to_left"),
            InferredDirection::Undetermined => write!(f, "undetermined"),
        }
    }
}

/// Paired event streams for one stimulus presentation.
#[derive(Debug, Clone)]
pub struct StereoTrial {
    pub trial_id: String,
    /// Time the puff is released.
    pub stimulus_time: f64,
    /// Search horizon after the stimulus.
    pub window: f64,
    /// ON events per sensor pair, left board.
    pub left_events: [Vec<BoutEvent>; 4],
    /// ON events per sensor pair, right board.
    pub right_events: [Vec<BoutEvent>; 4],
    pub true_direction: Option<Direction>,
}

/// Signed onset delay for one (trial, sensor pair).
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMeasurement {
    pub trial_id: String,
    pub sensor_pair: SensorPair,
    /// `t_first_left - t_first_right`; absent when either side has no
    /// first event inside the window.
    pub delay: Option<f64>,
    pub outlier: bool,
    pub inferred_direction: InferredDirection,
}

/// Timestamp of the earliest ON event in `[stimulus_time, stimulus_time +
/// window)`, or `None` when the channel stayed silent.
pub fn first_onset(events: &[BoutEvent], stimulus_time: f64, window: f64) -> Option<f64> {
    events
        .iter()
        .filter(|e| e.polarity == Polarity::On)
        .map(|e| e.timestamp)
        .find(|&t| t >= stimulus_time && t < stimulus_time + window)
}

/// Combine two optional first-onset times into a delay verdict.
///
/// A measurement is an outlier when either onset is missing or the delay
/// magnitude exceeds `outlier_cutoff`; outliers are always classified as
/// undetermined. Otherwise the sign of the delay picks the direction
/// (negative means the left board fired first, i.e. left-to-right travel).
pub fn stereo_delay(
    left_first: Option<f64>,
    right_first: Option<f64>,
    outlier_cutoff: f64,
) -> (Option<f64>, bool, InferredDirection) {
    match (left_first, right_first) {
        (Some(l), Some(r)) => {
            let delay = l - r;
            let outlier = delay.abs() > outlier_cutoff;
            let direction = if outlier || delay == 0.0 {
                InferredDirection::Undetermined
            } else if delay < 0.0 {
                InferredDirection::LeftToRight
            } else {
                InferredDirection::RightToLeft
            };
            (Some(delay), outlier, direction)
        }
        _ => (None, true, InferredDirection::Undetermined),
    }
}

/// Measure every sensor pair of one trial.
pub fn measure_trial(trial: &StereoTrial, outlier_cutoff: f64) -> Vec<DelayMeasurement> {
    SensorPair::ALL
        .iter()
        .map(|&pair| {
            let l = first_onset(
                &trial.left_events[pair.index()],
                trial.stimulus_time,
                trial.window,
            );
            let r = first_onset(
                &trial.right_events[pair.index()],
                trial.stimulus_time,
                trial.window,
            );
            let (delay, outlier, inferred) = stereo_delay(l, r, outlier_cutoff);
            DelayMeasurement {
                trial_id: trial.trial_id.clone(),
                sensor_pair: pair,
                delay,
                outlier,
                inferred_direction: inferred,
            }
        })
        .collect()
}

/// Per-pair classification statistics over a trial batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSummary {
    pub sensor_pair: SensorPair,
    pub trials: usize,
    pub outliers: usize,
    /// Non-outlier measurements with ground truth available.
    pub classified: usize,
    pub correct: usize,
    /// Fraction correct among classified measurements; 1.0 when nothing
    /// was classifiable.
    pub accuracy: f64,
    /// Mean signed delay over non-outlier measurements; exposes systematic
    /// offsets between the boards.
    pub mean_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSummary {
    pub per_pair: Vec<PairSummary>,
    pub measurements: Vec<DelayMeasurement>,
    pub total_outliers: usize,
    pub overall_accuracy: f64,
}

/// Classify a batch of trials with ground truth.
pub fn classify_trials(
    trials: &[StereoTrial],
    outlier_cutoff: f64,
) -> Result<ClassificationSummary, StereoError> {
    if trials.is_empty() {
        return Err(StereoError::NoTrials);
    }
    let mut measurements = Vec::with_capacity(trials.len() * 4);
    for trial in trials {
        let mut ms = measure_trial(trial, outlier_cutoff);
        measurements.append(&mut ms);
    }
    let mut per_pair = Vec::with_capacity(4);
    let mut total_correct = 0usize;
    let mut total_classified = 0usize;
    let mut total_outliers = 0usize;
    for &pair in &SensorPair::ALL {
        let of_pair: Vec<&DelayMeasurement> = measurements
            .iter()
            .filter(|m| m.sensor_pair == pair)
            .collect();
        let outliers = of_pair.iter().filter(|m| m.outlier).count();
        let mut correct = 0usize;
        let mut classified = 0usize;
        let mut delay_sum = 0.0;
        let mut delay_n = 0usize;
        for m in &of_pair {
            if m.outlier {
                continue;
            }
            if let Some(d) = m.delay {
                delay_sum += d;
                delay_n += 1;
            }
            let trial = trials.iter().find(|t| t.trial_id == m.trial_id).unwrap();
            if let Some(truth) = trial.true_direction {
                classified += 1;
                if m.inferred_direction.matches(truth) {
                    correct += 1;
                }
            }
        }
        total_correct += correct;
        total_classified += classified;
        total_outliers += outliers;
        per_pair.push(PairSummary {
            sensor_pair: pair,
            trials: of_pair.len(),
            outliers,
            classified,
            correct,
            accuracy: if classified == 0 {
                1.0
            } else {
                correct as f64 / classified as f64
            },
            mean_delay: if delay_n == 0 {
                None
            } else {
                Some(delay_sum / delay_n as f64)
            },
        });
    }
    Ok(ClassificationSummary {
        per_pair,
        measurements,
        total_outliers,
        overall_accuracy: if total_classified == 0 {
            1.0
        } else {
            total_correct as f64 / total_classified as f64
        },
    })
}

/// Manifest entry describing one trial to assemble from event streams.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub trial_id: String,
    pub stimulus_time: f64,
    pub true_direction: Option<Direction>,
}

/// Slice two event streams into per-trial, per-pair ON-event sequences.
///
/// Events are routed to their sensor pair by the trailing digit of the
/// channel id; OFF events are discarded here. Each trial keeps the events
/// inside `[stimulus_time, stimulus_time + window)`.
pub fn build_trials(
    specs: &[TrialSpec],
    left: &[BoutEvent],
    right: &[BoutEvent],
    window: f64,
) -> Result<Vec<StereoTrial>, StereoError> {
    let bucket = |events: &[BoutEvent]| -> Result<[Vec<BoutEvent>; 4], StereoError> {
        let mut out: [Vec<BoutEvent>; 4] = Default::default();
        for e in events {
            if e.polarity != Polarity::On {
                continue;
            }
            let pair = SensorPair::from_channel_id(&e.channel_id)?;
            out[pair.index()].push(e.clone());
        }
        Ok(out)
    };
    let left_by_pair = bucket(left)?;
    let right_by_pair = bucket(right)?;
    let window_slice = |by_pair: &[Vec<BoutEvent>; 4], stim: f64| -> [Vec<BoutEvent>; 4] {
        std::array::from_fn(|i| {
            by_pair[i]
                .iter()
                .filter(|e| e.timestamp >= stim && e.timestamp < stim + window)
                .cloned()
                .collect()
        })
    };
    Ok(specs
        .iter()
        .map(|spec| StereoTrial {
            trial_id: spec.trial_id.clone(),
            stimulus_time: spec.stimulus_time,
            window,
            left_events: window_slice(&left_by_pair, spec.stimulus_time),
            right_events: window_slice(&right_by_pair, spec.stimulus_time),
            true_direction: spec.true_direction,
        })
        .collect())
}

/// Majority vote across the four sensor pairs of one trial (ties and
/// all-outlier trials come out undetermined). Provided for experimentation;
/// the standard report stays per-pair.
pub fn fuse_majority(measurements: &[DelayMeasurement]) -> InferredDirection {
    let mut ltr = 0usize;
    let mut rtl = 0usize;
    for m in measurements {
        match m.inferred_direction {
            InferredDirection::LeftToRight => ltr += 1,
            InferredDirection::RightToLeft => rtl += 1,
            InferredDirection::Undetermined => {}
        }
    }
    match ltr.cmp(&rtl) {
        std::cmp::Ordering::Greater => InferredDirection::LeftToRight,
        std::cmp::Ordering::Less => InferredDirection::RightToLeft,
        std::cmp::Ordering::Equal => InferredDirection::Undetermined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on(t: f64) -> BoutEvent {
        BoutEvent {
            timestamp: t,
            channel_id: "L0".to_string(),
            polarity: Polarity::On,
            value_at_event: 1.0,
        }
    }

    #[test]
    fn first_onset_earliest_in_window() {
        let evs = vec![on(5.2), on(5.4), on(9.0)];
        assert_eq!(first_onset(&evs, 5.0, 3.0), Some(5.2));
    }

    #[test]
    fn first_onset_none_when_window_empty() {
        let evs = vec![on(1.0), on(20.0)];
        assert_eq!(first_onset(&evs, 5.0, 3.0), None);
    }

    #[test]
    fn first_onset_closed_lower_bound() {
        let evs = vec![on(5.0)];
        assert_eq!(first_onset(&evs, 5.0, 3.0), Some(5.0));
    }

    #[test]
    fn delay_sign_encodes_direction() {
        let (d, outlier, dir) = stereo_delay(Some(5.20), Some(5.45), 2.0);
        assert!((d.unwrap() + 0.25).abs() < 1e-12);
        assert!(!outlier);
        assert_eq!(dir, InferredDirection::LeftToRight);

        let (d, outlier, dir) = stereo_delay(Some(5.45), Some(5.20), 2.0);
        assert!((d.unwrap() - 0.25).abs() < 1e-12);
        assert!(!outlier);
        assert_eq!(dir, InferredDirection::RightToLeft);
    }

    #[test]
    fn large_delay_is_outlier_and_undetermined() {
        let (d, outlier, dir) = stereo_delay(Some(5.0), Some(8.5), 2.0);
        assert_eq!(d, Some(-3.5));
        assert!(outlier);
        assert_eq!(dir, InferredDirection::Undetermined);
    }

    #[test]
    fn missing_onset_is_outlier() {
        let (d, outlier, dir) = stereo_delay(Some(5.0), None, 2.0);
        assert_eq!(d, None);
        assert!(outlier);
        assert_eq!(dir, InferredDirection::Undetermined);
    }

    #[test]
    fn zero_delay_undetermined() {
        let (_, outlier, dir) = stereo_delay(Some(5.0), Some(5.0), 2.0);
        assert!(!outlier);
        assert_eq!(dir, InferredDirection::Undetermined);
    }

    fn synthetic_trial(id: &str, truth: Direction, transit: f64) -> StereoTrial {
        let stim = 1.0;
        let (l, r) = match truth {
            Direction::LeftToRight => (stim + 0.5, stim + 0.5 + transit),
            Direction::RightToLeft => (stim + 0.5 + transit, stim + 0.5),
        };
        StereoTrial {
            trial_id: id.to_string(),
            stimulus_time: stim,
            window: 10.0,
            left_events: std::array::from_fn(|_| vec![on(l)]),
            right_events: std::array::from_fn(|_| vec![on(r)]),
            true_direction: Some(truth),
        }
    }

    #[test]
    fn noiseless_batch_classifies_perfectly() {
        let transit = 0.25;
        let mut trials = Vec::new();
        for i in 0..20 {
            trials.push(synthetic_trial(&format!("L{i}"), Direction::LeftToRight, transit));
            trials.push(synthetic_trial(&format!("R{i}"), Direction::RightToLeft, transit));
        }
        let summary = classify_trials(&trials, 2.0).unwrap();
        assert_eq!(summary.total_outliers, 0);
        assert_eq!(summary.overall_accuracy, 1.0);
        for pair in &summary.per_pair {
            assert_eq!(pair.accuracy, 1.0);
            // Equal counts per direction: mean delay is zero.
            assert!(pair.mean_delay.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn classify_rejects_empty_input() {
        assert_eq!(classify_trials(&[], 2.0), Err(StereoError::NoTrials));
    }

    // Swapping left and right negates every delay and flips every verdict.
    #[test]
    fn antisymmetry_under_channel_swap() {
        let mut trials = Vec::new();
        for i in 0..10 {
            let dir = if i % 2 == 0 {
                Direction::LeftToRight
            } else {
                Direction::RightToLeft
            };
            trials.push(synthetic_trial(&format!("t{i}"), dir, 0.2 + 0.01 * i as f64));
        }
        let cutoff = 2.0;
        let forward = classify_trials(&trials, cutoff).unwrap();
        let swapped: Vec<StereoTrial> = trials
            .iter()
            .map(|t| StereoTrial {
                left_events: t.right_events.clone(),
                right_events: t.left_events.clone(),
                true_direction: t.true_direction.map(Direction::flipped),
                ..t.clone()
            })
            .collect();
        let backward = classify_trials(&swapped, cutoff).unwrap();
        for (a, b) in forward.measurements.iter().zip(backward.measurements.iter()) {
            assert_eq!(a.outlier, b.outlier);
            if !a.outlier {
                assert!((a.delay.unwrap() + b.delay.unwrap()).abs() < 1e-12);
                match a.inferred_direction {
                    InferredDirection::LeftToRight => {
                        assert_eq!(b.inferred_direction, InferredDirection::RightToLeft)
                    }
                    InferredDirection::RightToLeft => {
                        assert_eq!(b.inferred_direction, InferredDirection::LeftToRight)
                    }
                    InferredDirection::Undetermined => {
                        assert_eq!(b.inferred_direction, InferredDirection::Undetermined)
                    }
                }
            }
        }
    }

    // Shifting one side's events by a constant moves every defined delay by
    // exactly that constant (sign follows delay = t_left - t_right).
    #[test]
    fn delay_shifts_with_injected_latency() {
        let trial = synthetic_trial("t0", Direction::LeftToRight, 0.25);
        let before = measure_trial(&trial, 10.0);
        let delta = 0.08;
        let delayed = StereoTrial {
            right_events: std::array::from_fn(|i| {
                trial.right_events[i]
                    .iter()
                    .map(|e| BoutEvent {
                        timestamp: e.timestamp + delta,
                        ..e.clone()
                    })
                    .collect()
            }),
            ..trial.clone()
        };
        let after = measure_trial(&delayed, 10.0);
        for (a, b) in before.iter().zip(after.iter()) {
            assert!((b.delay.unwrap() - (a.delay.unwrap() - delta)).abs() < 1e-12);
        }
        // And delaying the left side increases the delay by delta.
        let delayed_left = StereoTrial {
            left_events: std::array::from_fn(|i| {
                trial.left_events[i]
                    .iter()
                    .map(|e| BoutEvent {
                        timestamp: e.timestamp + delta,
                        ..e.clone()
                    })
                    .collect()
            }),
            ..trial.clone()
        };
        let after_left = measure_trial(&delayed_left, 10.0);
        for (a, b) in before.iter().zip(after_left.iter()) {
            assert!((b.delay.unwrap() - (a.delay.unwrap() + delta)).abs() < 1e-12);
        }
    }

    // The outlier cutoff only reclassifies; stored delays are untouched.
    #[test]
    fn outlier_cutoff_is_pure_threshold() {
        let trial = synthetic_trial("t0", Direction::LeftToRight, 1.5);
        let loose = measure_trial(&trial, 2.0);
        let tight = measure_trial(&trial, 1.0);
        for (a, b) in loose.iter().zip(tight.iter()) {
            assert_eq!(a.delay, b.delay);
            assert!(!a.outlier);
            assert!(b.outlier);
            assert_eq!(b.inferred_direction, InferredDirection::Undetermined);
        }
    }

    #[test]
    fn sensor_pair_from_channel_id() {
        assert_eq!(SensorPair::from_channel_id("L0").unwrap(), SensorPair::S0);
        assert_eq!(SensorPair::from_channel_id("R3").unwrap(), SensorPair::S3);
        assert!(SensorPair::from_channel_id("L9").is_err());
        assert!(SensorPair::from_channel_id("").is_err());
    }

    #[test]
    fn majority_vote_fusion() {
        let m = |dir: InferredDirection| DelayMeasurement {
            trial_id: "t".to_string(),
            sensor_pair: SensorPair::S0,
            delay: Some(-0.1),
            outlier: false,
            inferred_direction: dir,
        };
        assert_eq!(
            fuse_majority(&[
                m(InferredDirection::LeftToRight),
                m(InferredDirection::LeftToRight),
                m(InferredDirection::RightToLeft),
                m(InferredDirection::Undetermined),
            ]),
            InferredDirection::LeftToRight
        );
        assert_eq!(
            fuse_majority(&[
                m(InferredDirection::LeftToRight),
                m(InferredDirection::RightToLeft),
            ]),
            InferredDirection::Undetermined
        );
    }
}
