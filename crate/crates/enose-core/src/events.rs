//! Absolute-deadband (send-on-delta) event encoding.
//!
//! A tracked variable `z` emits an event whenever it moves more than a
//! fixed threshold away from its value at the previous event:
//! `|z(t) - z(t_prev)| > theta`. The event's polarity records the sign of
//! the move; the reference is then reset to the current value. The
//! resulting event rate is proportional to `|dz/dt|` as long as the slew
//! rate stays below `theta` per sample, which makes the encoder a cheap
//! differentiator. Decreases (OFF events) carry no onset information and
//! are discarded downstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("non-finite input value {value}")]
    NonFiniteInput { value: f64 },
    #[error("histogram span must have positive duration (got {start}..{end})")]
    EmptySpan { start: f64, end: f64 },
    #[error("deadband threshold must be positive (got {theta})")]
    InvalidThreshold { theta: f64 },
}

/// Which continuous variable feeds the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceVariable {
    /// Normalized conductance.
    #[serde(rename = "g")]
    Conductance,
    /// Integrated residual acceleration.
    #[serde(rename = "o")]
    BoutVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
}

/// One deadband crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct BoutEvent {
    pub timestamp: f64,
    pub channel_id: String,
    pub polarity: Polarity,
    pub value_at_event: f64,
}

/// Per-channel, per-source deadband encoder state.
///
/// The first processed sample initializes the reference without emitting
/// anything. Jumps larger than the threshold emit exactly one event per
/// sample, so the event rate can never exceed the sample rate.
#[derive(Debug, Clone)]
pub struct DeadbandEncoder {
    pub channel_id: String,
    pub source: SourceVariable,
    pub threshold: f64,
    reference_value: f64,
    reference_time: f64,
    primed: bool,
}

impl DeadbandEncoder {
    pub fn new(
        channel_id: impl Into<String>,
        source: SourceVariable,
        threshold: f64,
    ) -> Result<Self, EventError> {
        if !(threshold > 0.0) {
            return Err(EventError::InvalidThreshold { theta: threshold });
        }
        Ok(DeadbandEncoder {
            channel_id: channel_id.into(),
            source,
            threshold,
            reference_value: 0.0,
            reference_time: 0.0,
            primed: false,
        })
    }

    /// Value at the last event (or the priming sample).
    pub fn reference_value(&self) -> f64 {
        self.reference_value
    }

    pub fn reference_time(&self) -> f64 {
        self.reference_time
    }

    /// Feed one sample; emits at most one event.
    pub fn step(&mut self, timestamp: f64, z: f64) -> Result<Option<BoutEvent>, EventError> {
        if !z.is_finite() {
            return Err(EventError::NonFiniteInput { value: z });
        }
        if !self.primed {
            self.primed = true;
            self.reference_value = z;
            self.reference_time = timestamp;
            return Ok(None);
        }
        let delta = z - self.reference_value;
        if delta.abs() > self.threshold {
            self.reference_value = z;
            self.reference_time = timestamp;
            return Ok(Some(BoutEvent {
                timestamp,
                channel_id: self.channel_id.clone(),
                polarity: if delta > 0.0 { Polarity::On } else { Polarity::Off },
                value_at_event: z,
            }));
        }
        Ok(None)
    }
}

/// Drop OFF events, preserving order.
pub fn filter_on_events(events: &[BoutEvent]) -> Vec<BoutEvent> {
    events
        .iter()
        .filter(|e| e.polarity == Polarity::On)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub start_time: f64,
    pub count: u64,
}

/// Event counts over half-open bins `[start, start + bin_width)` tiling a
/// time span.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRateHistogram {
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
}

impl EventRateHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Bin events falling inside `[span_start, span_end)`.
pub fn event_rate(
    events: &[BoutEvent],
    bin_width: f64,
    span_start: f64,
    span_end: f64,
) -> Result<EventRateHistogram, EventError> {
    if !(span_end > span_start) {
        return Err(EventError::EmptySpan {
            start: span_start,
            end: span_end,
        });
    }
    if !(bin_width > 0.0) {
        return Err(EventError::InvalidThreshold { theta: bin_width });
    }
    let duration = span_end - span_start;
    let n_bins = (duration / bin_width).ceil().max(1.0) as usize;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            start_time: span_start + i as f64 * bin_width,
            count: 0,
        })
        .collect();
    for e in events {
        if e.timestamp >= span_start && e.timestamp < span_end {
            let idx = (((e.timestamp - span_start) / bin_width) as usize).min(n_bins - 1);
            bins[idx].count += 1;
        }
    }
    Ok(EventRateHistogram { bin_width, bins })
}
