//! CSV schemas shared by the CLI and tests.
//!
//! All files are UTF-8 with a mandatory header row. Floats are written in
//! the shortest decimal form that round-trips, so re-reading a file
//! recovers bit-identical values and staged runs match end-to-end runs
//! byte for byte.

use crate::acquisition::{AdcFrame, Gain};
use crate::events::{BoutEvent, Polarity, SourceVariable};
use crate::sim::{GroundTruthRow, ManifestRow, Side};
use crate::stereo::{Direction, InferredDirection, SensorPair};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("row {row}: gain {gain} is not one of 1, 2, 4")]
    BadGain { row: u64, gain: i64 },
    #[error("unrecognized header {header:?}; expected one of the pipeline stage schemas")]
    UnknownSchema { header: String },
}

/// Pipeline stages in processing order; each stage's output is the next
/// stage's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Acquisition,
    Conductance,
    Filter,
    Events,
}

impl Stage {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            Stage::Acquisition => &["timestamp_s", "channel_id", "raw_code", "gain", "bit_depth"],
            Stage::Conductance => &["timestamp_s", "channel_id", "g_rel", "g"],
            Stage::Filter => &["timestamp_s", "channel_id", "g_hat", "v_hat", "a_hat", "o"],
            Stage::Events => &["timestamp_s", "channel_id", "source", "polarity", "value"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Acquisition => "acquisition",
            Stage::Conductance => "conductance",
            Stage::Filter => "filter",
            Stage::Events => "events",
        }
    }

    /// Match a header row against the known stage schemas.
    pub fn detect(header: &csv::StringRecord) -> Option<Stage> {
        let fields: Vec<&str> = header.iter().collect();
        [Stage::Acquisition, Stage::Conductance, Stage::Filter, Stage::Events]
            .into_iter()
            .find(|s| s.header() == fields.as_slice())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AcquisitionCsvRow {
    pub timestamp_s: f64,
    pub channel_id: String,
    pub raw_code: i64,
    pub gain: i64,
    pub bit_depth: u32,
}

impl From<&AdcFrame> for AcquisitionCsvRow {
    fn from(f: &AdcFrame) -> Self {
        AcquisitionCsvRow {
            timestamp_s: f.timestamp,
            channel_id: f.channel_id.clone(),
            raw_code: f.raw_code,
            gain: f.gain.factor(),
            bit_depth: f.bit_depth,
        }
    }
}

impl AcquisitionCsvRow {
    pub fn into_frame(self, row: u64) -> Result<AdcFrame, CsvError> {
        let gain = Gain::from_factor(self.gain).ok_or(CsvError::BadGain {
            row,
            gain: self.gain,
        })?;
        Ok(AdcFrame {
            timestamp: self.timestamp_s,
            channel_id: self.channel_id,
            raw_code: self.raw_code,
            gain,
            bit_depth: self.bit_depth,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConductanceCsvRow {
    pub timestamp_s: f64,
    pub channel_id: String,
    pub g_rel: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FilterCsvRow {
    pub timestamp_s: f64,
    pub channel_id: String,
    pub g_hat: f64,
    pub v_hat: f64,
    pub a_hat: f64,
    pub o: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EventCsvRow {
    pub timestamp_s: f64,
    pub channel_id: String,
    pub source: SourceVariable,
    pub polarity: Polarity,
    pub value: f64,
}

impl EventCsvRow {
    pub fn new(event: &BoutEvent, source: SourceVariable) -> Self {
        EventCsvRow {
            timestamp_s: event.timestamp,
            channel_id: event.channel_id.clone(),
            source,
            polarity: event.polarity,
            value: event.value_at_event,
        }
    }

    pub fn into_event(self) -> BoutEvent {
        BoutEvent {
            timestamp: self.timestamp_s,
            channel_id: self.channel_id,
            polarity: self.polarity,
            value_at_event: self.value,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroundTruthCsvRow {
    pub trial_id: String,
    pub puff_index: usize,
    pub side: Side,
    pub onset_time_s: f64,
    pub direction: Direction,
    pub expected_delay_s: f64,
}

impl From<&GroundTruthRow> for GroundTruthCsvRow {
    fn from(r: &GroundTruthRow) -> Self {
        GroundTruthCsvRow {
            trial_id: r.trial_id.clone(),
            puff_index: r.puff_index,
            side: r.side,
            onset_time_s: r.onset_time_s,
            direction: r.direction,
            expected_delay_s: r.expected_delay_s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestCsvRow {
    pub trial_id: String,
    pub stimulus_time_s: f64,
    pub true_direction: Direction,
}

impl From<&ManifestRow> for ManifestCsvRow {
    fn from(r: &ManifestRow) -> Self {
        ManifestCsvRow {
            trial_id: r.trial_id.clone(),
            stimulus_time_s: r.stimulus_time_s,
            true_direction: r.true_direction,
        }
    }
}

/// Stereo analysis output; `delay_s` stays empty when either first onset is
/// missing. Delay sign convention: `t_first_left - t_first_right`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DelayCsvRow {
    pub trial_id: String,
    pub sensor_pair: SensorPair,
    pub delay_s: Option<f64>,
    pub outlier: bool,
    pub inferred_direction: InferredDirection,
}

pub fn write_csv<T: Serialize>(path: &std::path::Path, rows: &[T]) -> Result<(), CsvError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| map_csv_io(e, path))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| CsvError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<Vec<T>, CsvError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| map_csv_io(e, path))?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

fn map_csv_io(e: csv::Error, path: &std::path::Path) -> CsvError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(source) = e.into_kind() {
            return CsvError::Io {
                path: path.display().to_string(),
                source,
            };
        }
        unreachable!("is_io_error implies an Io kind");
    }
    CsvError::Csv(e)
}
