//! Streaming stage composition: acquisition -> conductance -> filter ->
//! events.
//!
//! Rows are pushed one at a time and outputs appear as soon as they are
//! determined, so memory use is bounded by per-channel state regardless of
//! input length. The only buffering is the baseline warmup: conductance
//! cannot be normalized until the first window of each channel is complete,
//! so those rows wait, get flushed in (timestamp, channel) order once every
//! known channel has its baseline, and everything streams from there.

use crate::acquisition::{
    code_to_ratio, ratio_to_relative_conductance, AcquisitionError, AdcFrame, ConductanceSample,
};
use crate::config::PipelineConfig;
use crate::csvio::Stage;
use crate::events::{BoutEvent, DeadbandEncoder, EventError, SourceVariable};
use crate::filter::{filter_step, initialize_filter, FilterError, FilterState};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("channel {channel}: {source}")]
    Acquisition {
        channel: String,
        source: AcquisitionError,
    },
    #[error("channel {channel}: {source}")]
    Filter {
        channel: String,
        source: FilterError,
    },
    #[error("channel {channel}: {source}")]
    Event { channel: String, source: EventError },
    #[error("channel {channel}: timestamp {next} precedes {prev}; rows must be time-ordered per channel")]
    OutOfOrder {
        channel: String,
        prev: f64,
        next: f64,
    },
    #[error("channel {channel}: sample interval {got} deviates from configured filter.dt_s = {expected} by more than half a sample")]
    IrregularInterval {
        channel: String,
        expected: f64,
        got: f64,
    },
    #[error("cannot produce {output} output from {input} input; stages only run forward")]
    StageMismatch {
        input: &'static str,
        output: &'static str,
    },
}

/// Typed input record matching one of the stage schemas.
#[derive(Debug, Clone)]
pub enum InputRecord {
    Acquisition(AdcFrame),
    Conductance(ConductanceSample),
    Filter(FilterOutput),
}

impl InputRecord {
    fn stage(&self) -> Stage {
        match self {
            InputRecord::Acquisition(_) => Stage::Acquisition,
            InputRecord::Conductance(_) => Stage::Conductance,
            InputRecord::Filter(_) => Stage::Filter,
        }
    }

    fn timestamp(&self) -> f64 {
        match self {
            InputRecord::Acquisition(f) => f.timestamp,
            InputRecord::Conductance(s) => s.timestamp,
            InputRecord::Filter(f) => f.timestamp,
        }
    }

    fn channel_id(&self) -> &str {
        match self {
            InputRecord::Acquisition(f) => &f.channel_id,
            InputRecord::Conductance(s) => &s.channel_id,
            InputRecord::Filter(f) => &f.channel_id,
        }
    }
}

/// Posterior estimates for one sample of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub timestamp: f64,
    pub channel_id: String,
    pub g_hat: f64,
    pub v_hat: f64,
    pub a_hat: f64,
    pub o: f64,
}

#[derive(Debug, Clone)]
pub enum OutputRecord {
    Conductance(ConductanceSample),
    Filter(FilterOutput),
    Event { event: BoutEvent, source: SourceVariable },
}

impl OutputRecord {
    pub fn timestamp(&self) -> f64 {
        match self {
            OutputRecord::Conductance(s) => s.timestamp,
            OutputRecord::Filter(f) => f.timestamp,
            OutputRecord::Event { event, .. } => event.timestamp,
        }
    }

    pub fn channel_id(&self) -> &str {
        match self {
            OutputRecord::Conductance(s) => &s.channel_id,
            OutputRecord::Filter(f) => &f.channel_id,
            OutputRecord::Event { event, .. } => &event.channel_id,
        }
    }
}

struct ChannelState {
    last_input_t: Option<f64>,
    // Baseline warmup (acquisition input only).
    first_t: f64,
    pending: Vec<(f64, f64)>,
    baseline: Option<f64>,
    // Downstream per-channel state.
    filter: Option<FilterState>,
    encoder: Option<DeadbandEncoder>,
}

/// One configured processing run from `input_stage` rows to `output_stage`
/// rows. Feed rows with [`ProcessPipeline::push`], then call
/// [`ProcessPipeline::finish`].
pub struct ProcessPipeline {
    config: PipelineConfig,
    input_stage: Stage,
    output_stage: Stage,
    channels: HashMap<String, ChannelState>,
    // Output rows held back until every known channel has a baseline.
    warmup_out: Vec<OutputRecord>,
    warmed_up: bool,
    buffered_rows: usize,
    high_water: usize,
}

impl ProcessPipeline {
    pub fn new(
        config: PipelineConfig,
        input_stage: Stage,
        output_stage: Stage,
    ) -> Result<Self, PipelineError> {
        if output_stage <= input_stage || output_stage == Stage::Acquisition {
            return Err(PipelineError::StageMismatch {
                input: input_stage.name(),
                output: output_stage.name(),
            });
        }
        Ok(ProcessPipeline {
            config,
            input_stage,
            output_stage,
            channels: HashMap::new(),
            warmup_out: Vec::new(),
            // Only acquisition input needs the baseline warmup.
            warmed_up: input_stage != Stage::Acquisition,
            buffered_rows: 0,
            high_water: 0,
        })
    }

    /// Largest number of rows ever buffered at once; stays bounded by
    /// channels x baseline window regardless of input length.
    pub fn buffered_rows_high_water(&self) -> usize {
        self.high_water
    }

    pub fn push(
        &mut self,
        record: InputRecord,
        out: &mut Vec<OutputRecord>,
    ) -> Result<(), PipelineError> {
        debug_assert_eq!(record.stage(), self.input_stage);
        let channel = record.channel_id().to_string();
        let t = record.timestamp();
        let state = self.channels.entry(channel.clone()).or_insert(ChannelState {
            last_input_t: None,
            first_t: t,
            pending: Vec::new(),
            baseline: None,
            filter: None,
            encoder: None,
        });
        if let Some(prev) = state.last_input_t {
            if t < prev {
                return Err(PipelineError::OutOfOrder {
                    channel,
                    prev,
                    next: t,
                });
            }
        }
        state.last_input_t = Some(t);

        match record {
            InputRecord::Acquisition(frame) => self.push_frame(frame, out)?,
            InputRecord::Conductance(sample) => {
                let rec = self.after_conductance(sample)?;
                self.emit(rec, out);
            }
            InputRecord::Filter(row) => {
                let rec = self.after_filter(row)?;
                self.emit(rec, out);
            }
        }
        Ok(())
    }

    /// Flush warmup buffers; fails when a channel never completed its
    /// baseline window.
    pub fn finish(&mut self, out: &mut Vec<OutputRecord>) -> Result<(), PipelineError> {
        if self.input_stage == Stage::Acquisition {
            let mut unresolved: Vec<&String> = self
                .channels
                .iter()
                .filter(|(_, s)| s.baseline.is_none() && !s.pending.is_empty())
                .map(|(id, _)| id)
                .collect();
            unresolved.sort();
            if let Some(id) = unresolved.first() {
                return Err(PipelineError::Acquisition {
                    channel: (*id).clone(),
                    source: AcquisitionError::ZeroBaseline {
                        reason: format!(
                            "recording shorter than the {} s baseline window",
                            self.config.acquisition.baseline_window_s
                        ),
                    },
                });
            }
        }
        if !self.warmed_up {
            self.release_warmup(out);
        }
        Ok(())
    }

    fn push_frame(
        &mut self,
        frame: AdcFrame,
        out: &mut Vec<OutputRecord>,
    ) -> Result<(), PipelineError> {
        let channel = frame.channel_id.clone();
        let wrap_acq = |source| PipelineError::Acquisition {
            channel: channel.clone(),
            source,
        };
        let x = code_to_ratio(&frame).map_err(&wrap_acq)?;
        let g_rel = ratio_to_relative_conductance(x).map_err(&wrap_acq)?;
        let state = self.channels.get_mut(&frame.channel_id).expect("channel registered");
        match state.baseline {
            Some(baseline) => {
                let sample = ConductanceSample {
                    timestamp: frame.timestamp,
                    channel_id: frame.channel_id,
                    g_rel,
                    g: g_rel / baseline,
                };
                let rec = self.after_conductance(sample)?;
                self.emit(rec, out);
            }
            None => {
                let window_end = state.first_t + self.config.acquisition.baseline_window_s;
                if frame.timestamp >= window_end {
                    let sum: f64 = state.pending.iter().map(|&(_, v)| v).sum();
                    let baseline = sum / state.pending.len() as f64;
                    if !(baseline > 0.0) {
                        return Err(wrap_acq(AcquisitionError::ZeroBaseline {
                            reason: format!("baseline {baseline} is not positive"),
                        }));
                    }
                    state.baseline = Some(baseline);
                    let backlog = std::mem::take(&mut state.pending);
                    self.buffered_rows -= backlog.len();
                    for (bt, bg_rel) in backlog {
                        let sample = ConductanceSample {
                            timestamp: bt,
                            channel_id: channel.clone(),
                            g_rel: bg_rel,
                            g: bg_rel / baseline,
                        };
                        let rec = self.after_conductance(sample)?;
                        self.emit(rec, out);
                    }
                    let sample = ConductanceSample {
                        timestamp: frame.timestamp,
                        channel_id: frame.channel_id,
                        g_rel,
                        g: g_rel / baseline,
                    };
                    let rec = self.after_conductance(sample)?;
                    self.emit(rec, out);
                    self.maybe_release_warmup(out);
                } else {
                    state.pending.push((frame.timestamp, g_rel));
                    self.buffered_rows += 1;
                    self.high_water = self.high_water.max(self.buffered_rows);
                }
            }
        }
        Ok(())
    }

    fn after_conductance(
        &mut self,
        sample: ConductanceSample,
    ) -> Result<Option<OutputRecord>, PipelineError> {
        if self.output_stage == Stage::Conductance {
            return Ok(Some(OutputRecord::Conductance(sample)));
        }
        let channel = sample.channel_id.clone();
        let cfg = self.config.filter_config_for(&channel);
        let state = self.channels.entry(channel.clone()).or_insert(ChannelState {
            last_input_t: None,
            first_t: sample.timestamp,
            pending: Vec::new(),
            baseline: None,
            filter: None,
            encoder: None,
        });
        let wrap = |source| PipelineError::Filter {
            channel: channel.clone(),
            source,
        };
        let new_state = match &state.filter {
            None => initialize_filter(&sample, &cfg).map_err(&wrap)?,
            Some(prev) => {
                let spacing = sample.timestamp - prev.timestamp;
                if (spacing - cfg.dt).abs() > cfg.dt * 0.5 {
                    return Err(PipelineError::IrregularInterval {
                        channel,
                        expected: cfg.dt,
                        got: spacing,
                    });
                }
                filter_step(prev, &cfg, &sample).map_err(&wrap)?
            }
        };
        let row = FilterOutput {
            timestamp: sample.timestamp,
            channel_id: sample.channel_id,
            g_hat: new_state.g_hat,
            v_hat: new_state.v_hat,
            a_hat: new_state.a_hat,
            o: new_state.o,
        };
        state.filter = Some(new_state);
        self.after_filter(row)
    }

    fn after_filter(&mut self, row: FilterOutput) -> Result<Option<OutputRecord>, PipelineError> {
        if self.output_stage == Stage::Filter {
            return Ok(Some(OutputRecord::Filter(row)));
        }
        let source = self.config.events.source;
        let theta = self.config.events.theta;
        let channel = row.channel_id.clone();
        let state = self.channels.entry(channel.clone()).or_insert(ChannelState {
            last_input_t: None,
            first_t: row.timestamp,
            pending: Vec::new(),
            baseline: None,
            filter: None,
            encoder: None,
        });
        let encoder = match &mut state.encoder {
            Some(e) => e,
            None => {
                let enc = DeadbandEncoder::new(channel.clone(), source, theta).map_err(|source| {
                    PipelineError::Event {
                        channel: channel.clone(),
                        source,
                    }
                })?;
                state.encoder = Some(enc);
                state.encoder.as_mut().unwrap()
            }
        };
        let z = match source {
            SourceVariable::Conductance => row.g_hat,
            SourceVariable::BoutVelocity => row.o,
        };
        let event = encoder
            .step(row.timestamp, z)
            .map_err(|source| PipelineError::Event {
                channel: channel.clone(),
                source,
            })?;
        Ok(event.map(|event| OutputRecord::Event { event, source }))
    }

    fn emit(&mut self, rec: Option<OutputRecord>, out: &mut Vec<OutputRecord>) {
        if let Some(rec) = rec {
            if self.warmed_up {
                out.push(rec);
            } else {
                self.warmup_out.push(rec);
                self.buffered_rows += 1;
                self.high_water = self.high_water.max(self.buffered_rows);
            }
        }
    }

    fn maybe_release_warmup(&mut self, out: &mut Vec<OutputRecord>) {
        if self.warmed_up {
            return;
        }
        let all_resolved = self.channels.values().all(|s| s.baseline.is_some());
        if all_resolved {
            self.release_warmup(out);
        }
    }

    fn release_warmup(&mut self, out: &mut Vec<OutputRecord>) {
        let mut rows = std::mem::take(&mut self.warmup_out);
        self.buffered_rows -= rows.len();
        rows.sort_by(|a, b| {
            a.timestamp()
                .partial_cmp(&b.timestamp())
                .unwrap()
                .then_with(|| a.channel_id().cmp(b.channel_id()))
        });
        out.append(&mut rows);
        self.warmed_up = true;
    }
}

/// Convenience wrapper: run a frame batch end to end, collecting outputs.
pub fn run_frames(
    frames: &[AdcFrame],
    config: &PipelineConfig,
    output_stage: Stage,
) -> Result<Vec<OutputRecord>, PipelineError> {
    let mut pipeline = ProcessPipeline::new(config.clone(), Stage::Acquisition, output_stage)?;
    let mut out = Vec::new();
    for frame in frames {
        pipeline.push(InputRecord::Acquisition(frame.clone()), &mut out)?;
    }
    pipeline.finish(&mut out)?;
    Ok(out)
}
