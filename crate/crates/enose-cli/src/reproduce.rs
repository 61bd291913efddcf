//! Reference-figure reproduction: each subcommand regenerates the plottable
//! data behind one figure from its frozen scenario and checks the result
//! against fixed thresholds. Failing checks exit with code 3 after the data
//! has been written.

use crate::commands::write_rows;
use crate::error::CliError;
use enose_core::acquisition::ConductanceSample;
use enose_core::config::PipelineConfig;
use enose_core::csvio::Stage;
use enose_core::events::{event_rate, Polarity, SourceVariable};
use enose_core::filter::{run_filter, secondary_peak, select_tau, FilterConfig};
use enose_core::pipeline::{run_frames, OutputRecord};
use enose_core::sim::{lsb_volts, quantize, synthesize_batch, SimScenario};
use enose_core::stereo::{build_trials, classify_trials, ClassificationSummary, TrialSpec};
use enose_core::{AdcFrame, BoutEvent};
use serde::Serialize;
use std::fs;
use std::path::Path;

const KALMAN_SCENARIO: &str = include_str!("../scenarios/kalman.toml");
const SPIKES_SCENARIO: &str = include_str!("../scenarios/spikes.toml");
const DELAYS_SCENARIO: &str = include_str!("../scenarios/delays.toml");
const BITDEPTH_SCENARIO: &str = include_str!("../scenarios/bitdepth.toml");

/// Deadband threshold the figure checks are stated against.
const THETA: f64 = 0.02;
/// Candidate decay constants for the tau sweep.
const TAU_CANDIDATES: [f64; 4] = [1.0, 3.0, 10.0, 30.0];

pub fn run(
    figure: &str,
    output_dir: &Path,
    config: &PipelineConfig,
    seed: Option<u64>,
) -> Result<(), CliError> {
    match figure {
        "kalman" => kalman(output_dir, config, seed),
        "spikes" => spikes(output_dir, config, seed),
        "delays" => delays(output_dir, config, seed),
        "bitdepth" => bitdepth(output_dir, config, seed),
        other => Err(CliError::Schema(format!(
            "unknown figure {other:?}; valid ids: kalman, spikes, delays, bitdepth"
        ))),
    }
}

fn load_scenario(text: &str, seed: Option<u64>) -> Result<SimScenario, CliError> {
    let mut scenario = SimScenario::from_toml(text)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

struct Checks {
    lines: Vec<(String, bool)>,
}

impl Checks {
    fn new() -> Self {
        Checks { lines: Vec::new() }
    }

    fn add(&mut self, ok: bool, detail: String) {
        self.lines.push((detail, ok));
    }

    fn finish(self, figure: &str) -> Result<(), CliError> {
        let mut all_ok = true;
        for (detail, ok) in &self.lines {
            println!("  [{}] {detail}", if *ok { "ok" } else { "FAIL" });
            all_ok &= ok;
        }
        if all_ok {
            println!("{figure}: PASS");
            Ok(())
        } else {
            println!("{figure}: FAIL");
            Err(CliError::Acceptance(format!(
                "{figure} checks failed; see details above"
            )))
        }
    }
}

fn conductance_of_channel(
    frames: &[AdcFrame],
    channel: &str,
    config: &PipelineConfig,
) -> Result<Vec<ConductanceSample>, CliError> {
    let selected: Vec<AdcFrame> = frames
        .iter()
        .filter(|f| f.channel_id == channel)
        .cloned()
        .collect();
    let out = run_frames(&selected, config, Stage::Conductance)?;
    Ok(out
        .into_iter()
        .map(|r| match r {
            OutputRecord::Conductance(s) => s,
            _ => unreachable!("conductance stage emits conductance records"),
        })
        .collect())
}

fn on_events_of_channel(
    frames: &[AdcFrame],
    channel: &str,
    source: SourceVariable,
    config: &PipelineConfig,
) -> Result<Vec<BoutEvent>, CliError> {
    let mut cfg = config.clone();
    cfg.events.source = source;
    let selected: Vec<AdcFrame> = frames
        .iter()
        .filter(|f| f.channel_id == channel)
        .cloned()
        .collect();
    let out = run_frames(&selected, &cfg, Stage::Events)?;
    Ok(out
        .into_iter()
        .filter_map(|r| match r {
            OutputRecord::Event { event, .. } if event.polarity == Polarity::On => Some(event),
            _ => None,
        })
        .collect())
}

/// Split ON-event times into bursts separated by at least `gap` seconds.
fn bursts(times: &[f64], gap: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &t in times {
        match out.last_mut() {
            Some(last) if t - last.1 < gap => last.1 = t,
            _ => out.push((t, t)),
        }
    }
    out
}

#[derive(Serialize)]
struct KalmanFigRow {
    timestamp_s: f64,
    g: f64,
    a_hat_tau_inf: f64,
    a_hat_tau_selected: f64,
}

fn kalman(output_dir: &Path, config: &PipelineConfig, seed: Option<u64>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let scenario = load_scenario(KALMAN_SCENARIO, seed)?;
    let batch = synthesize_batch(&scenario)?;
    let samples = conductance_of_channel(&batch.left, "L0", config)?;

    let base = FilterConfig {
        tau: f64::INFINITY,
        ..config.filter_config_for("L0")
    };
    let states_inf = run_filter(&samples, &base)?;
    let a_inf: Vec<f64> = states_inf.iter().map(|s| s.a_hat).collect();
    let selection = select_tau(&samples, &TAU_CANDIDATES, THETA, &base)?;
    let cfg_sel = FilterConfig {
        tau: selection.tau,
        ..base.clone()
    };
    let states_sel = run_filter(&samples, &cfg_sel)?;
    let a_sel: Vec<f64> = states_sel.iter().map(|s| s.a_hat).collect();

    fs::create_dir_all(output_dir)?;
    let rows: Vec<KalmanFigRow> = samples
        .iter()
        .zip(a_inf.iter().zip(a_sel.iter()))
        .map(|(s, (ai, asel))| KalmanFigRow {
            timestamp_s: s.timestamp,
            g: s.g,
            a_hat_tau_inf: *ai,
            a_hat_tau_selected: *asel,
        })
        .collect();
    write_rows(
        &output_dir.join("kalman.csv"),
        &["timestamp_s", "g", "a_hat_tau_inf", "a_hat_tau_selected"],
        &rows,
    )?;

    let sec_inf = secondary_peak(&a_inf);
    let sec_sel = secondary_peak(&a_sel);
    let onset_inf = a_inf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let onset_sel = a_sel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let retention = onset_sel / onset_inf;
    let elapsed = started.elapsed().as_secs_f64();

    println!(
        "kalman: selected tau_s = {} (candidates {TAU_CANDIDATES:?}), wrote {}",
        selection.tau,
        output_dir.join("kalman.csv").display()
    );
    let mut checks = Checks::new();
    checks.add(
        sec_inf >= 5.0 * THETA,
        format!("secondary peak without decay term {sec_inf:.4} >= 5 theta = {}", 5.0 * THETA),
    );
    checks.add(
        sec_sel < THETA,
        format!("secondary peak at selected tau {sec_sel:.4} < theta = {THETA}"),
    );
    checks.add(
        retention >= 0.9,
        format!("onset peak retention {retention:.4} >= 0.9"),
    );
    checks.add(elapsed < 1.0, format!("runtime {elapsed:.3} s < 1 s"));
    checks.finish("kalman")
}

#[derive(Serialize)]
struct SpikesEventRow {
    channel_id: String,
    source: SourceVariable,
    timestamp_s: f64,
    value: f64,
}

#[derive(Serialize)]
struct SpikesRateRow {
    channel_id: String,
    source: SourceVariable,
    bin_start_s: f64,
    count: u64,
}

fn spikes(output_dir: &Path, config: &PipelineConfig, seed: Option<u64>) -> Result<(), CliError> {
    let scenario = load_scenario(SPIKES_SCENARIO, seed)?;
    let batch = synthesize_batch(&scenario)?;
    let slow_channel = "L1";
    let stimulus_gap = scenario.puffs[1].release_time_s - scenario.puffs[0].release_time_s;

    let mut event_rows = Vec::new();
    let mut rate_rows = Vec::new();
    let mut checks = Checks::new();
    for pair in 0..4 {
        let channel = format!("L{pair}");
        for source in [SourceVariable::BoutVelocity, SourceVariable::Conductance] {
            let events = on_events_of_channel(&batch.left, &channel, source, config)?;
            let times: Vec<f64> = events.iter().map(|e| e.timestamp).collect();
            for e in &events {
                event_rows.push(SpikesEventRow {
                    channel_id: channel.clone(),
                    source,
                    timestamp_s: e.timestamp,
                    value: e.value_at_event,
                });
            }
            let hist = event_rate(&events, config.events.histogram_bin_s, 0.0, scenario.duration_s)
                .map_err(|e| CliError::Schema(e.to_string()))?;
            for bin in &hist.bins {
                if bin.count > 0 {
                    rate_rows.push(SpikesRateRow {
                        channel_id: channel.clone(),
                        source,
                        bin_start_s: bin.start_time,
                        count: bin.count,
                    });
                }
            }
            let clusters = bursts(&times, 1.0);
            match source {
                SourceVariable::BoutVelocity => {
                    let gap = if clusters.len() == 2 {
                        clusters[1].0 - clusters[0].1
                    } else {
                        0.0
                    };
                    checks.add(
                        clusters.len() == 2 && gap >= 1.0,
                        format!(
                            "channel {channel} bout-velocity events: {} bursts, inter-burst gap {gap:.2} s >= 1 s",
                            clusters.len()
                        ),
                    );
                }
                SourceVariable::Conductance => {
                    // Reported for contrast, not asserted: conductance
                    // events merge when the rise outlasts the puff spacing.
                    let description = if clusters.len() < 2 {
                        "merged into one burst".to_string()
                    } else {
                        format!("gap {:.2} s", clusters[1].0 - clusters[0].1)
                    };
                    println!(
                        "  (report) channel {channel} conductance events over {stimulus_gap} s puff spacing: {} bursts, {description}",
                        clusters.len()
                    );
                    if channel == slow_channel {
                        println!("  (report) {slow_channel} is the slow profile shown for contrast");
                    }
                }
            }
        }
    }
    fs::create_dir_all(output_dir)?;
    write_rows(
        &output_dir.join("spikes_events.csv"),
        &["channel_id", "source", "timestamp_s", "value"],
        &event_rows,
    )?;
    write_rows(
        &output_dir.join("spikes_rates.csv"),
        &["channel_id", "source", "bin_start_s", "count"],
        &rate_rows,
    )?;
    println!(
        "spikes: wrote {} and {}",
        output_dir.join("spikes_events.csv").display(),
        output_dir.join("spikes_rates.csv").display()
    );
    checks.finish("spikes")
}

#[derive(Serialize)]
struct DelayFigRow {
    trial_id: String,
    sensor_pair: enose_core::SensorPair,
    delay_s: Option<f64>,
    outlier: bool,
    inferred_direction: enose_core::InferredDirection,
    true_direction: enose_core::Direction,
}

fn classify_batch(
    scenario: &SimScenario,
    config: &PipelineConfig,
) -> Result<(ClassificationSummary, Vec<TrialSpec>), CliError> {
    let batch = synthesize_batch(scenario)?;
    let events_of = |frames: &[AdcFrame]| -> Result<Vec<BoutEvent>, CliError> {
        let out = run_frames(frames, config, Stage::Events)?;
        Ok(out
            .into_iter()
            .filter_map(|r| match r {
                OutputRecord::Event { event, .. } => Some(event),
                _ => None,
            })
            .collect())
    };
    let left = events_of(&batch.left)?;
    let right = events_of(&batch.right)?;
    let specs: Vec<TrialSpec> = batch
        .manifest
        .iter()
        .map(|m| TrialSpec {
            trial_id: m.trial_id.clone(),
            stimulus_time: m.stimulus_time_s,
            true_direction: Some(m.true_direction),
        })
        .collect();
    let trials = build_trials(&specs, &left, &right, config.stereo.window_s)?;
    let summary = classify_trials(&trials, config.stereo.outlier_cutoff_s)?;
    Ok((summary, specs))
}

fn delays(output_dir: &Path, config: &PipelineConfig, seed: Option<u64>) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let scenario = load_scenario(DELAYS_SCENARIO, seed)?;
    let (summary, specs) = classify_batch(&scenario, config)?;

    let mut biased_scenario = scenario.clone();
    biased_scenario.side_latency_bias_s += 0.08;
    let (biased, _) = classify_batch(&biased_scenario, config)?;

    fs::create_dir_all(output_dir)?;
    let truth_of = |trial_id: &str| {
        specs
            .iter()
            .find(|s| s.trial_id == trial_id)
            .and_then(|s| s.true_direction)
            .expect("manifest covers every trial")
    };
    let fig_rows = |summary: &ClassificationSummary| -> Vec<DelayFigRow> {
        summary
            .measurements
            .iter()
            .map(|m| DelayFigRow {
                trial_id: m.trial_id.clone(),
                sensor_pair: m.sensor_pair,
                delay_s: m.delay,
                outlier: m.outlier,
                inferred_direction: m.inferred_direction,
                true_direction: truth_of(&m.trial_id),
            })
            .collect()
    };
    let header = [
        "trial_id",
        "sensor_pair",
        "delay_s",
        "outlier",
        "inferred_direction",
        "true_direction",
    ];
    write_rows(&output_dir.join("delays.csv"), &header, &fig_rows(&summary))?;
    write_rows(
        &output_dir.join("delays_biased.csv"),
        &header,
        &fig_rows(&biased),
    )?;

    let outlier_trials: std::collections::BTreeSet<&str> = summary
        .measurements
        .iter()
        .filter(|m| m.outlier)
        .map(|m| m.trial_id.as_str())
        .collect();
    println!(
        "delays: accuracy {:.3} among non-outliers, {} outlier trials, wrote {}",
        summary.overall_accuracy,
        outlier_trials.len(),
        output_dir.join("delays.csv").display()
    );
    for pair in &summary.per_pair {
        println!(
            "  pair {}: mean delay {}",
            pair.sensor_pair,
            pair.mean_delay
                .map(|d| format!("{d:+.4} s"))
                .unwrap_or_else(|| "n/a".to_string())
        );
    }

    let elapsed = started.elapsed().as_secs_f64();
    let mut checks = Checks::new();
    checks.add(
        summary.overall_accuracy == 1.0,
        format!(
            "sign-of-delay accuracy among non-outliers {:.3} == 1.0",
            summary.overall_accuracy
        ),
    );
    checks.add(
        outlier_trials.len() <= 3,
        format!("{} outlier trials <= 3 across 40 trials", outlier_trials.len()),
    );
    for (a, b) in summary.per_pair.iter().zip(biased.per_pair.iter()) {
        match (a.mean_delay, b.mean_delay) {
            (Some(ma), Some(mb)) => {
                let shift_ms = (mb - ma) * 1e3;
                checks.add(
                    (shift_ms.abs() - 80.0).abs() <= 10.0,
                    format!(
                        "pair {} mean delay shift {shift_ms:+.1} ms within 80 +/- 10 ms of injected right-side latency",
                        a.sensor_pair
                    ),
                );
            }
            _ => checks.add(false, format!("pair {} has no mean delay", a.sensor_pair)),
        }
    }
    checks.add(elapsed < 10.0, format!("runtime {elapsed:.2} s < 10 s"));
    checks.finish("delays")
}

#[derive(Serialize)]
struct BitdepthRow {
    timestamp_s: f64,
    channel_id: String,
    g_23bit: f64,
    g_11bit: f64,
}

#[derive(Serialize)]
struct BitdepthMetaRow {
    keep_bits: u32,
    lsb_volts: f64,
}

fn bitdepth(output_dir: &Path, config: &PipelineConfig, seed: Option<u64>) -> Result<(), CliError> {
    let scenario = load_scenario(BITDEPTH_SCENARIO, seed)?;
    let batch = synthesize_batch(&scenario)?;
    let full_scale_volts = 3.3;

    let mut rows = Vec::new();
    let mut identity_ok = true;
    for (frames, channel) in [(&batch.left, "L0"), (&batch.right, "R0")] {
        let selected: Vec<AdcFrame> = frames
            .iter()
            .filter(|f| f.channel_id == channel)
            .cloned()
            .collect();
        identity_ok &= quantize(&selected, 23)? == selected;
        let full = conductance_of_channel(frames, channel, config)?;
        let reduced_frames = quantize(&selected, 11)?;
        let reduced = conductance_of_channel(&reduced_frames, channel, config)?;
        for (a, b) in full.iter().zip(reduced.iter()) {
            rows.push(BitdepthRow {
                timestamp_s: a.timestamp,
                channel_id: channel.to_string(),
                g_23bit: a.g,
                g_11bit: b.g,
            });
        }
    }
    fs::create_dir_all(output_dir)?;
    write_rows(
        &output_dir.join("bitdepth.csv"),
        &["timestamp_s", "channel_id", "g_23bit", "g_11bit"],
        &rows,
    )?;
    let meta = vec![
        BitdepthMetaRow {
            keep_bits: 23,
            lsb_volts: lsb_volts(23, full_scale_volts),
        },
        BitdepthMetaRow {
            keep_bits: 11,
            lsb_volts: lsb_volts(11, full_scale_volts),
        },
    ];
    write_rows(
        &output_dir.join("bitdepth_meta.csv"),
        &["keep_bits", "lsb_volts"],
        &meta,
    )?;

    let lsb11_mv = lsb_volts(11, full_scale_volts) * 1e3;
    let lsb23_uv = lsb_volts(23, full_scale_volts) * 1e6;
    println!(
        "bitdepth: 11-bit LSB {lsb11_mv:.4} mV, 23-bit LSB {lsb23_uv:.4} uV, wrote {}",
        output_dir.join("bitdepth.csv").display()
    );
    let mut checks = Checks::new();
    checks.add(
        (lsb11_mv - 1.6113).abs() <= 0.01,
        format!("11-bit LSB {lsb11_mv:.4} mV within 0.01 mV of 1.6113"),
    );
    checks.add(lsb23_uv < 0.4, format!("23-bit LSB {lsb23_uv:.4} uV < 0.4 uV"));
    checks.add(identity_ok, "keep_bits = 23 is the identity on this batch".to_string());
    checks.finish("bitdepth")
}

