use crate::error::CliError;
use enose_core::acquisition::ConductanceSample;
use enose_core::config::PipelineConfig;
use enose_core::csvio::{
    AcquisitionCsvRow, ConductanceCsvRow, DelayCsvRow, EventCsvRow, FilterCsvRow,
    GroundTruthCsvRow, ManifestCsvRow, Stage,
};
use enose_core::filter::{select_tau as filter_select_tau, FilterConfig};
use enose_core::pipeline::{FilterOutput, InputRecord, OutputRecord, ProcessPipeline};
use enose_core::sim::{synthesize_batch, SimScenario};
use enose_core::stereo::{build_trials, classify_trials, TrialSpec};
use std::fs;
use std::path::Path;

pub fn csv_err(e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError::Io(e.to_string())
    } else {
        CliError::Schema(e.to_string())
    }
}

/// Generate left/right acquisition CSVs, ground truth, and the trial
/// manifest for a scenario.
pub fn simulate(scenario_path: &Path, output_dir: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = fs::read_to_string(scenario_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", scenario_path.display())))?;
    let mut scenario = SimScenario::from_toml(&text)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    write_batch(&scenario, output_dir)?;
    println!(
        "simulated {} trials x {} puffs (seed {}) -> {}",
        scenario.trials,
        scenario.puffs.len(),
        scenario.seed,
        output_dir.display()
    );
    Ok(())
}

pub fn write_batch(scenario: &SimScenario, output_dir: &Path) -> Result<(), CliError> {
    let batch = synthesize_batch(scenario)?;
    fs::create_dir_all(output_dir)?;
    let acquisition_rows =
        |frames: &[enose_core::AdcFrame]| frames.iter().map(AcquisitionCsvRow::from).collect::<Vec<_>>();
    write_rows(
        &output_dir.join("left.csv"),
        Stage::Acquisition.header(),
        &acquisition_rows(&batch.left),
    )?;
    write_rows(
        &output_dir.join("right.csv"),
        Stage::Acquisition.header(),
        &acquisition_rows(&batch.right),
    )?;
    let gt_rows: Vec<GroundTruthCsvRow> =
        batch.ground_truth.iter().map(GroundTruthCsvRow::from).collect();
    write_rows(
        &output_dir.join("ground_truth.csv"),
        &[
            "trial_id",
            "puff_index",
            "side",
            "onset_time_s",
            "direction",
            "expected_delay_s",
        ],
        &gt_rows,
    )?;
    let manifest_rows: Vec<ManifestCsvRow> =
        batch.manifest.iter().map(ManifestCsvRow::from).collect();
    write_rows(
        &output_dir.join("trials.csv"),
        &["trial_id", "stimulus_time_s", "true_direction"],
        &manifest_rows,
    )?;
    Ok(())
}

/// Write rows with an explicit header so empty outputs still carry one.
pub fn write_rows<T: serde::Serialize>(
    path: &Path,
    header: &[&str],
    rows: &[T],
) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    writer.write_record(header).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Stream one CSV through the pipeline to the requested terminal stage.
pub fn process(
    input: &Path,
    output: &Path,
    to: Stage,
    config: &PipelineConfig,
) -> Result<(), CliError> {
    let mut reader = csv::Reader::from_path(input).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let input_stage = Stage::detect(&headers).ok_or_else(|| {
        CliError::Schema(format!(
            "{}: unrecognized header [{}]; expected an acquisition, conductance, filter, or events schema",
            input.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        ))
    })?;
    let mut pipeline = ProcessPipeline::new(config.clone(), input_stage, to)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(output)
        .map_err(csv_err)?;
    writer.write_record(to.header()).map_err(csv_err)?;

    let mut pending = Vec::new();
    let mut record_index = 0u64;
    match input_stage {
        Stage::Acquisition => {
            for row in reader.deserialize::<AcquisitionCsvRow>() {
                record_index += 1;
                let frame = row.map_err(csv_err)?.into_frame(record_index)?;
                pipeline.push(InputRecord::Acquisition(frame), &mut pending)?;
                drain(&mut writer, &mut pending)?;
            }
        }
        Stage::Conductance => {
            for row in reader.deserialize::<ConductanceCsvRow>() {
                let row = row.map_err(csv_err)?;
                let sample = ConductanceSample {
                    timestamp: row.timestamp_s,
                    channel_id: row.channel_id,
                    g_rel: row.g_rel,
                    g: row.g,
                };
                pipeline.push(InputRecord::Conductance(sample), &mut pending)?;
                drain(&mut writer, &mut pending)?;
            }
        }
        Stage::Filter => {
            for row in reader.deserialize::<FilterCsvRow>() {
                let row = row.map_err(csv_err)?;
                let rec = FilterOutput {
                    timestamp: row.timestamp_s,
                    channel_id: row.channel_id,
                    g_hat: row.g_hat,
                    v_hat: row.v_hat,
                    a_hat: row.a_hat,
                    o: row.o,
                };
                pipeline.push(InputRecord::Filter(rec), &mut pending)?;
                drain(&mut writer, &mut pending)?;
            }
        }
        Stage::Events => {
            return Err(CliError::Schema(
                "events files are terminal; nothing further to process".to_string(),
            ));
        }
    }
    pipeline.finish(&mut pending)?;
    drain(&mut writer, &mut pending)?;
    writer.flush()?;
    Ok(())
}

fn drain(
    writer: &mut csv::Writer<fs::File>,
    rows: &mut Vec<OutputRecord>,
) -> Result<(), CliError> {
    for rec in rows.drain(..) {
        match rec {
            OutputRecord::Conductance(s) => writer
                .serialize(ConductanceCsvRow {
                    timestamp_s: s.timestamp,
                    channel_id: s.channel_id,
                    g_rel: s.g_rel,
                    g: s.g,
                })
                .map_err(csv_err)?,
            OutputRecord::Filter(f) => writer
                .serialize(FilterCsvRow {
                    timestamp_s: f.timestamp,
                    channel_id: f.channel_id,
                    g_hat: f.g_hat,
                    v_hat: f.v_hat,
                    a_hat: f.a_hat,
                    o: f.o,
                })
                .map_err(csv_err)?,
            OutputRecord::Event { event, source } => writer
                .serialize(EventCsvRow::new(&event, source))
                .map_err(csv_err)?,
        }
    }
    Ok(())
}

/// Assemble trials from two event CSVs and a manifest, classify, report.
pub fn stereo(
    left: &Path,
    right: &Path,
    manifest: &Path,
    output: &Path,
    config: &PipelineConfig,
) -> Result<(), CliError> {
    let left_events = read_events(left)?;
    let right_events = read_events(right)?;
    let manifest_rows: Vec<ManifestCsvRow> = enose_core::csvio::read_csv(manifest)?;
    let specs: Vec<TrialSpec> = manifest_rows
        .iter()
        .map(|m| TrialSpec {
            trial_id: m.trial_id.clone(),
            stimulus_time: m.stimulus_time_s,
            true_direction: Some(m.true_direction),
        })
        .collect();
    let trials = build_trials(&specs, &left_events, &right_events, config.stereo.window_s)?;
    let summary = classify_trials(&trials, config.stereo.outlier_cutoff_s)?;
    let rows: Vec<DelayCsvRow> = summary
        .measurements
        .iter()
        .map(|m| DelayCsvRow {
            trial_id: m.trial_id.clone(),
            sensor_pair: m.sensor_pair,
            delay_s: m.delay,
            outlier: m.outlier,
            inferred_direction: m.inferred_direction,
        })
        .collect();
    write_rows(
        output,
        &["trial_id", "sensor_pair", "delay_s", "outlier", "inferred_direction"],
        &rows,
    )?;
    println!(
        "{} trials, accuracy {:.3} among non-outliers, {} outlier measurements",
        trials.len(),
        summary.overall_accuracy,
        summary.total_outliers
    );
    for pair in &summary.per_pair {
        println!(
            "pair {}: accuracy {:.3}, outliers {}, mean delay {}",
            pair.sensor_pair,
            pair.accuracy,
            pair.outliers,
            pair.mean_delay
                .map(|d| format!("{:+.4} s", d))
                .unwrap_or_else(|| "n/a".to_string()),
        );
    }
    Ok(())
}

fn read_events(path: &Path) -> Result<Vec<enose_core::BoutEvent>, CliError> {
    let rows: Vec<EventCsvRow> = enose_core::csvio::read_csv(path)?;
    Ok(rows.into_iter().map(EventCsvRow::into_event).collect())
}

/// Run the decay-constant sweep on one recorded step response.
pub fn select_tau(
    input: &Path,
    candidates: &[f64],
    threshold: f64,
    channel: Option<&str>,
    config: &PipelineConfig,
) -> Result<(), CliError> {
    let mut reader = csv::Reader::from_path(input).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let stage = Stage::detect(&headers).ok_or_else(|| {
        CliError::Schema(format!("{}: unrecognized header", input.display()))
    })?;
    drop(reader);
    let samples: Vec<ConductanceSample> = match stage {
        Stage::Conductance => enose_core::csvio::read_csv::<ConductanceCsvRow>(input)?
            .into_iter()
            .map(|r| ConductanceSample {
                timestamp: r.timestamp_s,
                channel_id: r.channel_id,
                g_rel: r.g_rel,
                g: r.g,
            })
            .collect(),
        Stage::Acquisition => {
            let mut pipeline =
                ProcessPipeline::new(config.clone(), Stage::Acquisition, Stage::Conductance)?;
            let mut out = Vec::new();
            let mut record_index = 0u64;
            let mut reader = csv::Reader::from_path(input).map_err(csv_err)?;
            for row in reader.deserialize::<AcquisitionCsvRow>() {
                record_index += 1;
                let frame = row.map_err(csv_err)?.into_frame(record_index)?;
                pipeline.push(InputRecord::Acquisition(frame), &mut out)?;
            }
            pipeline.finish(&mut out)?;
            out.into_iter()
                .map(|r| match r {
                    OutputRecord::Conductance(s) => s,
                    _ => unreachable!("conductance stage emits conductance records"),
                })
                .collect()
        }
        other => {
            return Err(CliError::Schema(format!(
                "select-tau needs acquisition or conductance input, got a {} file",
                other.name()
            )))
        }
    };
    let channel_id = match channel {
        Some(c) => c.to_string(),
        None => samples
            .first()
            .map(|s| s.channel_id.clone())
            .ok_or_else(|| CliError::Schema("input contains no samples".to_string()))?,
    };
    let trace: Vec<ConductanceSample> = samples
        .into_iter()
        .filter(|s| s.channel_id == channel_id)
        .collect();
    if trace.is_empty() {
        return Err(CliError::Schema(format!(
            "no samples for channel {channel_id}"
        )));
    }
    let base = FilterConfig {
        tau: f64::INFINITY,
        ..config.filter_config_for(&channel_id)
    };
    let selection = filter_select_tau(&trace, candidates, threshold, &base)?;
    println!(
        "channel {channel_id}: selected tau_s = {} (secondary peak {:.6}, threshold {threshold})",
        selection.tau, selection.secondary_peak
    );
    if selection.fallback {
        println!(
            "warning: no candidate suppressed the secondary peak below {threshold}; returned the smallest candidate"
        );
    }
    println!("config: --set filter.tau_s={}", selection.tau);
    Ok(())
}
