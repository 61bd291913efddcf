//! Cross-module properties of the full chain: gain invariance of the
//! reconstructed conductance, puff superposition, and the systematic-offset
//! emulation knobs.

use enose_core::acquisition::{
    code_to_ratio, compute_baseline, positive_full_scale, ratio_to_relative_conductance, AdcFrame,
    Gain,
};
use enose_core::config::PipelineConfig;
use enose_core::csvio::Stage;
use enose_core::events::Polarity;
use enose_core::pipeline::{run_frames, OutputRecord};
use enose_core::sim::{
    encode_ratio, synthesize_batch, synthesize_trial, DirectionSpec, PuffSpec, SimScenario,
};
use enose_core::stereo::{build_trials, classify_trials, TrialSpec};

// The same physical ratio trajectory, quantized under each fixed gain,
// reconstructs to normalized conductance traces that agree within two
// LSB-equivalents of the coarser gain.
#[test]
fn gain_invariance_of_reconstructed_conductance() {
    let dt = 0.005;
    let n = 2000;
    // Physical trajectory kept inside the unsaturated range of gain 4.
    let x_of = |i: usize| -> f64 {
        let t = i as f64 * dt;
        let g_rel = 4.0 + 5.0 * (1.0 - (-t / 0.5f64).exp()) * (-t / 30.0f64).exp();
        1.0 / (1.0 + g_rel)
    };
    let fs = positive_full_scale(24) as f64;
    let trace_for = |gain: Gain| -> Vec<(f64, f64)> {
        // x -> code -> x_hat -> g_rel, then normalize by the first second.
        let g_rel: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let frame = AdcFrame {
                    timestamp: i as f64 * dt,
                    channel_id: "c".to_string(),
                    raw_code: encode_ratio(x_of(i), gain, 24),
                    gain,
                    bit_depth: 24,
                };
                let x = code_to_ratio(&frame).unwrap();
                (frame.timestamp, ratio_to_relative_conductance(x).unwrap())
            })
            .collect();
        let baseline = compute_baseline(&g_rel, 1.0).unwrap();
        g_rel.into_iter().map(|(t, v)| (t, v / baseline)).collect()
    };
    let traces = [
        trace_for(Gain::X1),
        trace_for(Gain::X2),
        trace_for(Gain::X4),
    ];
    let gains = [1.0f64, 2.0, 4.0];
    for a in 0..3 {
        for b in (a + 1)..3 {
            let coarse = gains[a].min(gains[b]);
            for i in 0..n {
                let x = x_of(i);
                // One coarse LSB expressed in normalized-conductance units.
                let lsb_equiv = (1.0 / (coarse * fs)) / (x * x) / 4.0;
                let diff = (traces[a][i].1 - traces[b][i].1).abs();
                assert!(
                    diff <= 2.0 * lsb_equiv,
                    "gains {}x vs {}x differ by {diff:.3e} > {:.3e} at sample {i}",
                    gains[a],
                    gains[b],
                    2.0 * lsb_equiv
                );
            }
        }
    }
}

// Two puffs five seconds apart superpose: the second onset shows up as a
// conductance step well before the first puff has recovered.
#[test]
fn second_puff_steps_before_recovery() {
    let mut scenario = SimScenario::default();
    scenario.noise_sd = 0.0;
    scenario.duration_s = 30.0;
    scenario.puffs = vec![
        PuffSpec {
            release_time_s: 5.0,
            direction: DirectionSpec::LeftToRight,
            amplitude: 2.0,
        },
        PuffSpec {
            release_time_s: 10.0,
            direction: DirectionSpec::LeftToRight,
            amplitude: 2.0,
        },
    ];
    let batch = synthesize_batch(&scenario).unwrap();
    let frames: Vec<AdcFrame> = batch
        .left
        .iter()
        .filter(|f| f.channel_id == "L0")
        .cloned()
        .collect();
    let cfg = PipelineConfig::default();
    let g: Vec<(f64, f64)> = run_frames(&frames, &cfg, Stage::Conductance)
        .unwrap()
        .into_iter()
        .map(|r| match r {
            OutputRecord::Conductance(s) => (s.timestamp, s.g),
            _ => unreachable!(),
        })
        .collect();
    let value_at = |t: f64| g.iter().find(|(ts, _)| *ts >= t).unwrap().1;
    let before_second = value_at(10.0);
    assert!(
        before_second > 1.5,
        "first puff should not have recovered at the second onset (g = {before_second})"
    );
    let after_second = value_at(11.5);
    assert!(
        after_second > before_second + 1.0,
        "second onset should step the conductance up ({before_second} -> {after_second})"
    );
}

fn summarize(scenario: &SimScenario) -> enose_core::stereo::ClassificationSummary {
    let cfg = PipelineConfig::default();
    let batch = synthesize_batch(scenario).unwrap();
    let events_of = |frames: &[AdcFrame]| {
        run_frames(frames, &cfg, Stage::Events)
            .unwrap()
            .into_iter()
            .filter_map(|r| match r {
                OutputRecord::Event { event, .. } if event.polarity == Polarity::On => Some(event),
                _ => None,
            })
            .collect::<Vec<_>>()
    };
    let left = events_of(&batch.left);
    let right = events_of(&batch.right);
    let specs: Vec<TrialSpec> = batch
        .manifest
        .iter()
        .map(|m| TrialSpec {
            trial_id: m.trial_id.clone(),
            stimulus_time: m.stimulus_time_s,
            true_direction: Some(m.true_direction),
        })
        .collect();
    let trials = build_trials(&specs, &left, &right, cfg.stereo.window_s).unwrap();
    classify_trials(&trials, cfg.stereo.outlier_cutoff_s).unwrap()
}

// Both systematic-offset hypotheses are injectable: a transport-side
// latency bias and a slower right-board sensor response each shift the
// per-pair mean delays negative (right onset detected later).
#[test]
fn systematic_offset_knobs_shift_mean_delays() {
    let mut base = SimScenario::default();
    base.trials = 6;
    base.duration_s = 20.0;
    base.noise_sd = 1e-4;
    base.puffs = vec![PuffSpec {
        release_time_s: 2.0,
        direction: DirectionSpec::ByTrial,
        amplitude: 2.0,
    }];
    let reference = summarize(&base);

    let mut lateral = base.clone();
    lateral.side_latency_bias_s = 0.08;
    let lateral_summary = summarize(&lateral);
    for (a, b) in reference.per_pair.iter().zip(lateral_summary.per_pair.iter()) {
        let shift = b.mean_delay.unwrap() - a.mean_delay.unwrap();
        assert!(
            (shift + 0.08).abs() < 0.01,
            "lateral-flow bias should shift pair {} by -80 ms, got {shift}",
            a.sensor_pair
        );
    }

    let mut mismatch = base.clone();
    mismatch.right_rise_tau_scale = 4.0;
    let mismatch_summary = summarize(&mismatch);
    for (a, b) in reference.per_pair.iter().zip(mismatch_summary.per_pair.iter()) {
        let shift = b.mean_delay.unwrap() - a.mean_delay.unwrap();
        assert!(
            shift < -0.002,
            "slower right sensors should delay right onsets for pair {} (shift {shift})",
            a.sensor_pair
        );
    }
}

// Ground-truth onsets ignore the sensor-mismatch knob (it only affects the
// electrical response), while the latency bias moves them.
#[test]
fn mismatch_knob_leaves_transport_ground_truth_alone() {
    let mut scenario = SimScenario::default();
    scenario.duration_s = 10.0;
    scenario.puffs = vec![PuffSpec {
        release_time_s: 2.0,
        direction: DirectionSpec::LeftToRight,
        amplitude: 1.0,
    }];
    let base = synthesize_trial(&scenario, 0).unwrap();
    let mut mismatch = scenario.clone();
    mismatch.right_rise_tau_scale = 2.0;
    let scaled = synthesize_trial(&mismatch, 0).unwrap();
    assert_eq!(base.ground_truth, scaled.ground_truth);
}
