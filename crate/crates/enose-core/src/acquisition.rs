//! Ratiometric ADC conversion and gain management.
//!
//! The sensing element sits in a voltage divider with a fixed load resistor,
//! so the ADC reads the ratio `x = V_S / (V_S + V_L)` of the supply. From
//! that ratio we recover the sensor conductance relative to the load
//! (`g_rel = 1/x - 1`) and normalize it against the recording's baseline.
//! A hysteresis controller keeps the programmable input gain in the
//! high-sensitivity region of the divider curve.

use thiserror::Error;

/// Programmable ADC input gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gain {
    X1,
    X2,
    X4,
}

impl Gain {
    /// Multiplicative gain factor applied by the ADC front end.
    pub fn factor(self) -> i64 {
        match self {
            Gain::X1 => 1,
            Gain::X2 => 2,
            Gain::X4 => 4,
        }
    }

    pub fn from_factor(factor: i64) -> Option<Gain> {
        match factor {
            1 => Some(Gain::X1),
            2 => Some(Gain::X2),
            4 => Some(Gain::X4),
            _ => None,
        }
    }

    /// Next higher gain, if any.
    pub fn step_up(self) -> Option<Gain> {
        match self {
            Gain::X1 => Some(Gain::X2),
            Gain::X2 => Some(Gain::X4),
            Gain::X4 => None,
        }
    }

    /// Next lower gain, if any.
    pub fn step_down(self) -> Option<Gain> {
        match self {
            Gain::X1 => None,
            Gain::X2 => Some(Gain::X1),
            Gain::X4 => Some(Gain::X2),
        }
    }
}

/// One raw ADC reading as it leaves the converter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcFrame {
    pub timestamp: f64,
    pub channel_id: String,
    /// Signed ADC code, `bit_depth` bits two's complement.
    pub raw_code: i64,
    pub gain: Gain,
    /// Converter resolution in bits; one bit is the sign, so positive full
    /// scale is `2^(bit_depth-1) - 1`.
    pub bit_depth: u32,
}

impl AdcFrame {
    /// Largest positive code representable at this frame's bit depth.
    pub fn positive_full_scale(&self) -> i64 {
        positive_full_scale(self.bit_depth)
    }
}

/// Largest positive code for a signed converter of `bit_depth` bits.
pub fn positive_full_scale(bit_depth: u32) -> i64 {
    (1i64 << (bit_depth - 1)) - 1
}

/// Normalized conductance measurement derived from one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceSample {
    pub timestamp: f64,
    pub channel_id: String,
    /// Sensor conductance over load conductance, `1/x - 1`.
    pub g_rel: f64,
    /// `g_rel` divided by the recording baseline; 1.0 at baseline.
    pub g: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AcquisitionError {
    /// Code at or below ground; indicates a wiring or configuration fault.
    #[error("non-positive ADC code {code} (expected 0 < code < full scale)")]
    NonPositiveCode { code: i64 },
    /// Code clipped at positive full scale; the gain is set too high.
    #[error("ADC code {code} saturated at positive full scale (gain too high)")]
    SaturatedCode { code: i64 },
    /// Ratio outside the open interval (0, 1).
    #[error("ratio {x} outside (0, 1)")]
    OutOfRange { x: f64 },
    /// Baseline missing, non-positive, or the recording is shorter than the
    /// baseline window.
    #[error("baseline not computable: {reason}")]
    ZeroBaseline { reason: String },
}

/// Recover the supply ratio `x` from a raw frame.
///
/// The in-gain code measures `x * gain * positive_full_scale`, so dividing
/// by the gain makes the result independent of the active gain setting.
pub fn code_to_ratio(frame: &AdcFrame) -> Result<f64, AcquisitionError> {
    let full_scale = frame.positive_full_scale();
    if frame.raw_code <= 0 {
        return Err(AcquisitionError::NonPositiveCode {
            code: frame.raw_code,
        });
    }
    if frame.raw_code >= full_scale {
        return Err(AcquisitionError::SaturatedCode {
            code: frame.raw_code,
        });
    }
    Ok(frame.raw_code as f64 / (frame.gain.factor() as f64 * full_scale as f64))
}

/// Conductance of the sensor relative to the load resistor, `1/x - 1`.
///
/// Strictly decreasing bijection from (0, 1) onto (0, inf).
pub fn ratio_to_relative_conductance(x: f64) -> Result<f64, AcquisitionError> {
    if !(x > 0.0 && x < 1.0) {
        return Err(AcquisitionError::OutOfRange { x });
    }
    Ok(1.0 / x - 1.0)
}

/// Mean `g_rel` over the first `window` seconds of a recording.
///
/// Fails when the recording does not span the full window, so early
/// stimulus cannot silently shorten the baseline.
pub fn compute_baseline(g_rel: &[(f64, f64)], window: f64) -> Result<f64, AcquisitionError> {
    let (first_t, _) = *g_rel.first().ok_or_else(|| AcquisitionError::ZeroBaseline {
        reason: "empty trace".to_string(),
    })?;
    let (last_t, _) = *g_rel.last().expect("non-empty");
    if last_t < first_t + window {
        return Err(AcquisitionError::ZeroBaseline {
            reason: format!(
                "recording spans {:.3} s, shorter than the {:.3} s baseline window",
                last_t - first_t,
                window
            ),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &(t, v) in g_rel {
        if t < first_t + window {
            sum += v;
            count += 1;
        }
    }
    let baseline = sum / count as f64;
    if !(baseline > 0.0) {
        return Err(AcquisitionError::ZeroBaseline {
            reason: format!("baseline {baseline} is not positive"),
        });
    }
    Ok(baseline)
}

/// Divide a `g_rel` trace by its baseline, yielding normalized `g`.
pub fn normalize(
    trace: &[(f64, f64)],
    baseline: f64,
) -> Result<Vec<(f64, f64)>, AcquisitionError> {
    if !(baseline > 0.0) {
        return Err(AcquisitionError::ZeroBaseline {
            reason: format!("baseline {baseline} is not positive"),
        });
    }
    Ok(trace.iter().map(|&(t, v)| (t, v / baseline)).collect())
}

/// Directive emitted by the gain controller; applies from the next frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainChange {
    Increase(Gain),
    Decrease(Gain),
}

impl GainChange {
    pub fn new_gain(self) -> Gain {
        match self {
            GainChange::Increase(g) | GainChange::Decrease(g) => g,
        }
    }
}

/// Hysteresis gain controller.
///
/// Readings are compared as a fraction of positive full scale at the active
/// gain. Small fractions mean the divider is in its low-sensitivity region,
/// so the gain steps up; fractions near full scale risk clipping, so the
/// gain steps down. The band between the thresholds must be non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct GainControllerState {
    pub current_gain: Gain,
    pub upshift_threshold: f64,
    pub downshift_threshold: f64,
}

impl GainControllerState {
    pub fn new(
        current_gain: Gain,
        upshift_threshold: f64,
        downshift_threshold: f64,
    ) -> Result<Self, AcquisitionError> {
        if !(0.0 < upshift_threshold && upshift_threshold < downshift_threshold
            && downshift_threshold < 1.0)
        {
            return Err(AcquisitionError::OutOfRange {
                x: upshift_threshold,
            });
        }
        Ok(GainControllerState {
            current_gain,
            upshift_threshold,
            downshift_threshold,
        })
    }
}

/// Step the gain controller with one in-gain reading.
///
/// `measured_fraction` is the raw code divided by positive full scale at the
/// current gain. Returns a directive when the gain should change before the
/// next frame; holds otherwise. Saturated readings fall under the downshift
/// rule (fraction near 1).
pub fn step_gain_controller(
    state: &mut GainControllerState,
    measured_fraction: f64,
) -> Option<GainChange> {
    if measured_fraction < state.upshift_threshold {
        if let Some(next) = state.current_gain.step_up() {
            state.current_gain = next;
            return Some(GainChange::Increase(next));
        }
    } else if measured_fraction > state.downshift_threshold {
        if let Some(next) = state.current_gain.step_down() {
            state.current_gain = next;
            return Some(GainChange::Decrease(next));
        }
    }
    None
}
