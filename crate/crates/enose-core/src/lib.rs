//! Event-based odor bout detection for MOX gas sensors.
//!
//! The processing chain turns raw ratiometric ADC frames into normalized
//! conductance, removes the sensor's slow relaxation with a decay-augmented
//! constant-acceleration Kalman filter, converts onsets into sparse ON/OFF
//! events by absolute-deadband sampling, and infers stimulus direction from
//! the first-event delay between a stereo pair of boards. A seeded
//! simulator supplies ground-truth recordings for verification.

pub mod acquisition;
pub mod config;
pub mod csvio;
pub mod events;
pub mod filter;
pub mod pipeline;
pub mod sim;
pub mod stereo;

pub use acquisition::{AdcFrame, ConductanceSample, Gain};
pub use config::PipelineConfig;
pub use events::{BoutEvent, Polarity, SourceVariable};
pub use filter::{FilterConfig, FilterState};
pub use sim::SimScenario;
pub use stereo::{Direction, InferredDirection, SensorPair};
