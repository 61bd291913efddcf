//! Pipeline configuration: one TOML file with dotted keys mirroring the
//! module namespaces, plus `key=value` command-line overrides. Every key
//! has a default; unknown keys are rejected so typos fail loudly.

use crate::events::SourceVariable;
use crate::filter::FilterConfig;
use crate::stereo::SensorPair;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid override {key:?}: {reason}")]
    BadOverride { key: String, reason: String },
    #[error("invalid config value: {0}")]
    Invalid(String),
}

/// Seconds value that accepts the string "inf" for an infinite constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seconds(pub f64);

impl<'de> Deserialize<'de> for Seconds {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Seconds(v)),
            Raw::Text(s) => {
                let trimmed = s.trim();
                if trimmed.eq_ignore_ascii_case("inf") || trimmed.eq_ignore_ascii_case("infinity")
                {
                    Ok(Seconds(f64::INFINITY))
                } else {
                    trimmed
                        .parse::<f64>()
                        .map(Seconds)
                        .map_err(|e| D::Error::custom(format!("bad seconds value {s:?}: {e}")))
                }
            }
        }
    }
}

impl Serialize for Seconds {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSection {
    /// Seconds of samples averaged into the baseline.
    pub baseline_window_s: f64,
    pub upshift_threshold: f64,
    pub downshift_threshold: f64,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        AcquisitionSection {
            baseline_window_s: 1.0,
            upshift_threshold: 0.45,
            downshift_threshold: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub dt_s: f64,
    /// Decay constant; "inf" disables the decay term.
    pub tau_s: Seconds,
    /// Per-sensor-type overrides keyed S0..S3.
    pub tau_s_by_type: BTreeMap<String, Seconds>,
    pub q: f64,
    pub r: f64,
    pub p0: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            dt_s: 0.005,
            tau_s: Seconds(3.0),
            tau_s_by_type: BTreeMap::new(),
            q: 1e-2,
            r: 1e-8,
            p0: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EventsSection {
    /// Deadband threshold.
    pub theta: f64,
    /// Which filter output feeds the encoder: "g" or "o".
    pub source: SourceVariable,
    pub histogram_bin_s: f64,
}

impl Default for EventsSection {
    fn default() -> Self {
        EventsSection {
            theta: 0.02,
            source: SourceVariable::BoutVelocity,
            histogram_bin_s: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StereoSection {
    pub outlier_cutoff_s: f64,
    pub window_s: f64,
}

impl Default for StereoSection {
    fn default() -> Self {
        StereoSection {
            outlier_cutoff_s: 2.0,
            window_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub acquisition: AcquisitionSection,
    pub filter: FilterSection,
    pub events: EventsSection,
    pub stereo: StereoSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    /// Load from an optional file, then apply `key=value` overrides with
    /// dotted keys (`filter.tau_s=inf`).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                path: p.display().to_string(),
                source: e,
            })?,
            None => String::new(),
        };
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for pair in overrides {
            let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError::BadOverride {
                key: pair.clone(),
                reason: "expected KEY=VALUE".to_string(),
            })?;
            set_dotted(&mut table, key.trim(), parse_literal(value.trim())).map_err(|reason| {
                ConfigError::BadOverride {
                    key: key.to_string(),
                    reason,
                }
            })?;
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.acquisition;
        if !(a.baseline_window_s > 0.0) {
            return Err(ConfigError::Invalid(
                "acquisition.baseline_window_s must be positive".to_string(),
            ));
        }
        if !(0.0 < a.upshift_threshold
            && a.upshift_threshold < a.downshift_threshold
            && a.downshift_threshold < 1.0)
        {
            return Err(ConfigError::Invalid(
                "acquisition thresholds must satisfy 0 < upshift < downshift < 1".to_string(),
            ));
        }
        for (label, tau) in std::iter::once((None, self.filter.tau_s))
            .chain(self.filter.tau_s_by_type.iter().map(|(k, v)| (Some(k), *v)))
        {
            let f = FilterConfig {
                dt: self.filter.dt_s,
                tau: tau.0,
                process_noise_intensity: self.filter.q,
                measurement_noise_variance: self.filter.r,
                initial_covariance_scale: self.filter.p0,
            };
            f.validate().map_err(|e| {
                ConfigError::Invalid(match label {
                    Some(k) => format!("filter.tau_s_by_type.{k}: {e}"),
                    None => format!("filter: {e}"),
                })
            })?;
        }
        for key in self.filter.tau_s_by_type.keys() {
            let valid = SensorPair::ALL.iter().any(|p| p.to_string() == *key);
            if !valid {
                return Err(ConfigError::Invalid(format!(
                    "filter.tau_s_by_type key {key:?} is not one of S0..S3"
                )));
            }
        }
        if !(self.events.theta > 0.0) {
            return Err(ConfigError::Invalid("events.theta must be positive".to_string()));
        }
        if !(self.events.histogram_bin_s > 0.0) {
            return Err(ConfigError::Invalid(
                "events.histogram_bin_s must be positive".to_string(),
            ));
        }
        if !(self.stereo.outlier_cutoff_s > 0.0) {
            return Err(ConfigError::Invalid(
                "stereo.outlier_cutoff_s must be positive".to_string(),
            ));
        }
        if !(self.stereo.window_s > 0.0) {
            return Err(ConfigError::Invalid("stereo.window_s must be positive".to_string()));
        }
        Ok(())
    }

    /// Filter parameters for one channel, honoring per-type tau overrides.
    pub fn filter_config_for(&self, channel_id: &str) -> FilterConfig {
        let tau = SensorPair::from_channel_id(channel_id)
            .ok()
            .and_then(|pair| self.filter.tau_s_by_type.get(&pair.to_string()))
            .copied()
            .unwrap_or(self.filter.tau_s);
        FilterConfig {
            dt: self.filter.dt_s,
            tau: tau.0,
            process_noise_intensity: self.filter.q,
            measurement_noise_variance: self.filter.r,
            initial_covariance_scale: self.filter.p0,
        }
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    if let Ok(v) = raw.parse::<i64>() {
        return toml::Value::Integer(v);
    }
    // "inf" stays a string so the Seconds deserializer can claim it.
    if let Ok(v) = raw.parse::<f64>() {
        if v.is_finite() {
            return toml::Value::Float(v);
        }
    }
    if let Ok(v) = raw.parse::<bool>() {
        return toml::Value::Boolean(v);
    }
    toml::Value::String(raw.to_string())
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut parts = key.split('.').peekable();
    let mut current = table;
    loop {
        let part = parts.next().ok_or_else(|| "empty key".to_string())?;
        if part.is_empty() {
            return Err("empty key segment".to_string());
        }
        if parts.peek().is_none() {
            current.insert(part.to_string(), value);
            return Ok(());
        }
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("{part} is not a table"))?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.filter.tau_s, Seconds(3.0));
        assert_eq!(cfg.events.theta, 0.02);
        assert_eq!(cfg.stereo.outlier_cutoff_s, 2.0);
    }

    #[test]
    fn tau_accepts_inf_string() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            [filter]
            tau_s = "inf"
            "#,
        )
        .unwrap();
        assert!(cfg.filter.tau_s.0.is_infinite());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml_str("[filter]\ntau_sec = 3.0").is_err());
        assert!(PipelineConfig::from_toml_str("[misc]\nx = 1").is_err());
    }

    #[test]
    fn overrides_apply_with_dotted_keys() {
        let cfg = PipelineConfig::load(
            None,
            &[
                "filter.tau_s=inf".to_string(),
                "events.theta=0.05".to_string(),
                "stereo.window_s=4".to_string(),
            ],
        )
        .unwrap();
        assert!(cfg.filter.tau_s.0.is_infinite());
        assert_eq!(cfg.events.theta, 0.05);
        assert_eq!(cfg.stereo.window_s, 4.0);
    }

    #[test]
    fn override_typo_is_rejected() {
        assert!(PipelineConfig::load(None, &["filter.tau=3".to_string()]).is_err());
        assert!(PipelineConfig::load(None, &["no_equals_sign".to_string()]).is_err());
    }

    #[test]
    fn per_type_tau_override() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            [filter.tau_s_by_type]
            S1 = 5.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.filter_config_for("L1").tau, 5.0);
        assert_eq!(cfg.filter_config_for("R1").tau, 5.0);
        assert_eq!(cfg.filter_config_for("L0").tau, 3.0);
    }

    #[test]
    fn invalid_dt_tau_combination_rejected() {
        assert!(PipelineConfig::from_toml_str(
            r#"
            [filter]
            dt_s = 5.0
            tau_s = 3.0
            "#
        )
        .is_err());
    }
}
