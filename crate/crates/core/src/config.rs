//! Batch run configuration: sectioned, typed, loadable from TOML or JSON,
//! with environment-variable overrides for individual keys.
//!
//! Unknown keys are rejected everywhere so a typo in an experiment ledger
//! fails loudly instead of silently running the default.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::diagnostics::BootstrapThresholds;
use crate::evolve::EvolveConfig;
use crate::grid::{Grid1D, GridError};
use crate::hilbert::HilbertMethod;
use crate::initdata::InitConfig;
use crate::shooting::ShootConfig;

/// Prefix for environment-variable overrides. A variable
/// `BHSHOCK_EVOLVE__CFL=0.3` overrides the `cfl` key of the `evolve`
/// section; a double underscore separates path components.
pub const ENV_PREFIX: &str = "BHSHOCK_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config ({format}): {message}")]
    Parse { format: &'static str, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("bad environment override {var}: {message}")]
    EnvOverride { var: String, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub half_width: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 16384,
            half_width: 2.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid1D, GridError> {
        Grid1D::symmetric(self.half_width, self.points)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// inner and outer radii of the cusp-exponent fit window
    pub holder_radii: (f64, f64),
    /// half-width in X of the profile-error window
    pub profile_window: f64,
    pub thresholds: BootstrapThresholds,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            holder_radii: (1e-4, 1e-1),
            profile_window: 5.0,
            thresholds: BootstrapThresholds::default(),
        }
    }
}

/// Top-level experiment configuration: the union of the per-module
/// sections plus a seed for randomized property exercises.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub init: InitConfig,
    pub evolve: EvolveConfig,
    pub hilbert: HilbertMethod,
    pub shoot: ShootConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl RunConfig {
    /// Parse from TOML or JSON text; the format is chosen by trying JSON
    /// first when the text starts with `{`, else TOML.
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let value = parse_value(text)?;
        from_value(value)
    }

    /// Load from a file, then apply `BHSHOCK_*` environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut value = parse_value(&text)?;
        apply_env_overrides(&mut value, std::env::vars())?;
        from_value(value)
    }

    /// Cross-section consistency checks on top of per-section validation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.init
            .validate_params()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.evolve
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.shoot
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let (r_min, r_max) = self.diagnostics.holder_radii;
        if !(r_min > 0.0 && r_max > r_min) {
            return Err(ConfigError::Invalid(format!(
                "holder_radii must satisfy 0 < r_min < r_max, got ({r_min}, {r_max})"
            )));
        }
        if !(self.diagnostics.profile_window > 0.0) {
            return Err(ConfigError::Invalid(
                "profile_window must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The fully resolved config as pretty JSON, for embedding in reports.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_value(text: &str) -> Result<serde_json::Value, ConfigError> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            format: "json",
            message: e.to_string(),
        })
    } else {
        let v: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse {
            format: "toml",
            message: e.to_string(),
        })?;
        serde_json::to_value(v).map_err(|e| ConfigError::Parse {
            format: "toml",
            message: e.to_string(),
        })
    }
}

fn from_value(value: serde_json::Value) -> Result<RunConfig, ConfigError> {
    serde_json::from_value(value).map_err(|e| ConfigError::Parse {
        format: "config",
        message: e.to_string(),
    })
}

/// Apply overrides of the form `BHSHOCK_SECTION__KEY=value` onto the raw
/// config tree. The value is parsed as JSON when possible (numbers, bools,
/// structured values) and taken as a string otherwise.
fn apply_env_overrides(
    value: &mut serde_json::Value,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<(), ConfigError> {
    let mut overrides: Vec<(String, String)> = vars
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    overrides.sort();
    for (var, raw) in overrides {
        let path = var[ENV_PREFIX.len()..].to_ascii_lowercase();
        let parts: Vec<&str> = path.split("__").filter(|p| !p.is_empty()).collect();
        if parts.is_empty() {
            return Err(ConfigError::EnvOverride {
                var,
                message: "empty key path".into(),
            });
        }
        let leaf: serde_json::Value = serde_json::from_str(&raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
        let mut node = &mut *value;
        for part in &parts[..parts.len() - 1] {
            if !node.is_object() {
                *node = serde_json::Value::Object(Default::default());
            }
            node = node
                .as_object_mut()
                .expect("just ensured object")
                .entry(part.to_string())
                .or_insert(serde_json::Value::Object(Default::default()));
        }
        if !node.is_object() {
            *node = serde_json::Value::Object(Default::default());
        }
        node.as_object_mut()
            .expect("just ensured object")
            .insert(parts[parts.len() - 1].to_string(), leaf);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_preserves_every_section() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_str(&text).unwrap();
        assert_eq!(cfg.grid, back.grid);
        assert_eq!(cfg.init, back.init);
        assert_eq!(cfg.seed, back.seed);
        assert_eq!(cfg.evolve.cfl, back.evolve.cfl);
        assert_eq!(cfg.shoot.epsilon, back.shoot.epsilon);
    }

    #[test]
    fn json_and_toml_agree() {
        let toml_text = "seed = 7\n[evolve]\ncfl = 0.3\n";
        let json_text = r#"{"seed": 7, "evolve": {"cfl": 0.3}}"#;
        let a = RunConfig::from_str(toml_text).unwrap();
        let b = RunConfig::from_str(json_text).unwrap();
        assert_eq!(a.seed, 7);
        assert_eq!(a.evolve.cfl, b.evolve.cfl);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let err = RunConfig::from_str("[evolve]\ncfll = 0.3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cfll"), "message should name the key: {msg}");
    }

    #[test]
    fn env_override_reaches_nested_key() {
        let mut value = parse_value("[evolve]\ncfl = 0.4\n").unwrap();
        let vars = vec![
            ("BHSHOCK_EVOLVE__CFL".to_string(), "0.25".to_string()),
            ("BHSHOCK_SEED".to_string(), "42".to_string()),
            ("UNRELATED".to_string(), "9".to_string()),
        ];
        apply_env_overrides(&mut value, vars.into_iter()).unwrap();
        let cfg = from_value(value).unwrap();
        assert_eq!(cfg.evolve.cfl, 0.25);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn invalid_cross_section_value_fails_validation() {
        let mut cfg = RunConfig::default();
        cfg.diagnostics.holder_radii = (0.1, 0.01);
        assert!(cfg.validate().is_err());
    }
}
