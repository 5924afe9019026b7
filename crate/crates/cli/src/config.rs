//! Run configuration: one JSON document, every block optional, unknown keys
//! rejected with the path of the offending key.

use std::path::Path;

use qdphase::estimation::{Bounds, Combination, LmOptions};
use qdphase::interferometer::InterferometerConfig;
use qdphase::{Coupling, Drive, EmitterParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_SCHEMA_VERSION: &str = "qdphase.config/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    /// Emitters in series on the waveguide; they share `phi0`.
    pub emitters: Vec<EmitterParams>,
    pub drive: Drive,
    pub interferometer: InterferometerConfig,
    pub sweep: SweepConfig,
    pub noise: NoiseConfig,
    pub model: ModelCurveConfig,
    pub extract: ExtractConfig,
    pub fit: FitConfig,
    pub saturation: SaturationConfig,
    pub chiral: ChiralConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION.into(),
            emitters: vec![EmitterParams {
                gamma: 12.3,
                gamma_dp: 3.9,
                coupling: Coupling::Isotropic { beta: 1.0 },
                f0: 0.0,
                phi0: -0.25,
            }],
            drive: Drive::LinearResponse,
            interferometer: InterferometerConfig::default(),
            sweep: SweepConfig::default(),
            noise: NoiseConfig::default(),
            model: ModelCurveConfig::default(),
            extract: ExtractConfig::default(),
            fit: FitConfig::default(),
            saturation: SaturationConfig::default(),
            chiral: ChiralConfig::default(),
        }
    }
}

/// Uniform laser-frequency sweep, GHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            start: -4.0,
            stop: 4.0,
            points: 4001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub shot_noise: bool,
    /// Base seed; the on trace uses `2·seed`, the off trace `2·seed + 1`.
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            shot_noise: true,
            seed: 0,
        }
    }
}

/// Model curves versus detuning, in units of each emitter's γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelCurveConfig {
    pub span_gamma: f64,
    pub points: usize,
}

impl Default for ModelCurveConfig {
    fn default() -> Self {
        ModelCurveConfig {
            span_gamma: 5.0,
            points: 401,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Path-length imbalance, m. Estimated from the off trace when absent.
    pub delta_l: Option<f64>,
    pub window_periods: f64,
    pub hop_periods: f64,
    pub envelope_order: usize,
    /// LO counts per bin. Taken from the trace sidecar when absent.
    pub lo_counts: Option<f64>,
    pub low_contrast_threshold: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        let d = qdphase::estimation::ExtractOptions::default();
        ExtractConfig {
            delta_l: None,
            window_periods: d.window_periods,
            hop_periods: d.hop_periods,
            envelope_order: d.envelope_order,
            lo_counts: None,
            low_contrast_threshold: d.low_contrast_threshold,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub combination: Combination,
    pub init: Option<Vec<f64>>,
    pub bounds: Option<Bounds>,
    pub lm: LmOptions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationConfig {
    /// Power of each input file, in order. `--power` flags take precedence.
    pub powers: Vec<f64>,
    /// Powers at which to evaluate the predicted φmax curve; defaults to the
    /// fitted powers.
    pub curve_powers: Vec<f64>,
    pub init: Option<Vec<f64>>,
    pub bounds: Option<Bounds>,
    pub lm: LmOptions,
}

/// Resonant chiral response sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChiralConfig {
    pub gamma: f64,
    pub gamma_dp: f64,
    pub beta_dir: f64,
    pub points: usize,
}

impl Default for ChiralConfig {
    fn default() -> Self {
        ChiralConfig {
            gamma: 1.0,
            gamma_dp: 0.0,
            beta_dir: 1.0,
            points: 401,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::bad(format!("config key '{path}': {}", e.inner()))
        })?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::bad(format!(
                "config key 'schema_version': expected '{CONFIG_SCHEMA_VERSION}', found '{}'",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::bad(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
        }
    }
}
