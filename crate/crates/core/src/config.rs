//! TOML configuration for scenarios and filter tuning.
//!
//! Config units: angles in degrees, angular rates and biases in deg/h,
//! angle random walk in deg/√h, bias random walk in deg/h^{3/2}, times in
//! seconds. Every key is optional and falls back to the desk-scale default
//! scenario; unknown keys are rejected.
//!
//! ```toml
//! [scenario]
//! duration_s = 3600.0
//! gyro_dt_s = 0.1
//! meas_dt_s = 1.0
//! seed = 1
//! initial_attitude_deg = [0.0, 0.0, 0.0]   # rotation vector
//! initial_bias_degph = [0.1, 0.1, 0.1]
//! references = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
//!
//! [scenario.rate]
//! kind = "sinusoidal"                      # or "constant" with rate_degph
//! offset_degph = [0.0, 0.0, 0.0]
//! amplitude_degph = [360.0, 180.0, 288.0]
//! frequency_hz = [0.01, 0.007, 0.013]
//!
//! [scenario.noise]                         # what the simulator injects
//! arw_deg_rt_h = 0.0343774677078494
//! rrw_deg_h32 = 0.12375888374825782
//! meas_deg = [0.001, 0.001]
//!
//! [scenario.initial_error]
//! mode = "sampled"                         # or "fixed"
//! attitude_deg = [0.0, 0.0, 0.0]
//! bias_degph = [0.0, 0.0, 0.0]
//!
//! [filter]
//! covariance_mod = "on"                    # "off", "attitude-only"
//! mekf_attitude_reset = true
//! initial_sigma_attitude_deg = [0.05, 0.05, 0.05]
//! initial_sigma_bias_degph = [0.2, 0.2, 0.2]
//!
//! [filter.noise]                           # tuning; defaults to scenario.noise
//! arw_deg_rt_h = 0.0343774677078494
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::attitude::{UnitQuaternion, Vec3};
use crate::bench::FilterOptions;
use crate::filter::NoiseParams;
use crate::gmekf::CovarianceReset;
use crate::sim::{InitialError, RateProfile, ScenarioConfig};

const DEG: f64 = std::f64::consts::PI / 180.0;
const HOUR: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    pub filter: FilterSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub duration_s: f64,
    pub gyro_dt_s: f64,
    pub meas_dt_s: f64,
    pub seed: u64,
    pub initial_attitude_deg: [f64; 3],
    pub initial_bias_degph: [f64; 3],
    pub references: Vec<[f64; 3]>,
    pub rate: RateSection,
    pub noise: NoiseSection,
    pub initial_error: InitialErrorSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum RateSection {
    Constant {
        rate_degph: [f64; 3],
    },
    Sinusoidal {
        #[serde(default)]
        offset_degph: [f64; 3],
        amplitude_degph: [f64; 3],
        frequency_hz: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub arw_deg_rt_h: f64,
    pub rrw_deg_h32: f64,
    pub meas_deg: Vec<f64>,
}

/// Tuning overrides; unset fields inherit the simulated noise.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseOverride {
    pub arw_deg_rt_h: Option<f64>,
    pub rrw_deg_h32: Option<f64>,
    pub meas_deg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialErrorMode {
    Sampled,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialErrorSection {
    pub mode: InitialErrorMode,
    pub attitude_deg: [f64; 3],
    pub bias_degph: [f64; 3],
}

/// CLI and config spelling of [`CovarianceReset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMod {
    /// Full geometric reset modification.
    On,
    /// No post-reset modification.
    Off,
    /// Attitude-only rotation of the covariance.
    AttitudeOnly,
}

impl From<CovarianceMod> for CovarianceReset {
    fn from(m: CovarianceMod) -> Self {
        match m {
            CovarianceMod::On => CovarianceReset::Geometric,
            CovarianceMod::Off => CovarianceReset::Skip,
            CovarianceMod::AttitudeOnly => CovarianceReset::AttitudeOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub covariance_mod: CovarianceMod,
    pub mekf_attitude_reset: bool,
    pub initial_sigma_attitude_deg: [f64; 3],
    pub initial_sigma_bias_degph: [f64; 3],
    pub noise: NoiseOverride,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            duration_s: 3600.0,
            gyro_dt_s: 0.1,
            meas_dt_s: 1.0,
            seed: 1,
            initial_attitude_deg: [0.0; 3],
            initial_bias_degph: [0.1; 3],
            references: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            rate: RateSection::default(),
            noise: NoiseSection::default(),
            initial_error: InitialErrorSection::default(),
        }
    }
}

impl Default for RateSection {
    fn default() -> Self {
        RateSection::Sinusoidal {
            offset_degph: [0.0; 3],
            amplitude_degph: [360.0, 180.0, 288.0],
            frequency_hz: [0.01, 0.007, 0.013],
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            arw_deg_rt_h: arw_to_config(1e-5),
            rrw_deg_h32: rrw_to_config(1e-8),
            meas_deg: vec![0.001; 2],
        }
    }
}

impl Default for InitialErrorSection {
    fn default() -> Self {
        Self {
            mode: InitialErrorMode::Sampled,
            attitude_deg: [0.0; 3],
            bias_degph: [0.0; 3],
        }
    }
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            covariance_mod: CovarianceMod::On,
            mekf_attitude_reset: true,
            initial_sigma_attitude_deg: [0.05; 3],
            initial_sigma_bias_degph: [0.2; 3],
            noise: NoiseOverride::default(),
        }
    }
}

/// rad/√s → deg/√h
pub fn arw_to_config(sigma_v: f64) -> f64 {
    sigma_v / DEG * HOUR.sqrt()
}

/// rad/s^{3/2} → deg/h^{3/2}
pub fn rrw_to_config(sigma_u: f64) -> f64 {
    sigma_u / DEG * (HOUR * HOUR.sqrt())
}

fn arw_from_config(v: f64) -> f64 {
    v * DEG / HOUR.sqrt()
}

fn rrw_from_config(v: f64) -> f64 {
    v * DEG / (HOUR * HOUR.sqrt())
}

fn deg3(v: [f64; 3]) -> Vec3 {
    Vec3::from(v) * DEG
}

fn degph3(v: [f64; 3]) -> Vec3 {
    Vec3::from(v) * (DEG / HOUR)
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Converts to SI units and validates the scenario.
    pub fn to_runtime(&self) -> Result<(ScenarioConfig, FilterOptions), ConfigError> {
        let s = &self.scenario;
        let rate = match s.rate {
            RateSection::Constant { rate_degph } => RateProfile::Constant(degph3(rate_degph)),
            RateSection::Sinusoidal {
                offset_degph,
                amplitude_degph,
                frequency_hz,
            } => RateProfile::Sinusoidal {
                offset: degph3(offset_degph),
                amplitude: degph3(amplitude_degph),
                frequency_hz: Vec3::from(frequency_hz),
            },
        };
        let noise = NoiseParams {
            sigma_v: arw_from_config(s.noise.arw_deg_rt_h),
            sigma_u: rrw_from_config(s.noise.rrw_deg_h32),
            sigma_meas: s.noise.meas_deg.iter().map(|v| v * DEG).collect(),
        };
        let initial_error = match s.initial_error.mode {
            InitialErrorMode::Sampled => InitialError::Sampled,
            InitialErrorMode::Fixed => InitialError::Fixed {
                attitude: deg3(s.initial_error.attitude_deg),
                bias: degph3(s.initial_error.bias_degph),
            },
        };
        let scenario = ScenarioConfig {
            duration: s.duration_s,
            gyro_dt: s.gyro_dt_s,
            meas_dt: s.meas_dt_s,
            rate,
            initial_attitude: UnitQuaternion::from_rotation_vector(&deg3(s.initial_attitude_deg)),
            initial_bias: degph3(s.initial_bias_degph),
            noise: noise.clone(),
            refs: s.references.iter().map(|r| Vec3::from(*r)).collect(),
            initial_error,
            initial_sigma_attitude: deg3(self.filter.initial_sigma_attitude_deg),
            initial_sigma_bias: degph3(self.filter.initial_sigma_bias_degph),
            seed: s.seed,
        };
        scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let o = &self.filter.noise;
        let tuning = NoiseParams {
            sigma_v: o.arw_deg_rt_h.map_or(noise.sigma_v, arw_from_config),
            sigma_u: o.rrw_deg_h32.map_or(noise.sigma_u, rrw_from_config),
            sigma_meas: o
                .meas_deg
                .as_ref()
                .map_or(noise.sigma_meas, |m| m.iter().map(|v| v * DEG).collect()),
        };
        if tuning.sigma_meas.len() != scenario.refs.len() {
            return Err(ConfigError::Invalid(format!(
                "filter.noise.meas_deg has {} entries for {} references",
                tuning.sigma_meas.len(),
                scenario.refs.len()
            )));
        }
        if let Some(bad) = tuning
            .sigma_meas
            .iter()
            .find(|s| !(s.is_finite() && **s > 0.0))
        {
            return Err(ConfigError::Invalid(format!(
                "filter measurement sigma must be positive, got {bad} rad"
            )));
        }
        if !(tuning.sigma_v >= 0.0 && tuning.sigma_u >= 0.0) {
            return Err(ConfigError::Invalid(
                "filter noise densities must be non-negative".into(),
            ));
        }
        let options = FilterOptions {
            tuning,
            covariance_reset: self.filter.covariance_mod.into(),
            mekf_attitude_reset: self.filter.mekf_attitude_reset,
        };
        Ok((scenario, options))
    }
}
