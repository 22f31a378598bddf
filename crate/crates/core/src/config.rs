//! One TOML file carries every tunable of the simulator.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{MotorParams, SimHardware, Transmission};
use crate::flexure::FlexureGeometry;
use crate::gripper::GripperGeometry;
use crate::input::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub loop_rate_hz: f64,
    /// Flexion/extension speed ratio of the antagonistic pair, >= 1.
    pub tension_gain: f64,
    /// Device button that toggles teleoperation.
    pub enable_button: u32,
    /// Both device buttons held this long in FAULT request a reset, s.
    pub reset_hold_s: f64,
    /// Largest plausible encoder step, as a multiple of the motor's
    /// full-speed travel in one period.
    pub encoder_plausibility: f64,
    /// A commanded motor whose encoder has not moved for this long is
    /// reported as implausible, s.
    pub stall_timeout_s: f64,
    /// Speed limit registered with the drivers at start-up, in driver units.
    pub speed_limit: i32,
    /// Publish a state snapshot every this many ticks.
    pub snapshot_decimation: u32,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            loop_rate_hz: 100.0,
            tension_gain: 1.0,
            enable_button: 0,
            reset_hold_s: 2.0,
            encoder_plausibility: 1.5,
            stall_timeout_s: 0.25,
            speed_limit: 800,
            snapshot_decimation: 4,
        }
    }
}

impl ControlConfig {
    pub fn period(&self) -> f64 {
        1.0 / self.loop_rate_hz
    }
}

/// Operator console bridge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsoleConfig {
    pub bind: String,
    /// Accept `faultInject` messages in release builds too.
    pub allow_fault_inject: bool,
}

impl Default for ConsoleConfig {
    fn default() -> Self {
        ConsoleConfig {
            bind: "127.0.0.1:8765".into(),
            allow_fault_inject: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub gripper: GripperGeometryConfig,
    pub flexure: FlexureGeometry,
    pub pipeline: PipelineConfig,
    pub motor: MotorParams,
    pub transmission: Transmission,
    pub control: ControlConfig,
    pub hardware: SimHardware,
    pub console: ConsoleConfig,
}

/// Wrapper so `[gripper]` may be omitted from the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GripperGeometryConfig(pub GripperGeometry);

impl Default for GripperGeometryConfig {
    fn default() -> Self {
        GripperGeometryConfig(GripperGeometry::reference())
    }
}

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

impl SystemConfig {
    pub fn gripper(&self) -> &GripperGeometry {
        &self.gripper.0
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SystemConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let c = &self.control;
        if !(c.loop_rate_hz > 0.0 && c.loop_rate_hz.is_finite()) {
            return Err(ConfigError::Invalid("loop rate must be positive".into()));
        }
        if c.tension_gain.is_nan() || c.tension_gain < 1.0 {
            return Err(ConfigError::Invalid("tension gain must be >= 1".into()));
        }
        if c.snapshot_decimation == 0 {
            return Err(ConfigError::Invalid(
                "snapshot decimation must be >= 1".into(),
            ));
        }
        if c.enable_button >= 31 {
            return Err(ConfigError::Invalid(
                "enable button index must be below 31".into(),
            ));
        }
        let m = &self.motor;
        if !(m.omega_max > 0.0 && m.tau > 0.0 && m.ticks_per_rev > 0) {
            return Err(ConfigError::Invalid(
                "motor parameters must be positive".into(),
            ));
        }
        let t = &self.transmission;
        if ![
            t.gripper_mm_per_rev,
            t.tendon_mm_per_rev,
            t.head_deg_per_rev,
            t.shaft_deg_per_rev,
        ]
        .iter()
        .all(|&v| v > 0.0 && v.is_finite())
        {
            return Err(ConfigError::Invalid(
                "transmission ratios must be positive".into(),
            ));
        }
        Ok(())
    }
}
