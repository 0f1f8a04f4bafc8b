//! The unified configuration file.
//!
//! One TOML document with a section per subsystem. Keys are the field names
//! of the corresponding parameter structs, all in SI units. The shipped
//! defaults live in `config/default.toml` and are embedded at compile time.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{QuadrotorParams, QuadrotorRandomization};
use crate::interactions::{CollisionParams, DownwashParams, Room};
use crate::rewards::RewardCoeffs;
use crate::scenarios::ScenarioSpec;
use crate::sensing::SensorNoiseParams;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("failed to parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to read configuration file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    pub n_agents: usize,
    /// Policy rate, Hz.
    pub control_freq: u32,
    /// Physics rate, Hz. Must be a multiple of `control_freq`.
    pub sim_freq: u32,
    /// Episode length, s.
    pub episode_duration: f64,
    /// Number of nearest neighbors in each observation (K).
    pub neighbors: usize,
    pub master_seed: u64,
    /// End the episode on the first floor impact. Off by default: agents can
    /// take off again from the floor.
    pub terminate_on_crash: bool,
}

/// Switches for each noise source and interaction model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toggles {
    pub motor_lag: bool,
    pub motor_noise: bool,
    pub quad_collisions: bool,
    pub collision_noise: bool,
    pub room_collisions: bool,
    pub ground: bool,
    pub downwash: bool,
    pub downwash_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnParams {
    /// Initial yaw is uniform in `[-yaw_range, yaw_range]`, rad.
    pub yaw_range: f64,
    /// Rejection-sampling budget per agent before reset gives up.
    pub max_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmEnvConfig {
    pub env: EnvParams,
    pub toggles: Toggles,
    pub room: Room,
    pub spawn: SpawnParams,
    pub quadrotor: QuadrotorParams,
    #[serde(default)]
    pub randomization: QuadrotorRandomization,
    pub collision: CollisionParams,
    pub downwash: DownwashParams,
    pub sensor_noise: SensorNoiseParams,
    pub rewards: RewardCoeffs,
    pub scenario: ScenarioSpec,
}

impl Default for SwarmEnvConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("embedded default config is valid")
    }
}

impl SwarmEnvConfig {
    /// Parses and validates a configuration document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SwarmEnvConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Physics substeps per control step.
    pub fn substeps(&self) -> u32 {
        self.env.sim_freq / self.env.control_freq
    }

    pub fn sim_dt(&self) -> f64 {
        1.0 / self.env.sim_freq as f64
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.env.control_freq as f64
    }

    /// Control steps per episode.
    pub fn episode_steps(&self) -> u64 {
        (self.env.episode_duration * self.env.control_freq as f64).round() as u64
    }

    /// Length of one agent's flat observation, `18 + 6K`.
    pub fn obs_len(&self) -> usize {
        crate::sensing::flat_len(self.env.neighbors)
    }

    /// Turns off every stochastic source: motor, collision, downwash and
    /// sensor noise.
    pub fn disable_noise(&mut self) {
        self.toggles.motor_noise = false;
        self.toggles.collision_noise = false;
        self.toggles.downwash_noise = false;
        self.sensor_noise.enabled = false;
    }

    /// Turns off agent-agent interactions (collisions and downwash). Room
    /// walls and the floor stay active.
    pub fn disable_collisions(&mut self) {
        self.toggles.quad_collisions = false;
        self.toggles.downwash = false;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.env;
        if e.n_agents == 0 {
            return Err(ConfigError::invalid("env.n_agents", "must be >= 1"));
        }
        if e.control_freq == 0 || e.sim_freq == 0 {
            return Err(ConfigError::invalid("env.sim_freq", "frequencies must be > 0"));
        }
        if !e.sim_freq.is_multiple_of(e.control_freq) {
            return Err(ConfigError::invalid(
                "env.sim_freq",
                format!(
                    "must be an integer multiple of control_freq ({} vs {})",
                    e.sim_freq, e.control_freq
                ),
            ));
        }
        let steps = e.episode_duration * e.control_freq as f64;
        if !(e.episode_duration > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(ConfigError::invalid(
                "env.episode_duration",
                "episode_duration * control_freq must be a positive integer",
            ));
        }
        if e.neighbors > e.n_agents - 1 {
            return Err(ConfigError::invalid(
                "env.neighbors",
                format!(
                    "K = {} exceeds n_agents - 1 = {}",
                    e.neighbors,
                    e.n_agents - 1
                ),
            ));
        }
        if !(self.spawn.yaw_range >= 0.0 && self.spawn.yaw_range.is_finite()) {
            return Err(ConfigError::invalid("spawn.yaw_range", "must be finite and >= 0"));
        }
        if self.spawn.max_attempts == 0 {
            return Err(ConfigError::invalid("spawn.max_attempts", "must be >= 1"));
        }
        self.room.validate()?;
        self.quadrotor.validate()?;
        self.randomization.validate(&self.quadrotor)?;
        // Lag filter must be discretizable at the physics rate for every
        // randomized settling time.
        let lo = self.randomization.motor_settling_time.map_or(1.0, |r| r[0]);
        if self.quadrotor.motor_settling_time * lo <= self.sim_dt() {
            return Err(ConfigError::invalid(
                "quadrotor.motor_settling_time",
                "must exceed the physics timestep",
            ));
        }
        self.collision.validate(&self.room)?;
        self.downwash.validate()?;
        self.sensor_noise.validate()?;
        self.rewards.validate()?;
        self.scenario
            .validate(&self.room, e.n_agents, e.episode_duration)?;
        Ok(())
    }
}
