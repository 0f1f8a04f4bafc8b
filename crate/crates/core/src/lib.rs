//! Headless, deterministic multi-quadrotor simulation for reinforcement
//! learning.
//!
//! [`SwarmEnv`] is the entry point: build it from a [`SwarmEnvConfig`], call
//! [`SwarmEnv::reset`] with an episode seed, then [`SwarmEnv::step`] with one
//! four-motor action per agent.

pub mod config;
pub mod dynamics;
pub mod environment;
pub mod interactions;
pub mod rewards;
pub mod rng;
pub mod scenarios;
pub mod sensing;
pub mod so3;

pub use config::{ConfigError, SwarmEnvConfig};
pub use dynamics::{MotorState, QuadrotorParams, RigidState};
pub use environment::{AgentInfo, EnvError, PhaseTimings, StepResult, SwarmEnv};
pub use interactions::{ContactEvent, ContactKind, Room};
pub use rewards::{RewardBreakdown, RewardCoeffs};
pub use rng::{EnvRng, SeedKey, Stream};
pub use scenarios::{ScenarioKind, ScenarioSpec, ShapeKind};
pub use sensing::Observation;
