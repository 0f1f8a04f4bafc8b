//! The multi-agent episodic environment.
//!
//! `step` holds each agent's action for `sim_freq / control_freq` physics
//! substeps. Every substep runs the motor pipeline, downwash, integration,
//! quad-quad collisions, walls and ceiling, and the floor, in that order.
//! Contact events from all substeps are merged before rewards are computed.

use std::time::{Duration, Instant};

use nalgebra::Vector3;
use thiserror::Error;

use crate::config::{ConfigError, SwarmEnvConfig};
use crate::dynamics::{
    self, BodyWrench, DynamicsError, MotorState, QuadrotorParams, RigidState, GRAVITY,
};
use crate::interactions::{
    self, CollisionParams, ContactEvent, ContactKind, DownwashParams, SurfacePlane,
};
use crate::rewards::{self, RewardBreakdown};
use crate::rng::{EnvRng, SeedKey, Stream};
use crate::scenarios::Scenario;
use crate::sensing::{self, Observation};
use crate::so3;
use rand::Rng;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("action for agent {agent} is not finite")]
    NonFiniteAction { agent: usize },
    #[error("simulation fault for agent {agent} at step {step}: {source}")]
    SimulationFault {
        agent: usize,
        step: u64,
        #[source]
        source: DynamicsError,
    },
    #[error("could not place agent {agent} without overlap after {attempts} attempts")]
    Spawn { agent: usize, attempts: u32 },
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("agent index {0} out of range")]
    NoSuchAgent(usize),
}

/// Per-agent diagnostics for one control step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentInfo {
    /// Distinct contacts this step, indexed like [`ContactKind::ALL`].
    pub events: [u32; 5],
    /// Overlapping pairs whose centers coincided, so no normal could be
    /// formed and the pair was left unresolved.
    pub degenerate_contacts: u32,
    pub on_ground: bool,
}

impl AgentInfo {
    pub fn count(&self, kind: ContactKind) -> u32 {
        self.events[kind as usize]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Observation>,
    pub rewards: Vec<RewardBreakdown>,
    pub done: bool,
    pub info: Vec<AgentInfo>,
}

impl StepResult {
    /// Observations concatenated in agent order.
    pub fn flat_observations(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.observations.iter().map(Observation::len).sum());
        for o in &self.observations {
            o.write_flat(&mut out);
        }
        out
    }

    pub fn reward_totals(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| r.total).collect()
    }
}

/// Wall-clock time spent in each phase of `step`, when profiling is on.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub dynamics: Duration,
    pub collisions: Duration,
    pub observations: Duration,
    pub rewards: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.dynamics + self.collisions + self.observations + self.rewards
    }

    pub fn add(&mut self, o: &PhaseTimings) {
        self.dynamics += o.dynamics;
        self.collisions += o.collisions;
        self.observations += o.observations;
        self.rewards += o.rewards;
    }
}

struct Clock(Option<Instant>);

impl Clock {
    fn start(on: bool) -> Self {
        Clock(on.then(Instant::now))
    }

    /// Adds the time since the last lap to `slot`.
    fn lap(&mut self, slot: &mut Duration) {
        if let Some(t) = self.0.as_mut() {
            let now = Instant::now();
            *slot += now - *t;
            *t = now;
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwarmEnv {
    config: SwarmEnvConfig,
    env_index: u64,
    episode_seed: u64,
    rng: EnvRng,
    /// Vehicle parameters for the current episode, after randomization.
    quad: QuadrotorParams,
    alpha_lag: f64,
    collision: CollisionParams,
    downwash: DownwashParams,
    surfaces: [SurfacePlane; 5],
    scenario: Scenario,
    states: Vec<RigidState>,
    motors: Vec<MotorState>,
    on_ground: Vec<bool>,
    thrusts: Vec<[f64; 4]>,
    step_count: u64,
    episode_steps: u64,
    finished: bool,
    profiling: bool,
    timings: PhaseTimings,
    // Scratch buffers reused across steps.
    targets: Vec<[f64; 4]>,
    wrenches: Vec<BodyWrench>,
    dw_accel: Vec<Vector3<f64>>,
    dw_ang: Vec<Vector3<f64>>,
    positions: Vec<Vector3<f64>>,
    pairs: Vec<(usize, usize)>,
    events: Vec<ContactEvent>,
    degenerate: Vec<u32>,
    knn_scratch: Vec<(f64, usize)>,
    knn: Vec<usize>,
    distances: Vec<f64>,
    agent_events: Vec<ContactEvent>,
}

impl SwarmEnv {
    /// Builds an environment and resets it to episode 0.
    pub fn new(config: SwarmEnvConfig, env_index: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let n = config.env.n_agents;
        let scenario = Scenario::new(config.scenario.clone(), config.room.clone(), n)?;
        let collision = if config.toggles.collision_noise {
            config.collision.clone()
        } else {
            config.collision.without_noise()
        };
        let downwash = if config.toggles.downwash_noise {
            config.downwash.clone()
        } else {
            config.downwash.without_noise()
        };
        let key = SeedKey::new(config.env.master_seed, env_index, 0);
        let mut env = Self {
            env_index,
            episode_seed: 0,
            rng: EnvRng::new(key),
            quad: config.quadrotor.clone(),
            alpha_lag: 1.0,
            collision,
            downwash,
            surfaces: interactions::room_surfaces(&config.room),
            scenario,
            states: vec![RigidState::at_rest(Vector3::zeros()); n],
            motors: vec![MotorState::default(); n],
            on_ground: vec![false; n],
            thrusts: vec![[0.0; 4]; n],
            step_count: 0,
            episode_steps: config.episode_steps(),
            finished: false,
            profiling: false,
            timings: PhaseTimings::default(),
            targets: vec![[0.0; 4]; n],
            wrenches: Vec::with_capacity(n),
            dw_accel: vec![Vector3::zeros(); n],
            dw_ang: vec![Vector3::zeros(); n],
            positions: Vec::with_capacity(n),
            pairs: Vec::new(),
            events: Vec::new(),
            degenerate: vec![0; n],
            knn_scratch: Vec::with_capacity(n),
            knn: Vec::with_capacity(config.env.neighbors),
            distances: Vec::with_capacity(n),
            agent_events: Vec::new(),
            config,
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn config(&self) -> &SwarmEnvConfig {
        &self.config
    }

    pub fn n_agents(&self) -> usize {
        self.config.env.n_agents
    }

    pub fn obs_len(&self) -> usize {
        self.config.obs_len()
    }

    pub fn env_index(&self) -> u64 {
        self.env_index
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn episode_steps(&self) -> u64 {
        self.episode_steps
    }

    /// Simulated seconds since reset.
    pub fn elapsed(&self) -> f64 {
        self.step_count as f64 * self.config.control_dt()
    }

    pub fn quad_params(&self) -> &QuadrotorParams {
        &self.quad
    }

    pub fn states(&self) -> &[RigidState] {
        &self.states
    }

    pub fn motors(&self) -> &[MotorState] {
        &self.motors
    }

    pub fn goals(&self) -> &[Vector3<f64>] {
        self.scenario.goals()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Raw action that holds a level vehicle in place, for every rotor.
    pub fn hover_action(&self) -> [f64; 4] {
        [self.quad.hover_action(); 4]
    }

    /// Overwrites one agent's rigid-body state. Its floor contact flag is
    /// cleared.
    pub fn set_agent_state(&mut self, agent: usize, state: RigidState) -> Result<(), EnvError> {
        *self.states.get_mut(agent).ok_or(EnvError::NoSuchAgent(agent))? = state;
        self.on_ground[agent] = false;
        Ok(())
    }

    pub fn set_motor_state(&mut self, agent: usize, motor: MotorState) -> Result<(), EnvError> {
        *self.motors.get_mut(agent).ok_or(EnvError::NoSuchAgent(agent))? = motor;
        Ok(())
    }

    /// Puts every agent's motors at the speed that balances gravity.
    pub fn set_motors_to_hover(&mut self) {
        let m = MotorState::steady(self.quad.hover_thrust(), self.quad.f_max);
        self.motors.iter_mut().for_each(|x| *x = m);
    }

    pub fn set_profiling(&mut self, on: bool) {
        self.profiling = on;
    }

    pub fn timings(&self) -> &PhaseTimings {
        &self.timings
    }

    pub fn reset_timings(&mut self) {
        self.timings = PhaseTimings::default();
    }

    /// Starts a new episode. Everything random about it is a function of
    /// `(master_seed, env_index, episode_seed)`.
    pub fn reset(&mut self, episode_seed: u64) -> Result<Vec<Observation>, EnvError> {
        let cfg = &self.config;
        self.episode_seed = episode_seed;
        self.rng = EnvRng::new(SeedKey::new(cfg.env.master_seed, self.env_index, episode_seed));

        self.quad = if cfg.randomization.is_empty() {
            cfg.quadrotor.clone()
        } else {
            cfg.randomization
                .sample(&cfg.quadrotor, self.rng.get(Stream::DomainRandomization))
        };
        self.alpha_lag = dynamics::derive_lag_coefficient(self.quad.motor_settling_time, cfg.sim_dt())
            .map_err(|e| ConfigError::invalid("quadrotor.motor_settling_time", e.to_string()))?;

        self.scenario.reset(self.rng.get(Stream::Scenario));
        self.spawn()?;
        self.motors.iter_mut().for_each(|m| *m = MotorState::default());
        self.on_ground.iter_mut().for_each(|g| *g = false);
        self.thrusts.iter_mut().for_each(|t| *t = [0.0; 4]);
        self.step_count = 0;
        self.finished = false;
        Ok(self.observe())
    }

    /// Uniform positions in the lower half of the room, at least two radii
    /// apart, level with a small random yaw, at rest.
    fn spawn(&mut self) -> Result<(), EnvError> {
        let cfg = &self.config;
        let r = cfg.collision.quad_radius;
        let [x, y, z] = cfg.room.extent;
        let gz = cfg.room.ground_z;
        let lo = Vector3::new(r, r, gz + r);
        let hi = Vector3::new(x - r, y - r, (gz + (z - gz) / 2.0).max(gz + r));
        let rng = self.rng.get(Stream::Spawn);
        let min_sq = 4.0 * r * r;
        for i in 0..self.states.len() {
            let mut placed = None;
            for _ in 0..cfg.spawn.max_attempts {
                let p = Vector3::from_fn(|k, _| {
                    if hi[k] > lo[k] {
                        rng.random_range(lo[k]..=hi[k])
                    } else {
                        lo[k]
                    }
                });
                if self.states[..i].iter().all(|s| (s.position - p).norm_squared() >= min_sq) {
                    placed = Some(p);
                    break;
                }
            }
            let p = placed.ok_or(EnvError::Spawn {
                agent: i,
                attempts: cfg.spawn.max_attempts,
            })?;
            let yaw = if cfg.spawn.yaw_range > 0.0 {
                rng.random_range(-cfg.spawn.yaw_range..=cfg.spawn.yaw_range)
            } else {
                0.0
            };
            let mut s = RigidState::at_rest(p);
            s.rotation = so3::rot_z(yaw);
            self.states[i] = s;
        }
        Ok(())
    }

    /// Advances one control step.
    ///
    /// Invalid actions are rejected before any state changes.
    pub fn step(&mut self, actions: &[[f64; 4]]) -> Result<StepResult, EnvError> {
        let mut out = StepResult::default();
        self.step_into(actions, &mut out)?;
        Ok(out)
    }

    /// [`step`](Self::step) writing into `out`, reusing its allocations.
    /// On error `out` is left unspecified.
    pub fn step_into(&mut self, actions: &[[f64; 4]], out: &mut StepResult) -> Result<(), EnvError> {
        let n = self.n_agents();
        if self.finished {
            return Err(EnvError::EpisodeOver);
        }
        if actions.len() != n {
            return Err(EnvError::ActionCount {
                expected: n,
                got: actions.len(),
            });
        }
        for (i, a) in actions.iter().enumerate() {
            if a.iter().any(|x| !x.is_finite()) {
                return Err(EnvError::NonFiniteAction { agent: i });
            }
        }
        for (i, a) in actions.iter().enumerate() {
            let f_hat = dynamics::clip_action(a).map_err(|_| EnvError::NonFiniteAction { agent: i })?;
            self.targets[i] = f_hat.map(f64::sqrt);
        }

        let mut clock = Clock::start(self.profiling);
        let mut timings = PhaseTimings::default();
        self.events.clear();
        self.degenerate.iter_mut().for_each(|d| *d = 0);
        for _ in 0..self.config.substeps() {
            self.substep(&mut clock, &mut timings)?;
        }

        let step = self.step_count;
        self.step_count += 1;
        let elapsed = self.elapsed();
        self.scenario.step(elapsed, self.rng.get(Stream::Scenario));

        self.observe_into(&mut out.observations);
        clock.lap(&mut timings.observations);

        self.score_into(step, &mut out.rewards, &mut out.info);
        for (m, t) in self.motors.iter_mut().zip(&self.thrusts) {
            m.prev_thrust = *t;
        }
        clock.lap(&mut timings.rewards);

        let crashed = self.config.env.terminate_on_crash
            && out.info.iter().any(|i| i.count(ContactKind::GroundHit) > 0);
        out.done = self.step_count >= self.episode_steps || crashed;
        self.finished = out.done;
        self.timings.add(&timings);
        Ok(())
    }

    fn fault(&self, agent: usize, source: DynamicsError) -> EnvError {
        EnvError::SimulationFault {
            agent,
            step: self.step_count,
            source,
        }
    }

    fn substep(&mut self, clock: &mut Clock, timings: &mut PhaseTimings) -> Result<(), EnvError> {
        let n = self.n_agents();
        let dt = self.config.sim_dt();
        let toggles = self.config.toggles.clone();
        let step = self.step_count;

        // Motors.
        self.wrenches.clear();
        for i in 0..n {
            let m = &mut self.motors[i];
            m.filtered_speed = if toggles.motor_lag {
                dynamics::motor_lag_step(&self.targets[i], &m.filtered_speed, self.alpha_lag)
                    .map_err(|e| EnvError::SimulationFault { agent: i, step, source: e })?
            } else {
                self.targets[i]
            };
            if toggles.motor_noise {
                m.noise = dynamics::motor_noise_step(&m.noise, &self.quad, self.rng.get(Stream::MotorNoise));
            }
            self.thrusts[i] = dynamics::thrust_from_motors(&m.filtered_speed, &m.noise, self.quad.f_max);
            self.wrenches.push(dynamics::mix_wrench(&self.thrusts[i], &self.quad));
        }

        // Downwash from every agent above onto every agent below.
        self.dw_accel.iter_mut().for_each(|a| *a = Vector3::zeros());
        self.dw_ang.iter_mut().for_each(|a| *a = Vector3::zeros());
        if toggles.downwash {
            let rng = self.rng.get(Stream::Downwash);
            let r_sq = self.downwash.xy_radius * self.downwash.xy_radius;
            for i in 0..n {
                for j in i + 1..n {
                    let d = self.states[j].position - self.states[i].position;
                    if d.z == 0.0 || d.z.abs() >= self.downwash.z_range || d.x * d.x + d.y * d.y >= r_sq {
                        continue;
                    }
                    let (low, high) = if d.z > 0.0 { (i, j) } else { (j, i) };
                    let (a, w) =
                        interactions::apply_downwash(&self.states[low], &self.states[high], &self.downwash, rng);
                    self.dw_accel[low] += a;
                    self.dw_ang[low] += w;
                }
            }
        }

        // Integration, or friction-limited sliding for grounded agents that
        // cannot lift off.
        let weight = self.quad.mass * GRAVITY;
        for i in 0..n {
            let s = self.states[i];
            if self.on_ground[i] {
                let lift = self.thrusts[i].iter().sum::<f64>() * s.rotation[(2, 2)];
                if lift < weight {
                    let contact = interactions::ground_contact(
                        &s,
                        &self.thrusts[i],
                        true,
                        &self.config.room,
                        &self.collision,
                        &self.quad,
                    );
                    self.states[i] = interactions::ground_slide(&contact.state, &contact.planar_force, self.quad.mass, dt);
                    self.events.push(ContactEvent::single(ContactKind::GroundRest, i, step));
                    continue;
                }
                self.on_ground[i] = false;
            }
            self.states[i] = dynamics::integrate_step_disturbed(
                &s,
                &self.wrenches[i],
                &self.quad,
                dt,
                &self.dw_accel[i],
                &self.dw_ang[i],
            )
            .map_err(|e| self.fault(i, e))?;
        }
        clock.lap(&mut timings.dynamics);

        let radius = self.collision.quad_radius;
        if toggles.quad_collisions && n > 1 {
            self.positions.clear();
            self.positions.extend(self.states.iter().map(|s| s.position));
            interactions::detect_quad_pairs_into(&self.positions, radius, &mut self.pairs);
            for &(i, j) in &self.pairs {
                self.events.push(ContactEvent::pair(i, j, step));
                let (a, b) = (&self.states[i], &self.states[j]);
                let closing = (a.velocity - b.velocity).dot(&(a.position - b.position)) < 0.0;
                if !closing {
                    continue;
                }
                match interactions::resolve_quad_quad(a, b, &self.collision, self.rng.get(Stream::CollisionNoise)) {
                    Ok((na, nb)) => {
                        self.states[i] = na;
                        self.states[j] = nb;
                        // A knock can lift a grounded agent.
                        self.on_ground[i] = false;
                        self.on_ground[j] = false;
                    }
                    Err(_) => {
                        self.degenerate[i] += 1;
                        self.degenerate[j] += 1;
                    }
                }
            }
        }

        if toggles.room_collisions {
            for i in 0..n {
                for surface in &self.surfaces {
                    if surface.signed_distance(&self.states[i].position) < radius {
                        self.states[i] = interactions::resolve_surface(
                            &self.states[i],
                            surface,
                            radius,
                            &self.collision,
                            self.rng.get(Stream::CollisionNoise),
                        );
                        self.events.push(ContactEvent::single(surface.kind, i, step));
                    }
                }
            }
        }

        if toggles.ground {
            let floor = self.config.room.ground_z + radius;
            for i in 0..n {
                if self.on_ground[i] {
                    // Keep resting agents exactly on the floor.
                    self.states[i].position.z = floor;
                    continue;
                }
                if self.states[i].position.z < floor {
                    let contact = interactions::ground_contact(
                        &self.states[i],
                        &self.thrusts[i],
                        false,
                        &self.config.room,
                        &self.collision,
                        &self.quad,
                    );
                    self.states[i] = contact.state;
                    self.on_ground[i] = true;
                    self.events.push(ContactEvent::single(ContactKind::GroundHit, i, step));
                }
            }
        }

        for (i, s) in self.states.iter().enumerate() {
            if !s.is_finite() {
                return Err(self.fault(i, DynamicsError::NonFiniteState));
            }
        }
        clock.lap(&mut timings.collisions);
        Ok(())
    }

    fn observe(&mut self) -> Vec<Observation> {
        let mut out = Vec::new();
        self.observe_into(&mut out);
        out
    }

    fn observe_into(&mut self, out: &mut Vec<Observation>) {
        let n = self.states.len();
        let k = self.config.env.neighbors;
        out.resize_with(n, Observation::default);
        self.positions.clear();
        self.positions.extend(self.states.iter().map(|s| s.position));
        let goals = self.scenario.goals();
        for (i, obs) in out.iter_mut().enumerate() {
            let ok = sensing::k_nearest_into(i, &self.positions, k, &mut self.knn_scratch, &mut self.knn);
            debug_assert!(ok, "K <= n - 1 is validated at construction");
            let states = &self.states;
            sensing::fill_observation(&states[i], &goals[i], self.knn.iter().map(|&j| (j, &states[j])), obs);
            sensing::apply_sensor_noise(obs, &self.config.sensor_noise, self.rng.get(Stream::SensorNoise));
        }
    }

    fn score_into(&mut self, step: u64, rewards: &mut Vec<RewardBreakdown>, infos: &mut Vec<AgentInfo>) {
        let n = self.n_agents();
        let c = &self.config.rewards;
        let goals = self.scenario.goals();
        rewards.clear();
        infos.clear();
        let range_sq = c.proximity_range * c.proximity_range;
        for i in 0..n {
            let s = &self.states[i];
            let state = rewards::state_reward(s, &goals[i], &self.thrusts[i], &self.motors[i].prev_thrust, c);

            self.agent_events.clear();
            self.agent_events.extend(self.events.iter().filter(|e| e.involves(i)).map(|e| ContactEvent {
                step,
                ..*e
            }));
            // Agents beyond the proximity range contribute exactly zero.
            self.distances.clear();
            self.distances.extend(
                self.states
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, o)| (o.position - s.position).norm_squared())
                    .filter(|&d2| d2 < range_sq)
                    .map(f64::sqrt),
            );
            let inter = rewards::interaction_reward(&self.agent_events, &self.distances, c);
            rewards.push(RewardBreakdown::merge(&state, &inter));

            let mut info = AgentInfo {
                degenerate_contacts: self.degenerate[i],
                on_ground: self.on_ground[i],
                ..Default::default()
            };
            self.agent_events.sort_unstable_by_key(|e| (e.kind, e.agent, e.other));
            self.agent_events.dedup_by_key(|e| (e.kind, e.agent, e.other));
            for e in &self.agent_events {
                info.events[e.kind as usize] += 1;
            }
            infos.push(info);
        }
    }
}
