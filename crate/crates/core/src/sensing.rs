//! Per-agent observations.
//!
//! Layout of the flat vector: goal delta (3), velocity (3), rotation
//! row-major (9), body rates (3), then K blocks of neighbor relative
//! position (3) and relative velocity (3), nearest first.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::dynamics::RigidState;

/// Flat observation length for `k` neighbors.
pub const fn flat_len(k: usize) -> usize {
    18 + 6 * k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoiseParams {
    pub enabled: bool,
    /// Position noise is uniform on `[-pos_bound, pos_bound]`, m.
    pub pos_bound: f64,
    /// Velocity noise is uniform on `[-vel_bound, vel_bound]`, m/s.
    pub vel_bound: f64,
    /// Std of the Gaussian body-rate noise, rad/s.
    pub omega_std: f64,
}

impl SensorNoiseParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if ![self.pos_bound, self.vel_bound, self.omega_std]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
        {
            return Err(ConfigError::invalid("sensor_noise", "bounds must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborObs {
    pub index: usize,
    pub rel_position: Vector3<f64>,
    pub rel_velocity: Vector3<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observation {
    pub goal_delta: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub neighbors: Vec<NeighborObs>,
}

impl Observation {
    pub fn len(&self) -> usize {
        flat_len(self.neighbors.len())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Appends the flat encoding to `out`.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.goal_delta.as_slice());
        out.extend_from_slice(self.velocity.as_slice());
        for r in 0..3 {
            for c in 0..3 {
                out.push(self.rotation[(r, c)]);
            }
        }
        out.extend_from_slice(self.angular_velocity.as_slice());
        for n in &self.neighbors {
            out.extend_from_slice(n.rel_position.as_slice());
            out.extend_from_slice(n.rel_velocity.as_slice());
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.write_flat(&mut v);
        v
    }
}

/// Indices of the `k` agents closest to `agent`, nearest first, ties broken
/// by lower index. Returns `None` if fewer than `k` other agents exist.
pub fn k_nearest(agent: usize, positions: &[Vector3<f64>], k: usize) -> Option<Vec<usize>> {
    let mut scratch = Vec::new();
    let mut out = Vec::new();
    k_nearest_into(agent, positions, k, &mut scratch, &mut out).then_some(out)
}

const SMALL_K: usize = 8;

/// Allocation-free form of [`k_nearest`]; returns false if `k` is too large.
pub fn k_nearest_into(
    agent: usize,
    positions: &[Vector3<f64>],
    k: usize,
    scratch: &mut Vec<(f64, usize)>,
    out: &mut Vec<usize>,
) -> bool {
    out.clear();
    if k + 1 > positions.len() {
        return false;
    }
    if k == 0 {
        return true;
    }
    let me = positions[agent];
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    scratch.clear();
    scratch.extend(
        positions
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != agent)
            .map(|(j, p)| ((p - me).norm_squared(), j)),
    );
    if k <= SMALL_K {
        // Partial selection sort: k passes, cheaper than a full select for small k.
        for t in 0..k {
            let mut best = t;
            for c in t + 1..scratch.len() {
                if cmp(&scratch[c], &scratch[best]).is_lt() {
                    best = c;
                }
            }
            scratch.swap(t, best);
        }
        scratch.truncate(k);
    } else {
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, cmp);
            scratch.truncate(k);
        }
        scratch.sort_unstable_by(cmp);
    }
    out.extend(scratch.iter().map(|&(_, j)| j));
    true
}

/// Noise-free observation of `me` given its goal and its neighbors
/// (already sorted nearest first).
pub fn build_observation(
    me: &RigidState,
    goal: &Vector3<f64>,
    neighbors: &[(usize, &RigidState)],
) -> Observation {
    let mut obs = Observation::default();
    fill_observation(me, goal, neighbors.iter().copied(), &mut obs);
    obs
}

/// [`build_observation`] into an existing observation, reusing its
/// neighbor storage.
pub fn fill_observation<'a>(
    me: &RigidState,
    goal: &Vector3<f64>,
    neighbors: impl IntoIterator<Item = (usize, &'a RigidState)>,
    out: &mut Observation,
) {
    out.goal_delta = goal - me.position;
    out.velocity = me.velocity;
    out.rotation = me.rotation;
    out.angular_velocity = me.angular_velocity;
    out.neighbors.clear();
    out.neighbors.extend(neighbors.into_iter().map(|(index, other)| NeighborObs {
        index,
        rel_position: other.position - me.position,
        rel_velocity: other.velocity - me.velocity,
    }));
}

fn uniform3<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Vector3<f64> {
    if bound == 0.0 {
        return Vector3::zeros();
    }
    Vector3::from_fn(|_, _| bound * (2.0 * rng.random::<f64>() - 1.0))
}

/// Adds sensor noise in place: uniform on position-like and velocity-like
/// entries, Gaussian on body rates. Rotation entries are left exact.
pub fn apply_sensor_noise<R: Rng + ?Sized>(obs: &mut Observation, params: &SensorNoiseParams, rng: &mut R) {
    if !params.enabled {
        return;
    }
    obs.goal_delta += uniform3(rng, params.pos_bound);
    obs.velocity += uniform3(rng, params.vel_bound);
    if params.omega_std > 0.0 {
        for w in obs.angular_velocity.iter_mut() {
            *w += params.omega_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    for n in &mut obs.neighbors {
        n.rel_position += uniform3(rng, params.pos_bound);
        n.rel_velocity += uniform3(rng, params.vel_bound);
    }
}
