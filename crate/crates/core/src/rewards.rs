//! Per-agent reward: weighted state terms plus contact indicators and a
//! proximity penalty.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::dynamics::RigidState;
use crate::interactions::{ContactEvent, ContactKind};

/// Weights for every reward component. Penalties are negative by convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardCoeffs {
    pub pos: f64,
    pub vel: f64,
    pub ori: f64,
    pub spin: f64,
    pub act: f64,
    pub delta_act: f64,
    pub rot: f64,
    pub yaw: f64,
    pub floor_hit: f64,
    pub floor_rest: f64,
    pub wall: f64,
    pub ceiling: f64,
    pub quad_collision: f64,
    pub proximity: f64,
    /// Distance below which the proximity term is active, m.
    pub proximity_range: f64,
}

impl RewardCoeffs {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [
            self.pos,
            self.vel,
            self.ori,
            self.spin,
            self.act,
            self.delta_act,
            self.rot,
            self.yaw,
            self.floor_hit,
            self.floor_rest,
            self.wall,
            self.ceiling,
            self.quad_collision,
            self.proximity,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::invalid("rewards", "coefficients must be finite"));
        }
        if !(self.proximity_range > 0.0 && self.proximity_range.is_finite()) {
            return Err(ConfigError::invalid("rewards.proximity_range", "must be > 0"));
        }
        Ok(())
    }
}

pub const COMPONENT_NAMES: [&str; 14] = [
    "pos",
    "vel",
    "ori",
    "spin",
    "act",
    "delta_act",
    "rot",
    "yaw",
    "floor_hit",
    "floor_rest",
    "wall",
    "ceiling",
    "quad_collision",
    "proximity",
];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardBreakdown {
    pub pos: f64,
    pub vel: f64,
    pub ori: f64,
    pub spin: f64,
    pub act: f64,
    pub delta_act: f64,
    pub rot: f64,
    pub yaw: f64,
    pub floor_hit: f64,
    pub floor_rest: f64,
    pub wall: f64,
    pub ceiling: f64,
    pub quad_collision: f64,
    pub proximity: f64,
    /// Sum of every component above, in declaration order.
    pub total: f64,
}

impl RewardBreakdown {
    pub fn components(&self) -> [f64; 14] {
        [
            self.pos,
            self.vel,
            self.ori,
            self.spin,
            self.act,
            self.delta_act,
            self.rot,
            self.yaw,
            self.floor_hit,
            self.floor_rest,
            self.wall,
            self.ceiling,
            self.quad_collision,
            self.proximity,
        ]
    }

    fn with_total(mut self) -> Self {
        self.total = self.components().iter().sum();
        self
    }

    /// Own-state terms from `state`, contact and proximity terms from `interaction`.
    pub fn merge(state: &Self, interaction: &Self) -> Self {
        Self {
            floor_hit: interaction.floor_hit,
            floor_rest: interaction.floor_rest,
            wall: interaction.wall,
            ceiling: interaction.ceiling,
            quad_collision: interaction.quad_collision,
            proximity: interaction.proximity,
            ..*state
        }
        .with_total()
    }
}

fn norm4(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Terms that depend only on the vehicle's own state and thrusts.
pub fn state_reward(
    state: &RigidState,
    goal: &Vector3<f64>,
    thrust: &[f64; 4],
    prev_thrust: &[f64; 4],
    c: &RewardCoeffs,
) -> RewardBreakdown {
    let r = &state.rotation;
    let mut delta = [0.0; 4];
    for i in 0..4 {
        delta[i] = thrust[i] - prev_thrust[i];
    }
    RewardBreakdown {
        pos: c.pos * (goal - state.position).norm(),
        vel: c.vel * state.velocity.norm(),
        ori: c.ori * r[(2, 2)],
        spin: c.spin * state.angular_velocity.norm(),
        act: c.act * norm4(thrust),
        delta_act: c.delta_act * norm4(&delta),
        rot: c.rot * (r.trace() - 1.0) / 2.0,
        yaw: c.yaw * r[(0, 0)],
        ..Default::default()
    }
    .with_total()
}

/// Contact indicators and proximity shaping for one agent.
///
/// `events` are this agent's contacts over one control step. Repeats of the
/// same contact (same kind and partner) across substeps count once.
/// `neighbor_distances` holds the distance to every other agent; each one
/// closer than `proximity_range` adds `proximity * (1 - d / range)`.
pub fn interaction_reward(
    events: &[ContactEvent],
    neighbor_distances: &[f64],
    c: &RewardCoeffs,
) -> RewardBreakdown {
    let mut seen: Vec<(ContactKind, usize, Option<usize>)> = Vec::with_capacity(events.len());
    let mut out = RewardBreakdown::default();
    for e in events {
        let key = (e.kind, e.agent, e.other);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        match e.kind {
            ContactKind::QuadQuad => out.quad_collision += c.quad_collision,
            ContactKind::Wall => out.wall += c.wall,
            ContactKind::Ceiling => out.ceiling += c.ceiling,
            ContactKind::GroundHit => out.floor_hit += c.floor_hit,
            ContactKind::GroundRest => out.floor_rest += c.floor_rest,
        }
    }
    out.proximity = neighbor_distances
        .iter()
        .map(|&d| (1.0 - d / c.proximity_range).max(0.0))
        .sum::<f64>()
        * c.proximity;
    out.with_total()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SwarmEnvConfig;
    use crate::so3;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn coeffs() -> RewardCoeffs {
        SwarmEnvConfig::default().rewards
    }

    #[test]
    fn identity_state() {
        let c = coeffs();
        let s = RigidState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let r = state_reward(&s, &s.position, &[0.0; 4], &[0.0; 4], &c);
        assert_eq!(r.pos, 0.0);
        assert_eq!(r.vel, 0.0);
        assert_eq!(r.spin, 0.0);
        assert_eq!(r.act, 0.0);
        assert_eq!(r.delta_act, 0.0);
        assert_eq!(r.ori, c.ori);
        assert_eq!(r.rot, c.rot);
        assert_eq!(r.yaw, c.yaw);
    }

    #[test]
    fn distance_is_linear() {
        let mut c = coeffs();
        c.pos = -1.0;
        let s = RigidState::at_rest(Vector3::zeros());
        let r = state_reward(&s, &Vector3::new(0.0, 2.0, 0.0), &[0.0; 4], &[0.0; 4], &c);
        assert_eq!(r.pos, -2.0);
    }

    #[test]
    fn upside_down() {
        let mut c = coeffs();
        c.ori = 1.5;
        c.rot = 0.7;
        let mut s = RigidState::at_rest(Vector3::zeros());
        s.rotation = so3::exp(&Vector3::new(PI, 0.0, 0.0));
        let r = state_reward(&s, &Vector3::zeros(), &[0.0; 4], &[0.0; 4], &c);
        assert!((r.ori + 1.5).abs() < 1e-15);
        assert!((r.rot + 0.7).abs() < 1e-15);
    }

    #[test]
    fn interaction_examples() {
        let mut c = coeffs();
        assert_eq!(interaction_reward(&[], &[100.0, 50.0], &c).total, 0.0);
        c.quad_collision = -5.0;
        let e = [ContactEvent::pair(0, 1, 3)];
        assert_eq!(interaction_reward(&e, &[], &c).total, -5.0);
        c.proximity = -1.0;
        let r = interaction_reward(&[], &[c.proximity_range / 2.0], &c);
        assert_eq!(r.proximity, -0.5);
    }

    #[test]
    fn repeated_substep_contacts_count_once() {
        let mut c = coeffs();
        c.quad_collision = -5.0;
        c.wall = -1.0;
        let e = [
            ContactEvent::pair(0, 1, 0),
            ContactEvent::pair(0, 1, 1),
            ContactEvent::pair(0, 2, 1),
            ContactEvent::single(ContactKind::Wall, 0, 0),
            ContactEvent::single(ContactKind::Wall, 0, 1),
        ];
        let r = interaction_reward(&e, &[], &c);
        assert_eq!(r.quad_collision, -10.0);
        assert_eq!(r.wall, -1.0);
    }

    #[test]
    fn proximity_is_continuous_at_range() {
        let c = coeffs();
        let at = interaction_reward(&[], &[c.proximity_range], &c).proximity;
        let just_inside = interaction_reward(&[], &[c.proximity_range * (1.0 - 1e-9)], &c).proximity;
        assert_eq!(at, 0.0);
        assert!(just_inside.abs() < 1e-8);
    }

    fn random_state() -> impl Strategy<Value = (RigidState, Vector3<f64>, [f64; 4], [f64; 4])> {
        (
            prop::array::uniform3(0.0f64..10.0),
            prop::array::uniform3(-5.0f64..5.0),
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-20.0f64..20.0),
            prop::array::uniform3(0.0f64..10.0),
            prop::array::uniform4(0.0f64..0.15),
            prop::array::uniform4(0.0f64..0.15),
        )
            .prop_map(|(x, v, phi, w, g, f, fp)| {
                let s = RigidState {
                    position: x.into(),
                    velocity: v.into(),
                    rotation: so3::exp(&phi.into()),
                    angular_velocity: w.into(),
                };
                (s, Vector3::from(g), f, fp)
            })
    }

    fn state_weight(c: &mut RewardCoeffs, i: usize) -> &mut f64 {
        match i {
            0 => &mut c.pos,
            1 => &mut c.vel,
            2 => &mut c.ori,
            3 => &mut c.spin,
            4 => &mut c.act,
            5 => &mut c.delta_act,
            6 => &mut c.rot,
            _ => &mut c.yaw,
        }
    }

    proptest! {
        #[test]
        fn linear_in_each_coefficient((s, g, f, fp) in random_state(), scale in -3.0f64..3.0, which in 0usize..8) {
            let mut base = coeffs();
            // every state weight nonzero so scaling is visible
            base.vel = 0.3;
            base.delta_act = -0.2;
            base.rot = 0.4;
            base.yaw = 0.1;
            let mut scaled = base.clone();
            *state_weight(&mut scaled, which) *= scale;
            let r0 = state_reward(&s, &g, &f, &fp, &base).components();
            let r1 = state_reward(&s, &g, &f, &fp, &scaled).components();
            for i in 0..8 {
                if i == which {
                    prop_assert!((r1[i] - scale * r0[i]).abs() <= 1e-12 * (1.0 + r0[i].abs()));
                } else {
                    prop_assert_eq!(r1[i], r0[i]);
                }
            }
        }

        #[test]
        fn breakdown_sums_to_total((s, g, f, fp) in random_state(), d in prop::collection::vec(0.0f64..1.0, 0..8)) {
            let c = coeffs();
            let st = state_reward(&s, &g, &f, &fp, &c);
            let it = interaction_reward(&[ContactEvent::pair(0, 1, 0)], &d, &c);
            let all = RewardBreakdown::merge(&st, &it);
            let sum: f64 = all.components().iter().sum();
            prop_assert!((sum - all.total).abs() <= 1e-12);
        }

        #[test]
        fn zero_weight_removes_dependence((s, g, f, fp) in random_state(), dx in -1.0f64..1.0) {
            let mut c = coeffs();
            c.pos = 0.0;
            let r0 = state_reward(&s, &g, &f, &fp, &c);
            let r1 = state_reward(&s, &(g + Vector3::new(dx, 0.0, 0.0)), &f, &fp, &c);
            prop_assert_eq!(r0.total, r1.total);
            c.spin = 0.0;
            let mut s2 = s;
            s2.angular_velocity *= 3.0;
            prop_assert_eq!(state_reward(&s, &g, &f, &fp, &c).total, state_reward(&s2, &g, &f, &fp, &c).total);
        }
    }
}
