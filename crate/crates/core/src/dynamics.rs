//! Single-quadrotor forward dynamics.
//!
//! The action pipeline runs `clip -> sqrt -> lag -> square + noise` to get
//! per-rotor thrusts, which are mixed into a body wrench and integrated with
//! semi-implicit Euler for translation and the exponential map for attitude.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::so3;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Gravity vector in the world frame (z up).
pub fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("action component {index} is not finite ({value})")]
    NonFiniteAction { index: usize, value: f64 },
    #[error("{what} = {value} is outside [0, 1]")]
    OutOfUnitRange { what: &'static str, value: f64 },
    #[error("motor lag needs 0 < dt < settling_time (dt = {dt}, settling_time = {settling_time})")]
    LagTiming { settling_time: f64, dt: f64 },
    #[error("integration produced a non-finite state")]
    NonFiniteState,
}

/// Vehicle constants. All SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrotorParams {
    pub mass: f64,
    /// Principal moments of inertia, kg·m².
    pub inertia_diag: [f64; 3],
    /// Rotor-center to body-center distance, m.
    pub arm_length: f64,
    /// Yaw drag coefficient κ, m (reaction torque per newton of thrust).
    pub torque_to_thrust: f64,
    pub rotor_spin_signs: [f64; 4],
    /// Maximum thrust per motor, N.
    pub f_max: f64,
    /// 2% settling time of the motor lag filter, s.
    pub motor_settling_time: f64,
    /// AR(1) decay of motor noise, in [0, 1).
    pub noise_decay: f64,
    /// Scale of the Gaussian motor-noise innovation, N.
    pub noise_scale: f64,
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, reason: &str| {
            Err(ConfigError::invalid(format!("quadrotor.{field}"), reason))
        };
        let finite = [
            self.mass,
            self.arm_length,
            self.torque_to_thrust,
            self.f_max,
            self.motor_settling_time,
            self.noise_decay,
            self.noise_scale,
        ]
        .iter()
        .chain(&self.inertia_diag)
        .chain(&self.rotor_spin_signs)
        .all(|v| v.is_finite());
        if !finite {
            return bad("*", "all vehicle constants must be finite");
        }
        if self.mass <= 0.0 {
            return bad("mass", "must be > 0");
        }
        if self.inertia_diag.iter().any(|&i| i <= 0.0) {
            return bad("inertia_diag", "all components must be > 0");
        }
        if self.arm_length <= 0.0 {
            return bad("arm_length", "must be > 0");
        }
        if self.f_max <= 0.0 {
            return bad("f_max", "must be > 0");
        }
        if self.motor_settling_time <= 0.0 {
            return bad("motor_settling_time", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.noise_decay) {
            return bad("noise_decay", "must be in [0, 1)");
        }
        if self.noise_scale < 0.0 {
            return bad("noise_scale", "must be >= 0");
        }
        let s = &self.rotor_spin_signs;
        if s.iter().any(|&v| v != 1.0 && v != -1.0) {
            return bad("rotor_spin_signs", "entries must be +1 or -1");
        }
        if s.iter().sum::<f64>() != 0.0 || s[0] != s[2] || s[1] != s[3] {
            return bad(
                "rotor_spin_signs",
                "need two CW and two CCW rotors with diagonal pairs sharing a sign",
            );
        }
        Ok(())
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia_diag))
    }

    /// Per-motor thrust that exactly balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * GRAVITY / 4.0
    }

    /// Raw action that commands [`hover_thrust`](Self::hover_thrust) on every motor.
    pub fn hover_action(&self) -> f64 {
        2.0 * self.hover_thrust() / self.f_max - 1.0
    }

    /// Rotor hub positions in the body frame, quad-X layout.
    ///
    /// Rotors 0 and 2 sit on one diagonal, 1 and 3 on the other.
    pub fn rotor_positions(&self) -> [Vector3<f64>; 4] {
        let d = self.arm_length / std::f64::consts::SQRT_2;
        [
            Vector3::new(d, -d, 0.0),
            Vector3::new(-d, -d, 0.0),
            Vector3::new(-d, d, 0.0),
            Vector3::new(d, d, 0.0),
        ]
    }
}

/// Optional per-episode multiplicative perturbations of [`QuadrotorParams`].
///
/// Each present range `[low, high]` draws one uniform factor at reset and
/// scales the matching field by it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorRandomization {
    pub mass: Option<[f64; 2]>,
    pub inertia_diag: Option<[f64; 2]>,
    pub arm_length: Option<[f64; 2]>,
    pub torque_to_thrust: Option<[f64; 2]>,
    pub f_max: Option<[f64; 2]>,
    pub motor_settling_time: Option<[f64; 2]>,
    pub noise_decay: Option<[f64; 2]>,
    pub noise_scale: Option<[f64; 2]>,
}

impl QuadrotorRandomization {
    fn ranges(&self) -> [(&'static str, Option<[f64; 2]>); 8] {
        [
            ("mass", self.mass),
            ("inertia_diag", self.inertia_diag),
            ("arm_length", self.arm_length),
            ("torque_to_thrust", self.torque_to_thrust),
            ("f_max", self.f_max),
            ("motor_settling_time", self.motor_settling_time),
            ("noise_decay", self.noise_decay),
            ("noise_scale", self.noise_scale),
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.ranges().iter().all(|(_, r)| r.is_none())
    }

    pub fn validate(&self, base: &QuadrotorParams) -> Result<(), ConfigError> {
        for (name, range) in self.ranges() {
            if let Some([lo, hi]) = range {
                if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                    return Err(ConfigError::invalid(
                        format!("randomization.{name}"),
                        "range must satisfy 0 < low <= high",
                    ));
                }
            }
        }
        if let Some([_, hi]) = self.noise_decay {
            if base.noise_decay * hi >= 1.0 {
                return Err(ConfigError::invalid(
                    "randomization.noise_decay",
                    "upper factor would push noise_decay to >= 1",
                ));
            }
        }
        Ok(())
    }

    /// Draws one factor per configured field, in declaration order.
    pub fn sample<R: Rng + ?Sized>(&self, base: &QuadrotorParams, rng: &mut R) -> QuadrotorParams {
        let mut p = base.clone();
        let mut draw = |r: Option<[f64; 2]>| match r {
            Some([lo, hi]) if hi > lo => rng.random_range(lo..=hi),
            Some([lo, _]) => lo,
            None => 1.0,
        };
        p.mass *= draw(self.mass);
        let fi = draw(self.inertia_diag);
        p.inertia_diag.iter_mut().for_each(|i| *i *= fi);
        p.arm_length *= draw(self.arm_length);
        p.torque_to_thrust *= draw(self.torque_to_thrust);
        p.f_max *= draw(self.f_max);
        p.motor_settling_time *= draw(self.motor_settling_time);
        p.noise_decay *= draw(self.noise_decay);
        p.noise_scale *= draw(self.noise_scale);
        p
    }
}

/// Position, velocity, attitude and body rates of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    /// World frame, m.
    pub position: Vector3<f64>,
    /// World frame, m/s.
    pub velocity: Vector3<f64>,
    /// Body to world.
    pub rotation: Matrix3<f64>,
    /// Body frame, rad/s.
    pub angular_velocity: Vector3<f64>,
}

impl RigidState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            rotation: Matrix3::identity(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotorState {
    /// Lag-filtered normalized rotor speed, each in [0, 1].
    pub filtered_speed: [f64; 4],
    /// Correlated additive thrust noise, N.
    pub noise: [f64; 4],
    /// Thrust applied at the previous control step, N.
    pub prev_thrust: [f64; 4],
}

impl MotorState {
    /// Motors spinning at the speed that yields `thrust` per rotor, no noise.
    pub fn steady(thrust: f64, f_max: f64) -> Self {
        let u = (thrust / f_max).clamp(0.0, 1.0).sqrt();
        Self {
            filtered_speed: [u; 4],
            noise: [0.0; 4],
            prev_thrust: [thrust; 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyWrench {
    /// Body frame; only z is ever nonzero for this vehicle.
    pub force_body: Vector3<f64>,
    /// Body frame, rotor thrust moments plus yaw drag.
    pub torque: Vector3<f64>,
}

/// Saturates each action to `[-1, 1]` and maps it affinely onto `[0, 1]`.
pub fn clip_action(a: &[f64; 4]) -> Result<[f64; 4], DynamicsError> {
    let mut out = [0.0; 4];
    for (i, (&ai, o)) in a.iter().zip(out.iter_mut()).enumerate() {
        if !ai.is_finite() {
            return Err(DynamicsError::NonFiniteAction { index: i, value: ai });
        }
        *o = 0.5 * (ai.clamp(-1.0, 1.0) + 1.0);
    }
    Ok(out)
}

/// Filter gain that brings a unit step to within 2% after `settling_time`
/// when the filter is stepped every `dt`.
pub fn derive_lag_coefficient(settling_time: f64, dt: f64) -> Result<f64, DynamicsError> {
    if !(settling_time > 0.0 && dt > 0.0 && dt < settling_time) {
        return Err(DynamicsError::LagTiming { settling_time, dt });
    }
    // 1 - (1 - a)^(T/dt) = 0.98
    Ok(-(0.02f64.ln() * dt / settling_time).exp_m1())
}

/// One step of the first-order lag `u_f <- a (u - u_f) + u_f`.
pub fn motor_lag_step(
    target: &[f64; 4],
    filtered: &[f64; 4],
    alpha: f64,
) -> Result<[f64; 4], DynamicsError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DynamicsError::OutOfUnitRange { what: "alpha_lag", value: alpha });
    }
    let mut out = [0.0; 4];
    for i in 0..4 {
        let u = target[i];
        if !(0.0..=1.0).contains(&u) {
            return Err(DynamicsError::OutOfUnitRange { what: "rotor speed command", value: u });
        }
        // alpha = 1 must pass the command through bit-for-bit.
        out[i] = if alpha == 1.0 { u } else { (alpha * (u - filtered[i]) + filtered[i]).clamp(0.0, 1.0) };
    }
    Ok(out)
}

/// AR(1) update of the motor noise, one independent normal draw per rotor.
pub fn motor_noise_step<R: Rng + ?Sized>(
    noise: &[f64; 4],
    params: &QuadrotorParams,
    rng: &mut R,
) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, &e) in out.iter_mut().zip(noise) {
        let z: f64 = rng.sample(StandardNormal);
        *o = params.noise_decay * e + params.noise_scale * z;
    }
    out
}

/// `f = f_max * u_f² + ε`, clamped at zero since a rotor cannot pull.
pub fn thrust_from_motors(filtered: &[f64; 4], noise: &[f64; 4], f_max: f64) -> [f64; 4] {
    let mut f = [0.0; 4];
    for i in 0..4 {
        f[i] = (f_max * filtered[i] * filtered[i] + noise[i]).max(0.0);
    }
    f
}

pub fn mix_wrench(f: &[f64; 4], params: &QuadrotorParams) -> BodyWrench {
    let rotors = params.rotor_positions();
    let mut torque = Vector3::zeros();
    let mut yaw = 0.0;
    for i in 0..4 {
        // r × (0, 0, f) = (r_y f, -r_x f, 0)
        torque.x += rotors[i].y * f[i];
        torque.y -= rotors[i].x * f[i];
        yaw += params.rotor_spin_signs[i] * f[i];
    }
    torque.z = params.torque_to_thrust * yaw;
    BodyWrench {
        force_body: Vector3::new(0.0, 0.0, f.iter().sum()),
        torque,
    }
}

/// Advances the rigid body by `dt` under `wrench` and gravity.
pub fn integrate_step(
    state: &RigidState,
    wrench: &BodyWrench,
    params: &QuadrotorParams,
    dt: f64,
) -> Result<RigidState, DynamicsError> {
    integrate_step_disturbed(state, wrench, params, dt, &Vector3::zeros(), &Vector3::zeros())
}

/// [`integrate_step`] with extra world-frame linear acceleration and
/// body-frame angular acceleration (downwash).
pub fn integrate_step_disturbed(
    state: &RigidState,
    wrench: &BodyWrench,
    params: &QuadrotorParams,
    dt: f64,
    extra_accel: &Vector3<f64>,
    extra_ang_accel: &Vector3<f64>,
) -> Result<RigidState, DynamicsError> {
    let inertia = Vector3::from(params.inertia_diag);
    let w = state.angular_velocity;
    let iw = inertia.component_mul(&w);
    let ang_accel = (wrench.torque - w.cross(&iw)).component_div(&inertia) + extra_ang_accel;
    let w_next = w + ang_accel * dt;

    // Body rates rotate the body axes: R <- R exp([w dt]x).
    let mut rotation = state.rotation * so3::exp(&(w_next * dt));
    so3::orthonormalize(&mut rotation);

    let accel = gravity() + state.rotation * wrench.force_body / params.mass + extra_accel;
    let velocity = state.velocity + accel * dt;
    let position = state.position + velocity * dt;

    let next = RigidState {
        position,
        velocity,
        rotation,
        angular_velocity: w_next,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFiniteState)
    }
}
