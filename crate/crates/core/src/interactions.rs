//! Contact and aerodynamic coupling models.
//!
//! Quadrotors are bounding spheres. Quad-quad contacts exchange the normal
//! component of velocity and add noise; walls and the ceiling reflect the
//! normal component; the floor either absorbs an impact (upright reset) or
//! holds a resting vehicle with Coulomb-style friction. Downwash pushes a
//! vehicle down when another hovers above it inside a gating cylinder.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::dynamics::{QuadrotorParams, RigidState, GRAVITY};

/// Axis-aligned room `[0, x] × [0, y] × [ground_z, z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub extent: [f64; 3],
    pub ground_z: f64,
}

impl Room {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(ConfigError::invalid("room.extent", "components must be finite and > 0"));
        }
        if !(self.ground_z >= 0.0 && self.ground_z < self.extent[2]) {
            return Err(ConfigError::invalid("room.ground_z", "must lie in [0, extent.z)"));
        }
        Ok(())
    }

    pub fn lower(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.ground_z)
    }

    pub fn upper(&self) -> Vector3<f64> {
        Vector3::from(self.extent)
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.lower() + self.upper()) * 0.5
    }

    /// True if `p` lies inside the room shrunk by `margin` on every side.
    pub fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..3).all(|i| p[i] >= lo[i] + margin && p[i] <= hi[i] - margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionParams {
    /// Bounding-sphere radius, m.
    pub quad_radius: f64,
    /// Velocity decay (α₁, α₂) applied to the first and second body of a pair.
    pub velocity_decay: [f64; 2],
    /// Std of the Gaussian post-collision velocity noise, m/s.
    pub linear_noise_scale: f64,
    /// Std of the Gaussian post-collision body-rate noise, rad/s.
    pub angular_noise_scale: f64,
    pub friction_mu: f64,
}

impl CollisionParams {
    pub fn validate(&self, room: &Room) -> Result<(), ConfigError> {
        if !(self.quad_radius > 0.0) {
            return Err(ConfigError::invalid("collision.quad_radius", "must be > 0"));
        }
        if self.velocity_decay.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(ConfigError::invalid("collision.velocity_decay", "must lie in (0, 1]"));
        }
        if !(self.linear_noise_scale >= 0.0 && self.angular_noise_scale >= 0.0) {
            return Err(ConfigError::invalid("collision.*_noise_scale", "must be >= 0"));
        }
        if !(self.friction_mu >= 0.0) {
            return Err(ConfigError::invalid("collision.friction_mu", "must be >= 0"));
        }
        let span = room.upper() - room.lower();
        if span.iter().any(|&s| s <= 2.0 * self.quad_radius) {
            return Err(ConfigError::invalid(
                "collision.quad_radius",
                "room must be wider than one vehicle on every axis",
            ));
        }
        Ok(())
    }

    /// Copy with collision noise switched off.
    pub fn without_noise(&self) -> Self {
        Self {
            linear_noise_scale: 0.0,
            angular_noise_scale: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownwashParams {
    /// Gain, m/s². The sign sets the direction along world z.
    pub k1: f64,
    /// Distance gain, 1/m.
    pub k2: f64,
    pub b1: f64,
    /// Horizontal gate radius, m.
    pub xy_radius: f64,
    /// Vertical gate height above the affected vehicle, m.
    pub z_range: f64,
    /// Std of the additive linear acceleration noise, m/s².
    pub accel_noise_scale: f64,
    /// Std of the angular acceleration disturbance, rad/s².
    pub angular_noise_scale: f64,
}

impl DownwashParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.xy_radius > 0.0 && self.z_range > 0.0) {
            return Err(ConfigError::invalid("downwash", "xy_radius and z_range must be > 0"));
        }
        if ![self.k1, self.k2, self.b1].iter().all(|v| v.is_finite()) {
            return Err(ConfigError::invalid("downwash", "k1, k2, b1 must be finite"));
        }
        if !(self.accel_noise_scale >= 0.0 && self.angular_noise_scale >= 0.0) {
            return Err(ConfigError::invalid("downwash.*_noise_scale", "must be >= 0"));
        }
        Ok(())
    }

    pub fn without_noise(&self) -> Self {
        Self {
            accel_noise_scale: 0.0,
            angular_noise_scale: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContactKind {
    QuadQuad,
    Wall,
    Ceiling,
    GroundHit,
    GroundRest,
}

impl ContactKind {
    pub const ALL: [ContactKind; 5] = [
        ContactKind::QuadQuad,
        ContactKind::Wall,
        ContactKind::Ceiling,
        ContactKind::GroundHit,
        ContactKind::GroundRest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContactKind::QuadQuad => "quad_quad",
            ContactKind::Wall => "wall",
            ContactKind::Ceiling => "ceiling",
            ContactKind::GroundHit => "ground_hit",
            ContactKind::GroundRest => "ground_rest",
        }
    }
}

/// A contact during one physics substep. Quad-quad events name both agents
/// (`agent < other`); every other kind names exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContactEvent {
    pub kind: ContactKind,
    pub agent: usize,
    pub other: Option<usize>,
    pub step: u64,
}

impl ContactEvent {
    pub fn pair(i: usize, j: usize, step: u64) -> Self {
        assert_ne!(i, j, "a quad cannot collide with itself");
        Self {
            kind: ContactKind::QuadQuad,
            agent: i.min(j),
            other: Some(i.max(j)),
            step,
        }
    }

    pub fn single(kind: ContactKind, agent: usize, step: u64) -> Self {
        assert_ne!(kind, ContactKind::QuadQuad, "quad-quad events need two agents");
        Self {
            kind,
            agent,
            other: None,
            step,
        }
    }

    pub fn involves(&self, agent: usize) -> bool {
        self.agent == agent || self.other == Some(agent)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InteractionError {
    #[error("coincident positions give no contact normal")]
    DegenerateNormal,
}

/// All unordered pairs closer than two radii, ascending `(i, j)` with `i < j`.
pub fn detect_quad_pairs(positions: &[Vector3<f64>], quad_radius: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    detect_quad_pairs_into(positions, quad_radius, &mut out);
    out
}

pub fn detect_quad_pairs_into(
    positions: &[Vector3<f64>],
    quad_radius: f64,
    out: &mut Vec<(usize, usize)>,
) {
    out.clear();
    let limit = 4.0 * quad_radius * quad_radius;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if (positions[i] - positions[j]).norm_squared() < limit {
                out.push((i, j));
            }
        }
    }
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Vector3<f64> {
    if scale == 0.0 {
        return Vector3::zeros();
    }
    Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * scale
}

/// Exchanges the normal velocity components of two colliding vehicles.
///
/// With `n = (x₁ − x₂)/‖x₁ − x₂‖` and `ṽ = ((v₂ − v₁)·n) n`:
/// `v₁ ← α₁(v₁ + ṽ + ε₁)`, `v₂ ← α₂(v₂ − ṽ + ε₂)`, and each body rate gets
/// additive noise. Positions and attitudes are untouched.
pub fn resolve_quad_quad<R: Rng + ?Sized>(
    first: &RigidState,
    second: &RigidState,
    params: &CollisionParams,
    rng: &mut R,
) -> Result<(RigidState, RigidState), InteractionError> {
    let d = first.position - second.position;
    let dist = d.norm();
    if !(dist > 0.0) {
        return Err(InteractionError::DegenerateNormal);
    }
    let n = d / dist;
    let exchange = n * (second.velocity.dot(&n) - first.velocity.dot(&n));

    let ev1 = gaussian3(rng, params.linear_noise_scale);
    let ev2 = gaussian3(rng, params.linear_noise_scale);
    let ew1 = gaussian3(rng, params.angular_noise_scale);
    let ew2 = gaussian3(rng, params.angular_noise_scale);

    let [a1, a2] = params.velocity_decay;
    let mut s1 = *first;
    let mut s2 = *second;
    s1.velocity = (first.velocity + exchange + ev1) * a1;
    s2.velocity = (second.velocity - exchange + ev2) * a2;
    s1.angular_velocity += ew1;
    s2.angular_velocity += ew2;
    Ok((s1, s2))
}

/// A wall or ceiling plane `{x : normal·x = offset}` with `normal` pointing
/// into the room.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePlane {
    pub kind: ContactKind,
    pub inward_normal: Vector3<f64>,
    pub offset: f64,
}

impl SurfacePlane {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.inward_normal.dot(p) - self.offset
    }
}

/// The four walls and the ceiling of `room`.
pub fn room_surfaces(room: &Room) -> [SurfacePlane; 5] {
    let [x, y, z] = room.extent;
    let plane = |kind, n: [f64; 3], offset| SurfacePlane {
        kind,
        inward_normal: Vector3::from(n),
        offset,
    };
    [
        plane(ContactKind::Wall, [1.0, 0.0, 0.0], 0.0),
        plane(ContactKind::Wall, [-1.0, 0.0, 0.0], -x),
        plane(ContactKind::Wall, [0.0, 1.0, 0.0], 0.0),
        plane(ContactKind::Wall, [0.0, -1.0, 0.0], -y),
        plane(ContactKind::Ceiling, [0.0, 0.0, -1.0], -z),
    ]
}

/// Quad-quad response against an immovable body.
///
/// The surface is a second body with zero velocity that never moves, so the
/// normal component of an approaching vehicle's velocity is reflected rather
/// than shared. A vehicle already moving away keeps its velocity. The center
/// is pushed back so the sphere no longer penetrates the plane.
pub fn resolve_surface<R: Rng + ?Sized>(
    state: &RigidState,
    surface: &SurfacePlane,
    quad_radius: f64,
    params: &CollisionParams,
    rng: &mut R,
) -> RigidState {
    let n = surface.inward_normal;
    let mut out = *state;
    let closing = state.velocity.dot(&n);
    if closing < 0.0 {
        let exchange = n * (-closing);
        let ev = gaussian3(rng, params.linear_noise_scale);
        let ew = gaussian3(rng, params.angular_noise_scale);
        out.velocity = (state.velocity + exchange * 2.0 + ev) * params.velocity_decay[0];
        out.angular_velocity += ew;
    }
    let depth = quad_radius - surface.signed_distance(&state.position);
    if depth > 0.0 {
        out.position += n * depth;
    }
    out
}

/// Attitude with body z straight up and body x along the horizontal
/// projection of the old body x axis.
pub fn upright_keep_heading(rotation: &Matrix3<f64>) -> Matrix3<f64> {
    let bx = rotation.column(0);
    let mut heading = Vector3::new(bx[0], bx[1], 0.0);
    if heading.norm_squared() < 1e-12 {
        // Nose pointing straight up or down: fall back to the body y axis.
        let by = rotation.column(1);
        let side = Vector3::new(by[0], by[1], 0.0);
        heading = if side.norm_squared() < 1e-12 {
            Vector3::x()
        } else {
            Vector3::new(side.y, -side.x, 0.0)
        };
    }
    let x = heading.normalize();
    let z = Vector3::z();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

/// Outcome of [`ground_contact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundContact {
    pub state: RigidState,
    /// Net horizontal force after friction, N (z is always 0).
    pub planar_force: Vector3<f64>,
    pub kind: ContactKind,
}

/// Rest and sliding friction on the floor.
///
/// `thrust_world` is the rotor thrust in the world frame. With the vehicle
/// still, friction opposes the planar thrust and can at most cancel it;
/// while sliding, it opposes the velocity with magnitude `μ(mg − f_z)`.
pub fn ground_friction(
    thrust_world: &Vector3<f64>,
    velocity: &Vector3<f64>,
    mass: f64,
    mu: f64,
) -> Vector3<f64> {
    let f_xy = Vector3::new(thrust_world.x, thrust_world.y, 0.0);
    let friction = mu * (mass * GRAVITY - thrust_world.z).max(0.0);
    let v_xy = Vector3::new(velocity.x, velocity.y, 0.0);
    let speed = v_xy.norm();
    if speed == 0.0 {
        let mag = f_xy.norm();
        if mag == 0.0 {
            return Vector3::zeros();
        }
        f_xy * ((mag - friction).max(0.0) / mag)
    } else {
        f_xy - v_xy * (friction / speed)
    }
}

/// Floor interaction.
///
/// If `resting` is false this is an impact: velocity and body rates are
/// zeroed, attitude is reset upright keeping heading, and the vehicle is set
/// on the floor. If `resting` is true the state is unchanged and the returned
/// planar force is the thrust after floor friction.
pub fn ground_contact(
    state: &RigidState,
    thrusts: &[f64; 4],
    resting: bool,
    room: &Room,
    params: &CollisionParams,
    quad: &QuadrotorParams,
) -> GroundContact {
    if !resting {
        let mut s = *state;
        s.velocity = Vector3::zeros();
        s.angular_velocity = Vector3::zeros();
        s.rotation = upright_keep_heading(&state.rotation);
        s.position.z = room.ground_z + params.quad_radius;
        return GroundContact {
            state: s,
            planar_force: Vector3::zeros(),
            kind: ContactKind::GroundHit,
        };
    }
    let total: f64 = thrusts.iter().sum();
    let thrust_world = state.rotation.column(2) * total;
    GroundContact {
        state: *state,
        planar_force: ground_friction(&thrust_world, &state.velocity, quad.mass, params.friction_mu),
        kind: ContactKind::GroundRest,
    }
}

/// Moves a resting vehicle along the floor for `dt` under `planar_force`.
///
/// Friction stops a slide; it never reverses it.
pub fn ground_slide(state: &RigidState, planar_force: &Vector3<f64>, mass: f64, dt: f64) -> RigidState {
    let mut s = *state;
    let v_old = Vector3::new(state.velocity.x, state.velocity.y, 0.0);
    let mut v = v_old + planar_force * (dt / mass);
    if v_old.norm_squared() > 0.0 && v.dot(&v_old) <= 0.0 {
        v = Vector3::zeros();
    }
    s.velocity = v;
    s.angular_velocity = Vector3::zeros();
    s.position += v * dt;
    s
}

/// Downwash felt by `low` from `high`.
///
/// Returns `(linear acceleration in world frame, angular acceleration in body
/// frame)`. Both are exactly zero unless `high` is above `low`, within
/// `z_range` vertically and `xy_radius` horizontally. Inside the gate the
/// mean push is `k1 (k2 δ + b1)` along world z, where δ is the distance
/// between the vehicles.
pub fn apply_downwash<R: Rng + ?Sized>(
    low: &RigidState,
    high: &RigidState,
    params: &DownwashParams,
    rng: &mut R,
) -> (Vector3<f64>, Vector3<f64>) {
    let d = high.position - low.position;
    let horizontal_sq = d.x * d.x + d.y * d.y;
    if !(d.z > 0.0 && d.z < params.z_range && horizontal_sq < params.xy_radius * params.xy_radius) {
        return (Vector3::zeros(), Vector3::zeros());
    }
    let delta = d.norm();
    let mean = Vector3::new(0.0, 0.0, params.k1 * (params.k2 * delta + params.b1));
    let accel = mean + gaussian3(rng, params.accel_noise_scale);
    let ang = gaussian3(rng, params.angular_noise_scale);
    (accel, ang)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SwarmEnvConfig;
    use crate::so3;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet(alpha: [f64; 2]) -> CollisionParams {
        CollisionParams {
            quad_radius: 0.05,
            velocity_decay: alpha,
            linear_noise_scale: 0.0,
            angular_noise_scale: 0.0,
            friction_mu: 1.0,
        }
    }

    fn body(x: [f64; 3], v: [f64; 3]) -> RigidState {
        let mut s = RigidState::at_rest(Vector3::from(x));
        s.velocity = Vector3::from(v);
        s
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn detection_examples() {
        let far = [Vector3::new(0.0, 0.0, 1.0), Vector3::new(10.0, 0.0, 1.0)];
        assert!(detect_quad_pairs(&far, 0.05).is_empty());
        let near = [Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.05, 0.0, 1.0)];
        assert_eq!(detect_quad_pairs(&near, 0.05), vec![(0, 1)]);
        // 0.08 apart: adjacent overlap (0.08 < 0.1), ends do not (0.16).
        let line: Vec<_> = (0..3).map(|i| Vector3::new(0.08 * i as f64, 0.0, 1.0)).collect();
        assert_eq!(detect_quad_pairs(&line, 0.05), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn head_on_full_exchange() {
        let a = body([0.05, 0.0, 0.0], [0.0, 0.0, 0.0]);
        let b = body([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let (a2, b2) = resolve_quad_quad(&a, &b, &quiet([1.0, 1.0]), &mut rng()).unwrap();
        assert_eq!(a2.velocity, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(b2.velocity, Vector3::new(0.0, 0.0, 0.0));
        assert_eq!(a2.position, a.position);
        assert_eq!(b2.rotation, b.rotation);
    }

    #[test]
    fn tangential_pass_unchanged() {
        let a = body([0.05, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let b = body([0.0, 0.0, 0.0], [0.0, -1.0, 0.0]);
        let (a2, b2) = resolve_quad_quad(&a, &b, &quiet([1.0, 1.0]), &mut rng()).unwrap();
        assert_eq!(a2.velocity, a.velocity);
        assert_eq!(b2.velocity, b.velocity);
    }

    #[test]
    fn damped_exchange_by_hand() {
        let a = body([0.05, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let b = body([0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]);
        let (a2, b2) = resolve_quad_quad(&a, &b, &quiet([0.5, 0.5]), &mut rng()).unwrap();
        assert_eq!(a2.velocity, Vector3::new(-0.5, 0.0, 0.0));
        assert_eq!(b2.velocity, Vector3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn coincident_positions_are_rejected() {
        let a = body([1.0, 1.0, 1.0], [1.0, 0.0, 0.0]);
        assert_eq!(
            resolve_quad_quad(&a, &a, &quiet([1.0, 1.0]), &mut rng()),
            Err(InteractionError::DegenerateNormal)
        );
    }

    #[test]
    fn collision_noise_perturbs_rates() {
        let mut p = quiet([1.0, 1.0]);
        p.angular_noise_scale = 1.0;
        p.linear_noise_scale = 0.2;
        let a = body([0.05, 0.0, 0.0], [0.0; 3]);
        let b = body([0.0; 3], [1.0, 0.0, 0.0]);
        let (a2, b2) = resolve_quad_quad(&a, &b, &p, &mut rng()).unwrap();
        assert!(a2.angular_velocity.norm() > 0.0 && b2.angular_velocity.norm() > 0.0);
        assert_ne!(a2.velocity, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn wall_reflects_normal_component() {
        let room = Room { extent: [10.0; 3], ground_z: 0.0 };
        let wall = room_surfaces(&room)[1];
        assert_eq!(wall.inward_normal, Vector3::new(-1.0, 0.0, 0.0));
        let s = body([9.97, 5.0, 5.0], [1.0, 0.0, 0.0]);
        let out = resolve_surface(&s, &wall, 0.05, &quiet([1.0, 1.0]), &mut rng());
        assert_eq!(out.velocity, Vector3::new(-1.0, 0.0, 0.0));
        assert!(out.position.x <= 10.0 - 0.05 + 1e-12);
    }

    #[test]
    fn wall_parallel_motion_unchanged() {
        let room = Room { extent: [10.0; 3], ground_z: 0.0 };
        let wall = room_surfaces(&room)[0];
        let s = body([0.02, 5.0, 5.0], [0.0, 0.7, -0.2]);
        let out = resolve_surface(&s, &wall, 0.05, &quiet([1.0, 1.0]), &mut rng());
        assert_eq!(out.velocity, s.velocity);
        assert_eq!(out.position.x, 0.05);
    }

    #[test]
    fn ceiling_clamps_inside() {
        let room = Room { extent: [10.0; 3], ground_z: 0.0 };
        let ceiling = room_surfaces(&room)[4];
        assert_eq!(ceiling.kind, ContactKind::Ceiling);
        let s = body([5.0, 5.0, 10.3], [0.0, 0.0, 2.0]);
        let out = resolve_surface(&s, &ceiling, 0.05, &quiet([1.0, 1.0]), &mut rng());
        assert!(out.position.z <= 10.0);
        assert_eq!(out.velocity, Vector3::new(0.0, 0.0, -2.0));
    }

    #[test]
    fn rest_friction_examples() {
        // mg - f_z chosen so that mu (mg - f_z) = 0.2 with mu = 1.
        let m = 0.05;
        let fz = m * GRAVITY - 0.2;
        let f = ground_friction(&Vector3::new(0.1, 0.0, fz), &Vector3::zeros(), m, 1.0);
        assert_eq!(f, Vector3::zeros());
        let f = ground_friction(&Vector3::new(0.0, 0.3, fz), &Vector3::zeros(), m, 1.0);
        assert!((f - Vector3::new(0.0, 0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sliding_friction_opposes_velocity() {
        let m = 0.05;
        let fz = m * GRAVITY - 0.1;
        let f = ground_friction(&Vector3::new(0.0, 0.0, fz), &Vector3::new(0.5, 0.0, 0.0), m, 1.0);
        assert!((f - Vector3::new(-0.1, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn slide_stops_without_reversing() {
        let s = body([5.0, 5.0, 0.06], [0.01, 0.0, 0.0]);
        let out = ground_slide(&s, &Vector3::new(-10.0, 0.0, 0.0), 0.027, 0.005);
        assert_eq!(out.velocity, Vector3::zeros());
        assert_eq!(out.position, s.position);
    }

    #[test]
    fn ground_impact_resets_upright() {
        let cfg = SwarmEnvConfig::default();
        let mut s = body([3.0, 4.0, 0.01], [1.0, -2.0, -3.0]);
        s.rotation = so3::exp(&Vector3::new(0.7, -0.4, 1.2));
        s.angular_velocity = Vector3::new(3.0, 1.0, -2.0);
        let heading_before = {
            let c = s.rotation.column(0);
            c.y.atan2(c.x)
        };
        let g = ground_contact(&s, &[0.0; 4], false, &cfg.room, &cfg.collision, &cfg.quadrotor);
        assert_eq!(g.kind, ContactKind::GroundHit);
        assert_eq!(g.state.velocity, Vector3::zeros());
        assert_eq!(g.state.angular_velocity, Vector3::zeros());
        assert!((g.state.rotation[(2, 2)] - 1.0).abs() < 1e-10);
        assert!(so3::orthonormality_error(&g.state.rotation) < 1e-12);
        let c = g.state.rotation.column(0);
        assert!((c.y.atan2(c.x) - heading_before).abs() < 1e-12);
        assert_eq!(g.state.position.z, cfg.collision.quad_radius);
    }

    #[test]
    fn upright_handles_vertical_nose() {
        let r = so3::exp(&Vector3::new(0.0, -std::f64::consts::FRAC_PI_2, 0.0));
        let up = upright_keep_heading(&r);
        assert!(so3::orthonormality_error(&up) < 1e-12);
        assert_eq!(up.column(2).into_owned(), Vector3::<f64>::z());
    }

    #[test]
    fn resting_contact_reports_friction() {
        let cfg = SwarmEnvConfig::default();
        let s = body([3.0, 4.0, 0.06], [0.2, 0.0, 0.0]);
        let g = ground_contact(&s, &[0.01; 4], true, &cfg.room, &cfg.collision, &cfg.quadrotor);
        assert_eq!(g.kind, ContactKind::GroundRest);
        assert_eq!(g.state, s);
        assert!(g.planar_force.x < 0.0 && g.planar_force.y == 0.0);
    }

    fn dw() -> DownwashParams {
        DownwashParams {
            k1: -3.0,
            k2: 0.5,
            b1: 1.0,
            xy_radius: 0.1,
            z_range: 2.0,
            accel_noise_scale: 0.0,
            angular_noise_scale: 0.0,
        }
    }

    #[test]
    fn downwash_gate() {
        let low = body([5.0, 5.0, 1.0], [0.0; 3]);
        let far = body([10.0, 5.0, 1.5], [0.0; 3]);
        assert_eq!(apply_downwash(&low, &far, &dw(), &mut rng()), (Vector3::zeros(), Vector3::zeros()));
        // the "low" one is actually above
        let below = body([5.0, 5.0, 0.5], [0.0; 3]);
        assert_eq!(apply_downwash(&low, &below, &dw(), &mut rng()), (Vector3::zeros(), Vector3::zeros()));
        let too_high = body([5.0, 5.0, 3.5], [0.0; 3]);
        assert_eq!(apply_downwash(&low, &too_high, &dw(), &mut rng()).0, Vector3::zeros());
    }

    #[test]
    fn downwash_formula_aligned() {
        let p = dw();
        let low = body([5.0, 5.0, 1.0], [0.0; 3]);
        let high = body([5.0, 5.0, 1.5], [0.0; 3]);
        let (acc, ang) = apply_downwash(&low, &high, &p, &mut rng());
        let expected = p.k1 * (0.5 * p.k2 + p.b1);
        assert!((acc.z - expected).abs() < 1e-12);
        assert!(acc.z < 0.0);
        assert_eq!((acc.x, acc.y), (0.0, 0.0));
        assert_eq!(ang, Vector3::zeros());
    }

    #[test]
    fn downwash_noise_only_inside_gate() {
        let mut p = dw();
        p.accel_noise_scale = 1.0;
        p.angular_noise_scale = 1.0;
        let low = body([5.0, 5.0, 1.0], [0.0; 3]);
        let inside = body([5.05, 5.0, 1.5], [0.0; 3]);
        let (_, ang) = apply_downwash(&low, &inside, &p, &mut rng());
        assert!(ang.norm() > 0.0);
        let outside = body([5.2, 5.0, 1.5], [0.0; 3]);
        assert_eq!(apply_downwash(&low, &outside, &p, &mut rng()), (Vector3::zeros(), Vector3::zeros()));
    }

    fn vec3() -> impl Strategy<Value = Vector3<f64>> {
        prop::array::uniform3(-3.0f64..3.0).prop_map(Vector3::from)
    }

    proptest! {
        #[test]
        fn momentum_conserved_with_unit_decay(x1 in vec3(), x2 in vec3(), v1 in vec3(), v2 in vec3()) {
            prop_assume!((x1 - x2).norm() > 1e-6);
            let a = body(x1.into(), v1.into());
            let b = body(x2.into(), v2.into());
            let (a2, b2) = resolve_quad_quad(&a, &b, &quiet([1.0, 1.0]), &mut rng()).unwrap();
            prop_assert!(((a2.velocity + b2.velocity) - (v1 + v2)).abs().max() < 1e-12);
        }

        #[test]
        fn tangential_components_untouched(
            x1 in vec3(), x2 in vec3(), v1 in vec3(), v2 in vec3(), alpha in 0.1f64..=1.0,
        ) {
            prop_assume!((x1 - x2).norm() > 1e-6);
            let n = (x1 - x2).normalize();
            let a = body(x1.into(), v1.into());
            let b = body(x2.into(), v2.into());
            let (a2, b2) = resolve_quad_quad(&a, &b, &quiet([1.0, 1.0]), &mut rng()).unwrap();
            let tang = |v: Vector3<f64>| v - n * v.dot(&n);
            prop_assert!((tang(a2.velocity) - tang(v1)).abs().max() < 1e-12);
            prop_assert!((tang(b2.velocity) - tang(v2)).abs().max() < 1e-12);
            // with decay, the tangential part is scaled, never rotated
            let (a3, _) = resolve_quad_quad(&a, &b, &quiet([alpha, alpha]), &mut rng()).unwrap();
            prop_assert!((tang(a3.velocity) - tang(v1) * alpha).abs().max() < 1e-12);
        }

        #[test]
        fn label_swap_symmetry(x1 in vec3(), x2 in vec3(), v1 in vec3(), v2 in vec3()) {
            prop_assume!((x1 - x2).norm() > 1e-6);
            let a = body(x1.into(), v1.into());
            let b = body(x2.into(), v2.into());
            let p = quiet([0.8, 0.8]);
            let (a2, b2) = resolve_quad_quad(&a, &b, &p, &mut rng()).unwrap();
            let (b3, a3) = resolve_quad_quad(&b, &a, &p, &mut rng()).unwrap();
            prop_assert!((a2.velocity - a3.velocity).abs().max() < 1e-12);
            prop_assert!((b2.velocity - b3.velocity).abs().max() < 1e-12);
        }
    }
}
