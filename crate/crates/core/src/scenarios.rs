//! Goal generation.
//!
//! Formation scenarios place a geometric arrangement of goals in the room and
//! optionally change it after random hold times. Pursuit scenarios give every
//! agent the same moving goal along a Lissajous curve or a C¹ Bezier spline
//! through random waypoints.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::interactions::Room;
use crate::so3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Grid,
    Sphere,
    Cylinder,
    Cube,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Circle,
        ShapeKind::Grid,
        ShapeKind::Sphere,
        ShapeKind::Cylinder,
        ShapeKind::Cube,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    StaticFormation,
    DynamicGoals,
    SwapGoals,
    ShrinkExpand,
    SwarmVsSwarm,
    PursuitLissajous,
    PursuitBezier,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::StaticFormation,
        ScenarioKind::DynamicGoals,
        ScenarioKind::SwapGoals,
        ScenarioKind::ShrinkExpand,
        ScenarioKind::SwarmVsSwarm,
        ScenarioKind::PursuitLissajous,
        ScenarioKind::PursuitBezier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::StaticFormation => "static_formation",
            ScenarioKind::DynamicGoals => "dynamic_goals",
            ScenarioKind::SwapGoals => "swap_goals",
            ScenarioKind::ShrinkExpand => "shrink_expand",
            ScenarioKind::SwarmVsSwarm => "swarm_vs_swarm",
            ScenarioKind::PursuitLissajous => "pursuit_lissajous",
            ScenarioKind::PursuitBezier => "pursuit_bezier",
        }
    }

    pub fn is_pursuit(self) -> bool {
        matches!(self, ScenarioKind::PursuitLissajous | ScenarioKind::PursuitBezier)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown scenario '{s}', expected one of: {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LissajousParams {
    /// Defaults to the room center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    pub amplitude: [f64; 3],
    /// Angular frequency per axis, rad/s.
    pub frequency: [f64; 3],
    pub phase: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BezierParams {
    pub waypoints: usize,
    /// Time spent on each segment between consecutive waypoints, s.
    pub segment_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Hold times are uniform on `[low, high]`, s.
    pub hold_time_range: [f64; 2],
    pub shape_pool: Vec<ShapeKind>,
    /// Nearest-neighbor distance between goals at unit scale, m.
    pub spacing: f64,
    /// Goals keep at least this distance from every wall, the floor and the ceiling, m.
    pub goal_margin: f64,
    /// Formation scale factors for shrink & expand.
    pub scale_range: [f64; 2],
    pub lissajous: LissajousParams,
    pub bezier: BezierParams,
}

impl ScenarioSpec {
    fn max_scale(&self) -> f64 {
        if self.kind == ScenarioKind::ShrinkExpand {
            self.scale_range[1].max(1.0)
        } else {
            1.0
        }
    }

    pub fn validate(&self, room: &Room, n_agents: usize, episode_duration: f64) -> Result<(), ConfigError> {
        let [lo, hi] = self.hold_time_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(ConfigError::invalid(
                "scenario.hold_time_range",
                "must satisfy 0 < low <= high",
            ));
        }
        if self.shape_pool.is_empty() {
            return Err(ConfigError::invalid("scenario.shape_pool", "must not be empty"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(ConfigError::invalid("scenario.spacing", "must be > 0"));
        }
        if !(self.goal_margin >= 0.0) {
            return Err(ConfigError::invalid("scenario.goal_margin", "must be >= 0"));
        }
        let [slo, shi] = self.scale_range;
        if !(slo > 0.0 && slo <= shi && shi.is_finite()) {
            return Err(ConfigError::invalid(
                "scenario.scale_range",
                "must satisfy 0 < low <= high",
            ));
        }
        let (box_lo, box_hi) = goal_box(room, self.goal_margin);
        if (0..3).any(|i| box_lo[i] > box_hi[i]) {
            return Err(ConfigError::invalid("scenario.goal_margin", "leaves no room for goals"));
        }
        match self.kind {
            ScenarioKind::PursuitLissajous => {
                let l = &self.lissajous;
                let finite = l.amplitude.iter().chain(&l.frequency).chain(&l.phase).all(|v| v.is_finite());
                if !finite || l.amplitude.iter().any(|&a| a < 0.0) {
                    return Err(ConfigError::invalid(
                        "scenario.lissajous",
                        "amplitudes must be >= 0 and all values finite",
                    ));
                }
                let c = l.center.map_or(room.center(), Vector3::from);
                for i in 0..3 {
                    if c[i] - l.amplitude[i] < box_lo[i] || c[i] + l.amplitude[i] > box_hi[i] {
                        return Err(ConfigError::invalid(
                            "scenario.lissajous.amplitude",
                            "curve leaves the room",
                        ));
                    }
                }
            }
            ScenarioKind::PursuitBezier => {
                if self.bezier.waypoints < 2 {
                    return Err(ConfigError::invalid("scenario.bezier.waypoints", "need at least 2"));
                }
                if !(self.bezier.segment_duration > 0.0 && self.bezier.segment_duration.is_finite()) {
                    return Err(ConfigError::invalid(
                        "scenario.bezier.segment_duration",
                        "must be > 0",
                    ));
                }
            }
            ScenarioKind::SwarmVsSwarm => {
                let groups = group_sizes(n_agents);
                for &shape in &self.shape_pool {
                    let ext = groups
                        .iter()
                        .map(|&g| FormationExtent::of(&formation_offsets(shape, g, self.spacing)))
                        .fold(FormationExtent::default(), FormationExtent::max);
                    placement_box(room, self.goal_margin, &ext, 1.0).ok_or_else(|| too_big(shape, n_agents))?;
                }
            }
            _ => {
                for &shape in &self.shape_pool {
                    let ext = FormationExtent::of(&formation_offsets(shape, n_agents, self.spacing));
                    placement_box(room, self.goal_margin, &ext, self.max_scale())
                        .ok_or_else(|| too_big(shape, n_agents))?;
                }
            }
        }
        let _ = episode_duration;
        Ok(())
    }
}

fn too_big(shape: ShapeKind, n: usize) -> ConfigError {
    ConfigError::invalid(
        "scenario",
        format!("{shape:?} formation of {n} goals does not fit in the room"),
    )
}

/// Region goals may occupy.
fn goal_box(room: &Room, margin: f64) -> (Vector3<f64>, Vector3<f64>) {
    let m = Vector3::repeat(margin);
    (room.lower() + m, room.upper() - m)
}

/// Yaw-invariant bounding cylinder of a centered formation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct FormationExtent {
    xy_radius: f64,
    z_half: f64,
}

impl FormationExtent {
    fn of(offsets: &[Vector3<f64>]) -> Self {
        offsets.iter().fold(Self::default(), |e, p| Self {
            xy_radius: e.xy_radius.max(p.x.hypot(p.y)),
            z_half: e.z_half.max(p.z.abs()),
        })
    }

    fn max(self, o: Self) -> Self {
        Self {
            xy_radius: self.xy_radius.max(o.xy_radius),
            z_half: self.z_half.max(o.z_half),
        }
    }
}

/// Box of admissible formation centers, or `None` if the formation cannot fit.
fn placement_box(
    room: &Room,
    margin: f64,
    ext: &FormationExtent,
    scale: f64,
) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let (lo, hi) = goal_box(room, margin);
    let pad = Vector3::new(ext.xy_radius, ext.xy_radius, ext.z_half) * scale;
    let (lo, hi) = (lo + pad, hi - pad);
    (0..3).all(|i| lo[i] <= hi[i]).then_some((lo, hi))
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| if hi[i] > lo[i] { rng.random_range(lo[i]..=hi[i]) } else { lo[i] })
}

/// Smallest `s` with `s^dim >= n`.
fn lattice_side(n: usize, dim: u32) -> usize {
    let mut s: usize = 1;
    while s.pow(dim) < n {
        s += 1;
    }
    s
}

fn circle_radius(n: usize, spacing: f64) -> f64 {
    match n {
        0 | 1 => 0.0,
        _ => spacing / (2.0 * (PI / n as f64).sin()),
    }
}

/// Goal offsets around the origin for `n` agents, before yaw and scale.
pub fn formation_offsets(kind: ShapeKind, n: usize, spacing: f64) -> Vec<Vector3<f64>> {
    if n <= 1 {
        return vec![Vector3::zeros(); n];
    }
    match kind {
        ShapeKind::Circle => {
            let r = circle_radius(n, spacing);
            (0..n)
                .map(|i| {
                    let a = TAU * i as f64 / n as f64;
                    Vector3::new(r * a.cos(), r * a.sin(), 0.0)
                })
                .collect()
        }
        ShapeKind::Grid => {
            let side = lattice_side(n, 2);
            let half = (side - 1) as f64 / 2.0;
            (0..n)
                .map(|i| {
                    let (c, r) = ((i % side) as f64, (i / side) as f64);
                    Vector3::new((c - half) * spacing, (r - half) * spacing, 0.0)
                })
                .collect()
        }
        ShapeKind::Cube => {
            let side = lattice_side(n, 3);
            let half = (side - 1) as f64 / 2.0;
            (0..n)
                .map(|i| {
                    let x = (i % side) as f64;
                    let y = ((i / side) % side) as f64;
                    let z = (i / (side * side)) as f64;
                    Vector3::new(x - half, y - half, z - half) * spacing
                })
                .collect()
        }
        ShapeKind::Sphere => {
            // Fibonacci spiral; radius chosen so each point covers about spacing².
            let r = (spacing * (n as f64 / (4.0 * PI)).sqrt()).max(spacing / 2.0);
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let ring = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    Vector3::new(ring * a.cos(), ring * a.sin(), z) * r
                })
                .collect()
        }
        ShapeKind::Cylinder => {
            let per_layer = lattice_side(n, 2);
            let layers = n.div_ceil(per_layer);
            let r = circle_radius(per_layer, spacing);
            let half = (layers - 1) as f64 / 2.0;
            (0..n)
                .map(|i| {
                    let (slot, layer) = (i % per_layer, i / per_layer);
                    let a = TAU * slot as f64 / per_layer as f64;
                    Vector3::new(r * a.cos(), r * a.sin(), (layer as f64 - half) * spacing)
                })
                .collect()
        }
    }
}

/// A shape placed in the room.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormationShape {
    pub kind: ShapeKind,
    pub spacing: f64,
    pub center: Vector3<f64>,
}

/// Goals for `n` agents: the shape's offsets turned by a random yaw and
/// moved to its center.
pub fn generate_formation<R: Rng + ?Sized>(shape: &FormationShape, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
    let yaw = rng.random_range(0.0..TAU);
    place(shape.kind, n, shape.spacing, &shape.center, yaw, 1.0)
}

fn place(kind: ShapeKind, n: usize, spacing: f64, center: &Vector3<f64>, yaw: f64, scale: f64) -> Vec<Vector3<f64>> {
    let r = so3::rot_z(yaw);
    formation_offsets(kind, n, spacing)
        .into_iter()
        .map(|o| center + r * o * scale)
        .collect()
}

/// Scales every point's offset from `center` by `factor`.
pub fn rescale_about(points: &[Vector3<f64>], center: &Vector3<f64>, factor: f64) -> Vec<Vector3<f64>> {
    points.iter().map(|p| center + (p - center) * factor).collect()
}

/// `center + A ∘ sin(ω t + φ)` per axis.
pub fn lissajous_goal(t: f64, center: &Vector3<f64>, p: &LissajousParams) -> Vector3<f64> {
    center + Vector3::from_fn(|i, _| p.amplitude[i] * (p.frequency[i] * t + p.phase[i]).sin())
}

/// Upper bound on the Lissajous goal speed.
pub fn lissajous_max_speed(p: &LissajousParams) -> f64 {
    Vector3::from_fn(|i, _| p.amplitude[i] * p.frequency[i]).norm()
}

/// Piecewise cubic Bezier through waypoints with Catmull-Rom tangents.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierPath {
    waypoints: Vec<Vector3<f64>>,
    controls: Vec<[Vector3<f64>; 4]>,
    segment_duration: f64,
}

impl BezierPath {
    pub fn new(waypoints: Vec<Vector3<f64>>, segment_duration: f64) -> Self {
        assert!(waypoints.len() >= 2, "a path needs at least two waypoints");
        assert!(segment_duration > 0.0);
        let n = waypoints.len();
        let tangent = |i: usize| -> Vector3<f64> {
            let prev = waypoints[i.saturating_sub(1)];
            let next = waypoints[(i + 1).min(n - 1)];
            (next - prev) / 2.0
        };
        let controls = (0..n - 1)
            .map(|i| {
                let (p0, p1) = (waypoints[i], waypoints[i + 1]);
                [p0, p0 + tangent(i) / 3.0, p1 - tangent(i + 1) / 3.0, p1]
            })
            .collect();
        Self {
            waypoints,
            controls,
            segment_duration,
        }
    }

    pub fn waypoints(&self) -> &[Vector3<f64>] {
        &self.waypoints
    }

    pub fn duration(&self) -> f64 {
        self.segment_duration * self.controls.len() as f64
    }

    /// Position at time `t`; clamped to the end points outside the path.
    pub fn position(&self, t: f64) -> Vector3<f64> {
        let (seg, u) = self.locate(t);
        let [b0, b1, b2, b3] = &self.controls[seg];
        let v = 1.0 - u;
        b0 * (v * v * v) + b1 * (3.0 * v * v * u) + b2 * (3.0 * v * u * u) + b3 * (u * u * u)
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let s = (t / self.segment_duration).max(0.0);
        let last = self.controls.len() - 1;
        let seg = (s.floor() as usize).min(last);
        (seg, (s - seg as f64).min(1.0))
    }

    /// Upper bound on `‖d position / dt‖` over the whole path.
    pub fn max_speed(&self) -> f64 {
        self.controls
            .iter()
            .flat_map(|c| (0..3).map(move |k| (c[k + 1] - c[k]).norm()))
            .fold(0.0, f64::max)
            * 3.0
            / self.segment_duration
    }
}

/// Samples a waypoint path whose control polygon stays inside `[lo, hi]`.
fn sample_bezier<R: Rng + ?Sized>(
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
    p: &BezierParams,
    rng: &mut R,
) -> BezierPath {
    // Control points sit at most 1/6 of the waypoint spread away from a
    // waypoint, so sampling in the central 3/4 keeps the hull in [lo, hi].
    let span = hi - lo;
    let inner_lo = lo + span * 0.125;
    let inner_hi = hi - span * 0.125;
    let pts = (0..p.waypoints).map(|_| uniform_in(rng, &inner_lo, &inner_hi)).collect();
    BezierPath::new(pts, p.segment_duration)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalAssignment {
    pub goals: Vec<Vector3<f64>>,
    /// Index of the current goal regime; bumps at every transition.
    pub epoch: u64,
}

#[derive(Debug, Clone)]
enum Layout {
    Formation {
        shape: ShapeKind,
        center: Vector3<f64>,
        yaw: f64,
        scale: f64,
    },
    Groups {
        shape: ShapeKind,
        centers: [Vector3<f64>; 2],
        yaw: f64,
    },
    Lissajous {
        center: Vector3<f64>,
    },
    Bezier(BezierPath),
}

fn group_sizes(n: usize) -> [usize; 2] {
    [n.div_ceil(2), n / 2]
}

/// Goal generator for one environment.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    room: Room,
    n_agents: usize,
    layout: Layout,
    assignment: GoalAssignment,
    next_transition: f64,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec, room: Room, n_agents: usize) -> Result<Self, ConfigError> {
        spec.validate(&room, n_agents, f64::INFINITY)?;
        Ok(Self {
            spec,
            layout: Layout::Lissajous { center: room.center() },
            room,
            n_agents,
            assignment: GoalAssignment {
                goals: Vec::new(),
                epoch: 0,
            },
            next_transition: f64::INFINITY,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn assignment(&self) -> &GoalAssignment {
        &self.assignment
    }

    pub fn goals(&self) -> &[Vector3<f64>] {
        &self.assignment.goals
    }

    /// The formation shape currently in use, if any.
    pub fn current_shape(&self) -> Option<ShapeKind> {
        match &self.layout {
            Layout::Formation { shape, .. } | Layout::Groups { shape, .. } => Some(*shape),
            _ => None,
        }
    }

    pub fn bezier_path(&self) -> Option<&BezierPath> {
        match &self.layout {
            Layout::Bezier(p) => Some(p),
            _ => None,
        }
    }

    /// Upper bound on how fast any goal moves within one epoch, m/s.
    pub fn max_goal_speed(&self) -> f64 {
        match &self.layout {
            Layout::Lissajous { .. } => lissajous_max_speed(&self.spec.lissajous),
            Layout::Bezier(p) => p.max_speed(),
            _ => 0.0,
        }
    }

    fn draw_hold<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let [lo, hi] = self.spec.hold_time_range;
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    }

    fn draw_shape<R: Rng + ?Sized>(&self, rng: &mut R) -> ShapeKind {
        self.spec.shape_pool[rng.random_range(0..self.spec.shape_pool.len())]
    }

    fn draw_center<R: Rng + ?Sized>(&self, shape: ShapeKind, n: usize, scale: f64, rng: &mut R) -> Vector3<f64> {
        let ext = FormationExtent::of(&formation_offsets(shape, n, self.spec.spacing));
        let (lo, hi) = placement_box(&self.room, self.spec.goal_margin, &ext, scale)
            .expect("formation fit is checked at construction");
        uniform_in(rng, &lo, &hi)
    }

    /// Starts a new episode at `t = 0`.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &GoalAssignment {
        let n = self.n_agents;
        self.assignment.epoch = 0;
        self.layout = match self.spec.kind {
            ScenarioKind::PursuitLissajous => Layout::Lissajous {
                center: self.spec.lissajous.center.map_or(self.room.center(), Vector3::from),
            },
            ScenarioKind::PursuitBezier => {
                let (lo, hi) = goal_box(&self.room, self.spec.goal_margin);
                Layout::Bezier(sample_bezier(&lo, &hi, &self.spec.bezier, rng))
            }
            ScenarioKind::SwarmVsSwarm => {
                let shape = self.draw_shape(rng);
                Layout::Groups {
                    shape,
                    centers: self.draw_group_centers(rng),
                    yaw: rng.random_range(0.0..TAU),
                }
            }
            _ => {
                let shape = self.draw_shape(rng);
                let max_scale = self.spec.max_scale();
                Layout::Formation {
                    shape,
                    center: self.draw_center(shape, n, max_scale, rng),
                    yaw: rng.random_range(0.0..TAU),
                    scale: 1.0,
                }
            }
        };
        self.next_transition = match self.spec.kind {
            ScenarioKind::StaticFormation | ScenarioKind::PursuitLissajous | ScenarioKind::PursuitBezier => {
                f64::INFINITY
            }
            _ => self.draw_hold(rng),
        };
        self.assignment.goals = self.layout_goals(0.0);
        &self.assignment
    }

    /// Two mirrored group centers, far enough apart that the groups'
    /// formations never overlap.
    fn draw_group_centers<R: Rng + ?Sized>(&self, rng: &mut R) -> [Vector3<f64>; 2] {
        let ext = group_sizes(self.n_agents)
            .iter()
            .flat_map(|&g| self.spec.shape_pool.iter().map(move |&s| (s, g)))
            .map(|(s, g)| FormationExtent::of(&formation_offsets(s, g, self.spec.spacing)))
            .fold(FormationExtent::default(), FormationExtent::max);
        let (lo, hi) =
            placement_box(&self.room, self.spec.goal_margin, &ext, 1.0).expect("group fit is checked at construction");
        let mid = self.room.center();
        let min_sep = 2.0 * ext.xy_radius + self.spec.spacing;
        let a = uniform_in(rng, &lo, &hi);
        let b = mid * 2.0 - a;
        if (a - b).xy().norm() >= min_sep {
            return [a, b];
        }
        // Too close to the middle: push both apart along x as far as allowed.
        let a = Vector3::new(lo.x, a.y, a.z);
        [a, mid * 2.0 - a]
    }

    fn layout_goals(&self, t: f64) -> Vec<Vector3<f64>> {
        let n = self.n_agents;
        let spacing = self.spec.spacing;
        match &self.layout {
            Layout::Formation {
                shape,
                center,
                yaw,
                scale,
            } => place(*shape, n, spacing, center, *yaw, *scale),
            Layout::Groups { shape, centers, yaw } => {
                let [ga, gb] = group_sizes(n);
                let mut goals = place(*shape, ga, spacing, &centers[0], *yaw, 1.0);
                goals.extend(place(*shape, gb, spacing, &centers[1], *yaw, 1.0));
                goals
            }
            Layout::Lissajous { center } => vec![lissajous_goal(t, center, &self.spec.lissajous); n],
            Layout::Bezier(path) => vec![path.position(t); n],
        }
    }

    /// Advances to `elapsed` seconds into the episode, applying every
    /// transition whose hold time has run out.
    pub fn step<R: Rng + ?Sized>(&mut self, elapsed: f64, rng: &mut R) -> &GoalAssignment {
        if self.spec.kind.is_pursuit() {
            let g = match &self.layout {
                Layout::Lissajous { center } => lissajous_goal(elapsed, center, &self.spec.lissajous),
                Layout::Bezier(path) => path.position(elapsed),
                _ => unreachable!("pursuit scenarios always hold a trajectory"),
            };
            self.assignment.goals.iter_mut().for_each(|x| *x = g);
            return &self.assignment;
        }
        while elapsed >= self.next_transition {
            self.transition(rng);
            self.assignment.epoch += 1;
            self.next_transition += self.draw_hold(rng);
        }
        &self.assignment
    }

    fn transition<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.n_agents;
        match self.spec.kind {
            ScenarioKind::DynamicGoals => {
                let shape = self.draw_shape(rng);
                self.layout = Layout::Formation {
                    shape,
                    center: self.draw_center(shape, n, 1.0, rng),
                    yaw: rng.random_range(0.0..TAU),
                    scale: 1.0,
                };
                self.assignment.goals = self.layout_goals(0.0);
            }
            ScenarioKind::SwapGoals => self.assignment.goals.shuffle(rng),
            ScenarioKind::ShrinkExpand => {
                let [lo, hi] = self.spec.scale_range;
                let next = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                if let Layout::Formation { center, scale, .. } = &mut self.layout {
                    let factor = next / *scale;
                    *scale = next;
                    let c = *center;
                    self.assignment.goals = rescale_about(&self.assignment.goals, &c, factor);
                }
            }
            ScenarioKind::SwarmVsSwarm => {
                let shape = self.draw_shape(rng);
                if let Layout::Groups { shape: s, centers, .. } = &mut self.layout {
                    *s = shape;
                    centers.swap(0, 1);
                }
                self.assignment.goals = self.layout_goals(0.0);
            }
            ScenarioKind::StaticFormation | ScenarioKind::PursuitLissajous | ScenarioKind::PursuitBezier => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SwarmEnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn defaults() -> (ScenarioSpec, Room) {
        let c = SwarmEnvConfig::default();
        (c.scenario, c.room)
    }

    fn pairwise_min(p: &[Vector3<f64>]) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                m = m.min((p[i] - p[j]).norm());
            }
        }
        m
    }

    fn pairwise_max(p: &[Vector3<f64>]) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                m = m.max((p[i] - p[j]).norm());
            }
        }
        m
    }

    #[test]
    fn circle_of_four() {
        let c = Vector3::new(5.0, 5.0, 2.0);
        let shape = FormationShape { kind: ShapeKind::Circle, spacing: 1.0, center: c };
        let pts = generate_formation(&shape, 4, &mut rng(0));
        let r = (pts[0] - c).norm();
        for p in &pts {
            assert!(((p - c).norm() - r).abs() < 1e-12);
            assert_eq!(p.z, 2.0);
        }
        for i in 0..4 {
            let a = pts[i] - c;
            let b = pts[(i + 1) % 4] - c;
            assert!(a.dot(&b).abs() < 1e-12, "not 90 degrees apart");
        }
    }

    #[test]
    fn grid_of_nine() {
        let s = 0.7;
        let pts = generate_formation(
            &FormationShape { kind: ShapeKind::Grid, spacing: s, center: Vector3::new(3.0, 3.0, 3.0) },
            9,
            &mut rng(1),
        );
        assert_eq!(pts.len(), 9);
        assert!((pairwise_max(&pts) - 2.0 * 2f64.sqrt() * s).abs() < 1e-12);
        assert!(pairwise_min(&pts) >= s * (1.0 - 1e-9));
    }

    #[test]
    fn lattice_spacing_holds_for_partial_fills() {
        for n in 2..40 {
            for kind in [ShapeKind::Grid, ShapeKind::Cube] {
                let pts = formation_offsets(kind, n, 0.5);
                assert_eq!(pts.len(), n);
                assert!(pairwise_min(&pts) >= 0.5 * (1.0 - 1e-9), "{kind:?} n={n}");
            }
        }
    }

    #[test]
    fn single_agent_sits_at_center() {
        let c = Vector3::new(1.0, 2.0, 3.0);
        for kind in ShapeKind::ALL {
            let pts = generate_formation(&FormationShape { kind, spacing: 0.5, center: c }, 1, &mut rng(2));
            assert_eq!(pts, vec![c]);
        }
    }

    #[test]
    fn every_shape_returns_n_points() {
        for kind in ShapeKind::ALL {
            for n in [1usize, 2, 3, 7, 8, 27, 32] {
                assert_eq!(formation_offsets(kind, n, 0.5).len(), n);
            }
        }
    }

    #[test]
    fn formation_is_deterministic_per_seed() {
        let shape = FormationShape { kind: ShapeKind::Sphere, spacing: 0.5, center: Vector3::repeat(5.0) };
        assert_eq!(generate_formation(&shape, 12, &mut rng(9)), generate_formation(&shape, 12, &mut rng(9)));
    }

    #[test]
    fn oversized_formation_is_rejected() {
        let (mut spec, room) = defaults();
        spec.spacing = 3.0;
        assert!(Scenario::new(spec, room, 32).is_err());
    }

    #[test]
    fn singleton_pool_always_chosen() {
        let (mut spec, room) = defaults();
        spec.shape_pool = vec![ShapeKind::Cylinder];
        let mut s = Scenario::new(spec, room, 8).unwrap();
        let mut r = rng(3);
        for _ in 0..100 {
            s.reset(&mut r);
            assert_eq!(s.current_shape(), Some(ShapeKind::Cylinder));
        }
    }

    #[test]
    fn static_goals_in_room_and_fixed() {
        let (spec, room) = defaults();
        let mut s = Scenario::new(spec.clone(), room.clone(), 16).unwrap();
        let mut r = rng(4);
        for _ in 0..2000 {
            let goals = s.reset(&mut r).goals.clone();
            assert_eq!(goals.len(), 16);
            assert!(goals.iter().all(|g| room.contains(g, spec.goal_margin - 1e-9)));
            assert_eq!(s.step(14.99, &mut r).goals, goals);
            assert_eq!(s.assignment().epoch, 0);
        }
    }

    #[test]
    fn gating_before_hold_time() {
        let (mut spec, room) = defaults();
        spec.kind = ScenarioKind::DynamicGoals;
        spec.hold_time_range = [2.0, 2.0];
        let mut s = Scenario::new(spec, room, 8).unwrap();
        let mut r = rng(5);
        let before = s.reset(&mut r).clone();
        assert_eq!(s.step(1.99, &mut r), &before);
        let after = s.step(2.0, &mut r).clone();
        assert_eq!(after.epoch, 1);
        assert_ne!(after.goals, before.goals);
    }

    #[test]
    fn swap_goals_is_a_permutation() {
        let (mut spec, room) = defaults();
        spec.kind = ScenarioKind::SwapGoals;
        let mut s = Scenario::new(spec, room, 8).unwrap();
        let mut r = rng(6);
        let mut before = s.reset(&mut r).goals.clone();
        let mut after = s.step(100.0, &mut r).goals.clone();
        assert!(s.assignment().epoch >= 1);
        let key = |v: &Vector3<f64>| (v.x.to_bits(), v.y.to_bits(), v.z.to_bits());
        before.sort_by_key(key);
        after.sort_by_key(key);
        assert_eq!(before, after);
    }

    #[test]
    fn rescale_halves_distances() {
        let c = Vector3::new(4.0, 5.0, 6.0);
        let pts = place(ShapeKind::Sphere, 10, 0.5, &c, 0.3, 1.0);
        let half = rescale_about(&pts, &c, 0.5);
        for (a, b) in pts.iter().zip(&half) {
            assert!(((b - c).norm() - 0.5 * (a - c).norm()).abs() < 1e-12);
        }
        let centroid = |p: &[Vector3<f64>]| p.iter().sum::<Vector3<f64>>() / p.len() as f64;
        assert!((centroid(&half) - c - (centroid(&pts) - c) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn shrink_expand_scales_about_center() {
        let (mut spec, room) = defaults();
        spec.kind = ScenarioKind::ShrinkExpand;
        spec.shape_pool = vec![ShapeKind::Circle];
        spec.hold_time_range = [1.0, 1.0];
        let mut s = Scenario::new(spec, room, 6).unwrap();
        let mut r = rng(7);
        let before = s.reset(&mut r).goals.clone();
        let c = before.iter().sum::<Vector3<f64>>() / 6.0;
        let after = s.step(1.0, &mut r).goals.clone();
        let ratio = (after[0] - c).norm() / (before[0] - c).norm();
        for (a, b) in before.iter().zip(&after) {
            assert!(((b - c).norm() - ratio * (a - c).norm()).abs() < 1e-12);
        }
        let c2 = after.iter().sum::<Vector3<f64>>() / 6.0;
        assert!((c - c2).norm() < 1e-12);
    }

    #[test]
    fn swarm_vs_swarm_swaps_group_centers() {
        let (mut spec, room) = defaults();
        spec.kind = ScenarioKind::SwarmVsSwarm;
        spec.shape_pool = vec![ShapeKind::Circle];
        spec.hold_time_range = [3.0, 3.0];
        let mut s = Scenario::new(spec, room, 8).unwrap();
        let mut r = rng(8);
        let before = s.reset(&mut r).goals.clone();
        let centroid = |p: &[Vector3<f64>]| p.iter().sum::<Vector3<f64>>() / p.len() as f64;
        let (a0, b0) = (centroid(&before[..4]), centroid(&before[4..]));
        let after = s.step(3.0, &mut r).goals.clone();
        let (a1, b1) = (centroid(&after[..4]), centroid(&after[4..]));
        assert!((a1 - b0).norm() < 1e-9 && (b1 - a0).norm() < 1e-9);
        assert!((a0 + b0 - SwarmEnvConfig::default().room.center() * 2.0).norm() < 1e-9);
    }

    fn liss() -> LissajousParams {
        LissajousParams {
            center: None,
            amplitude: [2.0, 1.5, 1.0],
            frequency: [0.6, 0.4, 0.5],
            phase: [0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn lissajous_examples() {
        let c = Vector3::new(5.0, 5.0, 5.0);
        assert_eq!(lissajous_goal(0.0, &c, &liss()), c);
        let mut line = liss();
        line.amplitude = [2.0, 0.0, 0.0];
        for k in 0..100 {
            let g = lissajous_goal(k as f64 * 0.37, &c, &line);
            assert_eq!((g.y, g.z), (5.0, 5.0));
        }
        let p = liss();
        for k in 0..100_000 {
            let off = lissajous_goal(k as f64 * 1e-3, &c, &p) - c;
            for i in 0..3 {
                assert!(off[i].abs() <= p.amplitude[i]);
            }
        }
    }

    #[test]
    fn lissajous_leaving_room_is_rejected() {
        let (mut spec, room) = defaults();
        spec.kind = ScenarioKind::PursuitLissajous;
        spec.lissajous.amplitude = [6.0, 1.0, 1.0];
        assert!(Scenario::new(spec, room, 1).is_err());
    }

    #[test]
    fn bezier_hits_waypoints_and_is_c1() {
        let wps = vec![
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(4.0, 2.0, 3.0),
            Vector3::new(2.0, 6.0, 2.0),
            Vector3::new(7.0, 5.0, 4.0),
        ];
        let path = BezierPath::new(wps.clone(), 2.0);
        for (i, w) in wps.iter().enumerate() {
            assert_eq!(path.position(2.0 * i as f64), *w);
        }
        let h = 1e-6;
        for j in 1..3 {
            let t = 2.0 * j as f64;
            let left = (path.position(t) - path.position(t - h)) / h;
            let right = (path.position(t + h) - path.position(t)) / h;
            assert!((left - right).norm() / left.norm() < 1e-5, "join {j}");
        }
    }

    #[test]
    fn bezier_two_waypoints_stay_on_line() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let b = Vector3::new(4.0, 0.0, 5.0);
        let path = BezierPath::new(vec![a, b], 1.0);
        let dir = (b - a).normalize();
        for k in 0..=100 {
            let p = path.position(k as f64 / 100.0) - a;
            assert!((p - dir * p.dot(&dir)).norm() < 1e-12);
        }
    }

    #[test]
    fn pursuit_goals_are_continuous_and_in_room() {
        let (mut spec, room) = defaults();
        for kind in [ScenarioKind::PursuitLissajous, ScenarioKind::PursuitBezier] {
            spec.kind = kind;
            let mut s = Scenario::new(spec.clone(), room.clone(), 3).unwrap();
            let mut r = rng(10);
            for _ in 0..20 {
                let mut prev = s.reset(&mut r).goals[0];
                let vmax = s.max_goal_speed();
                let dt = 0.01;
                for k in 1..=1500 {
                    let g = s.step(k as f64 * dt, &mut r).goals.clone();
                    assert!(g.iter().all(|x| *x == g[0]));
                    assert!(room.contains(&g[0], spec.goal_margin - 1e-9), "{kind:?} {:?}", g[0]);
                    assert!((g[0] - prev).norm() <= vmax * dt + 1e-12);
                    prev = g[0];
                }
            }
        }
    }

    #[test]
    fn scenario_kind_names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("pursuit".parse::<ScenarioKind>().is_err());
    }
}
