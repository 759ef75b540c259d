//! Support phases, the robot model, and the action/observation maps.
//!
//! A [`SupportPhase`] is the planner's whole state: base attitude, position and
//! velocity, the four world-frame foothold positions, which of them are closed,
//! and the phase timing pair (time since the previous contact switch, time to
//! the next one). Foot order is LF, RF, LH, RH throughout.
//!
//! [`apply_action`] maps a bounded 18-dimensional action to a candidate
//! successor phase; [`build_observation`] projects a phase into the planar,
//! yaw-aligned observation the planner consumes. Planar transforms use the
//! yaw-projected base frame; roll and pitch enter only through attitude
//! interpolation inside the feasibility check.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terrain::{HeightMap, LocalGrid, TerrainError};

/// Number of legs; arrays indexed LF=0, RF=1, LH=2, RH=3.
pub const N_FEET: usize = 4;

/// Yaw increment per unit of the rotation action, radians.
pub const YAW_STEP_RAD: f64 = std::f64::consts::PI / 8.0;
/// Phase timings map affinely from the timing action: `1.0 + 0.9 * a_t`.
pub const TIMING_BASE_S: f64 = 1.0;
pub const TIMING_SPAN_S: f64 = 0.9;

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error("invalid phase: {0}")]
    InvalidPhase(String),
    #[error("goal coincides with the base position; bearing is undefined")]
    DegenerateGoal,
}

/// Axis-aligned box of admissible foot-minus-base offsets for one leg,
/// expressed in the base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl LegBox {
    pub fn contains(&self, v: &Vector3<f64>) -> bool {
        (0..3).all(|i| v[i] >= self.min[i] && v[i] <= self.max[i])
    }
}

/// Mass, geometry, and contact parameters. Everything here is configuration;
/// the defaults describe a mid-size quadruped.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    /// Total mass, kg.
    pub mass: f64,
    /// Gravity vector, m/s^2.
    pub gravity: Vector3<f64>,
    /// Standing CoM height above the lowest foothold, m.
    pub com_height: f64,
    /// Per-leg nominal foothold offsets from the base, base-frame xy, m.
    pub nominal_footholds: [Vector2<f64>; N_FEET],
    /// Per-leg reachability boxes (foot minus base, base frame), m.
    pub kinematic_box: [LegBox; N_FEET],
    /// Contact friction coefficient.
    pub friction: f64,
    /// Per-contact normal force cap, N.
    pub max_normal_force: f64,
    /// Scale from unit action to base / foot planar displacement, m.
    pub max_step: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        let nominal = [
            Vector2::new(0.33, 0.22),
            Vector2::new(0.33, -0.22),
            Vector2::new(-0.33, 0.22),
            Vector2::new(-0.33, -0.22),
        ];
        let kinematic_box = nominal.map(|n| LegBox {
            min: Vector3::new(n.x - 0.28, n.y - 0.18, -0.60),
            max: Vector3::new(n.x + 0.28, n.y + 0.18, -0.30),
        });
        RobotModel {
            mass: 30.0,
            gravity: Vector3::new(0.0, 0.0, -9.81),
            com_height: 0.45,
            nominal_footholds: nominal,
            kinematic_box,
            friction: 0.7,
            max_normal_force: 1000.0,
            max_step: 0.3,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), PhaseError> {
        let bad = |msg: String| Err(PhaseError::InvalidPhase(msg));
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return bad(format!("mass must be > 0, got {}", self.mass));
        }
        if !self.gravity.iter().all(|v| v.is_finite()) {
            return bad("gravity must be finite".into());
        }
        if !(self.com_height.is_finite() && self.com_height > 0.0) {
            return bad(format!("com_height must be > 0, got {}", self.com_height));
        }
        if !(self.friction.is_finite() && self.friction > 0.0) {
            return bad(format!("friction must be > 0, got {}", self.friction));
        }
        if !(self.max_normal_force.is_finite() && self.max_normal_force > 0.0) {
            return bad(format!(
                "max_normal_force must be > 0, got {}",
                self.max_normal_force
            ));
        }
        if !(self.max_step.is_finite() && self.max_step > 0.0) {
            return bad(format!("max_step must be > 0, got {}", self.max_step));
        }
        for (k, b) in self.kinematic_box.iter().enumerate() {
            if (0..3).any(|i| !(b.min[i].is_finite() && b.max[i].is_finite() && b.min[i] < b.max[i]))
            {
                return bad(format!("kinematic_box[{k}] must have min < max per axis"));
            }
        }
        Ok(())
    }
}

/// Planner state snapshot between two contact switches.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportPhase {
    /// Base attitude R_B (world from base).
    pub rotation: Rotation3<f64>,
    /// Base (CoM) position, world, m.
    pub base_position: Vector3<f64>,
    /// Base linear velocity, world, m/s.
    pub base_velocity: Vector3<f64>,
    /// Foothold positions, world, m. Open feet keep a bookkeeping position.
    pub feet: [Vector3<f64>; N_FEET],
    /// Contact flags; 3 or 4 must be closed.
    pub contacts: [bool; N_FEET],
    /// Time from the previous contact switch to this phase's decision
    /// instant, s.
    pub time_elapsed: f64,
    /// Time from this phase's decision instant to the next contact switch,
    /// s. Each decision schedules the switch out of the support it stands
    /// on, so the value a phase is created with is a default that the next
    /// decision replaces.
    pub time_to_switch: f64,
}

impl SupportPhase {
    pub fn yaw(&self) -> f64 {
        let m = self.rotation.matrix();
        m[(1, 0)].atan2(m[(0, 0)])
    }

    pub fn closed_count(&self) -> usize {
        self.contacts.iter().filter(|c| **c).count()
    }

    /// Structural validity: attitude orthonormality within 1e-9, 3 or 4 closed
    /// contacts, positive finite timings, finite coordinates, and (when a map
    /// is supplied) closed feet resting on the terrain within 1e-6.
    pub fn validate(&self, map: Option<&HeightMap>) -> Result<(), PhaseError> {
        let bad = |msg: String| Err(PhaseError::InvalidPhase(msg));
        let m = self.rotation.matrix();
        let gram = m.transpose() * m - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > 1e-9) {
            return bad("rotation is not orthonormal within 1e-9".into());
        }
        if m.determinant() < 0.0 {
            return bad("rotation has negative determinant".into());
        }
        let n = self.closed_count();
        if !(3..=4).contains(&n) {
            return bad(format!("{n} closed contacts; need 3 or 4"));
        }
        for (name, t) in [
            ("time_elapsed", self.time_elapsed),
            ("time_to_switch", self.time_to_switch),
        ] {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {t}"));
            }
        }
        let finite = self.base_position.iter().all(|v| v.is_finite())
            && self.base_velocity.iter().all(|v| v.is_finite())
            && self.feet.iter().all(|f| f.iter().all(|v| v.is_finite()));
        if !finite {
            return bad("positions and velocities must be finite".into());
        }
        if let Some(map) = map {
            for (k, foot) in self.feet.iter().enumerate() {
                if !self.contacts[k] {
                    continue;
                }
                let ground = map.elevation_at([foot.x, foot.y])?;
                if (foot.z - ground).abs() > 1e-6 {
                    return bad(format!(
                        "closed foot {k} floats {} m off the terrain",
                        foot.z - ground
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Bounded planner action; every component lives in [-1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerAction {
    /// Yaw increment, units of pi/8.
    pub a_r: f64,
    /// Base planar displacement, units of max_step, base frame.
    pub a_b: [f64; 2],
    /// Target base planar velocity, m/s, base frame.
    pub a_v: [f64; 2],
    /// Per-foot planar offsets from the nominal foothold, units of max_step.
    pub a_f: [[f64; 2]; N_FEET],
    /// Contact code selector; see [`decode_contacts`].
    pub a_c: [f64; 3],
    /// Phase timing selector: timings = 1.0 + 0.9 * a_t.
    pub a_t: [f64; 2],
}

impl PlannerAction {
    pub const DIM: usize = 18;

    pub fn zero() -> Self {
        PlannerAction {
            a_r: 0.0,
            a_b: [0.0; 2],
            a_v: [0.0; 2],
            a_f: [[0.0; 2]; N_FEET],
            a_c: [0.0; 3],
            a_t: [0.0; 2],
        }
    }

    pub fn components(&self) -> [f64; Self::DIM] {
        let mut out = [0.0; Self::DIM];
        let mut i = 0;
        let mut push = |v: f64| {
            out[i] = v;
            i += 1;
        };
        push(self.a_r);
        self.a_b.iter().for_each(|&v| push(v));
        self.a_v.iter().for_each(|&v| push(v));
        self.a_f.iter().flatten().for_each(|&v| push(v));
        self.a_c.iter().for_each(|&v| push(v));
        self.a_t.iter().for_each(|&v| push(v));
        out
    }

    /// True when every component is finite and inside the [-1, 1] box.
    pub fn in_bounds(&self) -> bool {
        self.components()
            .iter()
            .all(|v| v.is_finite() && v.abs() <= 1.0)
    }
}

/// Maps the 3-component contact action to closed-contact flags.
///
/// Components binarize as `>= 0.0 -> 1`, forming a 3-bit code (first component
/// is the high bit). Codes 0..=3 lift exactly foot LF, RF, LH, RH respectively;
/// codes 4..=7 close all four. Every reachable support has 3 or 4 contacts.
pub fn decode_contacts(a_c: [f64; 3]) -> [bool; N_FEET] {
    let bit = |v: f64| usize::from(v >= 0.0);
    let code = 4 * bit(a_c[0]) + 2 * bit(a_c[1]) + bit(a_c[2]);
    let mut contacts = [true; N_FEET];
    if code < N_FEET {
        contacts[code] = false;
    }
    contacts
}

fn yaw_rotation(yaw: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
}

fn rot2(yaw: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = yaw.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Builds the candidate successor phase for a bounded action.
///
/// Mechanics: yaw steps by `pi/8 * a_r`; the base translates by
/// `max_step * a_b` in the new base frame; planar velocity is set to `a_v` in
/// the new base frame; contacts come from [`decode_contacts`]; feet closed in
/// both phases keep their world position bit-for-bit, every other foot is
/// placed at `nominal + max_step * a_f` around the new base pose with z
/// snapped to the terrain; base z is the lowest candidate foothold plus
/// `com_height`; timings are `1.0 + 0.9 * a_t`, where the first entry is the
/// candidate's settling time after touchdown and the second schedules the
/// switch out of the source support (carried on the candidate as the default
/// for its own outgoing switch). Foot placements that leave the map
/// footprint propagate the terrain error.
pub fn apply_action(
    phase: &SupportPhase,
    action: &PlannerAction,
    map: &HeightMap,
    model: &RobotModel,
) -> Result<SupportPhase, PhaseError> {
    if !action.in_bounds() {
        return Err(PhaseError::InvalidPhase(
            "action components must be finite and within [-1, 1]".into(),
        ));
    }
    let rotation = yaw_rotation(YAW_STEP_RAD * action.a_r) * phase.rotation;
    let yaw = {
        let m = rotation.matrix();
        m[(1, 0)].atan2(m[(0, 0)])
    };
    let base_xy = Vector2::new(phase.base_position.x, phase.base_position.y)
        + rot2(yaw, Vector2::new(action.a_b[0], action.a_b[1]) * model.max_step);
    let v_xy = rot2(yaw, Vector2::new(action.a_v[0], action.a_v[1]));
    let contacts = decode_contacts(action.a_c);

    let mut feet = phase.feet;
    for k in 0..N_FEET {
        if phase.contacts[k] && contacts[k] {
            continue; // stance foot: world position carries over unchanged
        }
        let offset = model.nominal_footholds[k]
            + Vector2::new(action.a_f[k][0], action.a_f[k][1]) * model.max_step;
        let xy = base_xy + rot2(yaw, offset);
        let z = map.elevation_at([xy.x, xy.y])?;
        feet[k] = Vector3::new(xy.x, xy.y, z);
    }
    let lowest = feet.iter().map(|f| f.z).fold(f64::INFINITY, f64::min);

    Ok(SupportPhase {
        rotation,
        base_position: Vector3::new(base_xy.x, base_xy.y, lowest + model.com_height),
        base_velocity: Vector3::new(v_xy.x, v_xy.y, 0.0),
        feet,
        contacts,
        time_elapsed: TIMING_BASE_S + TIMING_SPAN_S * action.a_t[0],
        time_to_switch: TIMING_BASE_S + TIMING_SPAN_S * action.a_t[1],
    })
}

/// Planar, yaw-aligned observation of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Negated bearing of the goal in the base frame, radians, in [-pi, pi].
    pub o_r: f64,
    /// Base planar velocity, base frame.
    pub o_v: [f64; 2],
    /// Per-foot planar offsets from the nominal foothold, base frame.
    pub o_f: [[f64; 2]; N_FEET],
    /// Contact flags mapped {0,1} -> {-1,+1}.
    pub o_c: [f64; N_FEET],
    /// Robocentric elevation window relative to base height.
    pub o_m: LocalGrid,
}

/// Projects a phase into the observation space. The goal must be distinct
/// from the base position; the elevation window must fit the map.
pub fn build_observation(
    phase: &SupportPhase,
    map: &HeightMap,
    goal_xy: Vector2<f64>,
    model: &RobotModel,
) -> Result<Observation, PhaseError> {
    let yaw = phase.yaw();
    let to_base = |v: Vector2<f64>| rot2(-yaw, v);
    let base_xy = Vector2::new(phase.base_position.x, phase.base_position.y);

    let rel_goal = to_base(goal_xy - base_xy);
    if rel_goal.norm() < 1e-12 {
        return Err(PhaseError::DegenerateGoal);
    }
    let o_r = -rel_goal.y.atan2(rel_goal.x);

    let v = to_base(Vector2::new(phase.base_velocity.x, phase.base_velocity.y));
    let mut o_f = [[0.0; 2]; N_FEET];
    for k in 0..N_FEET {
        let rel = to_base(Vector2::new(
            phase.feet[k].x - phase.base_position.x,
            phase.feet[k].y - phase.base_position.y,
        )) - model.nominal_footholds[k];
        o_f[k] = [rel.x, rel.y];
    }
    let o_c = phase.contacts.map(|c| if c { 1.0 } else { -1.0 });
    let o_m = map.local_heightmap([base_xy.x, base_xy.y], yaw, phase.base_position.z)?;

    Ok(Observation {
        o_r,
        o_v: [v.x, v.y],
        o_f,
        o_c,
        o_m,
    })
}

/// `count` attitudes from `from` to `to` along the geodesic (constant-axis
/// relative rotation). Endpoints are returned exactly; `count == 1` yields
/// just `from`.
pub fn interpolate_attitudes(
    from: &Rotation3<f64>,
    to: &Rotation3<f64>,
    count: usize,
) -> Vec<Rotation3<f64>> {
    assert!(count >= 1, "need at least one sample");
    if count == 1 {
        return vec![*from];
    }
    let omega = (from.inverse() * to).scaled_axis();
    let mut out = Vec::with_capacity(count);
    out.push(*from);
    for i in 1..count - 1 {
        let s = i as f64 / (count as f64 - 1.0);
        out.push(from * Rotation3::from_scaled_axis(omega * s));
    }
    out.push(*to);
    out
}

/// Standing phase used by resets and tests: feet at the nominal offsets around
/// `base_xy` (z snapped to the terrain), all contacts closed, base at
/// `com_height` above the lowest foothold, zero velocity, unit timings.
pub fn standing_phase(
    base_xy: Vector2<f64>,
    yaw: f64,
    map: &HeightMap,
    model: &RobotModel,
) -> Result<SupportPhase, PhaseError> {
    let rotation = yaw_rotation(yaw);
    let mut feet = [Vector3::zeros(); N_FEET];
    for k in 0..N_FEET {
        let xy = base_xy + rot2(yaw, model.nominal_footholds[k]);
        let z = map.elevation_at([xy.x, xy.y])?;
        feet[k] = Vector3::new(xy.x, xy.y, z);
    }
    let lowest = feet.iter().map(|f| f.z).fold(f64::INFINITY, f64::min);
    Ok(SupportPhase {
        rotation,
        base_position: Vector3::new(base_xy.x, base_xy.y, lowest + model.com_height),
        base_velocity: Vector3::zeros(),
        feet,
        contacts: [true; N_FEET],
        time_elapsed: 1.0,
        time_to_switch: 1.0,
    })
}
