//! The gait-planning decision process.
//!
//! State is a support phase plus a goal. A step decodes the action into a
//! candidate phase, screens it (foothold safety, base clearance, transition
//! feasibility), and either commits it with a shaped reward or terminates
//! the episode with a failure penalty, leaving the state frozen. Episodes
//! also end, without penalty, on reaching the goal or at the step cap.

use std::sync::Arc;

use nalgebra::Vector2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{FeasibilityConfig, FeasibilityError, TransitionProblem};
use crate::phase::{
    apply_action, build_observation, Observation, PhaseError, PlannerAction, RobotModel,
    SupportPhase, N_FEET,
};
use crate::terrain::{HeightMap, Rect, TerrainError, TerrainScenario};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("could not draw a valid start for {scenario:?} within {budget} attempts")]
    ResetBudgetExhausted { scenario: String, budget: usize },
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("episode already ended; reset before stepping again")]
    DeadState,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Phase(PhaseError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

/// Why an episode step ended, if it did. Failure reasons are checked in the
/// order footholds, base collision, feasibility; boundary escapes and solver
/// breakdowns get their own names so they are never mistaken for physics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    None,
    Footholds,
    BaseCollision,
    Infeasible,
    OutOfBounds,
    SolverFailure,
}

impl TerminationReason {
    pub fn is_failure(self) -> bool {
        self != TerminationReason::None
    }

    /// Stable lower-case name, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::None => "none",
            TerminationReason::Footholds => "footholds",
            TerminationReason::BaseCollision => "base_collision",
            TerminationReason::Infeasible => "infeasible",
            TerminationReason::OutOfBounds => "out_of_bounds",
            TerminationReason::SolverFailure => "solver_failure",
        }
    }
}

/// Multiplicative and penalty pieces of the step reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    /// Progress: weighted drop in distance between the goal and the average
    /// closed-foothold position.
    pub r_p: f64,
    /// Heading alignment with the goal, in [0, 1].
    pub r_h: f64,
    /// Foothold centering near the nominal offsets, in [0, 1].
    pub r_k: f64,
    /// Stance-persistence penalty (encourages actually stepping).
    pub r_c: f64,
}

impl RewardTerms {
    pub fn reward(&self) -> f64 {
        self.r_p * self.r_h * self.r_h * self.r_k - self.r_c
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Observation of the committed phase, or the cached last observation
    /// when the step failed and the state stayed frozen.
    pub observation: Observation,
    pub reward: f64,
    /// Absent when the candidate was rejected (no committed transition to
    /// score).
    pub terms: Option<RewardTerms>,
    pub terminated: bool,
    pub reason: TerminationReason,
    pub success: bool,
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    /// Episode succeeds when the base lands within this of the goal.
    pub success_radius: f64,
    pub max_steps: u32,
    /// Reset draws before giving up on a scenario.
    pub reset_budget: usize,
    /// Initial yaw is uniform within this of facing the goal.
    pub yaw_jitter: f64,
    /// Initial feet are uniform within this of the nominal offsets, per axis.
    pub foot_jitter: f64,
    pub w_progress: f64,
    pub w_centering: f64,
    pub w_stance: f64,
    pub failure_reward: f64,
    /// Foothold safety probes: this many points on a circle of the given
    /// radius, failing beyond the elevation threshold.
    pub probe_count: usize,
    pub probe_radius: f64,
    pub probe_threshold: f64,
    /// Base collision: a grid under this yaw-aligned footprint must stay at
    /// least `base_clearance` below the base height.
    pub base_footprint: [f64; 2],
    pub base_clearance: f64,
    pub base_probe_spacing: f64,
    pub feasibility: FeasibilityConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            success_radius: 0.5,
            max_steps: 50,
            reset_budget: 1000,
            yaw_jitter: std::f64::consts::FRAC_PI_4,
            foot_jitter: 0.05,
            w_progress: 25.0,
            w_centering: 80.0,
            w_stance: 0.01,
            failure_reward: -1.0,
            probe_count: 8,
            probe_radius: 0.05,
            probe_threshold: 0.01,
            base_footprint: [0.6, 0.3],
            base_clearance: 0.05,
            base_probe_spacing: 0.05,
            feasibility: FeasibilityConfig::default(),
        }
    }
}

/// Live episode state.
#[derive(Clone, Debug)]
pub struct PlannerState {
    pub phase: SupportPhase,
    pub goal_xy: Vector2<f64>,
    pub step_count: u32,
    /// Consecutive steps each foot has stayed in contact.
    pub stance_counters: [u32; N_FEET],
    pub live: bool,
}

#[derive(Clone)]
pub struct GaitEnv {
    map: Arc<HeightMap>,
    model: Arc<RobotModel>,
    config: EnvConfig,
    spawn_region: Rect,
    goal_region: Rect,
    label: String,
    state: Option<PlannerState>,
    last_obs: Option<Observation>,
}

impl GaitEnv {
    pub fn new(
        map: Arc<HeightMap>,
        model: Arc<RobotModel>,
        config: EnvConfig,
        spawn_region: Rect,
        goal_region: Rect,
        label: impl Into<String>,
    ) -> Self {
        GaitEnv {
            map,
            model,
            config,
            spawn_region,
            goal_region,
            label: label.into(),
            state: None,
            last_obs: None,
        }
    }

    /// Environment over a generated scenario, using its spawn/goal regions.
    pub fn from_scenario(
        scenario: &TerrainScenario,
        map: Arc<HeightMap>,
        model: Arc<RobotModel>,
        config: EnvConfig,
    ) -> Self {
        GaitEnv::new(
            map,
            model,
            config,
            scenario.spawn_region,
            scenario.goal_region,
            scenario.label(),
        )
    }

    pub fn map(&self) -> &HeightMap {
        &self.map
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn state(&self) -> Option<&PlannerState> {
        self.state.as_ref()
    }

    pub fn last_observation(&self) -> Option<&Observation> {
        self.last_obs.as_ref()
    }

    pub fn is_live(&self) -> bool {
        self.state.as_ref().is_some_and(|s| s.live)
    }

    /// Draws starts and goals until none of the screening checks fires at
    /// time zero, then installs the episode. Deterministic per seed.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..self.config.reset_budget {
            let Some((phase, goal_xy)) = self.try_draw(&mut rng)? else {
                continue;
            };
            let obs = match build_observation(&phase, &self.map, goal_xy, &self.model) {
                Ok(obs) => obs,
                Err(PhaseError::Terrain(_)) | Err(PhaseError::DegenerateGoal) => continue,
                Err(e) => return Err(EnvError::Phase(e)),
            };
            self.state = Some(PlannerState {
                phase,
                goal_xy,
                step_count: 0,
                stance_counters: [0; N_FEET],
                live: true,
            });
            self.last_obs = Some(obs.clone());
            return Ok(obs);
        }
        Err(EnvError::ResetBudgetExhausted {
            scenario: self.label.clone(),
            budget: self.config.reset_budget,
        })
    }

    /// One reset attempt: a start pose and a goal, or None when the draw
    /// lands somewhere unusable and should simply be retried.
    fn try_draw(&self, rng: &mut ChaCha8Rng) -> Result<Option<(SupportPhase, Vector2<f64>)>, EnvError> {
        let start = self.spawn_region.sample(rng);
        let goal = self.goal_region.sample(rng);
        let goal_xy = Vector2::new(goal[0], goal[1]);
        let dist = (goal_xy - Vector2::new(start[0], start[1])).norm();
        if dist <= self.config.success_radius {
            return Ok(None); // already at the goal, nothing to plan
        }

        let facing = (goal[1] - start[1]).atan2(goal[0] - start[0]);
        let yaw = facing + rng.gen_range(-self.config.yaw_jitter..=self.config.yaw_jitter);
        let jitter: [[f64; 2]; N_FEET] = std::array::from_fn(|_| {
            [
                rng.gen_range(-self.config.foot_jitter..=self.config.foot_jitter),
                rng.gen_range(-self.config.foot_jitter..=self.config.foot_jitter),
            ]
        });

        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), yaw);
        let mut feet = [nalgebra::Vector3::zeros(); N_FEET];
        let mut lowest = f64::INFINITY;
        for i in 0..N_FEET {
            let nom = self.model.nominal_footholds[i];
            let local = nalgebra::Vector3::new(nom.x + jitter[i][0], nom.y + jitter[i][1], 0.0);
            let world = rot * local;
            let x = start[0] + world.x;
            let y = start[1] + world.y;
            let z = match self.map.elevation_at([x, y]) {
                Ok(z) => z,
                Err(TerrainError::OutOfFootprint { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            feet[i] = nalgebra::Vector3::new(x, y, z);
            lowest = lowest.min(z);
        }
        let phase = SupportPhase {
            rotation: rot,
            base_position: nalgebra::Vector3::new(start[0], start[1], lowest + self.model.com_height),
            base_velocity: nalgebra::Vector3::zeros(),
            feet,
            contacts: [true; N_FEET],
            time_elapsed: 1.0,
            time_to_switch: 1.0,
        };

        // The start must survive its own screening: standing still must be
        // a viable transition.
        match check_terminations(&phase, &phase, &self.map, &self.model, &self.config)? {
            TerminationReason::None => Ok(Some((phase, goal_xy))),
            _ => Ok(None),
        }
    }

    /// Decode, screen, commit (or freeze), score.
    pub fn step(&mut self, action: &PlannerAction) -> Result<StepOutcome, EnvError> {
        let GaitEnv {
            map,
            model,
            config,
            state,
            last_obs,
            ..
        } = self;
        let Some(state) = state.as_mut() else {
            return Err(EnvError::NotReset);
        };
        if !state.live {
            return Err(EnvError::DeadState);
        }

        let candidate = match apply_action(&state.phase, action, map, model) {
            Ok(c) => c,
            Err(PhaseError::Terrain(TerrainError::OutOfFootprint { .. })) => {
                return Ok(Self::fail(state, last_obs, config, TerminationReason::OutOfBounds));
            }
            Err(PhaseError::InvalidPhase(msg)) => return Err(EnvError::InvalidAction(msg)),
            Err(e) => return Err(EnvError::Phase(e)),
        };

        // The action's timing pair spans this whole transition: it schedules
        // the switch out of the current support and the settling time after
        // touchdown, so the screening source carries the freshly scheduled
        // switch delay rather than the stale one from its own creation.
        let mut source = state.phase.clone();
        source.time_to_switch = candidate.time_to_switch;
        let reason = check_terminations(&source, &candidate, map, model, config)?;
        if reason.is_failure() {
            return Ok(Self::fail(state, last_obs, config, reason));
        }

        // The candidate must also be observable; escaping the map's usable
        // window ends the episode rather than committing a blind state.
        let obs = match build_observation(&candidate, map, state.goal_xy, model) {
            Ok(obs) => Some(obs),
            Err(PhaseError::Terrain(TerrainError::OutOfFootprint { .. })) => None,
            Err(PhaseError::DegenerateGoal) => None,
            Err(e) => return Err(EnvError::Phase(e)),
        };
        let dist = (state.goal_xy
            - Vector2::new(candidate.base_position.x, candidate.base_position.y))
        .norm();
        let success = dist < config.success_radius;
        let Some(obs) = obs.or_else(|| {
            // A base landing exactly on the goal is still a success even
            // though the bearing is undefined there.
            success.then(|| last_obs.clone()).flatten()
        }) else {
            return Ok(Self::fail(state, last_obs, config, TerminationReason::OutOfBounds));
        };

        // Commit: update counters, then score the transition.
        for k in 0..N_FEET {
            state.stance_counters[k] = if candidate.contacts[k] {
                state.stance_counters[k] + 1
            } else {
                0
            };
        }
        let terms = reward_terms(
            &state.phase,
            &candidate,
            state.goal_xy,
            &state.stance_counters,
            model,
            config,
        );
        state.phase = candidate;
        state.step_count += 1;
        let terminated = success || state.step_count >= config.max_steps;
        state.live = !terminated;
        *last_obs = Some(obs.clone());

        Ok(StepOutcome {
            observation: obs,
            reward: terms.reward(),
            terms: Some(terms),
            terminated,
            reason: TerminationReason::None,
            success,
        })
    }

    fn fail(
        state: &mut PlannerState,
        last_obs: &Option<Observation>,
        config: &EnvConfig,
        reason: TerminationReason,
    ) -> StepOutcome {
        state.live = false;
        StepOutcome {
            observation: last_obs
                .clone()
                .expect("an episode in progress always has a prior observation"),
            reward: config.failure_reward,
            terms: None,
            terminated: true,
            reason,
            success: false,
        }
    }
}

/// Screens a candidate transition: foothold safety, then base clearance,
/// then transition feasibility. Boundary escapes during probing are their
/// own reason; a feasibility solver breakdown likewise, so it can never be
/// mistaken for a physical rejection.
pub fn check_terminations(
    source: &SupportPhase,
    candidate: &SupportPhase,
    map: &HeightMap,
    model: &RobotModel,
    config: &EnvConfig,
) -> Result<TerminationReason, EnvError> {
    match footholds_safe(candidate, map, config) {
        Ok(true) => {}
        Ok(false) => return Ok(TerminationReason::Footholds),
        Err(TerrainError::OutOfFootprint { .. }) => return Ok(TerminationReason::OutOfBounds),
        Err(e) => return Err(e.into()),
    }
    match base_clear(candidate, map, config) {
        Ok(true) => {}
        Ok(false) => return Ok(TerminationReason::BaseCollision),
        Err(TerrainError::OutOfFootprint { .. }) => return Ok(TerminationReason::OutOfBounds),
        Err(e) => return Err(e.into()),
    }
    let mut problem = TransitionProblem::new(source, candidate, model);
    problem.config = config.feasibility.clone();
    match problem.solve() {
        Ok(true) => Ok(TerminationReason::None),
        Ok(false) => Ok(TerminationReason::Infeasible),
        Err(FeasibilityError::Solver(_)) => Ok(TerminationReason::SolverFailure),
        Err(e) => Err(e.into()),
    }
}

/// Every closed foothold must sit on locally flat ground: probes on a small
/// circle around it may not differ from its elevation beyond the threshold.
/// Catches both obstacles and gaps near an edge.
fn footholds_safe(
    candidate: &SupportPhase,
    map: &HeightMap,
    config: &EnvConfig,
) -> Result<bool, TerrainError> {
    for i in 0..N_FEET {
        if !candidate.contacts[i] {
            continue;
        }
        let foot = candidate.feet[i];
        let here = map.elevation_at([foot.x, foot.y])?;
        for p in 0..config.probe_count {
            let angle = 2.0 * std::f64::consts::PI * p as f64 / config.probe_count as f64;
            let probe = [
                foot.x + config.probe_radius * angle.cos(),
                foot.y + config.probe_radius * angle.sin(),
            ];
            if (map.elevation_at(probe)? - here).abs() > config.probe_threshold {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Terrain under the yaw-aligned base footprint must stay below the base by
/// at least the clearance, sampled on a regular grid.
fn base_clear(
    candidate: &SupportPhase,
    map: &HeightMap,
    config: &EnvConfig,
) -> Result<bool, TerrainError> {
    let yaw = candidate.yaw();
    let (half_x, half_y) = (config.base_footprint[0] / 2.0, config.base_footprint[1] / 2.0);
    let steps = |half: f64| (2.0 * half / config.base_probe_spacing).ceil() as usize;
    let (nx, ny) = (steps(half_x), steps(half_y));
    let limit = candidate.base_position.z - config.base_clearance;
    for ix in 0..=nx {
        for iy in 0..=ny {
            let lx = -half_x + 2.0 * half_x * ix as f64 / nx as f64;
            let ly = -half_y + 2.0 * half_y * iy as f64 / ny as f64;
            let wx = candidate.base_position.x + lx * yaw.cos() - ly * yaw.sin();
            let wy = candidate.base_position.y + lx * yaw.sin() + ly * yaw.cos();
            if map.elevation_at([wx, wy])? > limit {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Shaped reward for a committed transition, with the counters already
/// advanced to the candidate's stance.
pub fn reward_terms(
    source: &SupportPhase,
    candidate: &SupportPhase,
    goal_xy: Vector2<f64>,
    stance_counters: &[u32; N_FEET],
    model: &RobotModel,
    config: &EnvConfig,
) -> RewardTerms {
    // Progress compares the goal against the average closed-foothold
    // position before and after; averaging keeps the quantity on the goal's
    // own scale and continuous across 3-to-4-contact changes, so making or
    // breaking a contact is not itself progress.
    let foothold_centroid = |p: &SupportPhase| {
        let mut s = Vector2::zeros();
        let mut n = 0.0;
        for i in 0..N_FEET {
            if p.contacts[i] {
                s += Vector2::new(p.feet[i].x, p.feet[i].y);
                n += 1.0;
            }
        }
        s / n
    };
    let r_p = config.w_progress * (goal_xy - foothold_centroid(source)).norm()
        - config.w_progress * (goal_xy - foothold_centroid(candidate)).norm();

    // Heading term on the candidate pose.
    let yaw = candidate.yaw();
    let rel = goal_xy - Vector2::new(candidate.base_position.x, candidate.base_position.y);
    let bearing = (-yaw.sin() * rel.x + yaw.cos() * rel.y).atan2(yaw.cos() * rel.x + yaw.sin() * rel.y);
    let r_h = 1.0 - bearing.abs() / std::f64::consts::PI;

    // Centering term over the candidate's foot offsets from nominal.
    let mut spread = 0.0;
    for i in 0..N_FEET {
        let rel = Vector2::new(
            candidate.feet[i].x - candidate.base_position.x,
            candidate.feet[i].y - candidate.base_position.y,
        );
        let local = Vector2::new(
            yaw.cos() * rel.x + yaw.sin() * rel.y,
            -yaw.sin() * rel.x + yaw.cos() * rel.y,
        );
        let off = local - model.nominal_footholds[i];
        spread += off.x.abs().powi(3) + off.y.abs().powi(3);
    }
    let r_k = (1.0 - config.w_centering * spread).max(0.0);

    let r_c = config.w_stance * stance_counters.iter().sum::<u32>() as f64;

    RewardTerms { r_p, r_h, r_k, r_c }
}
