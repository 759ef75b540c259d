//! Receding-horizon random-shooting planner.
//!
//! Stands in for a trained policy: at each decision it samples candidate
//! actions, simulates each on a cloned environment for a short horizon, and
//! commits the first action of the best discounted return. All draws happen
//! on the caller's stream before rollouts fan out to worker threads, and the
//! reduction is index-ordered with ties keeping the lowest index, so a run
//! is a pure function of the seed no matter how it is scheduled.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{check_terminations, EnvConfig, EnvError, GaitEnv, RewardTerms, TerminationReason};
use crate::phase::{PlannerAction, RobotModel, SupportPhase};
use crate::terrain::HeightMap;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("plan does not revalidate at transition {index}: {reason:?}")]
    PlanInvalid { index: usize, reason: TerminationReason },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Shooting-search settings.
#[derive(Clone, Debug)]
pub struct ShootingConfig {
    /// Candidate actions sampled per decision.
    pub n_candidates: usize,
    /// Lookahead depth in environment steps, including the first.
    pub horizon: usize,
    /// Return discount, in [0, 1).
    pub discount: f64,
    /// Seed of the candidate stream.
    pub seed: u64,
    /// Probability that a sampled contact code keeps all four feet down.
    pub stance_bias: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            n_candidates: 256,
            horizon: 2,
            discount: 0.99,
            seed: 0,
            stance_bias: 0.25,
        }
    }
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_candidates < 1 {
            return Err("n_candidates must be >= 1".into());
        }
        if self.horizon < 1 {
            return Err("horizon must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(format!("discount must be in [0, 1), got {}", self.discount));
        }
        if !(0.0..=1.0).contains(&self.stance_bias) {
            return Err(format!("stance_bias must be in [0, 1], got {}", self.stance_bias));
        }
        Ok(())
    }
}

/// A committed episode: the visited support phases (starting with the reset
/// stance) and the reward of each transition between them.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePlan {
    /// Label of the terrain the plan was made on.
    pub terrain: String,
    pub goal: [f64; 2],
    pub seed: u64,
    pub phases: Vec<SupportPhase>,
    /// One reward per committed transition; length is phases.len() - 1.
    pub rewards: Vec<f64>,
}

/// How an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeOutcome {
    Success,
    Failure(TerminationReason),
    StepCap,
}

/// One planner decision as the environment scored it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub action: PlannerAction,
    pub reward: f64,
    pub terms: Option<RewardTerms>,
    pub reason: TerminationReason,
    pub terminated: bool,
    pub success: bool,
}

/// Full record of one episode, including the decision that failed, if any
/// (a failed decision appears here but not in the phase plan).
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub scenario: String,
    pub seed: u64,
    pub goal: [f64; 2],
    pub steps: Vec<EpisodeStep>,
    pub outcome: EpisodeOutcome,
}

/// One action uniform over the box, with the leading contact component
/// sign-forced so full-stance codes appear with exactly `stance_bias`
/// probability. Draw order is fixed; callers own the stream.
fn sample_action(rng: &mut ChaCha8Rng, stance_bias: f64) -> PlannerAction {
    let mut draw = || rng.gen_range(-1.0..=1.0);
    let mut action = PlannerAction {
        a_r: draw(),
        a_b: [draw(), draw()],
        a_v: [draw(), draw()],
        a_f: std::array::from_fn(|_| [draw(), draw()]),
        a_c: [draw(), draw(), draw()],
        a_t: [draw(), draw()],
    };
    if action.a_c[0] == 0.0 {
        action.a_c[0] = 0.5;
    }
    let full_stance = rng.gen_bool(stance_bias);
    action.a_c[0] = if full_stance {
        action.a_c[0].abs()
    } else {
        -action.a_c[0].abs()
    };
    action
}

/// Index of the best score; ties keep the lowest index. Scores are finite
/// by construction (rewards are bounded).
fn best_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// One shooting decision: the first action of the highest-return candidate.
/// Rollouts run on clones; the live environment is never touched.
pub fn propose_action(
    env: &GaitEnv,
    config: &ShootingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlannerAction, PlannerError> {
    config.validate().map_err(PlannerError::InvalidConfig)?;
    if !env.is_live() {
        let e = if env.state().is_none() {
            EnvError::NotReset
        } else {
            EnvError::DeadState
        };
        return Err(e.into());
    }

    // All randomness is drawn up front on the caller's stream so that the
    // parallel rollouts below cannot reorder it: first actions for every
    // candidate, then one continuation seed per candidate when the horizon
    // needs deeper draws.
    let mut firsts = Vec::with_capacity(config.n_candidates);
    for _ in 0..config.n_candidates {
        firsts.push(sample_action(rng, config.stance_bias));
    }
    let continuations: Vec<u64> = if config.horizon > 1 {
        (0..config.n_candidates).map(|_| rng.gen()).collect()
    } else {
        vec![0; config.n_candidates]
    };

    let rollout = |first: &PlannerAction, continuation: u64| -> Result<f64, PlannerError> {
        let mut sim = env.clone();
        let mut stream = ChaCha8Rng::seed_from_u64(continuation);
        let mut action = first.clone();
        let mut score = 0.0;
        let mut weight = 1.0;
        for depth in 0..config.horizon {
            let out = sim.step(&action).map_err(PlannerError::Env)?;
            score += weight * out.reward;
            weight *= config.discount;
            if out.terminated {
                break;
            }
            if depth + 1 < config.horizon {
                action = sample_action(&mut stream, config.stance_bias);
            }
        }
        Ok(score)
    };

    let results: Vec<Result<f64, PlannerError>> = firsts
        .par_iter()
        .zip(continuations.par_iter())
        .map(|(first, &continuation)| rollout(first, continuation))
        .collect();
    let mut scores = Vec::with_capacity(config.n_candidates);
    for r in results {
        scores.push(r?);
    }
    Ok(firsts.swap_remove(best_index(&scores)))
}

/// Rolls the shooting planner until success, failure, or the step cap, on a
/// freshly reset environment. Returns the committed plan and the full log.
pub fn plan_to_goal(
    env: &mut GaitEnv,
    config: &ShootingConfig,
    max_steps: u32,
) -> Result<(PhasePlan, EpisodeLog), PlannerError> {
    config.validate().map_err(PlannerError::InvalidConfig)?;
    let state = env.state().ok_or(EnvError::NotReset)?;
    if !state.live {
        return Err(EnvError::DeadState.into());
    }

    let goal = [state.goal_xy.x, state.goal_xy.y];
    let mut plan = PhasePlan {
        terrain: env.label().to_owned(),
        goal,
        seed: config.seed,
        phases: vec![state.phase.clone()],
        rewards: Vec::new(),
    };
    let mut log = EpisodeLog {
        scenario: env.label().to_owned(),
        seed: config.seed,
        goal,
        steps: Vec::new(),
        outcome: EpisodeOutcome::StepCap,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..max_steps {
        let action = propose_action(env, config, &mut rng)?;
        let out = env.step(&action).map_err(PlannerError::Env)?;
        log.steps.push(EpisodeStep {
            action,
            reward: out.reward,
            terms: out.terms,
            reason: out.reason,
            terminated: out.terminated,
            success: out.success,
        });
        if out.reason.is_failure() {
            log.outcome = EpisodeOutcome::Failure(out.reason);
            return Ok((plan, log));
        }
        plan.phases.push(env.state().expect("live episode").phase.clone());
        plan.rewards.push(out.reward);
        if out.success {
            log.outcome = EpisodeOutcome::Success;
            return Ok((plan, log));
        }
        if out.terminated {
            break;
        }
    }
    Ok((plan, log))
}

/// Re-screens every committed transition of a plan. A plan produced by
/// [`plan_to_goal`] must come back clean; anything else is a planner bug or
/// a tampered file.
pub fn revalidate_plan(
    plan: &PhasePlan,
    map: &HeightMap,
    model: &RobotModel,
    config: &EnvConfig,
) -> Result<(), PlannerError> {
    for (index, pair) in plan.phases.windows(2).enumerate() {
        // Same screening the environment ran when it committed the pair: the
        // later phase's action scheduled the switch out of the earlier one,
        // so its switch delay replaces the earlier phase's stored default.
        let mut source = pair[0].clone();
        source.time_to_switch = pair[1].time_to_switch;
        let reason = check_terminations(&source, &pair[1], map, model, config)?;
        if reason.is_failure() {
            return Err(PlannerError::PlanInvalid { index, reason });
        }
    }
    Ok(())
}

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    /// Name of the failure reason, or "step_cap", absent on success.
    pub failure: Option<String>,
}

/// Aggregate success statistics over independently seeded episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsrReport {
    /// Successful episodes over total episodes, in [0, 1].
    pub esr: f64,
    pub n_episodes: usize,
    pub successes: usize,
    /// Mean planner decisions per episode.
    pub mean_steps: f64,
    /// Unsuccessful episodes keyed by failure name.
    pub failures: BTreeMap<String, usize>,
    pub episodes: Vec<EpisodeSummary>,
}

/// Runs `n_episodes` independent episodes on clones of the prototype
/// environment. Episode i uses seed `config.seed + i` for both its reset
/// and its candidate stream, so the report is a pure function of the
/// master seed.
pub fn evaluate_esr(
    proto: &GaitEnv,
    config: &ShootingConfig,
    n_episodes: usize,
) -> Result<EsrReport, PlannerError> {
    config.validate().map_err(PlannerError::InvalidConfig)?;
    if n_episodes < 1 {
        return Err(PlannerError::InvalidConfig(
            "n_episodes must be >= 1".into(),
        ));
    }

    // Episodes are independent given their seeds, so they run in parallel
    // and are reduced in index order; the report never depends on timing.
    let max_steps = proto.config().max_steps;
    let results: Vec<Result<EpisodeSummary, PlannerError>> = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed.wrapping_add(i as u64);
            let mut env = proto.clone();
            env.reset(seed).map_err(PlannerError::Env)?;
            let episode_config = ShootingConfig { seed, ..config.clone() };
            let (_, log) = plan_to_goal(&mut env, &episode_config, max_steps)?;
            let failure = match log.outcome {
                EpisodeOutcome::Success => None,
                EpisodeOutcome::Failure(reason) => Some(reason.name().to_owned()),
                EpisodeOutcome::StepCap => Some("step_cap".to_owned()),
            };
            Ok(EpisodeSummary {
                seed,
                success: failure.is_none(),
                steps: log.steps.len(),
                failure,
            })
        })
        .collect();

    let mut successes = 0usize;
    let mut steps_total = 0usize;
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    let mut episodes = Vec::with_capacity(n_episodes);
    for result in results {
        let summary = result?;
        steps_total += summary.steps;
        match &summary.failure {
            None => successes += 1,
            Some(name) => *failures.entry(name.clone()).or_default() += 1,
        }
        episodes.push(summary);
    }

    Ok(EsrReport {
        esr: successes as f64 / n_episodes as f64,
        n_episodes,
        successes,
        mean_steps: steps_total as f64 / n_episodes as f64,
        failures,
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate, TerrainScenario};
    use std::sync::Arc;

    fn flat_env(env_config: EnvConfig) -> GaitEnv {
        let scenario = TerrainScenario::flat_world(7);
        let map = Arc::new(generate(&scenario).unwrap());
        GaitEnv::from_scenario(&scenario, map, Arc::new(RobotModel::default()), env_config)
    }

    fn small_config(seed: u64) -> ShootingConfig {
        ShootingConfig {
            n_candidates: 24,
            horizon: 1,
            seed,
            ..ShootingConfig::default()
        }
    }

    #[test]
    fn a_single_candidate_is_returned_verbatim() {
        let mut env = flat_env(EnvConfig::default());
        env.reset(3).unwrap();
        let config = ShootingConfig {
            n_candidates: 1,
            horizon: 1,
            seed: 9,
            ..ShootingConfig::default()
        };
        let mut stream = ChaCha8Rng::seed_from_u64(9);
        let expected = sample_action(&mut stream, config.stance_bias);
        let mut stream = ChaCha8Rng::seed_from_u64(9);
        let got = propose_action(&env, &config, &mut stream).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn ties_keep_the_lowest_candidate_index() {
        assert_eq!(best_index(&[1.0, 2.0, 2.0]), 1);
        assert_eq!(best_index(&[-1.0, -1.0, -1.0]), 0);
        assert_eq!(best_index(&[0.5]), 0);
    }

    #[test]
    fn sampled_actions_respect_the_box_and_the_stance_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut full = 0;
        let n = 2000;
        for _ in 0..n {
            let a = sample_action(&mut rng, 0.25);
            assert!(a.in_bounds());
            if a.a_c[0] >= 0.0 {
                full += 1;
            }
        }
        // Binomial(2000, 0.25): five sigmas is about 97.
        let expected = (n as f64 * 0.25) as i64;
        assert!((full - expected).abs() < 100, "full-stance draws: {full}");
    }

    #[test]
    fn bad_configs_and_dead_states_are_rejected() {
        let env = flat_env(EnvConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for bad in [
            ShootingConfig { n_candidates: 0, ..ShootingConfig::default() },
            ShootingConfig { horizon: 0, ..ShootingConfig::default() },
            ShootingConfig { discount: 1.0, ..ShootingConfig::default() },
            ShootingConfig { stance_bias: 1.5, ..ShootingConfig::default() },
        ] {
            assert!(matches!(
                propose_action(&env, &bad, &mut rng),
                Err(PlannerError::InvalidConfig(_))
            ));
        }
        assert!(matches!(
            propose_action(&env, &ShootingConfig::default(), &mut rng),
            Err(PlannerError::Env(EnvError::NotReset))
        ));
    }

    #[test]
    fn plans_commit_varied_stances_and_revalidate_cleanly() {
        let mut env_config = EnvConfig::default();
        env_config.max_steps = 20;
        let mut env = flat_env(env_config);
        env.reset(2).unwrap();
        let config = small_config(2);
        let (plan, log) = plan_to_goal(&mut env, &config, 20).unwrap();

        assert_eq!(plan.phases.len(), plan.rewards.len() + 1);
        assert!(log.steps.len() <= 20);
        let full = plan.phases.iter().filter(|p| p.closed_count() == 4).count();
        let tripod = plan.phases.iter().filter(|p| p.closed_count() == 3).count();
        assert!(full > 0 && tripod > 0, "stance variety: {full} full, {tripod} tripod");

        revalidate_plan(&plan, env.map(), env.model(), env.config()).unwrap();

        // A corrupted plan must be called out with the offending transition.
        let mut broken = plan.clone();
        let last = broken.phases.len() - 1;
        broken.phases[last].base_position.x += 10.0;
        let err = revalidate_plan(&broken, env.map(), env.model(), env.config()).unwrap_err();
        assert!(matches!(err, PlannerError::PlanInvalid { index, .. } if index == last - 1));
    }

    #[test]
    fn identical_seeds_give_identical_plans_and_logs() {
        let run = || {
            let mut env_config = EnvConfig::default();
            env_config.max_steps = 6;
            let mut env = flat_env(env_config);
            env.reset(4).unwrap();
            let config = ShootingConfig {
                n_candidates: 8,
                horizon: 1,
                seed: 4,
                ..ShootingConfig::default()
            };
            plan_to_goal(&mut env, &config, 6).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn turning_actions_dominate_when_the_goal_is_far_off_axis() {
        // Widen the spawn yaw so some seeds start with the goal well off
        // axis, then check that the first decision mostly turns toward it.
        let mut env_config = EnvConfig::default();
        env_config.yaw_jitter = 3.0;
        let mut turning = 0;
        let mut qualifying = 0;
        for seed in 0..12u64 {
            let mut env = flat_env(env_config.clone());
            let obs = env.reset(seed).unwrap();
            if obs.o_r.abs() < std::f64::consts::FRAC_PI_2 {
                continue;
            }
            qualifying += 1;
            let config = ShootingConfig {
                n_candidates: 48,
                horizon: 1,
                seed,
                ..ShootingConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let action = propose_action(&env, &config, &mut rng).unwrap();
            if action.a_r.abs() > 0.2 {
                turning += 1;
            }
        }
        assert!(qualifying >= 4, "want several off-axis starts, got {qualifying}");
        assert!(
            2 * turning > qualifying,
            "turning in {turning} of {qualifying} off-axis starts"
        );
    }

    #[test]
    fn esr_reports_are_deterministic_and_internally_consistent() {
        let mut env_config = EnvConfig::default();
        env_config.max_steps = 8;
        let proto = flat_env(env_config);
        let config = ShootingConfig {
            n_candidates: 8,
            horizon: 1,
            seed: 5,
            ..ShootingConfig::default()
        };
        let a = evaluate_esr(&proto, &config, 3).unwrap();
        let b = evaluate_esr(&proto, &config, 3).unwrap();
        assert_eq!(a, b);

        assert!((0.0..=1.0).contains(&a.esr));
        assert!(a.mean_steps <= 8.0);
        assert_eq!(a.episodes.len(), 3);
        assert_eq!(
            a.successes + a.failures.values().sum::<usize>(),
            a.n_episodes
        );
        assert_eq!(a.esr, a.successes as f64 / 3.0);

        // Episode i of master seed s is episode 0 of master seed s + i.
        let shifted = ShootingConfig { seed: 6, ..config.clone() };
        let c = evaluate_esr(&proto, &shifted, 1).unwrap();
        assert_eq!(c.episodes[0], a.episodes[1]);
    }

    #[test]
    fn planning_on_an_unreset_environment_is_an_error() {
        let mut env = flat_env(EnvConfig::default());
        let config = small_config(0);
        assert!(matches!(
            plan_to_goal(&mut env, &config, 5),
            Err(PlannerError::Env(EnvError::NotReset))
        ));
    }
}
