//! File formats: versioned JSON schemas for every artifact the toolkit
//! reads or writes, plus a 16-bit PGM terrain export.
//!
//! Every JSON document carries a `schema` field (`"heightmap/v1"` and so
//! on); loaders reject other versions up front so stale files fail loudly
//! instead of half-parsing. Parsing is strict about shape (serde names the
//! missing field) and every loader funnels the result through the domain
//! type's own validation, so a file that parses but describes an impossible
//! value (non-orthonormal attitude, two closed contacts, negative grid
//! resolution) is still rejected.
//!
//! Writers emit pretty-printed JSON with a trailing newline and shortest
//! float representations, which round-trip `f64` exactly. Saving, loading,
//! and saving again therefore reproduces the file byte for byte, and that
//! invariant is under test.
//!
//! The schemas, in full:
//!
//! `heightmap/v1`: `origin_xy` (center of cell (0,0)), `resolution`,
//! `n_rows`, `n_cols`, `elevations` flat row-major with `n_rows * n_cols`
//! entries.
//!
//! `scenario/v1`: `params` (tagged by `kind`: `flat_world`, `random_stairs`,
//! or `composite` with a `features` list, each feature again tagged by
//! `kind`), `seed`, `spawn_region`, `goal_region` (rects as `min`/`max`
//! corner pairs).
//!
//! `robot-model/v1`: `mass`, `gravity`, `com_height`, `nominal_footholds`
//! (four xy pairs, LF RF LH RH), `kinematic_box` (four min/max corner
//! boxes), `friction`, `max_normal_force`, `max_step`.
//!
//! `phase/v1`: `rotation` as a 3x3 row-major matrix, `base_position`,
//! `base_velocity`, `feet` (four xyz triples), `contacts` (four bools),
//! `time_elapsed`, `time_to_switch`.
//!
//! `plan/v1`: `terrain` label, `goal`, `seed`, `phases` (phase objects
//! without their own schema field), `rewards` with exactly one entry per
//! committed transition.
//!
//! `episode-log/v1` is JSON Lines, not a single document: a header line
//! `{"schema", "scenario", "seed", "goal"}`, one compact line per decision
//! (`action`, `reward`, `terms`, `reason`, `terminated`, `success`), and a
//! trailer line `{"outcome": ...}` where the outcome is `"success"`,
//! `"step_cap"`, or `{"failure": <reason>}`.
//!
//! `tracking-log/v1`: `records` (per-tick desired contacts, desired
//! footholds, measured feet) and `touchdowns` (foot index, touchdown xy,
//! target xy).
//!
//! `esr-report/v1`: the aggregate fields of [`EsrReport`] verbatim.
//!
//! The PGM export is one-way: a `P5` image with maxval 65535 (two bytes per
//! sample, big endian) scaled affinely over the elevation span, plus a JSON
//! sidecar holding the scale so pixels map back to meters.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::TerminationReason;
use crate::metrics::TrackingLog;
use crate::phase::{LegBox, RobotModel, SupportPhase, N_FEET};
use crate::planner::{EpisodeLog, EpisodeOutcome, EpisodeStep, EsrReport, PhasePlan};
use crate::terrain::{Feature, HeightMap, Rect, ScenarioParams, TerrainScenario};

pub const HEIGHTMAP_SCHEMA: &str = "heightmap/v1";
pub const SCENARIO_SCHEMA: &str = "scenario/v1";
pub const ROBOT_MODEL_SCHEMA: &str = "robot-model/v1";
pub const PHASE_SCHEMA: &str = "phase/v1";
pub const PLAN_SCHEMA: &str = "plan/v1";
pub const EPISODE_LOG_SCHEMA: &str = "episode-log/v1";
pub const TRACKING_LOG_SCHEMA: &str = "tracking-log/v1";
pub const ESR_REPORT_SCHEMA: &str = "esr-report/v1";
pub const PGM_SIDECAR_SCHEMA: &str = "heightmap-pgm/v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    Schema {
        expected: &'static str,
        found: String,
    },
    #[error("invalid {what}: {message}")]
    Invalid {
        what: &'static str,
        message: String,
    },
}

fn invalid(what: &'static str, message: impl ToString) -> FormatError {
    FormatError::Invalid {
        what,
        message: message.to_string(),
    }
}

fn check_schema(expected: &'static str, found: &str) -> Result<(), FormatError> {
    if found == expected {
        Ok(())
    } else {
        Err(FormatError::Schema {
            expected,
            found: found.to_string(),
        })
    }
}

fn pretty(value: &impl Serialize) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    out.push('\n');
    out
}

fn read_file(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---- height maps ----

#[derive(Serialize, Deserialize)]
struct HeightMapDto {
    schema: String,
    origin_xy: [f64; 2],
    resolution: f64,
    n_rows: usize,
    n_cols: usize,
    elevations: Vec<f64>,
}

pub fn heightmap_to_json(map: &HeightMap) -> String {
    pretty(&HeightMapDto {
        schema: HEIGHTMAP_SCHEMA.into(),
        origin_xy: map.origin_xy(),
        resolution: map.resolution(),
        n_rows: map.n_rows(),
        n_cols: map.n_cols(),
        elevations: map.elevations().to_vec(),
    })
}

pub fn heightmap_from_json(text: &str) -> Result<HeightMap, FormatError> {
    let dto: HeightMapDto = serde_json::from_str(text)?;
    check_schema(HEIGHTMAP_SCHEMA, &dto.schema)?;
    HeightMap::new(
        dto.origin_xy,
        dto.resolution,
        dto.n_rows,
        dto.n_cols,
        dto.elevations,
    )
    .map_err(|e| invalid("height map", e))
}

pub fn save_heightmap(path: &Path, map: &HeightMap) -> Result<(), FormatError> {
    write_file(path, &heightmap_to_json(map))
}

pub fn load_heightmap(path: &Path) -> Result<HeightMap, FormatError> {
    heightmap_from_json(&read_file(path)?)
}

// ---- scenarios ----

#[derive(Serialize, Deserialize)]
struct RectDto {
    min: [f64; 2],
    max: [f64; 2],
}

impl RectDto {
    fn from_rect(r: &Rect) -> Self {
        RectDto { min: r.min, max: r.max }
    }

    fn into_rect(self, what: &'static str) -> Result<Rect, FormatError> {
        let finite = self.min.iter().chain(self.max.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(invalid(what, "corners must be finite"));
        }
        if self.min[0] > self.max[0] || self.min[1] > self.max[1] {
            return Err(invalid(what, "min corner must not exceed max corner"));
        }
        Ok(Rect::new(self.min, self.max))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FeatureDto {
    Flat {
        length: f64,
    },
    Gap {
        width: f64,
        depth: f64,
    },
    SteppingStones {
        stone_size: f64,
        spacing: f64,
        count: usize,
    },
    Stairs {
        rise: f64,
        run: f64,
        count: usize,
    },
}

impl FeatureDto {
    fn from_feature(f: &Feature) -> Self {
        match *f {
            Feature::Flat { length } => FeatureDto::Flat { length },
            Feature::Gap { width, depth } => FeatureDto::Gap { width, depth },
            Feature::SteppingStones {
                stone_size,
                spacing,
                count,
            } => FeatureDto::SteppingStones {
                stone_size,
                spacing,
                count,
            },
            Feature::Stairs { rise, run, count } => FeatureDto::Stairs { rise, run, count },
        }
    }

    fn into_feature(self) -> Feature {
        match self {
            FeatureDto::Flat { length } => Feature::Flat { length },
            FeatureDto::Gap { width, depth } => Feature::Gap { width, depth },
            FeatureDto::SteppingStones {
                stone_size,
                spacing,
                count,
            } => Feature::SteppingStones {
                stone_size,
                spacing,
                count,
            },
            FeatureDto::Stairs { rise, run, count } => Feature::Stairs { rise, run, count },
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ScenarioParamsDto {
    FlatWorld {
        elevation: f64,
        side: f64,
        resolution: f64,
    },
    RandomStairs {
        side: f64,
        cell_size: f64,
        elevation_steps: Vec<f64>,
        diagonal_rise_per_cell: f64,
    },
    Composite {
        width: f64,
        resolution: f64,
        length: Option<f64>,
        features: Vec<FeatureDto>,
    },
}

#[derive(Serialize, Deserialize)]
struct ScenarioDto {
    schema: String,
    params: ScenarioParamsDto,
    seed: u64,
    spawn_region: RectDto,
    goal_region: RectDto,
}

pub fn scenario_to_json(scenario: &TerrainScenario) -> String {
    let params = match &scenario.params {
        ScenarioParams::FlatWorld {
            elevation,
            side,
            resolution,
        } => ScenarioParamsDto::FlatWorld {
            elevation: *elevation,
            side: *side,
            resolution: *resolution,
        },
        ScenarioParams::RandomStairs {
            side,
            cell_size,
            elevation_steps,
            diagonal_rise_per_cell,
        } => ScenarioParamsDto::RandomStairs {
            side: *side,
            cell_size: *cell_size,
            elevation_steps: elevation_steps.clone(),
            diagonal_rise_per_cell: *diagonal_rise_per_cell,
        },
        ScenarioParams::Composite {
            width,
            resolution,
            length,
            features,
        } => ScenarioParamsDto::Composite {
            width: *width,
            resolution: *resolution,
            length: *length,
            features: features.iter().map(FeatureDto::from_feature).collect(),
        },
    };
    pretty(&ScenarioDto {
        schema: SCENARIO_SCHEMA.into(),
        params,
        seed: scenario.seed,
        spawn_region: RectDto::from_rect(&scenario.spawn_region),
        goal_region: RectDto::from_rect(&scenario.goal_region),
    })
}

pub fn scenario_from_json(text: &str) -> Result<TerrainScenario, FormatError> {
    let dto: ScenarioDto = serde_json::from_str(text)?;
    check_schema(SCENARIO_SCHEMA, &dto.schema)?;
    let params = match dto.params {
        ScenarioParamsDto::FlatWorld {
            elevation,
            side,
            resolution,
        } => ScenarioParams::FlatWorld {
            elevation,
            side,
            resolution,
        },
        ScenarioParamsDto::RandomStairs {
            side,
            cell_size,
            elevation_steps,
            diagonal_rise_per_cell,
        } => ScenarioParams::RandomStairs {
            side,
            cell_size,
            elevation_steps,
            diagonal_rise_per_cell,
        },
        ScenarioParamsDto::Composite {
            width,
            resolution,
            length,
            features,
        } => ScenarioParams::Composite {
            width,
            resolution,
            length,
            features: features.into_iter().map(FeatureDto::into_feature).collect(),
        },
    };
    Ok(TerrainScenario {
        params,
        seed: dto.seed,
        spawn_region: dto.spawn_region.into_rect("spawn_region")?,
        goal_region: dto.goal_region.into_rect("goal_region")?,
    })
}

pub fn save_scenario(path: &Path, scenario: &TerrainScenario) -> Result<(), FormatError> {
    write_file(path, &scenario_to_json(scenario))
}

pub fn load_scenario(path: &Path) -> Result<TerrainScenario, FormatError> {
    scenario_from_json(&read_file(path)?)
}

// ---- robot models ----

#[derive(Serialize, Deserialize)]
struct LegBoxDto {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct RobotModelDto {
    schema: String,
    mass: f64,
    gravity: [f64; 3],
    com_height: f64,
    nominal_footholds: [[f64; 2]; N_FEET],
    kinematic_box: [LegBoxDto; N_FEET],
    friction: f64,
    max_normal_force: f64,
    max_step: f64,
}

pub fn robot_model_to_json(model: &RobotModel) -> String {
    pretty(&RobotModelDto {
        schema: ROBOT_MODEL_SCHEMA.into(),
        mass: model.mass,
        gravity: model.gravity.into(),
        com_height: model.com_height,
        nominal_footholds: model.nominal_footholds.map(|v| [v.x, v.y]),
        kinematic_box: model.kinematic_box.map(|b| LegBoxDto {
            min: b.min.into(),
            max: b.max.into(),
        }),
        friction: model.friction,
        max_normal_force: model.max_normal_force,
        max_step: model.max_step,
    })
}

pub fn robot_model_from_json(text: &str) -> Result<RobotModel, FormatError> {
    let dto: RobotModelDto = serde_json::from_str(text)?;
    check_schema(ROBOT_MODEL_SCHEMA, &dto.schema)?;
    let model = RobotModel {
        mass: dto.mass,
        gravity: Vector3::from(dto.gravity),
        com_height: dto.com_height,
        nominal_footholds: dto.nominal_footholds.map(Vector2::from),
        kinematic_box: dto.kinematic_box.map(|b| LegBox {
            min: Vector3::from(b.min),
            max: Vector3::from(b.max),
        }),
        friction: dto.friction,
        max_normal_force: dto.max_normal_force,
        max_step: dto.max_step,
    };
    model.validate().map_err(|e| invalid("robot model", e))?;
    Ok(model)
}

pub fn save_robot_model(path: &Path, model: &RobotModel) -> Result<(), FormatError> {
    write_file(path, &robot_model_to_json(model))
}

pub fn load_robot_model(path: &Path) -> Result<RobotModel, FormatError> {
    robot_model_from_json(&read_file(path)?)
}

// ---- support phases ----

#[derive(Serialize, Deserialize)]
struct PhaseDto {
    rotation: [[f64; 3]; 3],
    base_position: [f64; 3],
    base_velocity: [f64; 3],
    feet: [[f64; 3]; N_FEET],
    contacts: [bool; N_FEET],
    time_elapsed: f64,
    time_to_switch: f64,
}

impl PhaseDto {
    fn from_phase(phase: &SupportPhase) -> Self {
        let m = phase.rotation.matrix();
        let row = |i: usize| [m[(i, 0)], m[(i, 1)], m[(i, 2)]];
        PhaseDto {
            rotation: [row(0), row(1), row(2)],
            base_position: phase.base_position.into(),
            base_velocity: phase.base_velocity.into(),
            feet: phase.feet.map(Into::into),
            contacts: phase.contacts,
            time_elapsed: phase.time_elapsed,
            time_to_switch: phase.time_to_switch,
        }
    }

    fn into_phase(self) -> Result<SupportPhase, FormatError> {
        let r = self.rotation;
        #[rustfmt::skip]
        let matrix = Matrix3::new(
            r[0][0], r[0][1], r[0][2],
            r[1][0], r[1][1], r[1][2],
            r[2][0], r[2][1], r[2][2],
        );
        let phase = SupportPhase {
            // Stored unchanged: validate() rejects matrices that are not
            // orthonormal, and renormalizing here would break byte-exact
            // round-trips.
            rotation: Rotation3::from_matrix_unchecked(matrix),
            base_position: Vector3::from(self.base_position),
            base_velocity: Vector3::from(self.base_velocity),
            feet: self.feet.map(Vector3::from),
            contacts: self.contacts,
            time_elapsed: self.time_elapsed,
            time_to_switch: self.time_to_switch,
        };
        phase.validate(None).map_err(|e| invalid("phase", e))?;
        Ok(phase)
    }
}

#[derive(Serialize, Deserialize)]
struct PhaseFileDto {
    schema: String,
    #[serde(flatten)]
    phase: PhaseDto,
}

pub fn phase_to_json(phase: &SupportPhase) -> String {
    pretty(&PhaseFileDto {
        schema: PHASE_SCHEMA.into(),
        phase: PhaseDto::from_phase(phase),
    })
}

pub fn phase_from_json(text: &str) -> Result<SupportPhase, FormatError> {
    let dto: PhaseFileDto = serde_json::from_str(text)?;
    check_schema(PHASE_SCHEMA, &dto.schema)?;
    dto.phase.into_phase()
}

pub fn save_phase(path: &Path, phase: &SupportPhase) -> Result<(), FormatError> {
    write_file(path, &phase_to_json(phase))
}

pub fn load_phase(path: &Path) -> Result<SupportPhase, FormatError> {
    phase_from_json(&read_file(path)?)
}

// ---- phase plans ----

#[derive(Serialize, Deserialize)]
struct PlanDto {
    schema: String,
    terrain: String,
    goal: [f64; 2],
    seed: u64,
    phases: Vec<PhaseDto>,
    rewards: Vec<f64>,
}

pub fn plan_to_json(plan: &PhasePlan) -> String {
    pretty(&PlanDto {
        schema: PLAN_SCHEMA.into(),
        terrain: plan.terrain.clone(),
        goal: plan.goal,
        seed: plan.seed,
        phases: plan.phases.iter().map(PhaseDto::from_phase).collect(),
        rewards: plan.rewards.clone(),
    })
}

pub fn plan_from_json(text: &str) -> Result<PhasePlan, FormatError> {
    let dto: PlanDto = serde_json::from_str(text)?;
    check_schema(PLAN_SCHEMA, &dto.schema)?;
    if dto.rewards.len() + 1 != dto.phases.len() {
        return Err(invalid(
            "plan",
            format!(
                "{} phases need {} rewards, found {}",
                dto.phases.len(),
                dto.phases.len().saturating_sub(1),
                dto.rewards.len()
            ),
        ));
    }
    let phases = dto
        .phases
        .into_iter()
        .map(PhaseDto::into_phase)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PhasePlan {
        terrain: dto.terrain,
        goal: dto.goal,
        seed: dto.seed,
        phases,
        rewards: dto.rewards,
    })
}

pub fn save_plan(path: &Path, plan: &PhasePlan) -> Result<(), FormatError> {
    write_file(path, &plan_to_json(plan))
}

pub fn load_plan(path: &Path) -> Result<PhasePlan, FormatError> {
    plan_from_json(&read_file(path)?)
}

// ---- episode logs (JSON Lines) ----

#[derive(Serialize, Deserialize)]
struct EpisodeHeaderDto {
    schema: String,
    scenario: String,
    seed: u64,
    goal: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum OutcomeDto {
    Success,
    Failure(TerminationReason),
    StepCap,
}

#[derive(Serialize, Deserialize)]
struct EpisodeTrailerDto {
    outcome: OutcomeDto,
}

fn jsonl_line(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string(value).expect("serialization cannot fail");
    s.push('\n');
    s
}

pub fn episode_log_to_jsonl(log: &EpisodeLog) -> String {
    let mut out = jsonl_line(&EpisodeHeaderDto {
        schema: EPISODE_LOG_SCHEMA.into(),
        scenario: log.scenario.clone(),
        seed: log.seed,
        goal: log.goal,
    });
    for step in &log.steps {
        out.push_str(&jsonl_line(step));
    }
    let outcome = match log.outcome {
        EpisodeOutcome::Success => OutcomeDto::Success,
        EpisodeOutcome::Failure(reason) => OutcomeDto::Failure(reason),
        EpisodeOutcome::StepCap => OutcomeDto::StepCap,
    };
    out.push_str(&jsonl_line(&EpisodeTrailerDto { outcome }));
    out
}

pub fn episode_log_from_jsonl(text: &str) -> Result<EpisodeLog, FormatError> {
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| invalid("episode log", "empty input; expected a header line"))?;
    let header: EpisodeHeaderDto = serde_json::from_str(header_line)?;
    check_schema(EPISODE_LOG_SCHEMA, &header.schema)?;

    let mut steps: Vec<EpisodeStep> = Vec::new();
    let mut outcome: Option<EpisodeOutcome> = None;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        if outcome.is_some() {
            return Err(invalid("episode log", "content after the outcome line"));
        }
        // A step line always has an "action" key; anything else must be the
        // trailer. Probing the shape first keeps serde's field-level errors
        // (missing "reward" and such) attached to the right schema.
        let probe: serde_json::Value = serde_json::from_str(line)?;
        if probe.get("action").is_some() {
            steps.push(serde_json::from_str(line)?);
        } else {
            let trailer: EpisodeTrailerDto = serde_json::from_str(line)?;
            outcome = Some(match trailer.outcome {
                OutcomeDto::Success => EpisodeOutcome::Success,
                OutcomeDto::Failure(reason) => EpisodeOutcome::Failure(reason),
                OutcomeDto::StepCap => EpisodeOutcome::StepCap,
            });
        }
    }
    let outcome =
        outcome.ok_or_else(|| invalid("episode log", "log ends without an outcome line"))?;
    Ok(EpisodeLog {
        scenario: header.scenario,
        seed: header.seed,
        goal: header.goal,
        steps,
        outcome,
    })
}

pub fn save_episode_log(path: &Path, log: &EpisodeLog) -> Result<(), FormatError> {
    write_file(path, &episode_log_to_jsonl(log))
}

pub fn load_episode_log(path: &Path) -> Result<EpisodeLog, FormatError> {
    episode_log_from_jsonl(&read_file(path)?)
}

// ---- tracking logs ----

#[derive(Serialize, Deserialize)]
struct TrackingLogDto {
    schema: String,
    #[serde(flatten)]
    log: TrackingLog,
}

pub fn tracking_log_to_json(log: &TrackingLog) -> String {
    pretty(&TrackingLogDto {
        schema: TRACKING_LOG_SCHEMA.into(),
        log: log.clone(),
    })
}

pub fn tracking_log_from_json(text: &str) -> Result<TrackingLog, FormatError> {
    let dto: TrackingLogDto = serde_json::from_str(text)?;
    check_schema(TRACKING_LOG_SCHEMA, &dto.schema)?;
    let finite3 = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
    for (i, r) in dto.log.records.iter().enumerate() {
        let ok = r.desired_footholds.iter().all(finite3) && r.measured_feet.iter().all(finite3);
        if !ok {
            return Err(invalid("tracking log", format!("record {i} has non-finite positions")));
        }
    }
    for (i, e) in dto.log.touchdowns.iter().enumerate() {
        if e.foot >= N_FEET {
            return Err(invalid(
                "tracking log",
                format!("touchdown {i} names foot {}, expected 0..{N_FEET}", e.foot),
            ));
        }
        let ok = e.touchdown_xy.iter().chain(e.target_xy.iter()).all(|x| x.is_finite());
        if !ok {
            return Err(invalid("tracking log", format!("touchdown {i} has non-finite positions")));
        }
    }
    Ok(dto.log)
}

pub fn save_tracking_log(path: &Path, log: &TrackingLog) -> Result<(), FormatError> {
    write_file(path, &tracking_log_to_json(log))
}

pub fn load_tracking_log(path: &Path) -> Result<TrackingLog, FormatError> {
    tracking_log_from_json(&read_file(path)?)
}

// ---- evaluation reports ----

#[derive(Serialize, Deserialize)]
struct EsrReportDto {
    schema: String,
    #[serde(flatten)]
    report: EsrReport,
}

pub fn esr_report_to_json(report: &EsrReport) -> String {
    pretty(&EsrReportDto {
        schema: ESR_REPORT_SCHEMA.into(),
        report: report.clone(),
    })
}

pub fn esr_report_from_json(text: &str) -> Result<EsrReport, FormatError> {
    let dto: EsrReportDto = serde_json::from_str(text)?;
    check_schema(ESR_REPORT_SCHEMA, &dto.schema)?;
    let r = &dto.report;
    if !(r.esr.is_finite() && (0.0..=1.0).contains(&r.esr)) {
        return Err(invalid("report", format!("esr must be in [0, 1], got {}", r.esr)));
    }
    if r.successes > r.n_episodes {
        return Err(invalid(
            "report",
            format!("{} successes out of {} episodes", r.successes, r.n_episodes),
        ));
    }
    Ok(dto.report)
}

pub fn save_esr_report(path: &Path, report: &EsrReport) -> Result<(), FormatError> {
    write_file(path, &esr_report_to_json(report))
}

pub fn load_esr_report(path: &Path) -> Result<EsrReport, FormatError> {
    esr_report_from_json(&read_file(path)?)
}

// ---- PGM export ----

#[derive(Serialize)]
struct PgmSidecar {
    schema: &'static str,
    origin_xy: [f64; 2],
    resolution: f64,
    min_elevation: f64,
    max_elevation: f64,
}

/// Renders the map as a 16-bit binary PGM plus the JSON sidecar that maps
/// pixel values back to meters: `z = min + (pixel / 65535) * (max - min)`.
/// Raster row 0 is grid row 0. A level map exports as all-zero pixels.
pub fn heightmap_to_pgm16(map: &HeightMap) -> (Vec<u8>, String) {
    let min = map.elevations().iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.elevations().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut pgm = Vec::with_capacity(32 + 2 * map.elevations().len());
    write!(pgm, "P5\n{} {}\n65535\n", map.n_cols(), map.n_rows()).expect("vec write");
    for &z in map.elevations() {
        let pixel = if span > 0.0 {
            ((z - min) / span * 65535.0).round() as u16
        } else {
            0
        };
        pgm.extend_from_slice(&pixel.to_be_bytes());
    }
    let sidecar = pretty(&PgmSidecar {
        schema: PGM_SIDECAR_SCHEMA,
        origin_xy: map.origin_xy(),
        resolution: map.resolution(),
        min_elevation: min,
        max_elevation: max,
    });
    (pgm, sidecar)
}

/// Writes the PGM to `path` and the sidecar to `path` + ".json".
pub fn save_pgm16(path: &Path, map: &HeightMap) -> Result<(), FormatError> {
    let (pgm, sidecar) = heightmap_to_pgm16(map);
    fs::write(path, pgm).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    write_file(Path::new(&sidecar_path), &sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{TouchdownEvent, TrackingRecord};
    use crate::terrain::generate;

    fn sample_map() -> HeightMap {
        generate(&TerrainScenario::random_stairs(5)).unwrap()
    }

    fn sample_phase() -> SupportPhase {
        let model = RobotModel::default();
        let map = generate(&TerrainScenario::flat_world(0)).unwrap();
        crate::phase::standing_phase(Vector2::new(0.3, -0.2), 0.7, &map, &model).unwrap()
    }

    #[test]
    fn heightmap_load_inverts_save_and_is_byte_stable() {
        let map = sample_map();
        let text = heightmap_to_json(&map);
        let back = heightmap_from_json(&text).unwrap();
        assert_eq!(back.elevations(), map.elevations());
        assert_eq!(heightmap_to_json(&back), text);
    }

    #[test]
    fn heightmap_loader_rejects_wrong_schema_and_bad_grids() {
        let text = heightmap_to_json(&sample_map());
        let wrong = text.replace("heightmap/v1", "heightmap/v2");
        assert!(matches!(
            heightmap_from_json(&wrong),
            Err(FormatError::Schema { .. })
        ));
        let short = text.replace("\"n_rows\": 20", "\"n_rows\": 21");
        assert!(matches!(
            heightmap_from_json(&short),
            Err(FormatError::Invalid { .. })
        ));
    }

    #[test]
    fn missing_fields_are_reported_by_name() {
        let map = sample_map();
        let mut value: serde_json::Value = serde_json::from_str(&heightmap_to_json(&map)).unwrap();
        value.as_object_mut().unwrap().remove("resolution");
        let err = heightmap_from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("resolution"), "{err}");
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let scenarios = [
            TerrainScenario::flat_world(7),
            TerrainScenario::random_stairs(3),
            TerrainScenario::composite(
                vec![
                    Feature::Gap { width: 0.3, depth: 0.5 },
                    Feature::Stairs { rise: 0.1, run: 0.3, count: 4 },
                    Feature::SteppingStones { stone_size: 0.4, spacing: 0.2, count: 3 },
                ],
                11,
            ),
        ];
        for scenario in scenarios {
            let text = scenario_to_json(&scenario);
            let back = scenario_from_json(&text).unwrap();
            assert_eq!(back, scenario);
            assert_eq!(scenario_to_json(&back), text);
            // the loaded scenario renders the same map
            assert_eq!(
                generate(&back).unwrap().elevations(),
                generate(&scenario).unwrap().elevations()
            );
        }
    }

    #[test]
    fn scenario_loader_rejects_inverted_regions() {
        let mut scenario = TerrainScenario::flat_world(0);
        scenario.goal_region = Rect::new([5.0, 1.0], [3.0, -1.0]);
        let text = scenario_to_json(&scenario);
        assert!(matches!(
            scenario_from_json(&text),
            Err(FormatError::Invalid { what: "goal_region", .. })
        ));
    }

    #[test]
    fn robot_model_round_trips_and_revalidates() {
        let model = RobotModel::default();
        let text = robot_model_to_json(&model);
        let back = robot_model_from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(robot_model_to_json(&back), text);

        let negative = text.replace("\"friction\": 0.7", "\"friction\": -0.7");
        assert!(matches!(
            robot_model_from_json(&negative),
            Err(FormatError::Invalid { .. })
        ));
    }

    #[test]
    fn phase_round_trips_with_exact_rotation() {
        let phase = sample_phase();
        let text = phase_to_json(&phase);
        let back = phase_from_json(&text).unwrap();
        assert_eq!(back, phase);
        assert_eq!(phase_to_json(&back), text);
    }

    #[test]
    fn phase_loader_rejects_non_orthonormal_rotations() {
        let text = phase_to_json(&sample_phase());
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["rotation"][0][0] = 2.0.into();
        let err = phase_from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("orthonormal"), "{err}");
    }

    #[test]
    fn phase_loader_rejects_two_closed_contacts() {
        let mut phase = sample_phase();
        phase.contacts = [true, true, false, false];
        let dto = PhaseFileDto {
            schema: PHASE_SCHEMA.into(),
            phase: PhaseDto::from_phase(&phase),
        };
        let err = phase_from_json(&pretty(&dto)).unwrap_err();
        assert!(err.to_string().contains("closed contacts"), "{err}");
    }

    #[test]
    fn plan_round_trips_and_checks_reward_arity() {
        let mut second = sample_phase();
        second.base_position.x += 0.05;
        second.time_elapsed = 0.8;
        let plan = PhasePlan {
            terrain: "flat_world/0".into(),
            goal: [4.0, 0.0],
            seed: 9,
            phases: vec![sample_phase(), second],
            rewards: vec![0.125],
        };
        let text = plan_to_json(&plan);
        let back = plan_from_json(&text).unwrap();
        assert_eq!(back, plan);
        assert_eq!(plan_to_json(&back), text);

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["rewards"] = serde_json::json!([0.125, 0.5]);
        assert!(matches!(
            plan_from_json(&value.to_string()),
            Err(FormatError::Invalid { what: "plan", .. })
        ));
    }

    #[test]
    fn episode_log_jsonl_round_trips_all_outcomes() {
        use crate::phase::PlannerAction;
        let step = EpisodeStep {
            action: PlannerAction::zero(),
            reward: -0.25,
            terms: None,
            reason: TerminationReason::None,
            terminated: false,
            success: false,
        };
        for outcome in [
            EpisodeOutcome::Success,
            EpisodeOutcome::Failure(TerminationReason::Footholds),
            EpisodeOutcome::StepCap,
        ] {
            let log = EpisodeLog {
                scenario: "flat_world/7".into(),
                seed: 34,
                goal: [3.9, -0.8],
                steps: vec![step.clone(), step.clone()],
                outcome,
            };
            let text = episode_log_to_jsonl(&log);
            let back = episode_log_from_jsonl(&text).unwrap();
            assert_eq!(back, log);
            assert_eq!(episode_log_to_jsonl(&back), text);
        }
    }

    #[test]
    fn episode_log_without_trailer_is_rejected() {
        let log = EpisodeLog {
            scenario: "flat_world/7".into(),
            seed: 1,
            goal: [3.0, 0.0],
            steps: vec![],
            outcome: EpisodeOutcome::Success,
        };
        let text = episode_log_to_jsonl(&log);
        let truncated: String = text.lines().next().map(|l| format!("{l}\n")).unwrap();
        let err = episode_log_from_jsonl(&truncated).unwrap_err();
        assert!(err.to_string().contains("outcome"), "{err}");
    }

    #[test]
    fn tracking_log_round_trips_and_validates_feet() {
        let log = TrackingLog {
            records: vec![TrackingRecord {
                desired_contacts: [true, true, true, false],
                desired_footholds: [[0.3, 0.2, 0.0]; 4],
                measured_feet: [[0.3, 0.2, 0.01]; 4],
            }],
            touchdowns: vec![TouchdownEvent {
                foot: 2,
                touchdown_xy: [0.31, 0.2],
                target_xy: [0.3, 0.2],
            }],
        };
        let text = tracking_log_to_json(&log);
        let back = tracking_log_from_json(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(tracking_log_to_json(&back), text);

        let mut bad = log.clone();
        bad.touchdowns[0].foot = 7;
        let err = tracking_log_from_json(&tracking_log_to_json(&bad)).unwrap_err();
        assert!(err.to_string().contains("foot 7"), "{err}");
    }

    #[test]
    fn esr_report_round_trips_and_rejects_impossible_rates() {
        let report = EsrReport {
            esr: 0.5,
            n_episodes: 2,
            successes: 1,
            mean_steps: 12.5,
            failures: [("footholds".to_string(), 1)].into(),
            episodes: vec![
                crate::planner::EpisodeSummary {
                    seed: 0,
                    success: true,
                    steps: 20,
                    failure: None,
                },
                crate::planner::EpisodeSummary {
                    seed: 1,
                    success: false,
                    steps: 5,
                    failure: Some("footholds".into()),
                },
            ],
        };
        let text = esr_report_to_json(&report);
        let back = esr_report_from_json(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(esr_report_to_json(&back), text);

        let bad = text.replace("\"esr\": 0.5", "\"esr\": 1.5");
        assert!(matches!(
            esr_report_from_json(&bad),
            Err(FormatError::Invalid { .. })
        ));
    }

    #[test]
    fn pgm_export_scales_the_full_range() {
        let map = HeightMap::new([0.0, 0.0], 0.5, 2, 2, vec![-1.0, 0.0, 0.5, 1.0]).unwrap();
        let (pgm, sidecar) = heightmap_to_pgm16(&map);
        let header = b"P5\n2 2\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        let samples: Vec<u16> = pgm[header.len()..]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect();
        assert_eq!(samples, vec![0, 32768, 49151, 65535]);
        let side: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
        assert_eq!(side["min_elevation"], -1.0);
        assert_eq!(side["max_elevation"], 1.0);
    }

    #[test]
    fn pgm_export_of_a_level_map_is_all_zero() {
        let map = HeightMap::new([0.0, 0.0], 0.5, 1, 3, vec![0.25; 3]).unwrap();
        let (pgm, _) = heightmap_to_pgm16(&map);
        let header = b"P5\n3 1\n65535\n";
        assert!(pgm[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn file_helpers_write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let map = sample_map();
        let map_path = dir.path().join("map.json");
        save_heightmap(&map_path, &map).unwrap();
        assert_eq!(load_heightmap(&map_path).unwrap().elevations(), map.elevations());

        let pgm_path = dir.path().join("map.pgm");
        save_pgm16(&pgm_path, &map).unwrap();
        assert!(pgm_path.exists());
        assert!(dir.path().join("map.pgm.json").exists());

        let missing = load_heightmap(&dir.path().join("absent.json"));
        assert!(matches!(missing, Err(FormatError::Io { .. })));
    }
}
