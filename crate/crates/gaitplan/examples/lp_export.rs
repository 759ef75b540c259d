use gaitplan::env::{EnvConfig, GaitEnv};
use gaitplan::phase::{apply_action, PlannerAction, RobotModel};
use gaitplan::planner::{propose_action, ShootingConfig};
use gaitplan::terrain::{generate, TerrainScenario};
use gaitplan::feasibility::TransitionProblem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn main() {
    let scenario = TerrainScenario::flat_world(0);
    let map = Arc::new(generate(&scenario).unwrap());
    let model = RobotModel::default();
    let proto = GaitEnv::from_scenario(
        &scenario,
        map.clone(),
        Arc::new(model.clone()),
        EnvConfig::default(),
    );
    let mut env = proto.clone();
    env.reset(2024).unwrap();
    let config = ShootingConfig { n_candidates: 64, horizon: 2, seed: 2024, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let a = propose_action(&env, &config, &mut rng).unwrap();
    env.step(&a).unwrap();

    let source = env.state().unwrap().phase.clone();
    let yaw = source.yaw();
    let v = source.base_velocity;
    let vb = [
        yaw.cos() * v.x + yaw.sin() * v.y,
        -yaw.sin() * v.x + yaw.cos() * v.y,
    ];
    let n = (vb[0].hypot(vb[1])).max(1e-9);
    let mut brake = PlannerAction::zero();
    brake.a_b = [0.4 * vb[0] / n, 0.4 * vb[1] / n];
    brake.a_t = [1.0, 1.0];
    let cand = apply_action(&source, &brake, &map, &model).unwrap();

    let mut wide = model.clone();
    for b in wide.kinematic_box.iter_mut() {
        b.min -= nalgebra::Vector3::new(10.0, 10.0, 10.0);
        b.max += nalgebra::Vector3::new(10.0, 10.0, 10.0);
    }
    wide.friction = 50.0;
    wide.max_normal_force = 1e9;
    let problem = TransitionProblem::new(&source, &cand, &wide);
    let lp = problem.canonicalized().assemble().unwrap();

    let dump_mat = |m: &gaitplan::feasibility::DenseMat| -> Vec<Vec<f64>> {
        (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.at(r, c)).collect()).collect()
    };
    let doc = serde_json::json!({
        "n": lp.n_vars,
        "eq_a": dump_mat(&lp.eq_a),
        "eq_b": lp.eq_b,
        "ub_a": dump_mat(&lp.ub_a),
        "ub_b": lp.ub_b,
        "lower": lp.lower,
        "upper": lp.upper,
        "hint": lp.hint,
    });
    std::fs::write("/tmp/lp.json", serde_json::to_string(&doc).unwrap()).unwrap();
    println!("exported {} vars, {} eq, {} ub", lp.n_vars, lp.eq_b.len(), lp.ub_b.len());
}
