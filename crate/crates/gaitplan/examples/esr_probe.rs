//! Scratch probe: ESR sweep over shooting configs.

use std::sync::Arc;
use std::time::Instant;

use gaitplan::env::{EnvConfig, GaitEnv};
use gaitplan::phase::RobotModel;
use gaitplan::planner::{evaluate_esr, ShootingConfig};
use gaitplan::terrain::{generate, TerrainScenario};

fn main() {
    let episodes: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);

    let scenario = TerrainScenario::flat_world(7);
    let map = Arc::new(generate(&scenario).unwrap());
    let env = GaitEnv::from_scenario(
        &scenario,
        map,
        Arc::new(RobotModel::default()),
        EnvConfig::default(),
    );

    for (n, h, bias) in [
        (2048usize, 2usize, 0.6f64),
        (2048, 2, 0.8),
        (8192, 2, 0.4),
        (2048, 3, 0.6),
    ] {
        let config = ShootingConfig {
            n_candidates: n,
            horizon: h,
            discount: 0.99,
            seed: 1000,
            stance_bias: bias,
        };
        let t0 = Instant::now();
        let report = evaluate_esr(&env, &config, episodes).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "n={n} h={h} bias={bias}: esr={:.2} mean_steps={:.1} failures={:?} ({:.1}s, {:.1}s/ep)",
            report.esr,
            report.mean_steps,
            report.failures,
            dt,
            dt / episodes as f64,
        );
    }
}
