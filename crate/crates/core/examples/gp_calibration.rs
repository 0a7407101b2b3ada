//! Calibration of the drift model on held-out transitions.
//!
//! Trains on transitions from three random policies and reports how often
//! `mean +- 2 std` covers the true displacement under a fourth policy.

use mfucrl::checks::{random_policy, random_start};
use mfucrl::config::RunConfig;
use mfucrl::driver::collect_transitions;
use mfucrl::flow::flow_rollout_stationary;
use mfucrl::gp::{FeatureMode, GpPosterior};
use mfucrl::swarm::DynamicsVariant;

fn main() -> mfucrl::Result<()> {
    let cfg = RunConfig::desk_scale(DynamicsVariant::Basic);
    let env = cfg.swarm();
    let truth = env.true_dynamics();
    let collect = |seed: u64| -> mfucrl::Result<_> {
        let policy = random_policy(env.a_min, env.a_max, seed);
        let mu0 = random_start(env.m, seed)?;
        let traj = flow_rollout_stationary(&mu0, &policy, env.horizon, &truth)?;
        Ok(collect_transitions(&traj, &policy, &truth, cfg.run.particles, seed))
    };
    for seed in 0..10u64 {
        let mut train = Vec::new();
        for p in 0..3 {
            for t in collect(1000 * seed + p)? {
                train.push((t.joint_input(FeatureMode::None)?, t.displacement()));
            }
        }
        let gp = GpPosterior::fit(cfg.kernel(), &train, cfg.noise_var(), cfg.model.subset_cap)?;
        let held_out = collect(1000 * seed + 999)?;
        let mut hits = 0;
        let mut width = 0.0;
        for t in &held_out {
            let (mean, std) = gp.predict(&t.joint_input(FeatureMode::None)?)?;
            hits += usize::from((t.a * env.dt - mean).abs() <= 2.0 * std);
            width += std;
        }
        let n = held_out.len() as f64;
        println!(
            "seed {seed}: coverage {:.3}, mean std {:.5} (transition noise std {:.5})",
            hits as f64 / n,
            width / n,
            env.noise_std
        );
    }
    Ok(())
}
