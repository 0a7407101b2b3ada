//! The known-dynamics benchmark against the closed-form ergodic policy.
//!
//! Runs the benchmark planner at desk scale and prints its objective, the
//! objective of the closed-form policy, and both policies on a few states.

use mfucrl::config::RunConfig;
use mfucrl::driver::known_dynamics_benchmark;
use mfucrl::flow::Policy;
use mfucrl::swarm::{DynamicsVariant, ErgodicPolicy};
use mfucrl::torus::GridDistribution;

fn main() -> mfucrl::Result<()> {
    let mut cfg = RunConfig::desk_scale(DynamicsVariant::Basic);
    if let Some(seed) = std::env::args().nth(1) {
        cfg.seed = seed.parse().expect("seed must be an integer");
    }
    let b = known_dynamics_benchmark(&cfg)?;
    println!("J* = {:.5} after {} evaluations; closed-form policy J = {:.5}", b.j_star, b.evals, b.j_analytic);
    let mu = GridDistribution::uniform(cfg.env.m)?;
    println!("    s   planned  closed-form");
    for i in 0..10 {
        let s = i as f64 / 10.0;
        println!("{s:5.2} {:9.4} {:12.4}", b.policy.action(s, &mu), ErgodicPolicy::eval(s));
    }
    Ok(())
}
