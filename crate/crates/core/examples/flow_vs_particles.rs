//! Grid flow against an interacting particle system.
//!
//! For a few random policies and starts, prints the worst W1 gap between the
//! flow and the particle histogram over 20 steps, for both dynamics.

use mfucrl::checks::{flow_particle_gap, random_policy, random_start};
use mfucrl::flow::FlowOptions;
use mfucrl::swarm::{DynamicsVariant, SwarmConfig};

fn main() -> mfucrl::Result<()> {
    let particles: usize = std::env::args().nth(1).map_or(50_000, |s| s.parse().expect("particle count"));
    for variant in [DynamicsVariant::Basic, DynamicsVariant::Congestion] {
        let env = SwarmConfig::with_grid(100, 50, variant);
        let truth = env.true_dynamics();
        for case in 0..3u64 {
            let policy = random_policy(env.a_min, env.a_max, case);
            let mu0 = random_start(env.m, case)?;
            let gap = flow_particle_gap(&mu0, &policy, &truth, 20, particles, FlowOptions::default(), case)?;
            println!("{variant:?} case {case}: max W1 gap {gap:.5} with {particles} particles");
        }
    }
    Ok(())
}
