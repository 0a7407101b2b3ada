//! The closed-form ergodic pair of the basic dynamics.
//!
//! Checks that one flow step barely moves the ergodic distribution and
//! compares the objective of the closed-form policy from the ergodic start
//! with its stationary per-step reward.

use mfucrl::flow::{flow_step, Profile};
use mfucrl::swarm::{self, DynamicsVariant, SwarmConfig};
use mfucrl::torus::wasserstein1_circle;

fn main() -> mfucrl::Result<()> {
    for m in [50, 100, 200] {
        let env = SwarmConfig::with_grid(m, 50, DynamicsVariant::Basic);
        let (policy, mu_star) = swarm::analytic_solution(m)?;
        let next = flow_step(&mu_star, &policy, &env.true_dynamics())?;
        let gap = wasserstein1_circle(&next, &mu_star)?;
        let per_step = swarm::integrated_reward(&mu_star, &policy);
        let j = swarm::episode_objective(&mu_star, Profile::Stationary(&policy), env.horizon, &env.true_dynamics())?;
        println!(
            "M={m:>3}: one-step W1 {gap:.6}; reward per step {per_step:.5}; J over {} steps {j:.4}",
            env.horizon
        );
    }
    Ok(())
}
