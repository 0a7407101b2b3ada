//! Sensitivity of the terminal distribution to the initial one.
//!
//! Plans with known dynamics, then runs the planned policy from uniform and
//! concentrated Gaussian starts and measures how far each ends up from the
//! run that starts at the ergodic distribution.

use mfucrl::checks::initialization_spread;
use mfucrl::config::RunConfig;
use mfucrl::driver::known_dynamics_benchmark;
use mfucrl::flow::{ConstantPolicy, Policy};
use mfucrl::swarm::{DynamicsVariant, ErgodicPolicy, InitialDistribution, SwarmConfig};

fn main() -> mfucrl::Result<()> {
    let cfg = RunConfig::desk_scale(DynamicsVariant::Basic);
    let env: SwarmConfig = cfg.swarm();
    let starts = [
        InitialDistribution::Uniform,
        InitialDistribution::Gaussian { mean: 0.5, std: 0.04 },
    ];
    let planned = known_dynamics_benchmark(&cfg)?.policy;
    let candidates: [(&str, &dyn Policy); 3] = [
        ("planned", &planned),
        ("closed-form", &ErgodicPolicy),
        ("idle", &ConstantPolicy(0.0)),
    ];
    for (name, policy) in candidates {
        let gaps = initialization_spread(&env, policy, &starts)?;
        for (init, gap) in starts.iter().zip(gaps) {
            println!("{name:<12} from {init:<18}: terminal W1 to ergodic-start run {gap:.3e}");
        }
    }
    Ok(())
}
