//! Oracle checks behind `mfucrl validate`.
//!
//! Two independent simulations of the same system are compared against the
//! grid flow: an interacting particle system, whose empirical histogram must
//! track the flow in W1, and a Monte-Carlo estimate of the objective from
//! representative agents moving through the flow's distributions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::flow::{self, Drift, FlowOptions, Policy, Profile};
use crate::gp::FeatureMode;
use crate::planner::PolicyParams;
use crate::seed::{self, tag};
use crate::swarm::{self, InitialDistribution, SwarmConfig};
use crate::torus::{wasserstein1_circle, wrap, GridDistribution};

/// A random smooth policy: a width-4 network with `N(0, 0.5^2)` weights.
pub fn random_policy(a_min: f64, a_max: f64, seed: u64) -> PolicyParams {
    let p = PolicyParams::zeros(4, FeatureMode::None, a_min, a_max);
    let mut rng = seed::rng(seed, &[tag::VALIDATE, 0]);
    let w: Vec<f64> = (0..p.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.5 * z
        })
        .collect();
    p.with_weights(&w)
}

/// A random wrapped Gaussian start with std in `[0.1, 0.3]`.
pub fn random_start(m: usize, seed: u64) -> Result<GridDistribution> {
    let mut rng = seed::rng(seed, &[tag::VALIDATE, 1]);
    let mean: f64 = rng.gen();
    let std = rng.gen_range(0.1..0.3);
    GridDistribution::wrapped_gaussian(m, mean, std)
}

/// `max_h W1(flow mu_h, particle histogram_h)` over `h <= steps`.
pub fn flow_particle_gap(
    mu0: &GridDistribution,
    policy: &dyn Policy,
    drift: &dyn Drift,
    steps: usize,
    particles: usize,
    options: FlowOptions,
    seed: u64,
) -> Result<f64> {
    let flow = flow::rollout_with(mu0, steps, Profile::Stationary(policy), drift, options)?;
    let parts = flow::particle_rollout(mu0, Profile::Stationary(policy), steps, drift, particles, seed)?;
    let mut worst: f64 = 0.0;
    for (a, b) in flow.iter().zip(&parts) {
        worst = worst.max(wasserstein1_circle(a, b)?);
    }
    Ok(worst)
}

/// Monte-Carlo objective and its standard error.
///
/// Each agent starts from `mu0`, acts and is rewarded against the flow's
/// `mu_h`, and moves with the true noisy transition.
pub fn monte_carlo_objective(
    mu0: &GridDistribution,
    policy: &dyn Policy,
    drift: &dyn Drift,
    horizon: usize,
    particles: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let traj = flow::flow_rollout_stationary(mu0, policy, horizon, drift)?;
    let starts = mu0.sample(particles, seed::derive(seed, &[tag::VALIDATE, tag::SAMPLE]));
    let sigma = drift.noise_std();
    let mut rng = seed::rng(seed, &[tag::VALIDATE, tag::NOISE]);
    let mut returns = Vec::with_capacity(particles);
    for start in starts {
        let mut s = start.get();
        let mut ret = 0.0;
        for mu in &traj[..horizon] {
            let a = policy.action(s, mu);
            ret += swarm::reward(s, a, mu);
            let z: f64 = StandardNormal.sample(&mut rng);
            s = wrap(drift.drift(s, a, mu) + sigma * z);
        }
        returns.push(ret);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Terminal W1 distance between the flow from each start in `starts` and the
/// flow from the ergodic start, both under `policy` for `env.horizon` steps.
pub fn initialization_spread(
    env: &SwarmConfig,
    policy: &dyn Policy,
    starts: &[InitialDistribution],
) -> Result<Vec<f64>> {
    let truth = env.true_dynamics();
    let terminal = |init: InitialDistribution| -> Result<GridDistribution> {
        let mu0 = SwarmConfig { initial: init, ..env.clone() }.initial_distribution()?;
        let traj = flow::flow_rollout_stationary(&mu0, policy, env.horizon, &truth)?;
        Ok(traj.last().expect("rollouts include mu0").clone())
    };
    let reference = terminal(InitialDistribution::Ergodic)?;
    starts
        .iter()
        .map(|&init| wasserstein1_circle(&terminal(init)?, &reference))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub case: usize,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Run both oracle checks for `cfg.env` with `cfg.validate` settings.
pub fn validate(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let env = cfg.swarm();
    let v = &cfg.validate;
    let truth = env.true_dynamics();
    let options = FlowOptions {
        periodic: v.periodic,
        ..FlowOptions::default()
    };
    let mut rows = Vec::new();
    for i in 0..v.policies {
        let case_seed = seed::derive(cfg.seed, &[tag::VALIDATE, i as u64]);
        let policy = random_policy(env.a_min, env.a_max, case_seed);
        let mu0 = random_start(env.m, case_seed)?;
        let gap = flow_particle_gap(&mu0, &policy, &truth, v.steps, v.particles, options, case_seed)?;
        rows.push(CheckRow {
            check: "flow_vs_particles_w1".into(),
            case: i,
            value: gap,
            threshold: v.w1_threshold,
            pass: gap <= v.w1_threshold,
        });
    }
    for i in 0..v.policies {
        let case_seed = seed::derive(cfg.seed, &[tag::VALIDATE, tag::SAMPLE, i as u64]);
        let policy = random_policy(env.a_min, env.a_max, case_seed);
        let mu0 = random_start(env.m, case_seed)?;
        let j = swarm::episode_objective_with(&mu0, Profile::Stationary(&policy), v.mc_steps, &truth, options)?;
        let (mc, stderr) = monte_carlo_objective(&mu0, &policy, &truth, v.mc_steps, v.mc_particles, case_seed)?;
        let threshold = v.stderr_factor * stderr;
        rows.push(CheckRow {
            check: "objective_vs_monte_carlo".into(),
            case: i,
            value: (j - mc).abs(),
            threshold,
            pass: (j - mc).abs() <= threshold,
        });
    }
    Ok(rows)
}
