//! The swarm-motion benchmark on the unit torus.
//!
//! Agents move with `s' = f(s, a, mu) + N(0, dt)` and collect
//!
//! ```text
//! r(s, a, mu) = phi(s) - |a|/2 - ln mu(s)
//! phi(s)      = -2 pi^2 [-sin(2 pi s) + cos^2(2 pi s)] + 2 sin(2 pi s)
//! ```
//!
//! The continuous-time problem has the ergodic solution
//! `pi*(s) = 2 pi cos(2 pi s)` with `mu*(s) ∝ exp(2 sin(2 pi s))`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, Drift, FlowOptions, Policy, Profile};
use crate::torus::GridDistribution;

/// Which transition law the environment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsVariant {
    /// `f(s, a) = s + a dt`
    Basic,
    /// `f(s, a, mu) = s + a (4 - 4 mu(s)) dt`
    Congestion,
}

/// Initial population distribution, reset at every episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDistribution {
    Ergodic,
    Uniform,
    Gaussian { mean: f64, std: f64 },
}

impl fmt::Display for InitialDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialDistribution::Ergodic => f.write_str("ergodic"),
            InitialDistribution::Uniform => f.write_str("uniform"),
            InitialDistribution::Gaussian { mean, std } => write!(f, "gaussian({mean},{std})"),
        }
    }
}

impl FromStr for InitialDistribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "ergodic" => return Ok(InitialDistribution::Ergodic),
            "uniform" => return Ok(InitialDistribution::Uniform),
            _ => {}
        }
        let inner = t
            .strip_prefix("gaussian(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| {
                format!("expected \"ergodic\", \"uniform\" or \"gaussian(mean,std)\", got {s:?}")
            })?;
        let mut parts = inner.split(',').map(|p| p.trim().parse::<f64>());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(mean)), Some(Ok(std)), None) if std > 0.0 => {
                Ok(InitialDistribution::Gaussian { mean, std })
            }
            _ => Err(format!("bad gaussian parameters in {s:?}")),
        }
    }
}

impl TryFrom<String> for InitialDistribution {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<InitialDistribution> for String {
    fn from(d: InitialDistribution) -> String {
        d.to_string()
    }
}

/// Resolved environment constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig {
    pub m: usize,
    pub horizon: usize,
    pub dt: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub dynamics: DynamicsVariant,
    pub noise_std: f64,
    pub initial: InitialDistribution,
}

impl SwarmConfig {
    /// `M = 200`, `H = 200`, `dt = 1/200`, actions in `[-7, 7]`.
    pub fn full_scale(dynamics: DynamicsVariant) -> Self {
        Self::with_grid(200, 200, dynamics)
    }

    /// `M = 100`, `H = 50`, `dt = 1/50`.
    pub fn desk_scale(dynamics: DynamicsVariant) -> Self {
        Self::with_grid(100, 50, dynamics)
    }

    /// Unit-time episode of `horizon` steps on an `m`-point grid.
    pub fn with_grid(m: usize, horizon: usize, dynamics: DynamicsVariant) -> Self {
        let dt = 1.0 / horizon as f64;
        SwarmConfig {
            m,
            horizon,
            dt,
            a_min: -7.0,
            a_max: 7.0,
            dynamics,
            noise_std: dt.sqrt(),
            initial: InitialDistribution::Ergodic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::config("env.m", "grid size must be at least 2"));
        }
        if self.horizon == 0 {
            return Err(Error::config("env.h", "horizon must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("env.dt", "step length must be positive"));
        }
        if !(self.a_min < self.a_max) {
            return Err(Error::config(
                "env.a_min",
                format!("a_min ({}) must be below a_max ({})", self.a_min, self.a_max),
            ));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::config("env.noise_std", "noise std must be positive"));
        }
        Ok(())
    }

    pub fn true_dynamics(&self) -> SwarmDynamics {
        SwarmDynamics {
            variant: self.dynamics,
            dt: self.dt,
            noise_std: self.noise_std,
        }
    }

    pub fn initial_distribution(&self) -> Result<GridDistribution> {
        match self.initial {
            InitialDistribution::Ergodic => Ok(ergodic_distribution(self.m)?),
            InitialDistribution::Uniform => GridDistribution::uniform(self.m),
            InitialDistribution::Gaussian { mean, std } => {
                GridDistribution::wrapped_gaussian(self.m, mean, std)
            }
        }
    }
}

/// The true swarm dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmDynamics {
    pub variant: DynamicsVariant,
    pub dt: f64,
    pub noise_std: f64,
}

impl SwarmDynamics {
    pub fn eval(&self, s: f64, a: f64, mu: &GridDistribution) -> f64 {
        match self.variant {
            DynamicsVariant::Basic => s + a * self.dt,
            DynamicsVariant::Congestion => s + a * (4.0 - 4.0 * mu.density_at(s)) * self.dt,
        }
    }
}

impl Drift for SwarmDynamics {
    fn drift(&self, s: f64, a: f64, mu: &GridDistribution) -> f64 {
        self.eval(s, a, mu)
    }
    fn noise_std(&self) -> f64 {
        self.noise_std
    }
    fn reads_distribution(&self) -> bool {
        self.variant == DynamicsVariant::Congestion
    }
}

/// Positional reward term. `|cos|^2` is written as `cos^2`.
pub fn phi(s: f64) -> f64 {
    let (sin, cos) = (TAU * s).sin_cos();
    -2.0 * PI * PI * (-sin + cos * cos) + 2.0 * sin
}

/// `r(s, a, mu) = phi(s) - |a|/2 - ln mu(s)` with the density floored.
pub fn reward(s: f64, a: f64, mu: &GridDistribution) -> f64 {
    phi(s) - 0.5 * a.abs() - mu.ln_density_at(s)
}

/// Population-averaged reward for given grid actions.
pub fn integrated_reward_with_actions(mu: &GridDistribution, actions: &[f64]) -> f64 {
    let m = mu.m();
    let mut acc = 0.0;
    for (i, (&h, &a)) in mu.heights().iter().zip(actions).enumerate() {
        if h == 0.0 {
            continue;
        }
        let s = i as f64 / m as f64;
        acc += h * (phi(s) - 0.5 * a.abs() - h.max(crate::torus::DENSITY_FLOOR).ln());
    }
    acc / m as f64
}

/// `(1/M) sum_i mu(m_i) r(m_i, pi(m_i, mu), mu)`.
pub fn integrated_reward(mu: &GridDistribution, policy: &dyn Policy) -> f64 {
    let mut actions = vec![0.0; mu.m()];
    policy.actions_on_grid(mu, &mut actions);
    integrated_reward_with_actions(mu, &actions)
}

/// `J = sum_{h<H} rhat(mu_h, pi_h)` along the flow from `mu0`.
pub fn episode_objective(
    mu0: &GridDistribution,
    profile: Profile<'_>,
    horizon: usize,
    drift: &dyn Drift,
) -> Result<f64> {
    episode_objective_with(mu0, profile, horizon, drift, FlowOptions::default())
}

pub fn episode_objective_with(
    mu0: &GridDistribution,
    profile: Profile<'_>,
    horizon: usize,
    drift: &dyn Drift,
    options: FlowOptions,
) -> Result<f64> {
    let mut total = 0.0;
    flow::walk(mu0, horizon, profile, drift, options, |_, mu, actions| {
        total += integrated_reward_with_actions(mu, actions);
    })?;
    Ok(total)
}

/// Summed integrated reward of an existing trajectory `[mu_0, ..., mu_H]`.
pub fn trajectory_objective(traj: &[GridDistribution], policy: &dyn Policy) -> f64 {
    traj[..traj.len().saturating_sub(1)]
        .iter()
        .map(|mu| integrated_reward(mu, policy))
        .sum()
}

/// `pi*(s) = 2 pi cos(2 pi s)`, independent of the distribution.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErgodicPolicy;

impl ErgodicPolicy {
    pub fn eval(s: f64) -> f64 {
        TAU * (TAU * s).cos()
    }
}

impl Policy for ErgodicPolicy {
    fn action(&self, s: f64, _mu: &GridDistribution) -> f64 {
        Self::eval(s)
    }
    fn reads_distribution(&self) -> bool {
        false
    }
}

/// `mu*(s) = exp(2 sin(2 pi s)) / Z` on an `m`-point grid.
pub fn ergodic_distribution(m: usize) -> Result<GridDistribution> {
    GridDistribution::from_density(m, |s| (2.0 * (TAU * s).sin()).exp())
}

/// The continuous-time ergodic pair `(pi*, mu*)`.
pub fn analytic_solution(m: usize) -> Result<(ErgodicPolicy, GridDistribution)> {
    Ok((ErgodicPolicy, ergodic_distribution(m)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ConstantPolicy;

    const TWO_PI_SQ: f64 = 2.0 * PI * PI;

    #[test]
    fn dynamics_examples() {
        let u = GridDistribution::uniform(100).unwrap();
        let basic = SwarmDynamics {
            variant: DynamicsVariant::Basic,
            dt: 1.0 / 200.0,
            noise_std: 0.1,
        };
        assert!((basic.eval(0.5, 2.0, &u) - 0.51).abs() < 1e-15);
        let cong = SwarmDynamics {
            variant: DynamicsVariant::Congestion,
            ..basic
        };
        assert_eq!(cong.eval(0.5, 2.0, &u), 0.5);
    }

    #[test]
    fn congestion_with_half_density() {
        let mu = GridDistribution::from_heights(vec![0.5, 1.5]).unwrap();
        let cong = SwarmDynamics {
            variant: DynamicsVariant::Congestion,
            dt: 1.0 / 200.0,
            noise_std: 0.1,
        };
        assert_eq!(mu.density_at(0.0), 0.5);
        assert!((cong.eval(0.0, 1.0, &mu) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn basic_dynamics_ignores_mu() {
        let basic = SwarmConfig::desk_scale(DynamicsVariant::Basic).true_dynamics();
        let a = GridDistribution::uniform(100).unwrap();
        let b = GridDistribution::from_density(100, |s| 1.0 + s).unwrap();
        for i in 0..50 {
            let s = i as f64 / 50.0;
            assert_eq!(
                basic.eval(s, 3.3, &a).to_bits(),
                basic.eval(s, 3.3, &b).to_bits()
            );
        }
    }

    #[test]
    fn reward_examples() {
        let u = GridDistribution::uniform(100).unwrap();
        assert!((reward(0.0, 0.0, &u) + TWO_PI_SQ).abs() < 1e-12);
        assert!((reward(0.25, 0.0, &u) - (TWO_PI_SQ + 2.0)).abs() < 1e-12);
        assert!((reward(0.25, 4.0, &u) - TWO_PI_SQ).abs() < 1e-12);
    }

    #[test]
    fn empty_bins_are_floored() {
        let d = GridDistribution::point_mass(10, 0).unwrap();
        let r = reward(0.5, 0.0, &d);
        assert!(r.is_finite());
        assert!((r - (phi(0.5) - crate::torus::DENSITY_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn integrated_reward_of_uniform() {
        let u = GridDistribution::uniform(200).unwrap();
        let zero = integrated_reward(&u, &ConstantPolicy(0.0));
        assert!((zero + PI * PI).abs() < 0.05, "{zero}");
        let two = integrated_reward(&u, &ConstantPolicy(2.0));
        assert!((two - (zero - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn concentrated_mass_matches_direct_sum() {
        let mut h = vec![1e-3; 20];
        h[3] = 50.0;
        let mu = GridDistribution::from_heights(h).unwrap();
        let pi = ConstantPolicy(1.5);
        let mut direct = 0.0;
        for i in 0..20 {
            let s = i as f64 / 20.0;
            direct += mu.heights()[i] / 20.0
                * (phi(s) - 0.75 - mu.heights()[i].ln());
        }
        assert!((integrated_reward(&mu, &pi) - direct).abs() < 1e-12);
    }

    #[test]
    fn analytic_pair() {
        assert!((ErgodicPolicy::eval(0.0) - TAU).abs() < 1e-15);
        assert!(ErgodicPolicy::eval(0.25).abs() < 1e-15);
        let (_, mu) = analytic_solution(200).unwrap();
        let ratio = mu.density_at(0.25) / mu.density_at(0.75);
        assert!((ratio - 4f64.exp()).abs() < 1e-9);
        for i in 0..1000 {
            assert!(ErgodicPolicy::eval(i as f64 / 1000.0).abs() < 7.0);
        }
    }

    #[test]
    fn short_objectives() {
        let cfg = SwarmConfig::desk_scale(DynamicsVariant::Basic);
        let f = cfg.true_dynamics();
        let u = GridDistribution::uniform(cfg.m).unwrap();
        let zero = ConstantPolicy(0.0);
        let j1 = episode_objective(&u, Profile::Stationary(&zero), 1, &f).unwrap();
        assert_eq!(j1, integrated_reward(&u, &zero));
        let j2 = episode_objective(&u, Profile::Stationary(&zero), 2, &f).unwrap();
        assert!((j2 - 2.0 * j1).abs() < 1e-9);
    }

    #[test]
    fn initial_parsing() {
        assert_eq!(
            "gaussian(0.5, 0.04)".parse::<InitialDistribution>().unwrap(),
            InitialDistribution::Gaussian {
                mean: 0.5,
                std: 0.04
            }
        );
        assert!("gaussian(0.5)".parse::<InitialDistribution>().is_err());
        assert!("triangle".parse::<InitialDistribution>().is_err());
        let g = InitialDistribution::Gaussian {
            mean: 0.5,
            std: 0.04,
        };
        assert_eq!(g.to_string().parse::<InitialDistribution>().unwrap(), g);
    }
}
