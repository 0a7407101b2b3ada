//! The mean-field transition operator and distribution roll-outs.
//!
//! One step pushes every grid bin `j` through the drift `f(m_j, pi(m_j, mu), mu)`
//! and spreads it with the Gaussian transition kernel. The kernel is evaluated
//! on three periods `[-1, 2)` of the grid and folded back onto the torus:
//!
//! ```text
//! mu'(m_i) = sum_j (1/M) mu(m_j) sum_{k in {-1,0,1}} phi((m_{i+kM} - f_j) / sigma) / sigma
//! ```
//!
//! [`particle_rollout`] simulates the same flow with independent particles and
//! serves as a Monte-Carlo oracle for it.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;
use crate::torus::{wrap, GridDistribution};

/// Kernel weights beyond this many standard deviations are below 1e-17
/// relative and are not accumulated.
const KERNEL_REACH_SIGMAS: f64 = 9.0;

/// Deterministic part of a transition, `s' = drift(s, a, mu) + noise`.
pub trait Drift: Sync {
    /// Next-state mean before wrapping.
    fn drift(&self, s: f64, a: f64, mu: &GridDistribution) -> f64;

    /// Standard deviation of the additive Gaussian transition noise.
    fn noise_std(&self) -> f64;

    /// Whether `drift` reads `mu`. Roll-outs cache grid drifts across steps
    /// when neither the drift nor the policy does.
    fn reads_distribution(&self) -> bool {
        true
    }

    /// Drift at every grid point of `mu`, given the grid actions.
    fn drift_on_grid(&self, mu: &GridDistribution, actions: &[f64], out: &mut [f64]) {
        for (i, (o, &a)) in out.iter_mut().zip(actions).enumerate() {
            *o = self.drift(mu.grid_point(i), a, mu);
        }
    }
}

/// A representative-agent policy `a = pi(s, mu)`.
pub trait Policy: Sync {
    fn action(&self, s: f64, mu: &GridDistribution) -> f64;

    fn reads_distribution(&self) -> bool {
        true
    }

    fn actions_on_grid(&self, mu: &GridDistribution, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.action(mu.grid_point(i), mu);
        }
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action(&self, s: f64, mu: &GridDistribution) -> f64 {
        (**self).action(s, mu)
    }
    fn reads_distribution(&self) -> bool {
        (**self).reads_distribution()
    }
    fn actions_on_grid(&self, mu: &GridDistribution, out: &mut [f64]) {
        (**self).actions_on_grid(mu, out)
    }
}

/// The drift-free system `s' = s + noise`.
#[derive(Debug, Clone, Copy)]
pub struct PureDiffusion {
    pub noise_std: f64,
}

impl Drift for PureDiffusion {
    fn drift(&self, s: f64, _a: f64, _mu: &GridDistribution) -> f64 {
        s
    }
    fn noise_std(&self) -> f64 {
        self.noise_std
    }
    fn reads_distribution(&self) -> bool {
        false
    }
}

/// Policy that ignores its inputs.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub f64);

impl Policy for ConstantPolicy {
    fn action(&self, _s: f64, _mu: &GridDistribution) -> f64 {
        self.0
    }
    fn reads_distribution(&self) -> bool {
        false
    }
}

/// Clamps the wrapped policy's actions into `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct Clamped<P> {
    pub inner: P,
    pub lo: f64,
    pub hi: f64,
}

impl<P: Policy> Policy for Clamped<P> {
    fn action(&self, s: f64, mu: &GridDistribution) -> f64 {
        self.inner.action(s, mu).clamp(self.lo, self.hi)
    }
    fn reads_distribution(&self) -> bool {
        self.inner.reads_distribution()
    }
}

/// Step switches. Both are on for the real operator; turning them off is a
/// test hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowOptions {
    /// Rescale the result to unit mass.
    pub renormalize: bool,
    /// Fold the kernel over three periods. When off, drift targets are not
    /// wrapped and mass leaving `[0, 1)` is lost.
    pub periodic: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            renormalize: true,
            periodic: true,
        }
    }
}

/// The policy applied at each step of a roll-out.
#[derive(Clone, Copy)]
pub enum Profile<'a> {
    /// One policy reused at every step.
    Stationary(&'a dyn Policy),
    /// One policy per step.
    PerStep(&'a [&'a dyn Policy]),
}

impl<'a> Profile<'a> {
    fn at(&self, h: usize) -> &'a dyn Policy {
        match self {
            Profile::Stationary(p) => *p,
            Profile::PerStep(ps) => ps[h],
        }
    }
}

/// Result of one step before and after renormalization.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: GridDistribution,
    /// `(1/M) * sum(heights)` before renormalization.
    pub raw_mass: f64,
}

/// Grid actions and drift targets for one step.
pub fn grid_controls(
    mu: &GridDistribution,
    policy: &dyn Policy,
    drift: &dyn Drift,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = mu.m();
    let mut actions = vec![0.0; m];
    policy.actions_on_grid(mu, &mut actions);
    let mut targets = vec![0.0; m];
    drift.drift_on_grid(mu, &actions, &mut targets);
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::Dynamics(format!(
            "non-finite drift {} at grid point {} (action {})",
            targets[i],
            mu.grid_point(i),
            actions[i]
        )));
    }
    Ok((actions, targets))
}

/// Push `mu` through precomputed drift targets and the Gaussian kernel.
pub fn transport(
    mu: &GridDistribution,
    targets: &[f64],
    noise_std: f64,
    options: FlowOptions,
) -> StepOutcome {
    let m = mu.m();
    let mf = m as f64;
    let mut out = vec![0.0; m];
    // Gaussian exponent per squared grid index, exp(-a u^2) with u = n - c.
    let a = 1.0 / (2.0 * noise_std * noise_std * mf * mf);
    let q = (-2.0 * a).exp();
    let norm = 1.0 / (noise_std * (2.0 * std::f64::consts::PI).sqrt() * mf);
    let reach = (KERNEL_REACH_SIGMAS * noise_std * mf).ceil() as i64;
    let (lo, hi) = if options.periodic {
        (-(m as i64), 2 * m as i64 - 1)
    } else {
        (0, m as i64 - 1)
    };
    let mi = m as i64;

    for (&h, &target) in mu.heights().iter().zip(targets) {
        let w = h * norm;
        if w == 0.0 {
            continue;
        }
        let c = if options.periodic { wrap(target) } else { target } * mf;
        let n0 = c.round();
        let u0 = n0 - c;
        let n0 = n0 as i64;
        let g0 = (-a * u0 * u0).exp();

        // Walk outwards from the nearest node with the ratio recurrences
        // g(n+1)/g(n) = exp(-a(2u+1)) and g(n-1)/g(n) = exp(-a(1-2u)).
        let start = n0.rem_euclid(mi) as usize;
        let mut g = g0;
        let mut r = (-a * (2.0 * u0 + 1.0)).exp();
        let mut idx = start;
        for n in n0..=(n0 + reach).min(hi) {
            if n >= lo {
                out[idx] += w * g;
            }
            g *= r;
            r *= q;
            idx += 1;
            if idx == m {
                idx = 0;
            }
        }
        let mut g = g0;
        let mut r = (-a * (1.0 - 2.0 * u0)).exp();
        let mut idx = start;
        let mut n = n0 - 1;
        while n >= (n0 - reach).max(lo) {
            g *= r;
            r *= q;
            idx = if idx == 0 { m - 1 } else { idx - 1 };
            if n <= hi {
                out[idx] += w * g;
            }
            n -= 1;
        }
    }

    let raw_mass = out.iter().sum::<f64>() / mf;
    let next = if options.renormalize && raw_mass > 0.0 {
        GridDistribution::from_raw_unchecked(out)
    } else {
        // Unnormalized heights are still valid heights for inspection.
        GridDistribution::from_parts_unnormalized(out)
    };
    StepOutcome { next, raw_mass }
}

/// One application of the flow operator.
pub fn flow_step(
    mu: &GridDistribution,
    policy: &dyn Policy,
    drift: &dyn Drift,
) -> Result<GridDistribution> {
    Ok(flow_step_with(mu, policy, drift, FlowOptions::default())?.next)
}

pub fn flow_step_with(
    mu: &GridDistribution,
    policy: &dyn Policy,
    drift: &dyn Drift,
    options: FlowOptions,
) -> Result<StepOutcome> {
    let (_, targets) = grid_controls(mu, policy, drift)?;
    Ok(transport(mu, &targets, drift.noise_std(), options))
}

/// Roll the flow forward `horizon` steps, calling `visit(h, mu_h, actions_h)`
/// for every `h < horizon` before stepping. Returns `mu_horizon`.
///
/// Grid controls are computed once when the profile is stationary and
/// neither the policy nor the drift reads the distribution.
pub fn walk(
    mu0: &GridDistribution,
    horizon: usize,
    profile: Profile<'_>,
    drift: &dyn Drift,
    options: FlowOptions,
    mut visit: impl FnMut(usize, &GridDistribution, &[f64]),
) -> Result<GridDistribution> {
    let cacheable = matches!(profile, Profile::Stationary(p) if !p.reads_distribution())
        && !drift.reads_distribution();
    let mut cache: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut mu = mu0.clone();
    for h in 0..horizon {
        let computed;
        let (actions, targets) = if cacheable {
            if cache.is_none() {
                cache = Some(grid_controls(&mu, profile.at(h), drift)?);
            }
            let (a, t) = cache.as_ref().expect("filled above");
            (a.as_slice(), t.as_slice())
        } else {
            computed = grid_controls(&mu, profile.at(h), drift)?;
            (computed.0.as_slice(), computed.1.as_slice())
        };
        visit(h, &mu, actions);
        mu = transport(&mu, targets, drift.noise_std(), options).next;
    }
    Ok(mu)
}

/// `[mu0, mu1, ..., mu_H]` for a per-step policy profile.
pub fn flow_rollout(
    mu0: &GridDistribution,
    profile: &[&dyn Policy],
    drift: &dyn Drift,
) -> Result<Vec<GridDistribution>> {
    rollout_with(
        mu0,
        profile.len(),
        Profile::PerStep(profile),
        drift,
        FlowOptions::default(),
    )
}

/// `[mu0, ..., mu_H]` with the same policy at every step.
pub fn flow_rollout_stationary(
    mu0: &GridDistribution,
    policy: &dyn Policy,
    horizon: usize,
    drift: &dyn Drift,
) -> Result<Vec<GridDistribution>> {
    rollout_with(
        mu0,
        horizon,
        Profile::Stationary(policy),
        drift,
        FlowOptions::default(),
    )
}

pub fn rollout_with(
    mu0: &GridDistribution,
    horizon: usize,
    profile: Profile<'_>,
    drift: &dyn Drift,
    options: FlowOptions,
) -> Result<Vec<GridDistribution>> {
    let mut traj = Vec::with_capacity(horizon + 1);
    let last = walk(mu0, horizon, profile, drift, options, |_, mu, _| {
        traj.push(mu.clone())
    })?;
    traj.push(last);
    Ok(traj)
}

/// Simulate `n` particles through the same dynamics, with the policy and
/// drift reading the particles' own empirical histogram. Returns the
/// histograms `[mu_hat_0, ..., mu_hat_H]`.
pub fn particle_rollout(
    mu0: &GridDistribution,
    profile: Profile<'_>,
    horizon: usize,
    drift: &dyn Drift,
    n: usize,
    seed: u64,
) -> Result<Vec<GridDistribution>> {
    let m = mu0.m();
    let mut particles: Vec<f64> = mu0.sample(n, seed).into_iter().map(f64::from).collect();
    let sigma = drift.noise_std();
    let mut hist = GridDistribution::from_samples(m, &particles)?;
    let mut out = Vec::with_capacity(horizon + 1);
    for h in 0..horizon {
        let policy = profile.at(h);
        let mut rng = seed::rng(seed, &[seed::tag::NOISE, h as u64]);
        for s in particles.iter_mut() {
            let a = policy.action(*s, &hist);
            let f = drift.drift(*s, a, &hist);
            if !f.is_finite() {
                return Err(Error::Dynamics(format!("non-finite drift {f} at s = {s}")));
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            *s = wrap(f + sigma * z);
        }
        let next = GridDistribution::from_samples(m, &particles)?;
        out.push(std::mem::replace(&mut hist, next));
    }
    out.push(hist);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::wasserstein1_circle;

    struct Shift {
        dt: f64,
        sigma: f64,
    }

    impl Drift for Shift {
        fn drift(&self, s: f64, a: f64, _mu: &GridDistribution) -> f64 {
            s + a * self.dt
        }
        fn noise_std(&self) -> f64 {
            self.sigma
        }
        fn reads_distribution(&self) -> bool {
            false
        }
    }

    #[test]
    fn uniform_is_fixed_under_zero_drift() {
        let mu = GridDistribution::uniform(100).unwrap();
        let f = Shift {
            dt: 0.01,
            sigma: 0.1,
        };
        let next = flow_step(&mu, &ConstantPolicy(0.0), &f).unwrap();
        assert!(wasserstein1_circle(&mu, &next).unwrap() <= 1e-10);
    }

    #[test]
    fn raw_mass_is_close_to_one() {
        for (m, sigma) in [(100, 0.05), (100, 0.2), (200, (1.0f64 / 200.0).sqrt())] {
            let mu = GridDistribution::from_density(m, |s| 1.0 + 0.9 * (9.0 * s).sin().powi(3))
                .unwrap();
            let f = Shift { dt: 0.02, sigma };
            let out = flow_step_with(&mu, &ConstantPolicy(3.0), &f, FlowOptions::default())
                .unwrap();
            assert!((out.raw_mass - 1.0).abs() < 1e-3, "{}", out.raw_mass);
            assert!((out.next.mass() - 1.0).abs() < 1e-12);
            assert!(out.next.heights().iter().all(|&h| h >= 0.0));
        }
    }

    #[test]
    fn recurrence_matches_direct_kernel() {
        let m = 37;
        let sigma = 0.08;
        let mu = GridDistribution::from_density(m, |s| 1.2 + (5.0 * s).cos()).unwrap();
        let targets: Vec<f64> = (0..m).map(|j| j as f64 / m as f64 + 0.013 * j as f64).collect();
        let got = transport(
            &mu,
            &targets,
            sigma,
            FlowOptions {
                renormalize: false,
                periodic: true,
            },
        );
        let mf = m as f64;
        let mut want = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                let f = wrap(targets[j]);
                for k in [-1.0, 0.0, 1.0] {
                    let x = (i as f64 / mf + k - f) / sigma;
                    want[i] += mu.heights()[j] / mf * (-0.5 * x * x).exp()
                        / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                }
            }
        }
        for (g, w) in got.next.heights().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn non_finite_drift_is_an_error() {
        struct Bad;
        impl Drift for Bad {
            fn drift(&self, _s: f64, _a: f64, _mu: &GridDistribution) -> f64 {
                f64::NAN
            }
            fn noise_std(&self) -> f64 {
                0.1
            }
        }
        let mu = GridDistribution::uniform(10).unwrap();
        assert!(matches!(
            flow_step(&mu, &ConstantPolicy(0.0), &Bad),
            Err(Error::Dynamics(_))
        ));
    }

    #[test]
    fn rollout_shapes() {
        let mu = GridDistribution::uniform(50).unwrap();
        let f = Shift {
            dt: 0.02,
            sigma: 0.1,
        };
        let zero = ConstantPolicy(0.0);
        let profile: Vec<&dyn Policy> = vec![&zero; 3];
        let traj = flow_rollout(&mu, &profile, &f).unwrap();
        assert_eq!(traj.len(), 4);
        for d in &traj {
            assert!(wasserstein1_circle(d, &mu).unwrap() < 1e-12);
        }
        let one = flow_rollout(&mu, &profile[..1], &f).unwrap();
        assert_eq!(one[1], flow_step(&mu, &zero, &f).unwrap());
    }

    #[test]
    fn single_particle_histograms_are_point_masses() {
        let mu = GridDistribution::uniform(20).unwrap();
        let f = Shift {
            dt: 0.02,
            sigma: 0.1,
        };
        let hists = particle_rollout(&mu, Profile::Stationary(&ConstantPolicy(1.0)), 4, &f, 1, 9)
            .unwrap();
        assert_eq!(hists.len(), 5);
        for h in hists {
            assert_eq!(h.heights().iter().filter(|&&x| x > 0.0).count(), 1);
        }
    }

    #[test]
    fn zero_noise_particles_keep_their_histogram() {
        let m = 40;
        let mu = GridDistribution::from_density(m, |s| 1.0 + 0.5 * (6.0 * s).cos()).unwrap();
        let f = Shift {
            dt: 0.02,
            sigma: 1e-9,
        };
        let hists = particle_rollout(&mu, Profile::Stationary(&ConstantPolicy(0.0)), 3, &f, 20_000, 4)
            .unwrap();
        for h in &hists {
            assert!(wasserstein1_circle(h, &hists[0]).unwrap() <= 1.0 / m as f64);
        }
    }
}
