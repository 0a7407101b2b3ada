//! The outer learning loop: plan under the current model, run the true
//! flow, collect representative-agent transitions and refit.
//!
//! A run first computes the known-dynamics benchmark `J*` with the same
//! optimizer budget, then runs `T` episodes. Every episode appends an
//! [`EpisodeRecord`]; [`write_run`] persists the manifest and CSV tables.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::flow::{self, Drift, Policy, Profile};
use crate::gp::{make_joint_input, BetaMode, FeatureMode, GpCheckpoint, GpPosterior, JointInput, KernelSpec};
use crate::planner::{EtaParams, PlanResult, Planner, PolicyParams};
use crate::seed::{self, tag};
use crate::swarm::{self, ErgodicPolicy, SwarmConfig, SwarmDynamics};
use crate::torus::{wasserstein1_circle, wrap, wrap_signed, GridDistribution, TorusPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// Column order of `episodes.csv`.
pub const EPISODE_COLUMNS: [&str; 9] = [
    "t",
    "J_real",
    "J_predicted",
    "J_star",
    "regret",
    "sigma_sum",
    "n_data",
    "beta",
    "wall_time_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Episode index, starting at 1.
    pub t: usize,
    pub j_real: f64,
    pub j_predicted: f64,
    pub j_star: f64,
    pub regret: f64,
    /// Sum of predictive variances of this episode's transitions under the
    /// model fitted before the episode, divided by `K`.
    pub sigma_sum: f64,
    pub n_data: usize,
    pub beta: f64,
    pub wall_time_ms: u64,
    /// `sum_h W1(hallucinated mu_h, true mu_h)` under the episode's policy.
    pub w1_gap: f64,
    pub policy: PolicyParams,
    pub eta: EtaParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    /// Known-dynamics planner objective.
    pub j_star: f64,
    /// Objective of the closed-form ergodic policy from the same start.
    pub j_analytic: f64,
    pub policy: PolicyParams,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub config: RunConfig,
    pub benchmark: Option<Benchmark>,
    pub episodes: Vec<EpisodeRecord>,
    /// File name of the final model checkpoint, relative to the manifest.
    pub model_checkpoint: Option<String>,
}

/// One observed step of a representative agent.
#[derive(Debug, Clone)]
pub struct EnvTransition {
    pub s: TorusPoint,
    pub a: f64,
    /// The flow's distribution at this step, shared by all particles.
    pub mu: Arc<GridDistribution>,
    pub s_next: TorusPoint,
}

impl EnvTransition {
    /// Wrapped displacement `s' - s` in `(-1/2, 1/2]`.
    pub fn displacement(&self) -> f64 {
        wrap_signed(self.s_next.get() - self.s.get())
    }

    pub fn joint_input(&self, mode: FeatureMode) -> Result<JointInput> {
        make_joint_input(self.s.get(), self.a, &self.mu, mode)
    }
}

/// Simulate `k` particles with `s_0 ~ mu_0` alongside the flow `traj`.
///
/// Particles see the flow's `mu_h` rather than their own histogram.
/// Transitions are returned particle by particle, so one particle's steps
/// are consecutive.
pub fn collect_transitions(
    traj: &[GridDistribution],
    policy: &dyn Policy,
    f_true: &dyn Drift,
    k: usize,
    seed: u64,
) -> Vec<EnvTransition> {
    let Some((mu0, rest)) = traj.split_first() else {
        return Vec::new();
    };
    let horizon = rest.len();
    let shared: Vec<Arc<GridDistribution>> =
        traj[..horizon].iter().map(|m| Arc::new(m.clone())).collect();
    let starts = mu0.sample(k, seed::derive(seed, &[tag::COLLECT, tag::SAMPLE]));
    let sigma = f_true.noise_std();
    let mut out = Vec::with_capacity(k * horizon);
    for (p, start) in starts.into_iter().enumerate() {
        let mut rng = seed::rng(seed, &[tag::COLLECT, tag::NOISE, p as u64]);
        let mut s = start.get();
        for mu in &shared {
            let a = policy.action(s, mu);
            let z: f64 = StandardNormal.sample(&mut rng);
            let next = wrap(f_true.drift(s, a, mu) + sigma * z);
            out.push(EnvTransition {
                s: TorusPoint::new(s),
                a,
                mu: Arc::clone(mu),
                s_next: TorusPoint::new(next),
            });
            s = next;
        }
    }
    out
}

/// Cumulative and windowed regret of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub cumulative: f64,
    pub per_episode: Vec<f64>,
    pub window: usize,
    pub first_window_mean: f64,
    pub last_window_mean: f64,
    /// Fraction of episodes with `J_predicted >= J_real`.
    pub optimism_fraction: f64,
    pub w1_gap_first_mean: f64,
    pub w1_gap_last_mean: f64,
}

impl RegretSummary {
    /// Optimism is only a diagnostic: finite search budgets void it.
    pub fn optimism_warning(&self) -> Option<String> {
        (self.optimism_fraction < 0.5).then(|| {
            format!(
                "only {:.0}% of episodes had J_predicted >= J_real",
                100.0 * self.optimism_fraction
            )
        })
    }
}

/// Summary over windows of `window` episodes (clamped to half the run).
/// `None` for fewer than two episodes.
pub fn regret_summary(records: &[EpisodeRecord], window: usize) -> Option<RegretSummary> {
    let n = records.len();
    if n < 2 {
        return None;
    }
    let w = window.clamp(1, n / 2);
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let per_episode: Vec<f64> = records.iter().map(|r| r.regret).collect();
    Some(RegretSummary {
        cumulative: per_episode.iter().sum(),
        first_window_mean: mean(&mut per_episode[..w].iter().copied()),
        last_window_mean: mean(&mut per_episode[n - w..].iter().copied()),
        optimism_fraction: records.iter().filter(|r| r.j_predicted >= r.j_real).count() as f64
            / n as f64,
        w1_gap_first_mean: mean(&mut records[..w].iter().map(|r| r.w1_gap)),
        w1_gap_last_mean: mean(&mut records[n - w..].iter().map(|r| r.w1_gap)),
        per_episode,
        window: w,
    })
}

/// Plan the known-dynamics benchmark for a configuration.
pub fn known_dynamics_benchmark(cfg: &RunConfig) -> Result<Benchmark> {
    let env = cfg.swarm();
    let planner = Planner::new(env.clone(), cfg.planner.clone(), cfg.model.feat_mode);
    let truth = env.true_dynamics();
    let mu0 = env.initial_distribution()?;
    let plan = planner.plan_known_dynamics(
        &truth,
        &mu0,
        seed::derive(cfg.seed, &[tag::BENCHMARK]),
        None,
    )?;
    let j_analytic =
        swarm::episode_objective(&mu0, Profile::Stationary(&ErgodicPolicy), env.horizon, &truth)?;
    Ok(Benchmark {
        j_star: plan.predicted_j,
        j_analytic,
        policy: plan.policy,
        evals: plan.evals,
    })
}

/// State of a run between episodes.
pub struct Experiment {
    cfg: RunConfig,
    env: SwarmConfig,
    planner: Planner,
    truth: SwarmDynamics,
    mu0: GridDistribution,
    kernel: KernelSpec,
    noise_var: f64,
    beta_mode: BetaMode,
    beta_override: Option<f64>,
    data: Vec<(JointInput, f64)>,
    gp: GpPosterior,
    benchmark: Benchmark,
    last_plan: Option<PlanResult>,
    episodes: Vec<EpisodeRecord>,
}

impl Experiment {
    /// Validate the configuration and compute the benchmark.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let benchmark = known_dynamics_benchmark(&cfg)?;
        Self::with_benchmark(cfg, benchmark)
    }

    /// Start a run from a precomputed benchmark.
    pub fn with_benchmark(cfg: RunConfig, benchmark: Benchmark) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.swarm();
        let kernel = cfg.kernel();
        let noise_var = cfg.noise_var();
        Ok(Experiment {
            planner: Planner::new(env.clone(), cfg.planner.clone(), cfg.model.feat_mode),
            truth: env.true_dynamics(),
            mu0: env.initial_distribution()?,
            gp: GpPosterior::prior(kernel.clone(), noise_var),
            beta_mode: cfg.beta_mode(),
            beta_override: None,
            kernel,
            noise_var,
            env,
            cfg,
            data: Vec::new(),
            benchmark,
            last_plan: None,
            episodes: Vec::new(),
        })
    }

    /// Use a fixed confidence scale instead of the configured mode.
    pub fn override_beta(&mut self, beta: f64) {
        self.beta_override = Some(beta);
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn benchmark(&self) -> &Benchmark {
        &self.benchmark
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn model(&self) -> &GpPosterior {
        &self.gp
    }

    pub fn n_data(&self) -> usize {
        self.data.len()
    }

    pub fn last_plan(&self) -> Option<&PlanResult> {
        self.last_plan.as_ref()
    }

    pub fn checkpoint(&self) -> GpCheckpoint {
        self.gp.checkpoint(self.beta_mode)
    }

    /// Plan, execute, collect and refit once.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let started = Instant::now();
        let t = self.episodes.len() + 1;
        let beta = match self.beta_override {
            Some(b) => b,
            None => self.gp.beta(self.beta_mode)?,
        };
        self.gp.set_confidence(beta);

        let warm = if self.cfg.planner.warm_start {
            self.last_plan.as_ref()
        } else {
            None
        };
        let plan_seed = seed::derive(self.cfg.seed, &[tag::PLAN, t as u64]);
        let table = self.planner.model_table(&self.gp);
        let plan = self.planner.plan_with(&self.gp, table.as_ref(), &self.mu0, plan_seed, warm)?;

        let horizon = self.env.horizon;
        let truth_flow =
            flow::flow_rollout_stationary(&self.mu0, &plan.policy, horizon, &self.truth)?;
        let j_real = swarm::trajectory_objective(&truth_flow, &plan.policy);
        let hallucinated =
            self.planner
                .hallucinated_rollout_with(&self.gp, table.as_ref(), &plan.policy, &plan.eta, &self.mu0)?;
        let w1_gap = truth_flow
            .iter()
            .zip(&hallucinated)
            .map(|(a, b)| wasserstein1_circle(a, b))
            .sum::<Result<f64>>()?;

        let transitions = collect_transitions(
            &truth_flow,
            &plan.policy,
            &self.truth,
            self.cfg.run.particles,
            seed::derive(self.cfg.seed, &[tag::COLLECT, t as u64]),
        );
        let mode = self.cfg.model.feat_mode;
        let mut features = Vec::new();
        for tr in &transitions {
            let z = tr.joint_input(mode)?;
            features.extend(z.features());
            self.data.push((z, tr.displacement()));
        }
        let variance_sum: f64 = self
            .gp
            .predict_features_batch(&features)
            .iter()
            .map(|(_, std)| std * std)
            .sum();
        let sigma_sum = variance_sum / self.cfg.run.particles as f64;
        self.gp = GpPosterior::fit(
            self.kernel.clone(),
            &self.data,
            self.noise_var,
            self.cfg.model.subset_cap,
        )?;

        let j_star = self.benchmark.j_star;
        let record = EpisodeRecord {
            t,
            j_real,
            j_predicted: plan.predicted_j,
            j_star,
            regret: j_star - j_real,
            sigma_sum,
            n_data: self.data.len(),
            beta,
            wall_time_ms: started.elapsed().as_millis() as u64,
            w1_gap,
            policy: plan.policy.clone(),
            eta: plan.eta.clone(),
        };
        self.last_plan = Some(plan);
        self.episodes.push(record.clone());
        Ok(record)
    }

    /// Run the remaining configured episodes.
    pub fn run_all(&mut self) -> Result<()> {
        while self.episodes.len() < self.cfg.run.episodes {
            self.run_episode()?;
        }
        Ok(())
    }

    /// Policy to report: the last episode's, else the benchmark's.
    pub fn final_policy(&self) -> &PolicyParams {
        self.last_plan
            .as_ref()
            .map_or(&self.benchmark.policy, |p| &p.policy)
    }

    /// True flow `[mu_0, ..., mu_H]` under [`Self::final_policy`].
    pub fn final_flow(&self) -> Result<Vec<GridDistribution>> {
        flow::flow_rollout_stationary(
            &self.mu0,
            self.final_policy(),
            self.env.horizon,
            &self.truth,
        )
    }

    pub fn manifest(&self, error: Option<&Error>) -> RunManifest {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            status: if error.is_none() && self.episodes.len() >= self.cfg.run.episodes {
                RunStatus::Complete
            } else {
                RunStatus::Partial
            },
            error: error.map(|e| e.to_string()),
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            benchmark: Some(self.benchmark.clone()),
            episodes: self.episodes.clone(),
            model_checkpoint: Some(MODEL_FILE.into()),
        }
    }
}

/// Run `cfg` to completion in memory.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunManifest> {
    let mut exp = Experiment::new(cfg.clone())?;
    exp.run_all()?;
    Ok(exp.manifest(None))
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const FLOW_FILE: &str = "flow_final.csv";
pub const POLICY_FILE: &str = "policy_final.json";
pub const MODEL_FILE: &str = "model_final.json";

/// Final policy artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub policy: PolicyParams,
    pub eta: Option<EtaParams>,
}

/// Run `cfg` and persist every artifact under `dir`.
///
/// On failure after the benchmark the partial manifest is still written
/// before the error is returned.
pub fn write_run(cfg: &RunConfig, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut exp = match Experiment::new(cfg.clone()) {
        Ok(e) => e,
        Err(e) => {
            let manifest = RunManifest {
                schema_version: SCHEMA_VERSION,
                status: RunStatus::Partial,
                error: Some(e.to_string()),
                seed: cfg.seed,
                config: cfg.clone(),
                benchmark: None,
                episodes: Vec::new(),
                model_checkpoint: None,
            };
            write_json(&dir.join(MANIFEST_FILE), &manifest)?;
            return Err(e);
        }
    };
    let outcome = exp.run_all();
    let manifest = exp.manifest(outcome.as_ref().err());
    write_artifacts(&exp, &manifest, dir)?;
    outcome.map(|_| manifest)
}

fn write_artifacts(exp: &Experiment, manifest: &RunManifest, dir: &Path) -> Result<()> {
    write_json(&dir.join(MANIFEST_FILE), manifest)?;
    write_episodes_csv(&dir.join(EPISODES_FILE), &manifest.episodes)?;
    write_json(&dir.join(MODEL_FILE), &exp.checkpoint())?;
    write_json(
        &dir.join(POLICY_FILE),
        &PolicyArtifact {
            policy: exp.final_policy().clone(),
            eta: exp.last_plan().map(|p| p.eta.clone()),
        },
    )?;
    let flow = exp.final_flow()?;
    let mut w = csv::Writer::from_path(dir.join(FLOW_FILE))?;
    w.write_record(GridDistribution::csv_header(exp.env.m))?;
    for (h, mu) in flow.iter().enumerate() {
        w.write_record(mu.csv_record(h))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_episodes_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EPISODE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.j_real.to_string(),
            r.j_predicted.to_string(),
            r.j_star.to_string(),
            r.regret.to_string(),
            r.sigma_sum.to_string(),
            r.n_data.to_string(),
            r.beta.to_string(),
            r.wall_time_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Load `manifest.json` from a run directory.
pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ConstantPolicy;
    use crate::swarm::DynamicsVariant;

    fn record(regret: f64) -> EpisodeRecord {
        EpisodeRecord {
            t: 1,
            j_real: 1.0 - regret,
            j_predicted: 1.0,
            j_star: 1.0,
            regret,
            sigma_sum: 0.0,
            n_data: 0,
            beta: 0.0,
            wall_time_ms: 0,
            w1_gap: 0.0,
            policy: PolicyParams::zeros(1, FeatureMode::None, -1.0, 1.0),
            eta: EtaParams::zeros(1, FeatureMode::None),
        }
    }

    #[test]
    fn regret_sums() {
        let recs: Vec<_> = [4.0, 2.0, 1.0].into_iter().map(record).collect();
        let s = regret_summary(&recs, 1).unwrap();
        assert_eq!(s.cumulative, 7.0);
        assert_eq!((s.first_window_mean, s.last_window_mean), (4.0, 1.0));
        let zero: Vec<_> = [0.0, 0.0].into_iter().map(record).collect();
        assert_eq!(regret_summary(&zero, 5).unwrap().cumulative, 0.0);
        assert!(regret_summary(&zero[..1], 1).is_none());
    }

    #[test]
    fn transitions_are_consecutive() {
        let env = SwarmConfig::with_grid(20, 3, DynamicsVariant::Basic);
        let truth = env.true_dynamics();
        let mu0 = GridDistribution::uniform(20).unwrap();
        let traj = flow::flow_rollout_stationary(&mu0, &ConstantPolicy(1.0), 3, &truth).unwrap();
        let tr = collect_transitions(&traj, &ConstantPolicy(1.0), &truth, 1, 4);
        assert_eq!(tr.len(), 3);
        for w in tr.windows(2) {
            assert_eq!(w[0].s_next, w[1].s);
        }
        assert_eq!(collect_transitions(&traj, &ConstantPolicy(1.0), &truth, 4, 4).len(), 12);
    }

    #[test]
    fn zero_noise_displacements() {
        let env = SwarmConfig::with_grid(20, 5, DynamicsVariant::Basic);
        let truth = SwarmDynamics {
            noise_std: 0.0,
            ..env.true_dynamics()
        };
        let mu0 = GridDistribution::uniform(20).unwrap();
        let traj = flow::flow_rollout_stationary(&mu0, &ConstantPolicy(1.0), 5, &env.true_dynamics()).unwrap();
        for tr in collect_transitions(&traj, &ConstantPolicy(1.0), &truth, 3, 1) {
            assert!((tr.displacement() - env.dt).abs() < 1e-12);
        }
    }
}
