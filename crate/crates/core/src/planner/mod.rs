//! Optimistic planning under hallucinated dynamics.
//!
//! The planner searches jointly over a policy network and an auxiliary
//! control network `eta` with outputs in `[-1, 1]`. The auxiliary control
//! picks a drift anywhere inside the model's confidence band:
//!
//! ```text
//! f~(z) = s + mean(z) + beta * std(z) * eta(z)
//! ```
//!
//! and the population flow under `f~` is scored with the integrated reward.
//! With the true drift substituted for the model the same search gives the
//! known-dynamics benchmark.

pub mod cem;
pub mod network;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::{Drift, Profile};
use crate::gp::{FeatureMode, GpPosterior};
use crate::swarm::{self, SwarmConfig};
use crate::torus::GridDistribution;

pub use cem::{CemConfig, CemOutcome};
use network::{push_state_features, GridFeatures};
pub use network::{EtaParams, PolicyParams};

/// Search budget and network shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub generations: usize,
    pub init_std: f64,
    pub var_floor: f64,
    pub hidden_width: usize,
    /// Distribution features seen by the policy and `eta`.
    pub feat_mode: FeatureMode,
    /// Start each episode's search from the previous episode's solution.
    pub warm_start: bool,
    /// Action nodes of the per-plan posterior table; 0 queries the
    /// posterior directly.
    pub action_nodes: usize,
    /// Density nodes of the table when the model reads the local density.
    pub density_nodes: usize,
    /// Upper end of the tabulated density range; larger densities are
    /// looked up at this value.
    pub density_max: f64,
    /// The table solves for the std only on every `std_stride`-th action
    /// node and interpolates in between; the mean is exact on every node.
    pub std_stride: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let c = CemConfig::default();
        OptimizerConfig {
            population: c.population,
            elite_frac: c.elite_frac,
            generations: c.generations,
            init_std: c.init_std,
            var_floor: c.var_floor,
            hidden_width: 16,
            feat_mode: FeatureMode::None,
            warm_start: true,
            action_nodes: 113,
            density_nodes: 25,
            density_max: 6.0,
            std_stride: 4,
        }
    }
}

impl OptimizerConfig {
    pub fn cem(&self) -> CemConfig {
        CemConfig {
            population: self.population,
            elite_frac: self.elite_frac,
            generations: self.generations,
            init_std: self.init_std,
            var_floor: self.var_floor,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        use crate::error::Error;
        if self.population == 0 {
            return Err(Error::config("planner.population", "must be at least 1"));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return Err(Error::config("planner.elite_frac", "must lie in (0, 1]"));
        }
        if self.generations == 0 {
            return Err(Error::config("planner.generations", "must be at least 1"));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::config("planner.init_std", "must be positive"));
        }
        if !(self.var_floor >= 0.0) {
            return Err(Error::config("planner.var_floor", "must be non-negative"));
        }
        if self.action_nodes == 1 {
            return Err(Error::config("planner.action_nodes", "must be 0 or at least 2"));
        }
        if self.std_stride == 0 || (self.action_nodes >= 2 && (self.action_nodes - 1) % self.std_stride != 0) {
            return Err(Error::config("planner.std_stride", "must be positive and divide action_nodes - 1"));
        }
        if self.density_nodes < 2 {
            return Err(Error::config("planner.density_nodes", "must be at least 2"));
        }
        if !(self.density_max > 0.0) {
            return Err(Error::config("planner.density_max", "must be positive"));
        }
        if self.hidden_width == 0 {
            return Err(Error::config("planner.hidden_width", "must be at least 1"));
        }
        self.feat_mode
            .check_grid(m)
            .map_err(|_| Error::config("planner.feat_mode", format!("{} does not divide env.m = {m}", self.feat_mode)))
    }
}

/// Posterior mean and std on every grid point times a uniform action grid,
/// linearly interpolated in the action.
///
/// The std costs a triangular solve per query, so it can be computed on a
/// coarser sub-grid of the action nodes and interpolated onto the rest.
///
/// Models without distribution features see the action alone at a grid
/// point. Models reading the local density get a second uniform axis over
/// `[0, density_max]` and bilinear interpolation.
#[derive(Debug, Clone)]
pub struct ModelTable {
    m: usize,
    a_min: f64,
    step: f64,
    nodes: usize,
    rho_step: f64,
    rho_nodes: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ModelTable {
    /// Exact table for a model without distribution features.
    pub fn build(gp: &GpPosterior, m: usize, a_min: f64, a_max: f64, nodes: usize) -> Self {
        Self::build_with_density(gp, m, a_min, a_max, nodes, None, 1)
    }

    /// `density = Some((nodes, max))` adds the local-density axis. The std
    /// is solved on action nodes `0, std_stride, 2 std_stride, ...`.
    pub fn build_with_density(
        gp: &GpPosterior,
        m: usize,
        a_min: f64,
        a_max: f64,
        nodes: usize,
        density: Option<(usize, f64)>,
        std_stride: usize,
    ) -> Self {
        assert!(nodes >= 2, "a table needs at least two action nodes");
        assert!(
            std_stride >= 1 && (nodes - 1) % std_stride == 0,
            "std_stride must divide nodes - 1"
        );
        let step = (a_max - a_min) / (nodes - 1) as f64;
        let (rho_nodes, rho_step) = match density {
            Some((r, max)) => {
                assert!(r >= 2, "a density axis needs at least two nodes");
                (r, max / (r - 1) as f64)
            }
            None => (1, 0.0),
        };
        let width = if density.is_some() { 4 } else { 3 };
        let features = |ks: &mut dyn Iterator<Item = usize>| {
            let ks: Vec<usize> = ks.collect();
            let mut xs = Vec::with_capacity(width * m * ks.len() * rho_nodes);
            for i in 0..m {
                for &k in &ks {
                    for r in 0..rho_nodes {
                        push_state_features(i as f64 / m as f64, &mut xs);
                        xs.push(a_min + k as f64 * step);
                        if density.is_some() {
                            xs.push(r as f64 * rho_step);
                        }
                    }
                }
            }
            xs
        };
        let xs = features(&mut (0..nodes));
        let (mean, std) = if std_stride == 1 {
            gp.predict_features_batch(&xs).into_iter().unzip()
        } else {
            let mean = xs.chunks_exact(width).map(|x| gp.predict_mean_features(x)).collect();
            let coarse_nodes = (nodes - 1) / std_stride + 1;
            let coarse: Vec<f64> = gp
                .predict_features_batch(&features(&mut (0..nodes).step_by(std_stride)))
                .into_iter()
                .map(|(_, sd)| sd)
                .collect();
            let mut std = Vec::with_capacity(m * nodes * rho_nodes);
            for i in 0..m {
                for k in 0..nodes {
                    let (c, off) = (k / std_stride, k % std_stride);
                    let t = off as f64 / std_stride as f64;
                    for r in 0..rho_nodes {
                        let lo = coarse[(i * coarse_nodes + c) * rho_nodes + r];
                        std.push(if off == 0 {
                            lo
                        } else {
                            let hi = coarse[(i * coarse_nodes + c + 1) * rho_nodes + r];
                            lo + t * (hi - lo)
                        });
                    }
                }
            }
            (mean, std)
        };
        ModelTable {
            m,
            a_min,
            step,
            nodes,
            rho_step,
            rho_nodes,
            mean,
            std,
        }
    }

    /// Interpolated `(mean, std)` at grid point `i` and action `a`.
    #[inline]
    pub fn lookup(&self, i: usize, a: f64) -> (f64, f64) {
        debug_assert!(i < self.m && self.rho_nodes == 1);
        let u = ((a - self.a_min) / self.step).clamp(0.0, (self.nodes - 1) as f64);
        let k = (u as usize).min(self.nodes - 2);
        let t = u - k as f64;
        let j = i * self.nodes + k;
        (
            self.mean[j] + t * (self.mean[j + 1] - self.mean[j]),
            self.std[j] + t * (self.std[j + 1] - self.std[j]),
        )
    }

    /// Bilinear `(mean, std)` at grid point `i`, action `a` and local
    /// density `rho`, for tables with a density axis.
    #[inline]
    pub fn lookup_density(&self, i: usize, a: f64, rho: f64) -> (f64, f64) {
        debug_assert!(i < self.m && self.rho_nodes >= 2);
        let u = ((a - self.a_min) / self.step).clamp(0.0, (self.nodes - 1) as f64);
        let k = (u as usize).min(self.nodes - 2);
        let t = u - k as f64;
        let v = (rho / self.rho_step).clamp(0.0, (self.rho_nodes - 1) as f64);
        let r = (v as usize).min(self.rho_nodes - 2);
        let w = v - r as f64;
        let r0 = (i * self.nodes + k) * self.rho_nodes + r;
        let r1 = r0 + self.rho_nodes;
        let blend = |g: &[f64]| {
            let lo = g[r0] + w * (g[r0 + 1] - g[r0]);
            let hi = g[r1] + w * (g[r1 + 1] - g[r1]);
            lo + t * (hi - lo)
        };
        (blend(&self.mean), blend(&self.std))
    }

    pub fn has_density(&self) -> bool {
        self.rho_nodes > 1
    }
}

/// Drift of the hallucinated system built from a GP posterior.
pub struct HallucinatedDrift<'a> {
    pub gp: &'a GpPosterior,
    pub beta: f64,
    /// `None` freezes the auxiliary control at zero (posterior-mean dynamics).
    pub eta: Option<&'a EtaParams>,
    /// Only consulted for the normalized action fed to `eta`.
    pub policy: &'a PolicyParams,
    pub model_feat: FeatureMode,
    pub noise_std: f64,
    /// Tabulated posterior used for grid evaluations when present.
    pub table: Option<&'a ModelTable>,
}

impl HallucinatedDrift<'_> {
    fn eval_table(
        &self,
        table: &ModelTable,
        i: usize,
        s: f64,
        a: f64,
        mu: &GridDistribution,
        eta_feats: &GridFeatures,
        buf: &mut Vec<f64>,
    ) -> f64 {
        let (mean, std) = if table.has_density() {
            table.lookup_density(i, a, mu.heights()[i])
        } else {
            table.lookup(i, a)
        };
        match self.eta {
            Some(eta) if self.beta != 0.0 => {
                buf.clear();
                push_state_features(s, buf);
                eta_feats.push(s, mu, buf);
                buf.push(self.policy.normalized(a));
                s + mean + self.beta * std * eta.eval_features(buf)
            }
            _ => s + mean,
        }
    }

    fn eval(
        &self,
        s: f64,
        a: f64,
        mu: &GridDistribution,
        model_feats: &GridFeatures,
        eta_feats: &GridFeatures,
        buf: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
    ) -> f64 {
        buf.clear();
        push_state_features(s, buf);
        buf.push(a);
        model_feats.push(s, mu, buf);
        let eta = match self.eta {
            Some(eta) if self.beta != 0.0 => {
                let (mean, std) = self.gp.predict_features(buf, scratch);
                buf.clear();
                push_state_features(s, buf);
                eta_feats.push(s, mu, buf);
                buf.push(self.policy.normalized(a));
                return s + mean + self.beta * std * eta.eval_features(buf);
            }
            _ => 0.0,
        };
        s + self.gp.predict_mean_features(buf) + eta
    }
}

impl Drift for HallucinatedDrift<'_> {
    fn drift(&self, s: f64, a: f64, mu: &GridDistribution) -> f64 {
        let model_feats = GridFeatures::new(mu, self.model_feat);
        let eta_feats = GridFeatures::new(mu, self.policy.feat_mode);
        self.eval(s, a, mu, &model_feats, &eta_feats, &mut Vec::new(), &mut Vec::new())
    }

    fn noise_std(&self) -> f64 {
        self.noise_std
    }

    fn reads_distribution(&self) -> bool {
        self.model_feat != FeatureMode::None
            || self.eta.is_some_and(|e| e.reads_distribution())
    }

    fn drift_on_grid(&self, mu: &GridDistribution, actions: &[f64], out: &mut [f64]) {
        let model_feats = GridFeatures::new(mu, self.model_feat);
        let eta_feats = GridFeatures::new(mu, self.policy.feat_mode);
        let mut buf = Vec::with_capacity(8);
        if let Some(table) = self.table {
            for (i, (o, &a)) in out.iter_mut().zip(actions).enumerate() {
                *o = self.eval_table(table, i, mu.grid_point(i), a, mu, &eta_feats, &mut buf);
            }
            return;
        }
        let mut scratch = Vec::new();
        for (i, (o, &a)) in out.iter_mut().zip(actions).enumerate() {
            *o = self.eval(mu.grid_point(i), a, mu, &model_feats, &eta_feats, &mut buf, &mut scratch);
        }
    }
}

/// `f~(z) = s + mean(z) + beta std(z) eta(z)` at a single point, with
/// `beta` taken from the posterior.
pub fn hallucinated_drift(
    gp: &GpPosterior,
    policy: &PolicyParams,
    eta: &EtaParams,
    model_feat: FeatureMode,
    s: f64,
    a: f64,
    mu: &GridDistribution,
) -> f64 {
    HallucinatedDrift {
        gp,
        beta: gp.confidence(),
        eta: Some(eta),
        policy,
        model_feat,
        noise_std: 1.0,
        table: None,
    }
    .drift(s, a, mu)
}

/// Output of one planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub policy: PolicyParams,
    pub eta: EtaParams,
    /// Objective of the returned parameters under the planning dynamics.
    pub predicted_j: f64,
    pub evals: usize,
    /// Best objective after each generation.
    pub history: Vec<f64>,
}

impl PlanResult {
    /// Concatenated `policy ++ eta` weights.
    pub fn joint_weights(&self) -> Vec<f64> {
        let mut v = self.policy.weights.clone();
        v.extend_from_slice(&self.eta.weights);
        v
    }
}

/// Planner for one environment and budget.
#[derive(Debug, Clone)]
pub struct Planner {
    pub env: SwarmConfig,
    pub opt: OptimizerConfig,
    /// Distribution features of the dynamics model input.
    pub model_feat: FeatureMode,
}

impl Planner {
    pub fn new(env: SwarmConfig, opt: OptimizerConfig, model_feat: FeatureMode) -> Self {
        Planner {
            env,
            opt,
            model_feat,
        }
    }

    pub fn policy_template(&self) -> PolicyParams {
        PolicyParams::zeros(
            self.opt.hidden_width,
            self.opt.feat_mode,
            self.env.a_min,
            self.env.a_max,
        )
    }

    pub fn eta_template(&self) -> EtaParams {
        EtaParams::zeros(self.opt.hidden_width, self.opt.feat_mode)
    }

    /// The posterior table for `gp`, when this planner uses one.
    pub fn model_table(&self, gp: &GpPosterior) -> Option<ModelTable> {
        if self.opt.action_nodes < 2 {
            return None;
        }
        let density = match self.model_feat {
            FeatureMode::None => None,
            FeatureMode::Local => Some((self.opt.density_nodes, self.opt.density_max)),
            FeatureMode::Global(_) => return None,
        };
        let env = &self.env;
        Some(ModelTable::build_with_density(
            gp,
            env.m,
            env.a_min,
            env.a_max,
            self.opt.action_nodes,
            density,
            self.opt.std_stride,
        ))
    }

    fn hallucinated<'a>(
        &self,
        gp: &'a GpPosterior,
        table: Option<&'a ModelTable>,
        policy: &'a PolicyParams,
        eta: Option<&'a EtaParams>,
    ) -> HallucinatedDrift<'a> {
        HallucinatedDrift {
            gp,
            beta: gp.confidence(),
            eta,
            policy,
            model_feat: self.model_feat,
            noise_std: self.env.noise_std,
            table,
        }
    }

    /// Objective of `(policy, eta)` under the hallucinated dynamics.
    pub fn hallucinated_objective(
        &self,
        gp: &GpPosterior,
        policy: &PolicyParams,
        eta: &EtaParams,
        mu0: &GridDistribution,
    ) -> Result<f64> {
        let table = self.model_table(gp);
        let drift = self.hallucinated(gp, table.as_ref(), policy, Some(eta));
        swarm::episode_objective(mu0, Profile::Stationary(policy), self.env.horizon, &drift)
    }

    /// Flow `[mu~_0, ..., mu~_H]` under the hallucinated dynamics.
    pub fn hallucinated_rollout(
        &self,
        gp: &GpPosterior,
        policy: &PolicyParams,
        eta: &EtaParams,
        mu0: &GridDistribution,
    ) -> Result<Vec<GridDistribution>> {
        self.hallucinated_rollout_with(gp, self.model_table(gp).as_ref(), policy, eta, mu0)
    }

    /// `hallucinated_rollout` with a prebuilt table from `model_table`.
    pub fn hallucinated_rollout_with(
        &self,
        gp: &GpPosterior,
        table: Option<&ModelTable>,
        policy: &PolicyParams,
        eta: &EtaParams,
        mu0: &GridDistribution,
    ) -> Result<Vec<GridDistribution>> {
        let drift = self.hallucinated(gp, table, policy, Some(eta));
        crate::flow::flow_rollout_stationary(mu0, policy, self.env.horizon, &drift)
    }

    /// Joint search over policy and auxiliary control.
    ///
    /// A warm start sets the initial sampling mean and is evaluated as a
    /// candidate, so the result never scores below it.
    pub fn plan(
        &self,
        gp: &GpPosterior,
        mu0: &GridDistribution,
        seed: u64,
        warm: Option<&PlanResult>,
    ) -> Result<PlanResult> {
        self.plan_with(gp, self.model_table(gp).as_ref(), mu0, seed, warm)
    }

    /// `plan` with a prebuilt table from `model_table`.
    pub fn plan_with(
        &self,
        gp: &GpPosterior,
        table: Option<&ModelTable>,
        mu0: &GridDistribution,
        seed: u64,
        warm: Option<&PlanResult>,
    ) -> Result<PlanResult> {
        let p0 = self.policy_template();
        let e0 = self.eta_template();
        let (np, ne) = (p0.len(), e0.len());
        let start = warm.map(PlanResult::joint_weights);
        let incumbents: Vec<Vec<f64>> = start.iter().cloned().collect();
        let horizon = self.env.horizon;
        let out = cem::maximize(
            &[np, ne],
            &self.opt.cem(),
            seed,
            start.as_deref(),
            &incumbents,
            |x| {
                let policy = p0.with_weights(&x[..np]);
                let eta = e0.with_weights(&x[np..]);
                let drift = self.hallucinated(gp, table, &policy, Some(&eta));
                swarm::episode_objective(mu0, Profile::Stationary(&policy), horizon, &drift)
                    .unwrap_or(f64::NAN)
            },
        )?;
        Ok(PlanResult {
            policy: p0.with_weights(&out.best[..np]),
            eta: e0.with_weights(&out.best[np..]),
            predicted_j: out.best_score,
            evals: out.evals,
            history: out.history,
        })
    }

    /// Search over the policy only, with the auxiliary control fixed at
    /// zero (posterior-mean dynamics).
    pub fn plan_frozen_eta(
        &self,
        gp: &GpPosterior,
        mu0: &GridDistribution,
        seed: u64,
        warm: Option<&PlanResult>,
    ) -> Result<PlanResult> {
        let table = self.model_table(gp);
        self.plan_policy_only(seed, warm, |policy| {
            let drift = self.hallucinated(gp, table.as_ref(), policy, None);
            swarm::episode_objective(mu0, Profile::Stationary(policy), self.env.horizon, &drift)
        })
    }

    /// The same search with the true drift in place of the model.
    pub fn plan_known_dynamics(
        &self,
        f_true: &dyn Drift,
        mu0: &GridDistribution,
        seed: u64,
        warm: Option<&PlanResult>,
    ) -> Result<PlanResult> {
        self.plan_policy_only(seed, warm, |policy| {
            swarm::episode_objective(mu0, Profile::Stationary(policy), self.env.horizon, f_true)
        })
    }

    fn plan_policy_only(
        &self,
        seed: u64,
        warm: Option<&PlanResult>,
        objective: impl Fn(&PolicyParams) -> Result<f64>,
    ) -> Result<PlanResult> {
        let p0 = self.policy_template();
        let start = warm.map(|w| w.policy.weights.clone());
        let incumbents: Vec<Vec<f64>> = start.iter().cloned().collect();
        let out = cem::maximize(
            &[p0.len()],
            &self.opt.cem(),
            seed,
            start.as_deref(),
            &incumbents,
            |x| objective(&p0.with_weights(x)).unwrap_or(f64::NAN),
        )?;
        Ok(PlanResult {
            policy: p0.with_weights(&out.best),
            eta: self.eta_template(),
            predicted_j: out.best_score,
            evals: out.evals,
            history: out.history,
        })
    }
}
