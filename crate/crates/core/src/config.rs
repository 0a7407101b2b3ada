//! Run configuration: a TOML file with `[env]`, `[model]`, `[planner]`,
//! `[loop]` and `[validate]` sections plus top-level `seed` and `out_dir`.
//!
//! Unknown keys are rejected, and every error names the offending dotted key.
//! `key=value` overrides are applied to the parsed document before
//! validation, with `value` read as a TOML value (falling back to a string).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{BetaMode, FeatureMode, KernelKind, KernelSpec};
use crate::planner::OptimizerConfig;
use crate::swarm::{DynamicsVariant, InitialDistribution, SwarmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub dynamics: DynamicsVariant,
    pub m: usize,
    pub h: usize,
    /// Step length; `1/h` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub a_min: f64,
    pub a_max: f64,
    #[serde(with = "as_string")]
    pub initial: InitialDistribution,
    /// Transition noise std; `sqrt(dt)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dynamics: DynamicsVariant::Basic,
            m: 200,
            h: 200,
            dt: None,
            a_min: -7.0,
            a_max: 7.0,
            initial: InitialDistribution::Ergodic,
            noise_std: None,
        }
    }
}

mod as_string {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr<Err = String>,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Likelihood noise variance `lambda` of the dynamics model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseVar {
    Value(f64),
    Rule(NoiseRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseRule {
    /// The true transition variance `noise_std^2`.
    #[serde(rename = "transition")]
    Transition,
    /// `lambda = p H` with state dimension `p = 1`.
    #[serde(rename = "pH")]
    StateDimTimesHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaKind {
    Fixed,
    Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kernel: KernelKind,
    pub variance: f64,
    pub lengthscale_s: f64,
    pub lengthscale_a: f64,
    pub lengthscale_mu: f64,
    pub rq_alpha: f64,
    pub noise_var: NoiseVar,
    pub subset_cap: usize,
    pub beta_mode: BetaKind,
    /// Fixed-mode confidence scale.
    pub beta: f64,
    /// Theory mode: RKHS norm bound, noise scale and failure probability.
    pub b_f: f64,
    pub sigma: f64,
    pub delta: f64,
    pub feat_mode: FeatureMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: KernelKind::SquaredExponential,
            variance: 0.01,
            lengthscale_s: 2.0,
            lengthscale_a: 4.0,
            lengthscale_mu: 1.0,
            rq_alpha: 1.0,
            noise_var: NoiseVar::Rule(NoiseRule::Transition),
            subset_cap: 4096,
            beta_mode: BetaKind::Fixed,
            beta: 2.0,
            b_f: 0.1,
            sigma: 0.15,
            delta: 0.1,
            feat_mode: FeatureMode::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    /// Number of learning episodes `T`.
    pub episodes: usize,
    /// Representative-agent particles simulated per episode for data.
    pub particles: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            episodes: 20,
            particles: 4,
        }
    }
}

/// Settings of the `validate` oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Particles in the flow-vs-particle comparison.
    pub particles: usize,
    /// Steps in the flow-vs-particle comparison.
    pub steps: usize,
    /// Particles in the Monte-Carlo objective estimate.
    pub mc_particles: usize,
    /// Horizon of the Monte-Carlo objective check.
    pub mc_steps: usize,
    /// Number of random policies tried.
    pub policies: usize,
    pub w1_threshold: f64,
    /// Standard errors allowed between flow and Monte-Carlo objectives.
    pub stderr_factor: f64,
    /// Test hook: `false` evaluates the flow without periodic folding.
    pub periodic: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            particles: 50_000,
            steps: 20,
            mc_particles: 10_000,
            mc_steps: 50,
            policies: 3,
            w1_threshold: 0.02,
            stderr_factor: 3.0,
            periodic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub model: ModelConfig,
    pub planner: OptimizerConfig,
    #[serde(rename = "loop")]
    pub run: LoopConfig,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: None,
            env: EnvConfig::default(),
            model: ModelConfig::default(),
            planner: OptimizerConfig::default(),
            run: LoopConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

impl RunConfig {
    /// `M = 100`, `H = 50`, `dt = 1/50`, 15 episodes.
    pub fn desk_scale(dynamics: DynamicsVariant) -> Self {
        let mut cfg = RunConfig::default();
        cfg.env.dynamics = dynamics;
        cfg.env.m = 100;
        cfg.env.h = 50;
        cfg.run.episodes = 15;
        if dynamics == DynamicsVariant::Basic {
            cfg.model.feat_mode = FeatureMode::None;
        }
        cfg
    }

    /// Parse TOML text, apply overrides, and validate.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| {
                let path = e.path().to_string();
                Error::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.swarm().validate()?;
        if let Some(dt) = self.env.dt {
            if !(dt > 0.0) {
                return Err(Error::config("env.dt", "must be positive"));
            }
        }
        self.model
            .feat_mode
            .check_grid(self.env.m)
            .map_err(|e| Error::config("model.feat_mode", e.to_string()))?;
        self.kernel().validate()?;
        if let NoiseVar::Value(v) = self.model.noise_var {
            if !(v > 0.0) {
                return Err(Error::config("model.noise_var", "must be positive"));
            }
        }
        if self.model.subset_cap == 0 {
            return Err(Error::config("model.subset_cap", "must be at least 1"));
        }
        match self.model.beta_mode {
            BetaKind::Fixed if !(self.model.beta >= 0.0) => {
                return Err(Error::config("model.beta", "must be non-negative"))
            }
            BetaKind::Theory if !(self.model.delta > 0.0 && self.model.delta < 1.0) => {
                return Err(Error::config("model.delta", "must lie in (0, 1)"))
            }
            _ => {}
        }
        self.planner.validate(self.env.m)?;
        if self.run.particles == 0 {
            return Err(Error::config("loop.particles", "must be at least 1"));
        }
        let v = &self.validate;
        if v.particles == 0 || v.mc_particles < 2 || v.steps == 0 || v.mc_steps == 0 {
            return Err(Error::config("validate", "particle counts and step counts must be positive"));
        }
        Ok(())
    }

    /// Resolved environment constants.
    pub fn swarm(&self) -> SwarmConfig {
        let dt = self.env.dt.unwrap_or(1.0 / self.env.h.max(1) as f64);
        SwarmConfig {
            m: self.env.m,
            horizon: self.env.h,
            dt,
            a_min: self.env.a_min,
            a_max: self.env.a_max,
            dynamics: self.env.dynamics,
            noise_std: self.env.noise_std.unwrap_or(dt.sqrt()),
            initial: self.env.initial,
        }
    }

    /// Kernel over `[cos, sin, a, distribution features]`.
    pub fn kernel(&self) -> KernelSpec {
        let m = &self.model;
        let mut ls = vec![m.lengthscale_s, m.lengthscale_s, m.lengthscale_a];
        ls.extend(std::iter::repeat(m.lengthscale_mu).take(m.feat_mode.width()));
        KernelSpec {
            kind: m.kernel,
            lengthscales: ls,
            variance: m.variance,
            rq_alpha: m.rq_alpha,
        }
    }

    pub fn noise_var(&self) -> f64 {
        match self.model.noise_var {
            NoiseVar::Value(v) => v,
            NoiseVar::Rule(NoiseRule::Transition) => self.swarm().noise_std.powi(2),
            NoiseVar::Rule(NoiseRule::StateDimTimesHorizon) => self.env.h as f64,
        }
    }

    pub fn beta_mode(&self) -> BetaMode {
        match self.model.beta_mode {
            BetaKind::Fixed => BetaMode::Fixed {
                value: self.model.beta,
            },
            BetaKind::Theory => BetaMode::Theory {
                b_f: self.model.b_f,
                sigma: self.model.sigma,
                delta: self.model.delta,
            },
        }
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
