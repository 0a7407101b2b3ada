//! Command-line front end: `run`, `benchmark`, `validate` and `export`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (including a failed
//! validation check), 2 on a configuration error or a missing artifact.

use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checks;
use crate::config::RunConfig;
use crate::driver::{self, Benchmark, PolicyArtifact, RunManifest};
use crate::error::{Error, Result};
use crate::flow::Policy;
use crate::swarm::ErgodicPolicy;
use crate::torus::GridDistribution;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "MFUCRL_OUT";

#[derive(Debug, Parser)]
#[command(name = "mfucrl", version, about = "Optimistic model-based mean-field control")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output (or, for `export`, input) run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key=value` config override, e.g. `env.m=100`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Benchmark plus the learning loop; writes the run directory.
    Run {
        /// Seed range `a..b` (exclusive end), one subdirectory per seed.
        #[arg(long, value_parser = parse_seed_range)]
        seeds: Option<Range<u64>>,
    },
    /// Known-dynamics benchmark only; writes `benchmark.json`.
    Benchmark,
    /// Flow-vs-particle and objective-vs-Monte-Carlo oracle checks.
    Validate,
    /// Print a table derived from a finished run directory as CSV.
    Export {
        what: ExportKind,
        /// Write to this file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Rewards,
    Flow,
    Policy,
}

fn parse_seed_range(s: &str) -> std::result::Result<Range<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad start: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad end: {e}"))?;
    if a >= b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..b)
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::MissingArtifact(_) => 2,
        _ => 1,
    }
}

pub const BENCHMARK_FILE: &str = "benchmark.json";

impl Common {
    fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path, &self.overrides)?,
            None => RunConfig::from_toml_str("", &self.overrides)?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

/// Execute a parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Run { seeds } => {
            let cfg = cli.common.load_config()?;
            let dir = cli.common.out_dir(Some(&cfg));
            match seeds {
                None => run_one(&cfg, &dir, out),
                Some(range) => {
                    for seed in range.clone() {
                        let cfg = RunConfig { seed, ..cfg.clone() };
                        run_one(&cfg, &dir.join(format!("seed_{seed}")), out)?;
                    }
                    Ok(())
                }
            }
        }
        Command::Benchmark => {
            let cfg = cli.common.load_config()?;
            let dir = cli.common.out_dir(Some(&cfg));
            let b = driver::known_dynamics_benchmark(&cfg)?;
            std::fs::create_dir_all(&dir)?;
            driver::write_json(&dir.join(BENCHMARK_FILE), &b)?;
            writeln!(out, "J_star={} J_analytic={} evals={}", b.j_star, b.j_analytic, b.evals)?;
            Ok(())
        }
        Command::Validate => {
            let cfg = cli.common.load_config()?;
            let rows = checks::validate(&cfg)?;
            writeln!(out, "{:<26} {:>4} {:>12} {:>12}  result", "check", "case", "value", "threshold")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:<26} {:>4} {:>12.6} {:>12.6}  {}",
                    r.check,
                    r.case,
                    r.value,
                    r.threshold,
                    if r.pass { "PASS" } else { "FAIL" }
                )?;
            }
            let failed = rows.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(Error::Validation(format!("{failed} check(s) failed")));
            }
            Ok(())
        }
        Command::Export { what, output } => {
            let dir = cli.common.out_dir(None);
            let text = export(&dir, *what)?;
            match output {
                Some(path) => std::fs::write(path, text)?,
                None => out.write_all(text.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn run_one(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let manifest = driver::write_run(cfg, dir)?;
    let b = manifest.benchmark.as_ref().expect("complete runs carry a benchmark");
    writeln!(out, "seed {}: J_star={:.6} -> {}", cfg.seed, b.j_star, dir.display())?;
    for r in &manifest.episodes {
        writeln!(out, "  t={:<3} J_real={:.6} regret={:.6}", r.t, r.j_real, r.regret)?;
    }
    if let Some(w) = driver::regret_summary(&manifest.episodes, 5).and_then(|s| s.optimism_warning()) {
        writeln!(out, "  warning: {w}")?;
    }
    Ok(())
}

fn read_artifact(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))
}

/// CSV text for one export table of the run in `dir`.
pub fn export(dir: &Path, what: ExportKind) -> Result<String> {
    let manifest: RunManifest = driver::read_manifest(dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    match what {
        ExportKind::Rewards => {
            let b: &Benchmark = manifest
                .benchmark
                .as_ref()
                .ok_or_else(|| Error::MissingArtifact("benchmark in manifest".into()))?;
            w.write_record(["t", "J_real", "J_predicted", "J_star", "J_analytic"])?;
            for r in &manifest.episodes {
                w.write_record([
                    r.t.to_string(),
                    r.j_real.to_string(),
                    r.j_predicted.to_string(),
                    r.j_star.to_string(),
                    b.j_analytic.to_string(),
                ])?;
            }
        }
        ExportKind::Flow => {
            let text = read_artifact(&dir.join(driver::FLOW_FILE))?;
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
            let horizon = rows.len().saturating_sub(1);
            w.write_record(rdr.headers()?)?;
            for h in [0, 16, horizon] {
                if let Some(row) = rows.get(h) {
                    w.write_record(row)?;
                }
            }
        }
        ExportKind::Policy => {
            let text = read_artifact(&dir.join(driver::POLICY_FILE))?;
            let artifact: PolicyArtifact = serde_json::from_str(&text)?;
            let m = manifest.config.env.m;
            let mu = GridDistribution::uniform(m)?;
            w.write_record(["s", "pi", "pi_star_C"])?;
            for i in 0..m {
                let s = mu.grid_point(i);
                w.write_record([
                    s.to_string(),
                    artifact.policy.action(s, &mu).to_string(),
                    ErgodicPolicy::eval(s).to_string(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
