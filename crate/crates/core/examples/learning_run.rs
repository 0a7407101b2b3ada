//! Desk-scale learning run on the basic swarm dynamics.
//!
//! Prints the benchmark and one line per episode. Optional arguments: the
//! seed and then any number of `key=value` config overrides.
//!
//! ```text
//! cargo run --release --example learning_run -- 3 loop.episodes=5
//! ```

use mfucrl::config::RunConfig;
use mfucrl::driver::{regret_summary, Experiment};
use mfucrl::swarm::DynamicsVariant;

fn main() -> mfucrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let overrides: Vec<String> = args.collect();

    let mut base = RunConfig::desk_scale(DynamicsVariant::Basic);
    base.seed = seed;
    let cfg = RunConfig::from_toml_str(&base.to_toml_string(), &overrides)?;

    let started = std::time::Instant::now();
    let mut exp = Experiment::new(cfg)?;
    let b = exp.benchmark();
    println!(
        "benchmark: J* = {:.5}  ergodic policy J = {:.5}  ({:.1}s)",
        b.j_star,
        b.j_analytic,
        started.elapsed().as_secs_f64()
    );
    println!(" t   J_real   J_pred   regret  sigma_sum  n_data   beta   w1_gap   ms");
    while exp.episodes().len() < exp.config().run.episodes {
        let r = exp.run_episode()?;
        println!(
            "{:2} {:8.4} {:8.4} {:8.4} {:10.5} {:7} {:6.3} {:8.4} {:5}",
            r.t, r.j_real, r.j_predicted, r.regret, r.sigma_sum, r.n_data, r.beta, r.w1_gap, r.wall_time_ms
        );
    }
    if let Some(s) = regret_summary(exp.episodes(), 5) {
        println!(
            "cumulative regret {:.4}; first-{w} mean {:.4}; last-{w} mean {:.4}",
            s.cumulative,
            s.first_window_mean,
            s.last_window_mean,
            w = s.window
        );
        if let Some(w) = s.optimism_warning() {
            println!("warning: {w}");
        }
    }
    println!("total {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
