//! Learning under the congestion dynamics.
//!
//! A short desk-scale run where speed drops in crowded regions, so the
//! model also sees the local density. Arguments as for `learning_run`.

use mfucrl::config::RunConfig;
use mfucrl::driver::Experiment;
use mfucrl::swarm::DynamicsVariant;

fn main() -> mfucrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut base = RunConfig::desk_scale(DynamicsVariant::Congestion);
    base.seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    base.run.episodes = 10;
    let overrides: Vec<String> = args.collect();
    let cfg = RunConfig::from_toml_str(&base.to_toml_string(), &overrides)?;

    let mut exp = Experiment::new(cfg)?;
    println!("benchmark J* = {:.4}", exp.benchmark().j_star);
    while exp.episodes().len() < exp.config().run.episodes {
        let r = exp.run_episode()?;
        println!(
            "t={:<2} J_real={:9.4} J_pred={:9.4} sigma_sum={:.5} w1_gap={:.4}",
            r.t, r.j_real, r.j_predicted, r.sigma_sum, r.w1_gap
        );
    }
    Ok(())
}
