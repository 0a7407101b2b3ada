//! Posterior correctness, interpolation and calibration of the drift model.

use mfucrl::checks::{random_policy, random_start};
use mfucrl::config::RunConfig;
use mfucrl::driver::collect_transitions;
use mfucrl::flow::flow_rollout_stationary;
use mfucrl::gp::{make_joint_input, FeatureMode, GpPosterior, JointInput, KernelKind, KernelSpec};
use mfucrl::swarm::DynamicsVariant;
use mfucrl::torus::GridDistribution;
use proptest::prelude::*;

fn input(s: f64, a: f64) -> JointInput {
    make_joint_input(s, a, &GridDistribution::uniform(8).unwrap(), FeatureMode::None).unwrap()
}

fn se(var: f64) -> KernelSpec {
    KernelSpec::new(KernelKind::SquaredExponential, vec![1.0, 1.0, 4.0], var)
}

#[test]
fn one_point_closed_form() {
    // k(z, z) = v, so mean = v y / (v + lambda) and var = v lambda / (v + lambda).
    let (v, lambda, y) = (1.0, 0.25, 1.0);
    let z = input(0.3, 1.5);
    let gp = GpPosterior::fit(se(v), &[(z.clone(), y)], lambda, 16).unwrap();
    let (mean, std) = gp.predict(&z).unwrap();
    assert!((mean - 0.8).abs() < 1e-12);
    assert!((std * std - 0.2).abs() < 1e-12);
}

#[test]
fn noise_free_interpolation() {
    let f = |s: f64, a: f64| 0.05 * (6.0 * s).sin() + 0.01 * a;
    let data: Vec<_> = (0..50)
        .map(|i| {
            let s = (i as f64 * 0.618_033_988_7).fract();
            let a = -7.0 + 14.0 * ((i * 7 % 50) as f64 / 49.0);
            (input(s, a), f(s, a))
        })
        .collect();
    let gp = GpPosterior::fit(se(0.04), &data, 1e-10, 64).unwrap();
    for (z, y) in &data {
        let (mean, std) = gp.predict(z).unwrap();
        assert!((mean - y).abs() <= 1e-5, "mean error {}", (mean - y).abs());
        assert!(std <= 1e-3, "train std {std}");
    }
}

#[test]
fn all_kernel_kinds_fit() {
    let data: Vec<_> = (0..30).map(|i| (input(i as f64 / 30.0, (i % 5) as f64), 0.01 * i as f64)).collect();
    for kind in [KernelKind::SquaredExponential, KernelKind::Matern52, KernelKind::RationalQuadratic, KernelKind::Linear] {
        let k = KernelSpec {
            kind,
            ..se(0.04)
        };
        let gp = GpPosterior::fit(k, &data, 0.01, 64).unwrap();
        let (m, s) = gp.predict(&input(0.5, 2.0)).unwrap();
        assert!(m.is_finite() && s.is_finite() && s >= 0.0, "{kind:?}");
    }
}

/// Coverage of the true displacement `a dt` by `mean +- 2 std` on held-out
/// inputs from a different policy.
fn coverage(seed: u64) -> f64 {
    let cfg = RunConfig::desk_scale(DynamicsVariant::Basic);
    let env = cfg.swarm();
    let truth = env.true_dynamics();
    let collect = |policy_seed: u64, k: usize| {
        let policy = random_policy(env.a_min, env.a_max, policy_seed);
        let mu0 = random_start(env.m, policy_seed).unwrap();
        let traj = flow_rollout_stationary(&mu0, &policy, env.horizon, &truth).unwrap();
        collect_transitions(&traj, &policy, &truth, k, policy_seed)
    };
    let train: Vec<_> = (0..3)
        .flat_map(|p| collect(1000 * seed + p, 4))
        .map(|t| (t.joint_input(FeatureMode::None).unwrap(), t.displacement()))
        .collect();
    let gp = GpPosterior::fit(cfg.kernel(), &train, cfg.noise_var(), cfg.model.subset_cap).unwrap();
    let held_out = collect(1000 * seed + 999, 4);
    let hits = held_out
        .iter()
        .filter(|t| {
            let (mean, std) = gp.predict(&t.joint_input(FeatureMode::None).unwrap()).unwrap();
            (t.a * env.dt - mean).abs() <= 2.0 * std
        })
        .count();
    hits as f64 / held_out.len() as f64
}

#[test]
fn calibrated_on_basic_dynamics() {
    let covs: Vec<f64> = (0..20).map(coverage).collect();
    let good = covs.iter().filter(|&&c| c >= 0.95).count();
    assert!(good >= 18, "coverage per seed {covs:?}");
}

fn point() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0f64..1.0, -7.0f64..7.0, -0.2f64..0.2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Conditioning on one more point never widens the posterior.
    #[test]
    fn variance_never_increases(
        data in prop::collection::vec(point(), 1..20),
        extra in point(),
        query in (0.0f64..1.0, -7.0f64..7.0),
    ) {
        let rows: Vec<_> = data.iter().map(|&(s, a, y)| (input(s, a), y)).collect();
        let mut more = rows.clone();
        more.push((input(extra.0, extra.1), extra.2));
        let q = input(query.0, query.1);
        let before = GpPosterior::fit(se(0.04), &rows, 0.02, 64).unwrap().predict(&q).unwrap().1;
        let after = GpPosterior::fit(se(0.04), &more, 0.02, 64).unwrap().predict(&q).unwrap().1;
        prop_assert!(after * after <= before * before + 1e-8);
    }

    /// Batched prediction is the single-query path, bit for bit.
    #[test]
    fn batch_prediction_is_bitwise_single(
        data in prop::collection::vec(point(), 1..40),
        queries in prop::collection::vec((0.0f64..1.0, -7.0f64..7.0), 1..40),
    ) {
        let rows: Vec<_> = data.iter().map(|&(s, a, y)| (input(s, a), y)).collect();
        let gp = GpPosterior::fit(se(0.01), &rows, 0.02, 64).unwrap();
        let flat: Vec<f64> = queries.iter().flat_map(|&(s, a)| input(s, a).features()).collect();
        let batch = gp.predict_features_batch(&flat);
        for (&(s, a), got) in queries.iter().zip(&batch) {
            let want = gp.predict(&input(s, a)).unwrap();
            prop_assert_eq!(got.0.to_bits(), want.0.to_bits());
            prop_assert_eq!(got.1.to_bits(), want.1.to_bits());
        }
    }

    /// The subset path with a cap at least the data size is the exact path.
    #[test]
    fn subset_equals_exact_when_cap_covers_data(
        data in prop::collection::vec(point(), 1..20),
        query in (0.0f64..1.0, -7.0f64..7.0),
    ) {
        let rows: Vec<_> = data.iter().map(|&(s, a, y)| (input(s, a), y)).collect();
        let q = input(query.0, query.1);
        let a = GpPosterior::fit(se(0.04), &rows, 0.02, rows.len()).unwrap().predict(&q).unwrap();
        let b = GpPosterior::fit(se(0.04), &rows, 0.02, 1000).unwrap().predict(&q).unwrap();
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}
