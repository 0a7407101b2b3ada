//! Circular W1 against an explicit transport LP, plus metric properties.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use mfucrl::torus::{circle_distance, wasserstein1_circle, GridDistribution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimal transport cost between the point masses of two histograms.
fn lp_w1(a: &GridDistribution, b: &GridDistribution) -> f64 {
    let m = a.m();
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let d = circle_distance(a.grid_point(i), b.grid_point(j));
            vars.push(p.add_var(d, (0.0, f64::INFINITY)));
        }
    }
    for i in 0..m {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        p.add_constraint(&row, ComparisonOp::Eq, a.heights()[i] / m as f64);
    }
    // The last column constraint is implied by the others.
    for j in 0..m - 1 {
        let col: Vec<_> = (0..m).map(|i| (vars[i * m + j], 1.0)).collect();
        p.add_constraint(&col, ComparisonOp::Eq, b.heights()[j] / m as f64);
    }
    p.solve().expect("transport LP is feasible").objective()
}

fn random_hist(m: usize, rng: &mut impl Rng) -> GridDistribution {
    // Sparse-ish heights make the optimal plan wrap around often.
    let h: Vec<f64> = (0..m)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    if h.iter().all(|&x| x == 0.0) {
        return GridDistribution::point_mass(m, rng.gen_range(0..m)).unwrap();
    }
    GridDistribution::from_heights(h).unwrap()
}

#[test]
fn matches_transport_lp_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let m = 2 + case % 11;
        let a = random_hist(m, &mut rng);
        let b = random_hist(m, &mut rng);
        let fast = wasserstein1_circle(&a, &b).unwrap();
        let lp = lp_w1(&a, &b);
        worst = worst.max((fast - lp).abs());
        assert!((fast - lp).abs() <= 1e-8, "case {case}, M={m}: {fast} vs LP {lp}");
    }
    assert!(worst <= 1e-8);
}

#[test]
fn antipodal_point_masses() {
    let a = GridDistribution::point_mass(4, 0).unwrap();
    let b = GridDistribution::point_mass(4, 2).unwrap();
    assert!((wasserstein1_circle(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    assert!((lp_w1(&a, &b) - 0.5).abs() < 1e-12);
}

fn hist_strategy(m: usize) -> impl Strategy<Value = GridDistribution> {
    prop::collection::vec(0.0f64..1.0, m)
        .prop_filter("some mass", |h| h.iter().sum::<f64>() > 1e-3)
        .prop_map(|h| GridDistribution::from_heights(h).unwrap())
}

fn triple() -> impl Strategy<Value = (GridDistribution, GridDistribution, GridDistribution, isize)> {
    (2usize..24).prop_flat_map(|m| {
        (
            hist_strategy(m),
            hist_strategy(m),
            hist_strategy(m),
            -(m as isize)..(m as isize),
        )
    })
}

proptest! {
    #[test]
    fn metric_axioms((a, b, c, _) in triple()) {
        let ab = wasserstein1_circle(&a, &b).unwrap();
        let ba = wasserstein1_circle(&b, &a).unwrap();
        let ac = wasserstein1_circle(&a, &c).unwrap();
        let cb = wasserstein1_circle(&c, &b).unwrap();
        prop_assert!(wasserstein1_circle(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= ac + cb + 1e-12);
        // Nothing is farther than half a turn away.
        prop_assert!(ab <= 0.5 + 1e-12);
    }

    #[test]
    fn rotation_equivariance((a, b, _, k) in triple()) {
        let ab = wasserstein1_circle(&a, &b).unwrap();
        let rotated = wasserstein1_circle(&a.rotate(k), &b.rotate(k)).unwrap();
        prop_assert!((ab - rotated).abs() < 1e-12);
        // Shifting by one bin costs at most 1/M.
        let m = a.m() as f64;
        prop_assert!(wasserstein1_circle(&a, &a.rotate(1)).unwrap() <= 1.0 / m + 1e-12);
    }
}
