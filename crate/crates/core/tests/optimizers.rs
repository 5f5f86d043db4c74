mod common;

use common::brute_force_assortment;
use mtss::optim::{assortment_revenue, optimal_assortment, rank_top_k, top_k, AssortmentSolverConfig};
use mtss::rng::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn assortment_matches_enumeration_for_n10_k3() {
    let mut rng = seeded_rng(1, "assort");
    let cfg = AssortmentSolverConfig::default();
    for _ in 0..1000 {
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..3.0)).collect();
        let eta: Vec<f64> = (0..10).map(|_| rng.random_range(0.1..2.0)).collect();
        let got = optimal_assortment(&v, &eta, 3, &cfg).unwrap();
        let (want, _) = brute_force_assortment(&v, &eta, 3);
        assert_eq!(got.items(), want.as_slice());
    }
}

#[test]
fn equal_revenues_pick_highest_utilities() {
    let cfg = AssortmentSolverConfig::default();
    let v = [0.3, 0.8, 0.1, 0.8, 0.5];
    assert_eq!(optimal_assortment(&v, &[1.0; 5], 1, &cfg).unwrap().items(), &[1]);
    assert_eq!(optimal_assortment(&v, &[1.0; 5], 2, &cfg).unwrap().items(), &[1, 3]);
}

proptest! {
    #[test]
    fn top_k_is_invariant_under_increasing_maps(theta in proptest::collection::vec(-5.0f64..5.0, 1..30), k in 1usize..30) {
        let k = k.min(theta.len());
        let mapped: Vec<f64> = theta.iter().map(|t| t.exp() * 3.0 + 1.0).collect();
        prop_assert_eq!(top_k(&theta, k).unwrap(), top_k(&mapped, k).unwrap());
        prop_assert_eq!(rank_top_k(&theta, k).unwrap(), rank_top_k(&mapped, k).unwrap());
        let ranked = rank_top_k(&theta, k).unwrap();
        let items = ranked.items();
        prop_assert!(items.windows(2).all(|w| theta[w[0]] > theta[w[1]] || (theta[w[0]] == theta[w[1]] && w[0] < w[1])));
        let min_in = items.iter().map(|&i| theta[i]).fold(f64::INFINITY, f64::min);
        prop_assert!((0..theta.len()).filter(|i| !items.contains(i)).all(|i| theta[i] <= min_in));
    }

    #[test]
    fn assortment_value_is_monotone_in_k(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, "mono");
        let n = rng.random_range(2..12usize);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let cfg = AssortmentSolverConfig::default();
        let mut prev = 0.0;
        for k in 1..=n {
            let a = optimal_assortment(&v, &eta, k, &cfg).unwrap();
            let r = assortment_revenue(a.items(), &v, &eta);
            prop_assert!(r >= prev - 1e-15);
            prev = r;
        }
    }

    #[test]
    fn assortment_matches_enumeration(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed, "brute");
        let n = rng.random_range(1..=15usize);
        let k = rng.random_range(1..=4usize.min(n));
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..3.0)).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let got = optimal_assortment(&v, &eta, k, &AssortmentSolverConfig::default()).unwrap();
        let (want, _) = brute_force_assortment(&v, &eta, k);
        prop_assert_eq!(got.items(), want.as_slice());
    }
}
