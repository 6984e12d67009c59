use proptest::prelude::*;

use vpcc_rc::allocator::{allocate, search_lambda, AllocationParams, LambdaSearchConfig};
use vpcc_rc::error::Error;

fn params() -> impl Strategy<Value = AllocationParams> {
    (0.1..10.0f64, 0.1..10.0f64).prop_map(|(g, c)| AllocationParams::new(g, c))
}

proptest! {
    #[test]
    fn spend_falls_as_lambda_rises(p in params(), l in 0.01..99.0f64, dl in 0.001..1.0f64) {
        let prob = p.with_target(1.0);
        prop_assert!(prob.geometry_bits(l + dl).unwrap() < prob.geometry_bits(l).unwrap());
        prop_assert!(prob.color_bits(l + dl).unwrap() < prob.color_bits(l).unwrap());
    }

    #[test]
    fn searched_split_is_feasible_and_tight(p in params(), lambda_star in 0.05..50.0f64) {
        let r_tar = p.with_target(1.0).total_bits(lambda_star).unwrap();
        let res = search_lambda(&p.with_target(r_tar), &LambdaSearchConfig::default()).unwrap();
        prop_assert!(res.converged);
        prop_assert!(res.iterations <= 20);
        prop_assert!(res.total() <= r_tar * (1.0 + 1e-12));
        prop_assert!(res.total() >= r_tar * (1.0 - 1e-3));
    }

    #[test]
    fn marginal_gains_are_equal_at_the_solution(p in params(), lambda_star in 0.05..50.0f64) {
        // stationarity: (w + kappa) * theta_g / R_G^2 = lambda = theta_c * R_C^-0.9
        let prob = p.with_target(1.0);
        let r_tar = prob.total_bits(lambda_star).unwrap();
        let res = search_lambda(&p.with_target(r_tar), &LambdaSearchConfig::default()).unwrap();
        let g = (p.w + p.kappa) * p.theta_g / res.r_g.powi(2);
        let c = p.theta_c * res.r_c.powf(-0.9);
        prop_assert!((g / res.lambda - 1.0).abs() < 1e-9);
        prop_assert!((c / res.lambda - 1.0).abs() < 1e-9);
    }

    #[test]
    fn search_is_deterministic(p in params(), r_tar in 0.5..500.0f64) {
        let cfg = LambdaSearchConfig::default();
        let a = search_lambda(&p.with_target(r_tar), &cfg).unwrap();
        let b = search_lambda(&p.with_target(r_tar), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn constant_substreams_come_off_the_top(p in params(), video in 1.0..100.0f64, occ in 0.0..5.0f64, patch in 0.0..1.0f64) {
        let cfg = LambdaSearchConfig::default();
        let a = allocate(video + occ + patch, occ, patch, &p, &cfg).unwrap();
        let b = search_lambda(&p.with_target(video + occ + patch - occ - patch), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn budget_below_constant_streams_is_rejected() {
    let p = AllocationParams::new(1.0, 1.0);
    let cfg = LambdaSearchConfig::default();
    assert!(matches!(allocate(10.0, 8.0, 2.0, &p, &cfg), Err(Error::Budget { .. })));
    assert!(matches!(allocate(10.0, 9.0, 2.0, &p, &cfg), Err(Error::Budget { .. })));
}

#[test]
fn out_of_range_budgets_clamp_to_the_bounds() {
    let p = AllocationParams::new(1.0, 1.0);
    let cfg = LambdaSearchConfig::default();
    let tiny = search_lambda(&p.with_target(1e-3), &cfg).unwrap();
    assert!(!tiny.converged);
    assert_eq!(tiny.lambda, cfg.lambda_max);
    let huge = search_lambda(&p.with_target(1e9), &cfg).unwrap();
    assert!(!huge.converged);
    assert_eq!(huge.lambda, cfg.lambda_min);
}
