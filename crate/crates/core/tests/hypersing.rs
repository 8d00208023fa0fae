mod common;

use common::interval;
use fracheat::hypersing::{
    eval_g_alpha_lambda, eval_g_lambda, parabolic_refinement, predicted_exponent, scaling_slope, Density,
    HyperSingularSpec,
};
use fracheat::quad::GaussRule;
use fracheat::GridField;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

fn geometric(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

#[test]
fn anchor_and_zero_density() {
    let g = interval(128);
    let one = HyperSingularSpec::elliptic(GridField::dirichlet_from_fn(&g, |_| 1.0), 0.0, 0.5, f64::INFINITY).unwrap();
    assert!((eval_g_lambda(&one, &[0.0], 1.0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-3);
    let zero = HyperSingularSpec::elliptic(GridField::zeros(&g), 0.5, 0.5, 2.0).unwrap();
    assert_eq!(eval_g_lambda(&zero, &[0.1], 0.3).unwrap(), 0.0);
    let pz = HyperSingularSpec::parabolic(Density::Steady(GridField::zeros(&g)), 0.0, 0.0, 0.5, 2.0).unwrap();
    assert_eq!(eval_g_alpha_lambda(&pz, &[0.1], 0.3).unwrap(), 0.0);
    assert!(eval_g_lambda(&one, &[0.0], 0.0).is_err());
}

#[test]
fn large_time_limit() {
    let g = interval(128);
    let one = HyperSingularSpec::elliptic(GridField::dirichlet_from_fn(&g, |_| 1.0), 0.0, 0.5, f64::INFINITY).unwrap();
    let v = eval_g_lambda(&one, &[0.0], 100.0).unwrap();
    assert!((v / (2.0 / 100.0) - 1.0).abs() < 0.05);
}

#[test]
fn parabolic_matches_time_integral_of_elliptic() {
    let g = interval(96);
    let f = GridField::dirichlet_from_fn(&g, |x| 1.0 + 0.5 * x[0]);
    let ell = HyperSingularSpec::elliptic(f.clone(), 0.0, 0.5, f64::INFINITY).unwrap();
    let par = HyperSingularSpec::parabolic(Density::Steady(f), 0.0, 0.0, 0.5, f64::INFINITY).unwrap();
    let rule = GaussRule::new(20);
    for (x, t) in [(0.0, 0.5), (0.7, 0.2), (-0.3, 1.0)] {
        // substitution σ = t·v² removes the endpoint behaviour at σ = 0
        let oracle = rule.integrate(0.0, 1.0, |v| 2.0 * t * v * eval_g_lambda(&ell, &[x], t * v * v).unwrap());
        let value = eval_g_alpha_lambda(&par, &[x], t).unwrap();
        assert!((value / oracle - 1.0).abs() < 0.01, "{value} vs {oracle}");
    }
}

#[test]
fn divergence_is_flagged_outside_hypotheses() {
    let g = interval(64);
    let (s, alpha) = (0.5, 0.0);
    let lambda = 2.0 * s * (alpha + 1.0) + 0.2;
    let one = Density::Steady(GridField::dirichlet_from_fn(&g, |_| 1.0));
    assert!(HyperSingularSpec::parabolic(one.clone(), alpha, lambda, s, f64::INFINITY).is_err());
    let bad = HyperSingularSpec::parabolic_unchecked(one.clone(), alpha, lambda, s, f64::INFINITY);
    let rep = parabolic_refinement(&bad, &[0.0], 0.5, 8, 5).unwrap();
    assert!(rep.divergent, "{rep:?}");
    let good = HyperSingularSpec::parabolic(one, alpha, 0.5, s, f64::INFINITY).unwrap();
    assert!(!parabolic_refinement(&good, &[0.0], 0.5, 8, 5).unwrap().divergent);
}

#[test]
fn spike_density_slope() {
    let g = interval(128);
    let spike = GridField::spike(&g, &[0.1], 1.0);
    let spec = HyperSingularSpec::elliptic(spike, 0.5, 0.5, 1.0).unwrap();
    let rep = scaling_slope(&spec, 2.0, &geometric(0.02, 0.2, 8)).unwrap();
    assert!(rep.within(0.15));
}

#[test]
fn negative_lambda_small_time_slope() {
    let g = interval(128);
    let (s, lambda, m, p) = (0.5, -0.25, 1.0, 2.0);
    let spike = HyperSingularSpec::elliptic(GridField::spike(&g, &[0.1], 1.0), lambda, s, m).unwrap();
    let rep = scaling_slope(&spike, p, &geometric(0.02, 0.2, 8)).unwrap();
    // the measured slope follows the 1/m − 1/p ordering of the index difference
    let consistent = -lambda / (2.0 * s) - (1.0 / (2.0 * s)) * (1.0 / m - 1.0 / p);
    assert!((rep.fit.slope - consistent).abs() < 0.15, "{:?}", rep.fit);
    assert_eq!(rep.predicted, Some(predicted_exponent(1, s, lambda, m, p)));
}

#[test]
fn linear_in_density_and_monotone_in_time() {
    let g = interval(64);
    let m = g.interior_len();
    let mut runner = TestRunner::new_with_rng(Config { cases: 16, ..Config::default() }, TestRng::from_seed(RngAlgorithm::ChaCha, &[5; 32]));
    runner
        .run(
            &(proptest::collection::vec(0.0f64..1.0, m), proptest::collection::vec(0.0f64..1.0, m), -1.0f64..1.0, 0.0f64..1.5, 0.01f64..1.0),
            |(u, v, x, lambda, t)| {
                let fu = GridField::from_interior(&g, &u).unwrap();
                let fv = GridField::from_interior(&g, &v).unwrap();
                let sum = GridField::from_interior(&g, &u.iter().zip(&v).map(|(a, b)| 2.0 * a - b).collect::<Vec<_>>()).unwrap();
                let ev = |f: &GridField, t: f64| eval_g_lambda(&HyperSingularSpec::elliptic(f.clone(), lambda, 0.5, 2.0).unwrap(), &[x], t).unwrap();
                let (a, b, c) = (ev(&fu, t), ev(&fv, t), ev(&sum, t));
                prop_assert!((c - (2.0 * a - b)).abs() <= 1e-10 * (1.0 + a.abs() + b.abs()));
                prop_assert!(ev(&fu, 1.5 * t) <= a * (1.0 + 1e-12));
                Ok(())
            },
        )
        .unwrap();
}
