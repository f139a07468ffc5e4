mod common;

use wipp_mlmc::mlmc::toy::LognormalToy;
use wipp_mlmc::mlmc::{run_mc, run_mlmc, EngineOptions, Variant};

#[test]
fn series_mean_matches_quadrature() {
    // Simpson on ∫₀¹ exp(x²/2) dx
    let m = 2000;
    let f = |x: f64| (0.5 * x * x).exp();
    let h = 1.0 / m as f64;
    let s: f64 = (0..=m)
        .map(|k| {
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            w * f(k as f64 * h)
        })
        .sum::<f64>()
        * h
        / 3.0;
    assert!((common::toy_exact_mean(1.0) - s).abs() < 1e-12);
    assert_eq!(common::toy_exact_mean(0.0), 1.0);
}

#[test]
fn mlmc_hits_the_exact_mean() {
    let hits = common::toy_hits(1.0, 0.01, 100);
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn mc_and_mlmc_agree() {
    let toy = LognormalToy::new(1.0);
    let opts = EngineOptions {
        seed: 5,
        workers: 1,
        ..EngineOptions::default()
    };
    for variant in [Variant::Plain, Variant::Antithetic] {
        let ml = run_mlmc(&toy, 5e-3, variant, &opts).unwrap();
        let mc = run_mc(&toy, 5e-3, ml.finest_level, variant, &opts).unwrap();
        let se = (ml.estimator_variance + mc.estimator_variance).sqrt();
        assert!((ml.estimate - mc.estimate).abs() <= 2.0 * se, "{variant:?}");
        assert!(ml.converged());
    }
}
