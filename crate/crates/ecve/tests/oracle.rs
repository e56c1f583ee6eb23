//! Independent brute-force oracle for the sample criteria.
//!
//! The reference computations live in `common` and recompute everything
//! from the defining sums with plain nested loops. Agreement is required
//! to 1e−12 on small instances.

mod common;

use common::{objective_ensemble_naive, objective_uniform_naive, random_instance};
use ecve::kernel::Bandwidth;
use ecve::objective::{objective_ensemble, ObjectiveConfig, Sample, Weighting};

#[test]
fn uniform_objective_matches_naive_double_loop() {
    for seed in 0..20u64 {
        let (x, y, fy, v, h) = random_instance(1000 + seed);
        let expected = objective_ensemble_naive(v.matrix(), &x, &fy, h, false);
        let sample = Sample::new(x, y, fy).unwrap();
        let cfg = ObjectiveConfig::new(Bandwidth::new(h).unwrap(), Weighting::Uniform);
        let got = objective_ensemble(&v, &sample, &cfg).unwrap().value;
        assert!(
            (got - expected).abs() <= 1e-12,
            "seed {seed}: {got} vs oracle {expected}"
        );
    }
}

#[test]
fn weighted_objective_matches_naive_double_loop() {
    for seed in 0..20u64 {
        let (x, y, fy, v, h) = random_instance(2000 + seed);
        let expected = objective_ensemble_naive(v.matrix(), &x, &fy, h, true);
        let sample = Sample::new(x, y, fy).unwrap();
        let cfg = ObjectiveConfig::new(Bandwidth::new(h).unwrap(), Weighting::Weighted);
        let got = objective_ensemble(&v, &sample, &cfg).unwrap().value;
        assert!(
            (got - expected).abs() <= 1e-12,
            "seed {seed}: {got} vs oracle {expected}"
        );
    }
}

#[test]
fn per_function_values_match_naive_single_objectives() {
    for seed in 0..10u64 {
        let (x, y, fy, v, h) = random_instance(3000 + seed);
        let m = fy.ncols();
        let mut expected = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<f64> = (0..fy.nrows()).map(|i| fy[(i, j)]).collect();
            expected.push(objective_uniform_naive(v.matrix(), &x, &col, h));
        }
        let sample = Sample::new(x, y, fy).unwrap();
        let cfg = ObjectiveConfig::new(Bandwidth::new(h).unwrap(), Weighting::Uniform);
        let got = objective_ensemble(&v, &sample, &cfg).unwrap();
        for j in 0..m {
            assert!(
                (got.per_function[j] - expected[j]).abs() <= 1e-12,
                "seed {seed} fn {j}: {} vs oracle {}",
                got.per_function[j],
                expected[j]
            );
        }
    }
}
