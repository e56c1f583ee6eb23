//! Brute-force reference implementations shared by the oracle and
//! acceptance test targets.
//!
//! Everything here is recomputed from the defining sums with plain nested
//! loops — no helpers from the library's objective module are used beyond
//! the types needed to call the implementation under test.

#![allow(dead_code)]

use ecve::stiefel::{random_stiefel, StiefelPoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// K(z) = exp(−z²), the shipped Gaussian kernel.
pub fn kernel(z: f64) -> f64 {
    (-z * z).exp()
}

/// d_i(V, s0) = ‖(I − VVᵀ)(X_i − s0)‖², computed literally via the projector.
pub fn dist_naive(v: &DMatrix<f64>, s0: &DVector<f64>, xi: &DVector<f64>) -> f64 {
    let p = v.nrows();
    let proj = DMatrix::<f64>::identity(p, p) - v * v.transpose();
    let r = &proj * (xi - s0);
    r.dot(&r)
}

/// L̃_n(V, s0, f): within-slice weighted variance of one transformed response.
pub fn local_var_naive(
    v: &DMatrix<f64>,
    s0: &DVector<f64>,
    x: &DMatrix<f64>,
    fy: &[f64],
    h: f64,
) -> f64 {
    let n = x.nrows();
    let mut ksum = 0.0;
    let mut kv = vec![0.0; n];
    for i in 0..n {
        let xi = DVector::from_iterator(x.ncols(), x.row(i).iter().cloned());
        kv[i] = kernel(dist_naive(v, s0, &xi) / h);
        ksum += kv[i];
    }
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for i in 0..n {
        let w = kv[i] / ksum;
        y1 += w * fy[i];
        y2 += w * fy[i] * fy[i];
    }
    y2 - y1 * y1
}

/// L*_n(V, f): uniform average over shifting points (every data point).
pub fn objective_uniform_naive(v: &DMatrix<f64>, x: &DMatrix<f64>, fy: &[f64], h: f64) -> f64 {
    let n = x.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        let s0 = DVector::from_iterator(x.ncols(), x.row(i).iter().cloned());
        acc += local_var_naive(v, &s0, x, fy, h);
    }
    acc / n as f64
}

/// L^(w)_n(V, f): between-slice weights (S_i − 1)/(T − n).
pub fn objective_weighted_naive(v: &DMatrix<f64>, x: &DMatrix<f64>, fy: &[f64], h: f64) -> f64 {
    let n = x.nrows();
    let mut masses = vec![0.0; n];
    for i in 0..n {
        let s0 = DVector::from_iterator(x.ncols(), x.row(i).iter().cloned());
        for j in 0..n {
            let xj = DVector::from_iterator(x.ncols(), x.row(j).iter().cloned());
            masses[i] += kernel(dist_naive(v, &s0, &xj) / h);
        }
    }
    let total: f64 = masses.iter().sum::<f64>() - n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let s0 = DVector::from_iterator(x.ncols(), x.row(i).iter().cloned());
        let w = (masses[i] - 1.0) / total;
        acc += w * local_var_naive(v, &s0, x, fy, h);
    }
    acc
}

/// L_{n,F}(V): plain mean of the per-function objectives.
pub fn objective_ensemble_naive(
    v: &DMatrix<f64>,
    x: &DMatrix<f64>,
    fy: &DMatrix<f64>,
    h: f64,
    weighted: bool,
) -> f64 {
    let m = fy.ncols();
    let mut acc = 0.0;
    for j in 0..m {
        let col: Vec<f64> = (0..fy.nrows()).map(|i| fy[(i, j)]).collect();
        acc += if weighted {
            objective_weighted_naive(v, x, &col, h)
        } else {
            objective_uniform_naive(v, x, &col, h)
        };
    }
    acc / m as f64
}

/// Small random problem: data, transformed responses, a Stiefel point, and
/// a bandwidth, all drawn from a seeded generator.
pub fn random_instance(seed: u64) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, StiefelPoint, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=8usize);
    let p = rng.gen_range(2..=4usize);
    let q = rng.gen_range(1..p);
    let m = rng.gen_range(1..=3usize);
    let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-2.0..2.0));
    let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5f64));
    let fy = DMatrix::from_fn(n, m, |i, j| (y[i] * (j as f64 + 1.0)).sin() + y[i].powi(2));
    let v = random_stiefel(p, q, &mut rng).unwrap();
    let h = rng.gen_range(0.3..1.5);
    (x, y, fy, v, h)
}
