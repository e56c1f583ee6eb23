//! Riemannian gradient descent on S(p,q) with Armijo backtracking and
//! random restarts.
//!
//! The criterion is nonconvex over the Grassmannian, so the minimizer runs
//! several independently seeded descents and keeps the best final value.
//! Attempts are parallel; the merge is deterministic (lowest value wins,
//! ties go to the lowest attempt index).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{gradient_ensemble, objective_ensemble, ObjectiveConfig, Sample};
use crate::seed::split_seed;
use crate::stiefel::{random_stiefel, retract, tangent_project, StiefelPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Number of random restarts.
    pub attempts: usize,
    /// Iteration cap per attempt.
    pub max_iter: usize,
    /// Relative objective-decrease stopping threshold.
    pub tol_rel: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step shrink factor during backtracking.
    pub backtrack_factor: f64,
    /// Initial line-search step.
    pub initial_step: f64,
    /// Seed for restart initialization.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            attempts: 10,
            max_iter: 100,
            tol_rel: 1e-4,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if self.attempts < 1 {
            return Err(Error::InvalidConfig("attempts must be >= 1".into()));
        }
        if !(self.tol_rel > 0.0)
            || !(0.0..1.0).contains(&self.armijo_c)
            || self.armijo_c <= 0.0
            || !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0)
            || !(self.initial_step > 0.0)
        {
            return Err(Error::InvalidConfig(
                "optimizer constants out of range".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub v: StiefelPoint,
    pub value: f64,
    pub iterations: usize,
    pub attempt_values: Vec<f64>,
    pub converged: bool,
}

/// One Riemannian descent step: steepest-descent direction in the tangent
/// space, Armijo backtracking on the retraction. Returns the accepted point
/// and its objective value; if the line search underflows, returns the input
/// point unchanged.
pub fn descend_once(
    v: &StiefelPoint,
    sample: &Sample,
    cfg: &ObjectiveConfig,
    opt: &OptimizerConfig,
) -> Result<(StiefelPoint, f64)> {
    let value = objective_ensemble(v, sample, cfg)?.value;
    let grad = gradient_ensemble(v, sample, cfg)?;
    let xi = tangent_project(v, &(-grad))?;
    let slope = xi.norm() * xi.norm();
    if slope == 0.0 {
        return Ok((v.clone(), value));
    }
    let mut step = opt.initial_step;
    while step > 1e-14 {
        let candidate = retract(v, &xi, step)?;
        let candidate_value = objective_ensemble(&candidate, sample, cfg)?.value;
        if candidate_value <= value - opt.armijo_c * step * slope {
            return Ok((candidate, candidate_value));
        }
        step *= opt.backtrack_factor;
    }
    Ok((v.clone(), value))
}

struct Attempt {
    v: StiefelPoint,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn run_attempt(
    sample: &Sample,
    cfg: &ObjectiveConfig,
    opt: &OptimizerConfig,
    q: usize,
    attempt_seed: u64,
) -> Result<Attempt> {
    let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
    let mut v = random_stiefel(sample.p(), q, &mut rng)?;
    let mut value = objective_ensemble(&v, sample, cfg)?.value;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opt.max_iter {
        let (next, next_value) = descend_once(&v, sample, cfg, opt)?;
        iterations += 1;
        let decrease = (value - next_value).abs() / value.abs().max(1e-12);
        let stalled = next_value >= value;
        v = next;
        value = next_value;
        if stalled || decrease < opt.tol_rel {
            converged = true;
            break;
        }
    }
    Ok(Attempt {
        v,
        value,
        iterations,
        converged,
    })
}

/// Minimize L_{n,F} over S(p,q) with `opt.attempts` random restarts.
pub fn minimize(
    sample: &Sample,
    cfg: &ObjectiveConfig,
    opt: &OptimizerConfig,
    q: usize,
) -> Result<OptimizationResult> {
    opt.validate()?;
    if q < 1 || q >= sample.p() {
        return Err(Error::InvalidDimension(format!(
            "minimize requires 1 <= q < p, got p={}, q={q}",
            sample.p()
        )));
    }
    let attempts: Vec<Result<Attempt>> = (0..opt.attempts)
        .into_par_iter()
        .map(|a| run_attempt(sample, cfg, opt, q, split_seed(opt.seed, a as u64)))
        .collect();
    let mut best: Option<(usize, Attempt)> = None;
    let mut attempt_values = Vec::with_capacity(opt.attempts);
    for (idx, res) in attempts.into_iter().enumerate() {
        let attempt = res?;
        attempt_values.push(attempt.value);
        let replace = match &best {
            None => true,
            // Strict inequality: ties stay with the lowest attempt index.
            Some((_, b)) => attempt.value < b.value,
        };
        if replace {
            best = Some((idx, attempt));
        }
    }
    let (_, winner) = best.expect("attempts >= 1");
    Ok(OptimizationResult {
        v: winner.v,
        value: winner.value,
        iterations: winner.iterations,
        attempt_values,
        converged: winner.converged,
    })
}
