//! Simulation models, predictor distributions, and the replication harness.
//!
//! Seven benchmark regression models on p = 10 correlated predictors
//! (Σ_ij = 0.5^{|i−j|}), three predictor distributions, and a study runner
//! that fits a chosen method across seeded replicates and aggregates the
//! normalized subspace errors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::estimator::{fit, EcveFit};
use crate::objective::Weighting;
use crate::optimizer::OptimizerConfig;
use crate::seed::split_seed;
use crate::stiefel::subspace_error;

pub const DEFAULT_P: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::M1,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6,
        ModelId::M7,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(ModelId::M1),
            "M2" => Ok(ModelId::M2),
            "M3" => Ok(ModelId::M3),
            "M4" => Ok(ModelId::M4),
            "M5" => Ok(ModelId::M5),
            "M6" => Ok(ModelId::M6),
            "M7" => Ok(ModelId::M7),
            other => Err(Error::Parse(format!(
                "unknown model '{other}' (valid: M1 M2 M3 M4 M5 M6 M7)"
            ))),
        }
    }

    /// True central-subspace dimension.
    pub fn k(&self) -> usize {
        match self {
            ModelId::M1 | ModelId::M6 | ModelId::M7 => 1,
            ModelId::M2 | ModelId::M3 | ModelId::M4 => 2,
            ModelId::M5 => 3,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Declarative model description: dimension and response map.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub id: ModelId,
    pub k: usize,
    pub p: usize,
}

impl ModelSpec {
    pub fn new(id: ModelId) -> Self {
        Self {
            id,
            k: id.k(),
            p: DEFAULT_P,
        }
    }

    /// True basis: first k columns of I_p.
    pub fn b_true(&self) -> DMatrix<f64> {
        DMatrix::identity(self.p, self.k)
    }

    /// Response map of the model given a predictor row and a noise draw.
    pub fn response(&self, x: &DVector<f64>, eps: f64) -> f64 {
        let b1 = x[0];
        let b2 = if self.p > 1 { x[1] } else { 0.0 };
        let b3 = if self.p > 2 { x[2] } else { 0.0 };
        match self.id {
            ModelId::M1 => 1.0 / b1 + 0.2 * eps,
            ModelId::M2 => (2.0 * b1).cos() + b2.cos() + 0.2 * eps,
            ModelId::M3 => b2 + (0.5 + b1 * b1) * eps,
            ModelId::M4 => {
                b1 / (0.5 + (1.5 + b2) * (1.5 + b2)) + (b1.abs() + b2 * b2 + 0.5) * eps
            }
            ModelId::M5 => b3 + (b1 * b2 * b2).sin() * eps,
            ModelId::M6 => 0.5 * b1 * b1 * eps,
            ModelId::M7 => (b1 - PI).cos() + (2.0 * b1).cos() * eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistId {
    I,
    II,
    III,
}

impl DistId {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(DistId::I),
            "II" | "2" => Ok(DistId::II),
            "III" | "3" => Ok(DistId::III),
            other => Err(Error::Parse(format!(
                "unknown distribution '{other}' (valid: I II III)"
            ))),
        }
    }
}

impl fmt::Display for DistId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Predictor distribution X = Σ^{1/2} Z with Σ_ij = 0.5^{|i−j|}.
#[derive(Debug, Clone)]
pub struct PredictorDist {
    pub id: DistId,
    pub p: usize,
    sqrt_sigma: DMatrix<f64>,
}

impl PredictorDist {
    pub fn new(id: DistId, p: usize) -> Self {
        let sigma = DMatrix::from_fn(p, p, |i, j| {
            0.5f64.powi((i as i64 - j as i64).unsigned_abs() as i32)
        });
        // Symmetric square root via eigendecomposition; Sigma is positive
        // definite so all eigenvalues are positive.
        let eig = sigma.symmetric_eigen();
        let mut sqrt_vals = eig.eigenvalues.clone();
        for v in sqrt_vals.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        let sqrt_sigma =
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        Self { id, p, sqrt_sigma }
    }

    pub fn sqrt_sigma(&self) -> &DMatrix<f64> {
        &self.sqrt_sigma
    }

    fn draw_z_row<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut DVector<f64>) {
        match self.id {
            DistId::I => {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            DistId::II => {
                let half_width = 3f64.sqrt();
                for v in row.iter_mut() {
                    *v = rng.gen_range(-half_width..half_width);
                }
            }
            DistId::III => {
                // Mixture: standard normal plus a mean of 2 at one uniformly
                // chosen coordinate, redrawn per observation.
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let j = rng.gen_range(0..self.p);
                row[j] += 2.0;
            }
        }
    }
}

/// Draw a seeded dataset from a model and predictor distribution.
pub fn generate(
    model: &ModelSpec,
    dist: &PredictorDist,
    n: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    if n < 1 {
        return Err(Error::InvalidConfig("generate needs n >= 1".into()));
    }
    if model.p != dist.p {
        return Err(Error::InvalidDimension(format!(
            "model has p={}, distribution has p={}",
            model.p, dist.p
        )));
    }
    let p = model.p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut z = DVector::zeros(p);
    for i in 0..n {
        dist.draw_z_row(&mut rng, &mut z);
        let xi = &dist.sqrt_sigma * &z;
        for j in 0..p {
            x[(i, j)] = xi[j];
        }
        let eps: f64 = rng.sample(StandardNormal);
        y[i] = model.response(&xi, eps);
    }
    Ok((x, y, model.b_true()))
}

/// A fitting method: ensemble choice plus between-slice weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub ensemble: EnsembleSpec,
    pub weighting: Weighting,
}

impl MethodSpec {
    /// Grammar: `<ensemble_spec>[+weighted]`, e.g. `fourier`, `indicator:8`,
    /// `fourier:auto+weighted`, `identity`.
    pub fn parse(s: &str) -> Result<Self> {
        let (spec, weighting) = match s.strip_suffix("+weighted") {
            Some(rest) => (rest, Weighting::Weighted),
            None => (s, Weighting::Uniform),
        };
        Ok(Self {
            ensemble: EnsembleSpec::parse(spec)?,
            weighting,
        })
    }

    pub fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        k: usize,
        opt: &OptimizerConfig,
    ) -> Result<EcveFit> {
        fit(x, y, k, self.ensemble, self.weighting, opt)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.weighting {
            Weighting::Uniform => write!(f, "{}", self.ensemble),
            Weighting::Weighted => write!(f, "{}+weighted", self.ensemble),
        }
    }
}

/// Aggregated replication results for one (model, dist, n, method) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub model: ModelId,
    pub dist: DistId,
    pub n: usize,
    pub method: String,
    pub replicates: usize,
    pub errors: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Set when replicates == 1 and the sd is reported as 0 by convention.
    pub degenerate_sd: bool,
}

/// Compensated (Kahan) sum, so aggregation is robust to summation order.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Run `r` seeded replicates: generate, fit at the model's true k, score
/// against the true basis.
pub fn run_study(
    model: &ModelSpec,
    dist: &PredictorDist,
    n: usize,
    method: &MethodSpec,
    r: usize,
    seed: u64,
    opt: &OptimizerConfig,
) -> Result<StudyResult> {
    if r < 1 {
        return Err(Error::InvalidConfig("run_study needs r >= 1".into()));
    }
    let b_true = model.b_true();
    let errors: Vec<Result<f64>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = split_seed(seed, rep as u64);
            let (x, y, _) = generate(model, dist, n, rep_seed)?;
            let rep_opt = OptimizerConfig {
                seed: split_seed(rep_seed, 0x0f17),
                ..*opt
            };
            let fitted = method.fit(&x, &y, model.k, &rep_opt)?;
            subspace_error(&b_true, &fitted.b_hat)
        })
        .collect();
    let errors: Vec<f64> = errors.into_iter().collect::<Result<_>>()?;
    let mean = kahan_sum(errors.iter().cloned()) / r as f64;
    let (sd, degenerate_sd) = if r > 1 {
        let ss = kahan_sum(errors.iter().map(|e| (e - mean) * (e - mean)));
        ((ss / (r as f64 - 1.0)).sqrt(), false)
    } else {
        (0.0, true)
    };
    Ok(StudyResult {
        model: model.id,
        dist: dist.id,
        n,
        method: method.to_string(),
        replicates: r,
        errors,
        mean,
        sd,
        degenerate_sd,
    })
}

/// One study per sample size; exhibits the error trend over n.
pub fn consistency_sweep(
    model: &ModelSpec,
    dist: &PredictorDist,
    n_list: &[usize],
    method: &MethodSpec,
    r: usize,
    seed: u64,
    opt: &OptimizerConfig,
) -> Result<Vec<StudyResult>> {
    if n_list.is_empty() {
        return Err(Error::InvalidConfig("n list must be nonempty".into()));
    }
    n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| run_study(model, dist, n, method, r, split_seed(seed, 1000 + i as u64), opt))
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str = "model,dist,n,method,replicates,mean_err,sd_err";
pub const LONG_CSV_HEADER: &str = "model,dist,n,method,rep,err";

pub fn summary_csv_row(s: &StudyResult) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        s.model, s.dist, s.n, s.method, s.replicates, s.mean, s.sd
    )
}

pub fn long_csv_rows(s: &StudyResult) -> Vec<String> {
    s.errors
        .iter()
        .enumerate()
        .map(|(rep, err)| format!("{},{},{},{},{},{}", s.model, s.dist, s.n, s.method, rep, err))
        .collect()
}

/// Human-readable aligned table, one row per study cell.
pub fn aligned_table(results: &[StudyResult]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<6} {:<5} {:>6} {:<24} {:>5} {:>10} {:>10}\n",
        "model", "dist", "n", "method", "reps", "mean_err", "sd_err"
    ));
    for s in results {
        let sd = if s.degenerate_sd {
            "degen.".to_string()
        } else {
            format!("{:.4}", s.sd)
        };
        out.push_str(&format!(
            "{:<6} {:<5} {:>6} {:<24} {:>5} {:>10.4} {:>10}\n",
            s.model.to_string(),
            s.dist.to_string(),
            s.n,
            s.method,
            s.replicates,
            s.mean,
            sd
        ));
    }
    out
}
