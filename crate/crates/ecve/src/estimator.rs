//! Top-level CVE/ECVE fitting: standardization, ensemble construction,
//! Stiefel optimization, and basis extraction.
//!
//! `fit` standardizes the predictors, minimizes the ensemble criterion over
//! S(p, p−k), and returns the orthogonal complement of the minimizer as the
//! estimated reduction basis B̂, mapped back to the original predictor
//! coordinates. `fit_cve` is the identity-ensemble special case targeting
//! the mean subspace.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    apply_ensemble, build_ensemble, EnsembleSpec, ResponseScaler,
};
use crate::error::{Error, Result};
use crate::kernel::{bandwidth_rule, Bandwidth};
use crate::objective::{ObjectiveConfig, Sample, Weighting};
use crate::optimizer::{minimize, OptimizerConfig};
use crate::stiefel::{complement_basis, orthonormalize, StiefelPoint};

/// Columnwise centering and scaling fitted on the training predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationParams {
    /// Fit means and population standard deviations (1/n) per column.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for j in 0..p {
            let col = x.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var <= 0.0 {
                return Err(Error::DegenerateData(format!(
                    "predictor column {j} is constant"
                )));
            }
            means.push(mean);
            sds.push(var.sqrt());
        }
        Ok(Self { means, sds })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.means[j]) / self.sds[j]
        })
    }
}

/// Provenance of a fit: everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub ensemble: String,
    /// Realized ensemble size after resolving `auto`.
    pub m: usize,
    pub weighting: Weighting,
    pub bandwidth: f64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

/// A fitted sufficient dimension reduction.
#[derive(Debug, Clone)]
pub struct EcveFit {
    /// Reduction basis in original predictor coordinates, p×k.
    pub b_hat: DMatrix<f64>,
    /// Minimizer of the criterion in standardized coordinates, p×q.
    pub v_hat: StiefelPoint,
    pub objective_value: f64,
    pub config: FitConfig,
    pub standardization: StandardizationParams,
}

impl EcveFit {
    pub fn p(&self) -> usize {
        self.v_hat.p()
    }

    pub fn k(&self) -> usize {
        self.b_hat.ncols()
    }

    pub fn q(&self) -> usize {
        self.v_hat.q()
    }

    /// Reduction basis in standardized coordinates (orthogonal complement of
    /// the minimizer).
    pub fn standardized_basis(&self) -> StiefelPoint {
        complement_basis(&self.v_hat).expect("q < p by construction")
    }

    /// Apply the reduction: X_new · B̂.
    pub fn reduce(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_new.ncols() != self.p() {
            return Err(Error::InvalidDimension(format!(
                "reduce: fit has p={}, data has p={}",
                self.p(),
                x_new.ncols()
            )));
        }
        Ok(x_new * &self.b_hat)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EcveFitJson::from(self)).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: EcveFitJson =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("fit JSON: {e}")))?;
        raw.try_into()
    }
}

/// Serialized form: matrices as row-major vectors with explicit dimensions.
#[derive(Debug, Serialize, Deserialize)]
struct EcveFitJson {
    p: usize,
    k: usize,
    q: usize,
    b_hat: Vec<f64>,
    v_hat: Vec<f64>,
    objective_value: f64,
    config: FitConfig,
    standardization: StandardizationParams,
}

impl From<&EcveFit> for EcveFitJson {
    fn from(fit: &EcveFit) -> Self {
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(m.nrows() * m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push(m[(i, j)]);
                }
            }
            out
        };
        Self {
            p: fit.p(),
            k: fit.k(),
            q: fit.q(),
            b_hat: row_major(&fit.b_hat),
            v_hat: row_major(fit.v_hat.matrix()),
            objective_value: fit.objective_value,
            config: fit.config.clone(),
            standardization: fit.standardization.clone(),
        }
    }
}

impl TryFrom<EcveFitJson> for EcveFit {
    type Error = Error;

    fn try_from(raw: EcveFitJson) -> Result<Self> {
        if raw.k + raw.q != raw.p {
            return Err(Error::Parse(format!(
                "fit JSON: k + q != p ({} + {} != {})",
                raw.k, raw.q, raw.p
            )));
        }
        if raw.b_hat.len() != raw.p * raw.k || raw.v_hat.len() != raw.p * raw.q {
            return Err(Error::Parse("fit JSON: matrix size mismatch".into()));
        }
        let b_hat = DMatrix::from_row_slice(raw.p, raw.k, &raw.b_hat);
        let v_hat = StiefelPoint::from_matrix(DMatrix::from_row_slice(raw.p, raw.q, &raw.v_hat))?;
        Ok(EcveFit {
            b_hat,
            v_hat,
            objective_value: raw.objective_value,
            config: raw.config,
            standardization: raw.standardization,
        })
    }
}

/// Fit an ensemble CVE reduction of dimension k.
pub fn fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    ensemble_spec: EnsembleSpec,
    weighting: Weighting,
    opt: &OptimizerConfig,
) -> Result<EcveFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if k < 1 || k >= p {
        return Err(Error::InvalidDimension(format!(
            "fit requires 1 <= k < p, got k={k}, p={p}"
        )));
    }
    if y.len() != n {
        return Err(Error::InvalidDimension(format!(
            "fit: X has {n} rows, Y has {}",
            y.len()
        )));
    }
    if n <= p {
        log::warn!("n = {n} <= p = {p}: estimates may be unstable");
    }

    let standardization = StandardizationParams::fit(x)?;
    let xs = standardization.apply(x);

    let m = ensemble_spec.resolve_m(n);
    let ensemble = build_ensemble(ensemble_spec.kind, m, y)?;
    let scaler = ResponseScaler::fit(ensemble_spec.kind, y)?;
    let fy = apply_ensemble(&ensemble, &scaler, y)?;
    let sample = Sample::new(xs, y.clone(), fy)?;

    let q = p - k;
    let h = bandwidth_rule(sample.x(), q)?;
    let cfg = ObjectiveConfig::new(h, weighting);
    let result = minimize(&sample, &cfg, opt, q)?;

    let b_std = complement_basis(&result.v)?;
    // Back to original coordinates: the standardized reduction direction u
    // acts on (x - mu)/sd, so the original-coordinate direction has
    // components u_i / sd_i; re-orthonormalize to restore a basis.
    let mut b_orig = b_std.matrix().clone();
    for i in 0..p {
        for j in 0..k {
            b_orig[(i, j)] /= standardization.sds[i];
        }
    }
    let b_hat = orthonormalize(&b_orig)?.matrix().clone();

    Ok(EcveFit {
        b_hat,
        v_hat: result.v,
        objective_value: result.value,
        config: FitConfig {
            ensemble: ensemble_spec.to_string(),
            m,
            weighting,
            bandwidth: h.value(),
            optimizer: *opt,
            seed: opt.seed,
        },
        standardization,
    })
}

/// Mean-subspace CVE: the identity-ensemble special case.
pub fn fit_cve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    opt: &OptimizerConfig,
) -> Result<EcveFit> {
    fit(x, y, k, EnsembleSpec::identity(), Weighting::Uniform, opt)
}

/// Standalone reduction application (same operation as [`EcveFit::reduce`]).
pub fn reduce(fit: &EcveFit, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    fit.reduce(x_new)
}

/// Expose the bandwidth actually used for a fit configuration, for reporting.
pub fn fit_bandwidth(x_standardized: &DMatrix<f64>, q: usize) -> Result<Bandwidth> {
    bandwidth_rule(x_standardized, q)
}
