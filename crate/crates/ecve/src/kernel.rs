//! Kernel function and bandwidth rule.
//!
//! Only the Gaussian kernel K(z) = exp(−z²) is shipped; it is bounded by 1,
//! nonincreasing and integrable, which is all the smoothing weights require.
//! The enum exists so further compliant kernels can be added without touching
//! the objective code.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KernelSpec {
    #[default]
    Gaussian,
}

/// Evaluate the kernel at z = d/h ≥ 0 (a ratio of squared distances).
pub fn kernel_eval(spec: KernelSpec, z: f64) -> Result<f64> {
    if z < 0.0 || !z.is_finite() {
        return Err(Error::Domain(format!(
            "kernel argument must be finite and nonnegative, got {z}"
        )));
    }
    match spec {
        KernelSpec::Gaussian => Ok((-z * z).exp()),
    }
}

/// Slice bandwidth, in squared-distance units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive and finite, got {h}"
            )));
        }
        Ok(Self(h))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Bandwidth rule h = 1.2² · (2·tr(Σ̂)/p) · (n^{−1/(4+p−q)})², with Σ̂ the
/// empirical covariance about the sample mean (1/n normalization).
pub fn bandwidth_rule(x: &DMatrix<f64>, q: usize) -> Result<Bandwidth> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::DegenerateData(format!(
            "bandwidth rule needs n >= 2, got n={n}"
        )));
    }
    if q < 1 || q >= p {
        return Err(Error::InvalidDimension(format!(
            "bandwidth rule needs 1 <= q < p, got p={p}, q={q}"
        )));
    }
    // tr(Sigma_hat) = mean squared deviation from the columnwise mean.
    let mut trace = 0.0;
    for j in 0..p {
        let col = x.column(j);
        let mean = col.mean();
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        trace += ss / n as f64;
    }
    if trace <= 0.0 {
        return Err(Error::DegenerateData(
            "all predictor columns are constant; tr(Sigma_hat) = 0".into(),
        ));
    }
    let rate = (n as f64).powf(-1.0 / (4.0 + (p - q) as f64));
    let h = 1.2f64.powi(2) * (2.0 * trace / p as f64) * rate * rate;
    Bandwidth::new(h)
}
