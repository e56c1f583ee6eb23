//! Parametric response ensembles and the default ensemble-size rule.
//!
//! An ensemble is an ordered list of scalar transforms f_1, ..., f_m applied
//! to the response. The fitted objective averages a local-variance criterion
//! over the transformed responses, which is what upgrades mean-subspace CVE
//! to a central-subspace estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Identity,
    Fourier,
    Indicator,
    Monomial,
    BoxCox,
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnsembleKind::Identity => "identity",
            EnsembleKind::Fourier => "fourier",
            EnsembleKind::Indicator => "indicator",
            EnsembleKind::Monomial => "monomial",
            EnsembleKind::BoxCox => "boxcox",
        };
        f.write_str(s)
    }
}

/// Ensemble size choice in a method specification: explicit or `auto`
/// (the log-n rule).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeChoice {
    Auto,
    Fixed(usize),
}

/// Parsed ensemble specification, e.g. `fourier:auto` or `indicator:8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub m: SizeChoice,
}

impl EnsembleSpec {
    pub fn identity() -> Self {
        Self {
            kind: EnsembleKind::Identity,
            m: SizeChoice::Fixed(1),
        }
    }

    /// Grammar: `identity | fourier:m | indicator:m | monomial:m | boxcox:m`
    /// with `m` a positive integer or `auto`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.splitn(2, ':');
        let name = parts.next().unwrap_or("");
        let kind = match name {
            "identity" => EnsembleKind::Identity,
            "fourier" => EnsembleKind::Fourier,
            "indicator" => EnsembleKind::Indicator,
            "monomial" => EnsembleKind::Monomial,
            "boxcox" => EnsembleKind::BoxCox,
            other => {
                return Err(Error::Parse(format!(
                    "unknown ensemble '{other}' (expected identity|fourier|indicator|monomial|boxcox)"
                )))
            }
        };
        let m = match (kind, parts.next()) {
            (EnsembleKind::Identity, None) => SizeChoice::Fixed(1),
            (EnsembleKind::Identity, Some(_)) => {
                return Err(Error::Parse("identity ensemble takes no size".into()))
            }
            (_, None) | (_, Some("auto")) => SizeChoice::Auto,
            (_, Some(v)) => {
                let m: usize = v
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad ensemble size '{v}'")))?;
                SizeChoice::Fixed(m)
            }
        };
        Ok(Self { kind, m })
    }

    pub fn resolve_m(&self, n: usize) -> usize {
        match self.m {
            SizeChoice::Auto => default_m(n),
            SizeChoice::Fixed(m) => m,
        }
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.m) {
            (EnsembleKind::Identity, _) => write!(f, "identity"),
            (kind, SizeChoice::Auto) => write!(f, "{kind}:auto"),
            (kind, SizeChoice::Fixed(m)) => write!(f, "{kind}:{m}"),
        }
    }
}

/// Default ensemble size: ⌈log n⌉ rounded up to the next even integer.
pub fn default_m(n: usize) -> usize {
    let m = (n as f64).ln().ceil() as usize;
    let m = m.max(2);
    if m % 2 == 0 {
        m
    } else {
        m + 1
    }
}

/// Affine response rescaling fitted on the training responses.
///
/// Fourier and monomial transforms act on a robustly standardized response
/// z = (y − median) / (1.4826·MAD); Box-Cox additionally shifts it positive.
/// Identity and indicator act on the raw response (`no_op`). The robust
/// scale keeps the transform domain informative when the response is heavy
/// tailed (e.g. a 1/x link), where a mean/sd scaling would compress almost
/// all responses into a vanishing interval around 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseScaler {
    pub center: f64,
    pub scale: f64,
    pub shift_to_positive: Option<f64>,
}

impl ResponseScaler {
    pub fn no_op() -> Self {
        Self {
            center: 0.0,
            scale: 1.0,
            shift_to_positive: None,
        }
    }

    /// Fit the scaler appropriate for `kind` on the training responses.
    pub fn fit(kind: EnsembleKind, y: &DVector<f64>) -> Result<Self> {
        match kind {
            EnsembleKind::Identity | EnsembleKind::Indicator => Ok(Self::no_op()),
            EnsembleKind::Fourier | EnsembleKind::Monomial | EnsembleKind::BoxCox => {
                let n = y.len();
                if n < 2 {
                    return Err(Error::DegenerateData("scaler needs n >= 2".into()));
                }
                let mut sorted: Vec<f64> = y.iter().cloned().collect();
                sorted.sort_by(f64::total_cmp);
                let median = quantile_type7(&sorted, 0.5);
                let mut devs: Vec<f64> = y.iter().map(|v| (v - median).abs()).collect();
                devs.sort_by(f64::total_cmp);
                let mad = quantile_type7(&devs, 0.5);
                // Consistency factor for the normal distribution; fall back to
                // the standard deviation when more than half the responses tie.
                let scale = if mad > 0.0 {
                    1.4826 * mad
                } else {
                    let mean = y.mean();
                    let var =
                        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    if var > 0.0 {
                        var.sqrt()
                    } else {
                        1.0
                    }
                };
                let shift = if kind == EnsembleKind::BoxCox {
                    // Shift the scaled response strictly positive with a
                    // margin of 10% of its range.
                    let zmin = (sorted[0] - median) / scale;
                    let zmax = (sorted[n - 1] - median) / scale;
                    let range = (zmax - zmin).max(1.0);
                    Some(-zmin + 0.1 * range)
                } else {
                    None
                };
                Ok(Self {
                    center: median,
                    scale,
                    shift_to_positive: shift,
                })
            }
        }
    }

    fn apply(&self, y: f64) -> f64 {
        let z = (y - self.center) / self.scale;
        match self.shift_to_positive {
            Some(s) => z + s,
            None => z,
        }
    }
}

/// A concrete, fitted ensemble of m response transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub kind: EnsembleKind,
    pub m: usize,
    /// Indicator quantile thresholds q_j, on the raw response scale.
    pub thresholds: Option<Vec<f64>>,
    /// Box-Cox exponents t_j (the log transform is the final function).
    pub boxcox_exponents: Option<Vec<f64>>,
}

/// Type-7 empirical quantile (linear interpolation of order statistics).
fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Build an ensemble of size `m` fitted to the responses `y`.
pub fn build_ensemble(kind: EnsembleKind, m: usize, y: &DVector<f64>) -> Result<Ensemble> {
    if m < 1 {
        return Err(Error::InvalidConfig("ensemble size must be >= 1".into()));
    }
    match kind {
        EnsembleKind::Identity => {
            if m != 1 {
                return Err(Error::InvalidConfig(
                    "identity ensemble has exactly one function".into(),
                ));
            }
            Ok(Ensemble {
                kind,
                m: 1,
                thresholds: None,
                boxcox_exponents: None,
            })
        }
        EnsembleKind::Fourier => {
            if m % 2 != 0 {
                return Err(Error::InvalidConfig(format!(
                    "fourier ensemble size must be even, got {m}"
                )));
            }
            Ok(Ensemble {
                kind,
                m,
                thresholds: None,
                boxcox_exponents: None,
            })
        }
        EnsembleKind::Indicator => {
            let mut sorted: Vec<f64> = y.iter().cloned().collect();
            sorted.sort_by(f64::total_cmp);
            let thresholds: Vec<f64> = (1..=m)
                .map(|j| quantile_type7(&sorted, j as f64 / (m as f64 + 1.0)))
                .collect();
            Ok(Ensemble {
                kind,
                m,
                thresholds: Some(thresholds),
                boxcox_exponents: None,
            })
        }
        EnsembleKind::Monomial => Ok(Ensemble {
            kind,
            m,
            thresholds: None,
            boxcox_exponents: None,
        }),
        EnsembleKind::BoxCox => {
            if m < 2 {
                return Err(Error::InvalidConfig(
                    "boxcox ensemble needs m >= 2 (exponent grid plus log)".into(),
                ));
            }
            // t_j = 0.1 + 2(j-1)/(m-1) for j = 1..m-1; the m-th function is log.
            let exps: Vec<f64> = (1..m)
                .map(|j| 0.1 + 2.0 * (j as f64 - 1.0) / (m as f64 - 1.0))
                .collect();
            Ok(Ensemble {
                kind,
                m,
                thresholds: None,
                boxcox_exponents: Some(exps),
            })
        }
    }
}

/// Apply the ensemble elementwise: column j of the result is f_j of the
/// (scaled) response.
pub fn apply_ensemble(
    ensemble: &Ensemble,
    scaler: &ResponseScaler,
    y: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = y.len();
    let m = ensemble.m;
    let mut fy = DMatrix::zeros(n, m);
    match ensemble.kind {
        EnsembleKind::Identity => {
            for i in 0..n {
                fy[(i, 0)] = y[i];
            }
        }
        EnsembleKind::Fourier => {
            let half = m / 2;
            for i in 0..n {
                let z = scaler.apply(y[i]);
                for j in 1..=half {
                    fy[(i, j - 1)] = (j as f64 * z).sin();
                    fy[(i, half + j - 1)] = (j as f64 * z).cos();
                }
            }
        }
        EnsembleKind::Indicator => {
            let thresholds = ensemble
                .thresholds
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("indicator ensemble missing thresholds".into()))?;
            for i in 0..n {
                for (j, q) in thresholds.iter().enumerate() {
                    fy[(i, j)] = if y[i] >= *q { 1.0 } else { 0.0 };
                }
            }
        }
        EnsembleKind::Monomial => {
            for i in 0..n {
                let z = scaler.apply(y[i]);
                let mut pow = 1.0;
                for j in 0..m {
                    pow *= z;
                    fy[(i, j)] = pow;
                }
            }
        }
        EnsembleKind::BoxCox => {
            let exps = ensemble.boxcox_exponents.as_ref().ok_or_else(|| {
                Error::InvalidConfig("boxcox ensemble missing exponent grid".into())
            })?;
            for i in 0..n {
                let w = scaler.apply(y[i]);
                if w <= 0.0 {
                    return Err(Error::Domain(format!(
                        "boxcox transform needs a positive shifted response, got {w}"
                    )));
                }
                for (j, t) in exps.iter().enumerate() {
                    fy[(i, j)] = (w.powf(*t) - 1.0) / t;
                }
                fy[(i, m - 1)] = w.ln();
            }
        }
    }
    Ok(fy)
}
