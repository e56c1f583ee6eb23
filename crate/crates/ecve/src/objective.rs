//! Sample objective functions and their analytic gradients.
//!
//! For a candidate V ∈ S(p,q) and shifting point s₀, the squared distance of
//! X_i to the affine slice s₀ + span{V} is
//!     d_i = ‖(I − VVᵀ)(X_i − s₀)‖².
//! Kernel weights w_i ∝ K(d_i/h) localize a weighted variance of the
//! transformed response around each slice; averaging over all shifting points
//! (every data point is one) and over the ensemble functions gives the
//! criterion L_{n,F}(V) minimized over the Stiefel manifold. Small values of
//! L mean the response varies little *along* the slices, i.e. span{V} is
//! noise and its orthogonal complement carries the regression.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_eval, Bandwidth, KernelSpec};
use crate::stiefel::StiefelPoint;

/// Paired predictors, responses, and transformed responses.
#[derive(Debug, Clone)]
pub struct Sample {
    x: DMatrix<f64>,
    y: DVector<f64>,
    fy: DMatrix<f64>,
}

impl Sample {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, fy: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::DegenerateData(format!("need n >= 2, got n={n}")));
        }
        if y.len() != n || fy.nrows() != n {
            return Err(Error::InvalidDimension(format!(
                "row mismatch: X has {n}, Y has {}, FY has {}",
                y.len(),
                fy.nrows()
            )));
        }
        if fy.ncols() < 1 {
            return Err(Error::InvalidDimension("FY needs at least one column".into()));
        }
        let finite = x.iter().all(|v| v.is_finite())
            && y.iter().all(|v| v.is_finite())
            && fy.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::DegenerateData("non-finite entries in sample".into()));
        }
        Ok(Self { x, y, fy })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of ensemble functions m.
    pub fn m(&self) -> usize {
        self.fy.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn fy(&self) -> &DMatrix<f64> {
        &self.fy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every slice enters L*_n with weight 1/n.
    #[default]
    Uniform,
    /// Slices weighted by their effective point count (between-slice scheme).
    Weighted,
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weighting::Uniform => f.write_str("uniform"),
            Weighting::Weighted => f.write_str("weighted"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub h: Bandwidth,
    pub weighting: Weighting,
    pub kernel: KernelSpec,
}

impl ObjectiveConfig {
    pub fn new(h: Bandwidth, weighting: Weighting) -> Self {
        Self {
            h,
            weighting,
            kernel: KernelSpec::Gaussian,
        }
    }
}

/// Value of L_{n,F}(V) together with the per-function values L*_n(V, f_j).
#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub value: f64,
    pub per_function: Vec<f64>,
}

/// Squared distances d_i = ‖(I − VVᵀ)(X_i − s₀)‖², clamped at 0.
pub fn distances(v: &StiefelPoint, s0: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if s0.len() != x.ncols() || v.p() != x.ncols() {
        return Err(Error::InvalidDimension(format!(
            "distances: p mismatch (X has {}, s0 has {}, V has {})",
            x.ncols(),
            s0.len(),
            v.p()
        )));
    }
    let n = x.nrows();
    let mut d = DVector::zeros(n);
    let vm = v.matrix();
    let mut xt = DVector::zeros(x.ncols());
    for i in 0..n {
        for j in 0..x.ncols() {
            xt[j] = x[(i, j)] - s0[j];
        }
        let proj = vm.tr_mul(&xt);
        d[i] = (xt.norm_squared() - proj.norm_squared()).max(0.0);
    }
    Ok(d)
}

/// Normalized within-slice weights w_i = K(d_i/h) / Σ_j K(d_j/h).
pub fn slice_weights(
    v: &StiefelPoint,
    s0: &DVector<f64>,
    sample: &Sample,
    cfg: &ObjectiveConfig,
) -> Result<DVector<f64>> {
    let d = distances(v, s0, sample.x())?;
    let h = cfg.h.value();
    let mut w = DVector::zeros(d.len());
    let mut total = 0.0;
    for i in 0..d.len() {
        let k = kernel_eval(cfg.kernel, d[i] / h)?;
        w[i] = k;
        total += k;
    }
    if total <= 0.0 {
        return Err(Error::DegenerateData("all kernel weights vanished".into()));
    }
    w /= total;
    Ok(w)
}

/// Weighted slice moments ȳ_l = Σ_i w_i f(Y_i)^l for l = 1, 2.
pub fn slice_moments(weights: &DVector<f64>, fy: &DVector<f64>) -> (f64, f64) {
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for i in 0..weights.len() {
        y1 += weights[i] * fy[i];
        y2 += weights[i] * fy[i] * fy[i];
    }
    (y1, y2)
}

/// Local (within-slice) variance L̃_n(V, s₀, f) = ȳ₂ − ȳ₁².
pub fn local_variance(
    v: &StiefelPoint,
    s0: &DVector<f64>,
    sample: &Sample,
    cfg: &ObjectiveConfig,
    f_index: usize,
) -> Result<f64> {
    let w = slice_weights(v, s0, sample, cfg)?;
    let fcol = sample.fy().column(f_index).clone_owned();
    let (y1, y2) = slice_moments(&w, &fcol);
    Ok(y2 - y1 * y1)
}

/// Per-shifting-point quantities shared by the objective and the gradient.
struct SliceCache {
    /// d_l for the shifting point, row layout matching the sample.
    dists: Vec<f64>,
    /// Unnormalized kernel values K(d_l/h).
    kvals: Vec<f64>,
    ksum: f64,
}

fn slice_cache(xrows: &DMatrix<f64>, i: usize, v: &DMatrix<f64>, h: f64) -> SliceCache {
    let n = xrows.nrows();
    let p = xrows.ncols();
    let q = v.ncols();
    let mut dists = vec![0.0; n];
    let mut kvals = vec![0.0; n];
    let mut ksum = 0.0;
    let mut xt = vec![0.0; p];
    for l in 0..n {
        for j in 0..p {
            xt[j] = xrows[(l, j)] - xrows[(i, j)];
        }
        let mut sq = 0.0;
        for j in 0..p {
            sq += xt[j] * xt[j];
        }
        let mut proj_sq = 0.0;
        for c in 0..q {
            let mut dot = 0.0;
            for j in 0..p {
                dot += v[(j, c)] * xt[j];
            }
            proj_sq += dot * dot;
        }
        let d = (sq - proj_sq).max(0.0);
        let z = d / h;
        let k = (-z * z).exp();
        dists[l] = d;
        kvals[l] = k;
        ksum += k;
    }
    SliceCache { dists, kvals, ksum }
}

/// Per-function local variances for one shifting point, plus its kernel mass.
fn slice_variances(cache: &SliceCache, fy: &DMatrix<f64>) -> Vec<f64> {
    let n = fy.nrows();
    let m = fy.ncols();
    let mut vars = vec![0.0; m];
    for j in 0..m {
        let mut y1 = 0.0;
        let mut y2 = 0.0;
        for l in 0..n {
            let w = cache.kvals[l] / cache.ksum;
            let f = fy[(l, j)];
            y1 += w * f;
            y2 += w * f * f;
        }
        vars[j] = y2 - y1 * y1;
    }
    vars
}

/// L*_n(V, f) for a single ensemble function under the configured weighting.
pub fn objective_single(
    v: &StiefelPoint,
    sample: &Sample,
    cfg: &ObjectiveConfig,
    f_index: usize,
) -> Result<f64> {
    let value = objective_ensemble(v, sample, cfg)?;
    value
        .per_function
        .get(f_index)
        .copied()
        .ok_or_else(|| Error::InvalidDimension(format!("no ensemble function {f_index}")))
}

/// Between-slice weights w̃(V, X_i): each slice weighted by its kernel mass
/// with the self term K(0) = 1 removed in numerator and denominator.
pub fn between_slice_weights(
    v: &StiefelPoint,
    sample: &Sample,
    cfg: &ObjectiveConfig,
) -> Result<DVector<f64>> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::DegenerateData(
            "between-slice weights need n >= 2".into(),
        ));
    }
    check_kernel(cfg)?;
    let h = cfg.h.value();
    let vm = v.matrix();
    let masses: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| slice_cache(sample.x(), i, vm, h).ksum)
        .collect();
    let total: f64 = masses.iter().sum::<f64>() - n as f64;
    if total <= 0.0 {
        return Err(Error::DegenerateData(
            "between-slice weight denominator vanished".into(),
        ));
    }
    Ok(DVector::from_iterator(
        n,
        masses.iter().map(|m| (m - 1.0) / total),
    ))
}

fn check_kernel(cfg: &ObjectiveConfig) -> Result<()> {
    match cfg.kernel {
        KernelSpec::Gaussian => Ok(()),
    }
}

/// The full criterion L_{n,F}(V): mean over ensemble functions of L*_n,
/// with every data point serving as a shifting point.
pub fn objective_ensemble(
    v: &StiefelPoint,
    sample: &Sample,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    objective_for_matrix(v.matrix(), sample, cfg)
}

/// Objective evaluated at an arbitrary p×q matrix. The formulas do not
/// require orthonormality; finite-difference probes rely on this.
pub(crate) fn objective_for_matrix(
    v: &DMatrix<f64>,
    sample: &Sample,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    check_kernel(cfg)?;
    let n = sample.n();
    let m = sample.m();
    let h = cfg.h.value();
    if cfg.weighting == Weighting::Weighted && n < 2 {
        return Err(Error::DegenerateData(
            "weighted scheme needs n >= 2".into(),
        ));
    }

    // Per shifting point: kernel mass and the m local variances. Parallel map
    // into an indexed Vec, then a sequential combine, keeps results
    // independent of the thread count.
    let rows: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cache = slice_cache(sample.x(), i, v, h);
            let vars = slice_variances(&cache, sample.fy());
            (cache.ksum, vars)
        })
        .collect();

    let mut per_function = vec![0.0; m];
    match cfg.weighting {
        Weighting::Uniform => {
            for (_, vars) in &rows {
                for j in 0..m {
                    per_function[j] += vars[j];
                }
            }
            for f in per_function.iter_mut() {
                *f /= n as f64;
            }
        }
        Weighting::Weighted => {
            let total: f64 = rows.iter().map(|(ksum, _)| ksum).sum::<f64>() - n as f64;
            if total <= 0.0 {
                return Err(Error::DegenerateData(
                    "between-slice weight denominator vanished".into(),
                ));
            }
            for (ksum, vars) in &rows {
                let w = (ksum - 1.0) / total;
                for j in 0..m {
                    per_function[j] += w * vars[j];
                }
            }
        }
    }
    let value = per_function.iter().sum::<f64>() / m as f64;
    Ok(ObjectiveValue {
        value,
        per_function,
    })
}

/// Analytic Euclidean gradient of the configured criterion at V (Gaussian
/// kernel), for either weighting scheme.
///
/// The per-slice piece combines (2/h²) Σ_l (L̃ − (f(Y_l) − ȳ₁)²) w_l d_l ∇d_l
/// with ∇d_l = −2(X_l − s₀)(X_l − s₀)ᵀV, summed over ensemble functions.
/// Under the uniform scheme these are averaged over shifting points. Under
/// the weighted scheme the slice weights w̃_i = (S_i − 1)/(T − n) themselves
/// depend on V through the kernel masses S_i = Σ_l K_il (T = Σ_i S_i), so
/// the product rule adds (1/(T − n)) Σ_{i,l} (L̄_i − L^w) ∇K_il, where L̄_i
/// is slice i's function-averaged local variance and L^w the weighted
/// criterion; ∇K_il = (4 K_il d_il / h²) x̃_il x̃_ilᵀ V.
pub fn gradient_ensemble(
    v: &StiefelPoint,
    sample: &Sample,
    cfg: &ObjectiveConfig,
) -> Result<DMatrix<f64>> {
    check_kernel(cfg)?;
    let n = sample.n();
    let m = sample.m();
    let p = sample.p();
    let q = v.q();
    let h = cfg.h.value();
    let vm = v.matrix();
    let fy = sample.fy();

    // Slice weights, and for the weighted scheme the pieces of the
    // weight-derivative term: (L̄_i − L^w)/(T − n) per shifting point.
    let (slice_w, mass_coef): (Vec<f64>, Option<Vec<f64>>) = match cfg.weighting {
        Weighting::Uniform => (vec![1.0 / n as f64; n], None),
        Weighting::Weighted => {
            if n < 2 {
                return Err(Error::DegenerateData(
                    "weighted scheme needs n >= 2".into(),
                ));
            }
            let rows: Vec<(f64, f64)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let cache = slice_cache(sample.x(), i, vm, h);
                    let vars = slice_variances(&cache, fy);
                    (cache.ksum, vars.iter().sum::<f64>() / m as f64)
                })
                .collect();
            let total: f64 = rows.iter().map(|r| r.0).sum::<f64>() - n as f64;
            if total <= 0.0 {
                return Err(Error::DegenerateData(
                    "between-slice weight denominator vanished".into(),
                ));
            }
            let weights: Vec<f64> = rows.iter().map(|r| (r.0 - 1.0) / total).collect();
            let lw: f64 = weights.iter().zip(&rows).map(|(w, r)| w * r.1).sum();
            let mass_coef = rows.iter().map(|r| (r.1 - lw) / total).collect();
            (weights, Some(mass_coef))
        }
    };

    let partials: Vec<DMatrix<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cache = slice_cache(sample.x(), i, vm, h);
            // Slice moments per function.
            let mut y1 = vec![0.0; m];
            let mut vars = vec![0.0; m];
            for j in 0..m {
                let mut a = 0.0;
                let mut b = 0.0;
                for l in 0..n {
                    let w = cache.kvals[l] / cache.ksum;
                    let f = fy[(l, j)];
                    a += w * f;
                    b += w * f * f;
                }
                y1[j] = a;
                vars[j] = b - a * a;
            }
            // Coefficient per data point. The per-slice part is
            // c_l = w̃_i w_l d_l (1/m) Σ_j (L̃_j − (f_j(Y_l) − ȳ₁_j)²); the
            // weighted scheme subtracts the weight-derivative piece
            // ((L̄_i − L^w)/(T − n)) K_il d_l. Both carry the common −4/h²
            // from ∇d and the kernel's chain rule.
            let mut coef = vec![0.0; n];
            for l in 0..n {
                let w = cache.kvals[l] / cache.ksum;
                let mut s = 0.0;
                for j in 0..m {
                    let dev = fy[(l, j)] - y1[j];
                    s += vars[j] - dev * dev;
                }
                let mut c = slice_w[i] * w * s / m as f64;
                if let Some(mc) = &mass_coef {
                    c -= mc[i] * cache.kvals[l];
                }
                coef[l] = -4.0 / (h * h) * cache.dists[l] * c;
            }
            // Σ_l c_l x̃_l x̃_lᵀ V computed as X̃ᵀ (c ∘ (X̃ V)).
            let mut acc = DMatrix::zeros(p, q);
            let x = sample.x();
            let mut xt = vec![0.0; p];
            for l in 0..n {
                if coef[l] == 0.0 {
                    continue;
                }
                for j in 0..p {
                    xt[j] = x[(l, j)] - x[(i, j)];
                }
                for c in 0..q {
                    let mut dot = 0.0;
                    for j in 0..p {
                        dot += vm[(j, c)] * xt[j];
                    }
                    let scale = coef[l] * dot;
                    for j in 0..p {
                        acc[(j, c)] += scale * xt[j];
                    }
                }
            }
            acc
        })
        .collect();

    let mut grad = DMatrix::zeros(p, q);
    for partial in &partials {
        grad += partial;
    }
    Ok(grad)
}

/// Central-finite-difference approximation of the Euclidean gradient of the
/// configured objective; the independent oracle for [`gradient_ensemble`].
pub fn gradient_fd(
    v: &StiefelPoint,
    sample: &Sample,
    cfg: &ObjectiveConfig,
    eps: f64,
) -> Result<DMatrix<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    let p = v.p();
    let q = v.q();
    let mut grad = DMatrix::zeros(p, q);
    let mut probe = v.matrix().clone();
    for i in 0..p {
        for j in 0..q {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + eps;
            let up = objective_for_matrix(&probe, sample, cfg)?.value;
            probe[(i, j)] = orig - eps;
            let down = objective_for_matrix(&probe, sample, cfg)?.value;
            probe[(i, j)] = orig;
            grad[(i, j)] = (up - down) / (2.0 * eps);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{apply_ensemble, build_ensemble, EnsembleKind, ResponseScaler};
    use crate::stiefel::random_stiefel;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_sample(n: usize, p: usize, m: usize, seed: u64) -> Sample {
        let mut r = rng(seed);
        let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
        let scaler = ResponseScaler::fit(EnsembleKind::Monomial, &y).unwrap();
        let e = build_ensemble(EnsembleKind::Monomial, m, &y).unwrap();
        let fy = apply_ensemble(&e, &scaler, &y).unwrap();
        Sample::new(x, y, fy).unwrap()
    }

    fn uniform_cfg(h: f64) -> ObjectiveConfig {
        ObjectiveConfig::new(Bandwidth::new(h).unwrap(), Weighting::Uniform)
    }

    #[test]
    fn distance_hand_case() {
        // p=2, V=e1, s0=0, X=(5,3): residual is the e2 component -> 9.
        let v = StiefelPoint::from_matrix(DMatrix::identity(2, 1)).unwrap();
        let s0 = DVector::zeros(2);
        let x = DMatrix::from_row_slice(1, 2, &[5.0, 3.0]);
        let d = distances(&v, &s0, &x).unwrap();
        assert!((d[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn distance_zero_at_shifting_point() {
        let v = random_stiefel(4, 2, &mut rng(1)).unwrap();
        let s0 = DVector::from_column_slice(&[1.0, -2.0, 0.5, 3.0]);
        let x = DMatrix::from_row_slice(1, 4, &[1.0, -2.0, 0.5, 3.0]);
        let d = distances(&v, &s0, &x).unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn distance_rotation_invariant() {
        let mut r = rng(2);
        let v = random_stiefel(4, 2, &mut r).unwrap();
        let x = DMatrix::from_fn(6, 4, |_, _| r.sample::<f64, _>(StandardNormal));
        let s0 = DVector::from_fn(4, |_, _| r.sample::<f64, _>(StandardNormal));
        // Random 2x2 orthogonal factor.
        let o = random_stiefel(2, 2, &mut r).unwrap();
        let vo = StiefelPoint::from_matrix(v.matrix() * o.matrix()).unwrap();
        let d1 = distances(&v, &s0, &x).unwrap();
        let d2 = distances(&vo, &s0, &x).unwrap();
        assert!((d1 - d2).norm() < 1e-10);
    }

    #[test]
    fn slice_weights_symmetry_and_direct_value() {
        // Two points with distances (0, h) from the shifting point:
        // w = (1/(1+e^-1), e^-1/(1+e^-1)).
        let v = StiefelPoint::from_matrix(DMatrix::identity(2, 1)).unwrap();
        let h = 0.7f64;
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, h.sqrt()]);
        let y = DVector::from_column_slice(&[0.0, 1.0]);
        let fy = y.clone().reshape_generic(nalgebra::Dyn(2), nalgebra::Dyn(1));
        let sample = Sample::new(x, y, fy).unwrap();
        let cfg = uniform_cfg(h);
        let w = slice_weights(&v, &DVector::zeros(2), &sample, &cfg).unwrap();
        let e1 = (-1.0f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e1)).abs() < 1e-12);
        assert!((w[1] - e1 / (1.0 + e1)).abs() < 1e-12);
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slice_weights_sum_to_one() {
        let sample = random_sample(15, 4, 2, 3);
        let v = random_stiefel(4, 2, &mut rng(4)).unwrap();
        let cfg = uniform_cfg(0.5);
        let s0 = DVector::from_fn(4, |i, _| i as f64 * 0.3);
        let w = slice_weights(&v, &s0, &sample, &cfg).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&wi| wi > 0.0));
    }

    #[test]
    fn slice_moments_cases() {
        let w = DVector::from_column_slice(&[0.5, 0.5]);
        let fy = DVector::from_column_slice(&[0.0, 2.0]);
        let (y1, y2) = slice_moments(&w, &fy);
        assert_eq!((y1, y2), (1.0, 2.0));
        // Constant response: (c, c^2).
        let c = DVector::from_column_slice(&[3.0, 3.0]);
        let (y1, y2) = slice_moments(&w, &c);
        assert_eq!((y1, y2), (3.0, 9.0));
        // Jensen: y2 >= y1^2.
        let mut r = rng(5);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..6).map(|_| r.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let w = DVector::from_iterator(6, raw.iter().map(|v| v / total));
            let fy = DVector::from_fn(6, |_, _| r.sample::<f64, _>(StandardNormal));
            let (y1, y2) = slice_moments(&w, &fy);
            assert!(y2 >= y1 * y1 - 1e-12);
        }
    }

    #[test]
    fn local_variance_identity_and_shift() {
        let v = StiefelPoint::from_matrix(DMatrix::identity(2, 1)).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_column_slice(&[0.0, 2.0]);
        let fy = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let sample = Sample::new(x.clone(), y.clone(), fy).unwrap();
        let cfg = uniform_cfg(0.5);
        let s0 = DVector::zeros(2);
        let lv = local_variance(&v, &s0, &sample, &cfg, 0).unwrap();
        // Algebraic identity against the weighted-deviation form.
        let w = slice_weights(&v, &s0, &sample, &cfg).unwrap();
        let fcol = sample.fy().column(0).clone_owned();
        let (y1, _) = slice_moments(&w, &fcol);
        let direct: f64 = (0..2).map(|i| w[i] * (fcol[i] - y1).powi(2)).sum();
        assert!((lv - direct).abs() < 1e-10);
        // Shifting the transformed response leaves the variance unchanged.
        let fy_shift = DMatrix::from_column_slice(2, 1, &[7.5, 9.5]);
        let shifted = Sample::new(x, y, fy_shift).unwrap();
        let lv2 = local_variance(&v, &s0, &shifted, &cfg, 0).unwrap();
        assert!((lv - lv2).abs() < 1e-10);
    }

    #[test]
    fn constant_responses_objective_zero() {
        let mut r = rng(6);
        let x = DMatrix::from_fn(8, 3, |_, _| r.sample::<f64, _>(StandardNormal));
        let y = DVector::from_element(8, 2.5);
        let fy = DMatrix::from_element(8, 2, 2.5);
        let sample = Sample::new(x, y, fy).unwrap();
        let v = random_stiefel(3, 1, &mut r).unwrap();
        for weighting in [Weighting::Uniform, Weighting::Weighted] {
            let cfg = ObjectiveConfig::new(Bandwidth::new(0.4).unwrap(), weighting);
            let obj = objective_ensemble(&v, &sample, &cfg).unwrap();
            assert!(obj.value.abs() < 1e-12);
        }
        let cfg = uniform_cfg(0.4);
        let g = gradient_ensemble(&v, &sample, &cfg).unwrap();
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn objective_span_invariance() {
        let sample = random_sample(12, 4, 3, 7);
        let mut r = rng(8);
        for weighting in [Weighting::Uniform, Weighting::Weighted] {
            let cfg = ObjectiveConfig::new(Bandwidth::new(0.8).unwrap(), weighting);
            for _ in 0..5 {
                let v = random_stiefel(4, 2, &mut r).unwrap();
                let o = random_stiefel(2, 2, &mut r).unwrap();
                let vo = StiefelPoint::from_matrix(v.matrix() * o.matrix()).unwrap();
                let a = objective_ensemble(&v, &sample, &cfg).unwrap().value;
                let b = objective_ensemble(&vo, &sample, &cfg).unwrap().value;
                assert!((a - b).abs() < 1e-10, "span invariance violated: {a} vs {b}");
            }
        }
    }

    #[test]
    fn objective_value_consistency() {
        let sample = random_sample(10, 3, 4, 9);
        let v = random_stiefel(3, 2, &mut rng(10)).unwrap();
        let cfg = uniform_cfg(0.6);
        let obj = objective_ensemble(&v, &sample, &cfg).unwrap();
        let mean = obj.per_function.iter().sum::<f64>() / obj.per_function.len() as f64;
        assert!((obj.value - mean).abs() < 1e-12);
        for (j, pf) in obj.per_function.iter().enumerate() {
            let single = objective_single(&v, &sample, &cfg, j).unwrap();
            assert_eq!(single, *pf);
            assert!(*pf >= -1e-12);
        }
    }

    #[test]
    fn duplicated_functions_leave_value_unchanged() {
        let sample = random_sample(9, 3, 2, 11);
        let fy = sample.fy();
        let doubled = DMatrix::from_fn(9, 4, |i, j| fy[(i, j % 2)]);
        let dup = Sample::new(sample.x().clone(), sample.y().clone(), doubled).unwrap();
        let v = random_stiefel(3, 1, &mut rng(12)).unwrap();
        let cfg = uniform_cfg(0.5);
        let a = objective_ensemble(&v, &sample, &cfg).unwrap().value;
        let b = objective_ensemble(&v, &dup, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn between_slice_weights_properties() {
        let sample = random_sample(14, 4, 2, 13);
        let v = random_stiefel(4, 2, &mut rng(14)).unwrap();
        let cfg = ObjectiveConfig::new(Bandwidth::new(0.9).unwrap(), Weighting::Weighted);
        let w = between_slice_weights(&v, &sample, &cfg).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn between_slice_middle_point_heaviest() {
        // Three collinear points along the complement of span{V} at 0, 1, 2:
        // the middle point sees the most kernel mass from its neighbors.
        let v = StiefelPoint::from_matrix(DMatrix::identity(2, 1)).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 1.0, 0.0, 2.0]);
        let y = DVector::from_column_slice(&[0.0, 1.0, 2.0]);
        let fy = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let sample = Sample::new(x, y, fy).unwrap();
        let cfg = ObjectiveConfig::new(Bandwidth::new(2.0).unwrap(), Weighting::Weighted);
        let w = between_slice_weights(&v, &sample, &cfg).unwrap();
        assert!(w[1] > w[0] && w[1] > w[2], "weights {w:?}");
    }

    #[test]
    fn affine_response_equivariance() {
        // f -> a*f + b multiplies every local variance by a^2.
        let sample = random_sample(10, 3, 2, 15);
        let (a, b) = (2.5, -1.3);
        let fy2 = sample.fy().map(|v| a * v + b);
        let scaled = Sample::new(sample.x().clone(), sample.y().clone(), fy2).unwrap();
        let v = random_stiefel(3, 1, &mut rng(16)).unwrap();
        let cfg = uniform_cfg(0.7);
        let o1 = objective_ensemble(&v, &sample, &cfg).unwrap().value;
        let o2 = objective_ensemble(&v, &scaled, &cfg).unwrap().value;
        assert!((o2 - a * a * o1).abs() < 1e-9 * o1.abs().max(1.0));
    }

    #[test]
    fn sample_permutation_invariance() {
        let sample = random_sample(9, 3, 3, 17);
        let perm: Vec<usize> = vec![4, 0, 7, 2, 8, 1, 6, 3, 5];
        let x2 = DMatrix::from_fn(9, 3, |i, j| sample.x()[(perm[i], j)]);
        let y2 = DVector::from_fn(9, |i, _| sample.y()[perm[i]]);
        let fy2 = DMatrix::from_fn(9, 3, |i, j| sample.fy()[(perm[i], j)]);
        let permuted = Sample::new(x2, y2, fy2).unwrap();
        let v = random_stiefel(3, 2, &mut rng(18)).unwrap();
        for weighting in [Weighting::Uniform, Weighting::Weighted] {
            let cfg = ObjectiveConfig::new(Bandwidth::new(0.5).unwrap(), weighting);
            let a = objective_ensemble(&v, &sample, &cfg).unwrap().value;
            let b = objective_ensemble(&v, &permuted, &cfg).unwrap().value;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sample = random_sample(20, 5, 4, 19);
        let v = random_stiefel(5, 3, &mut rng(20)).unwrap();
        let cfg = uniform_cfg(0.9);
        let g = gradient_ensemble(&v, &sample, &cfg).unwrap();
        let fd = gradient_fd(&v, &sample, &cfg, 1e-5).unwrap();
        let rel = (&g - &fd).norm() / g.norm().max(1e-12);
        assert!(rel < 1e-5, "relative error {rel}");
    }

    #[test]
    fn weighted_gradient_matches_finite_differences() {
        let sample = random_sample(18, 5, 3, 31);
        let v = random_stiefel(5, 3, &mut rng(32)).unwrap();
        let cfg = ObjectiveConfig::new(Bandwidth::new(0.9).unwrap(), Weighting::Weighted);
        let g = gradient_ensemble(&v, &sample, &cfg).unwrap();
        let fd = gradient_fd(&v, &sample, &cfg, 1e-5).unwrap();
        let rel = (&g - &fd).norm() / g.norm().max(1e-12);
        assert!(rel < 1e-5, "relative error {rel}");
    }

    #[test]
    fn gradient_fd_quadratic_convergence() {
        let sample = random_sample(12, 4, 2, 21);
        let v = random_stiefel(4, 2, &mut rng(22)).unwrap();
        let cfg = uniform_cfg(0.8);
        let exact = gradient_ensemble(&v, &sample, &cfg).unwrap();
        let e1 = (gradient_fd(&v, &sample, &cfg, 1e-3).unwrap() - &exact).norm();
        let e2 = (gradient_fd(&v, &sample, &cfg, 5e-4).unwrap() - &exact).norm();
        let ratio = e1 / e2.max(1e-300);
        assert!(
            ratio > 2.5 && ratio < 6.0,
            "expected ~4x shrink, got {ratio}"
        );
    }

    #[test]
    fn gradient_directional_derivative() {
        let sample = random_sample(15, 4, 2, 23);
        let mut r = rng(24);
        let v = random_stiefel(4, 2, &mut r).unwrap();
        let cfg = uniform_cfg(0.8);
        let g = gradient_ensemble(&v, &sample, &cfg).unwrap();
        let raw = DMatrix::from_fn(4, 2, |_, _| r.sample::<f64, _>(StandardNormal));
        let xi = crate::stiefel::tangent_project(&v, &raw).unwrap();
        let analytic = g.dot(xi.matrix());
        let eps = 1e-6;
        let up = objective_for_matrix(&(v.matrix() + xi.matrix() * eps), &sample, &cfg)
            .unwrap()
            .value;
        let down = objective_for_matrix(&(v.matrix() - xi.matrix() * eps), &sample, &cfg)
            .unwrap()
            .value;
        let fd = (up - down) / (2.0 * eps);
        assert!(
            (analytic - fd).abs() < 1e-6 * analytic.abs().max(1.0),
            "directional derivative {analytic} vs {fd}"
        );
    }
}
