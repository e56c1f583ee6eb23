//! Stiefel-manifold primitives.
//!
//! S(p,q) is the set of p×q matrices with orthonormal columns. The objective
//! minimized by the estimator depends on V only through VVᵀ, so these points
//! really represent q-dimensional subspaces; all operations here are
//! span-respecting. Includes the normalized subspace distance
//! ‖P_B − P_B̂‖_F / √(2k) used to score estimates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Columns are orthonormal within this tolerance for every point we construct.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A p×q matrix with orthonormal columns.
///
/// Immutable after construction; construction goes through [`orthonormalize`],
/// [`random_stiefel`] or [`StiefelPoint::from_matrix`], which enforce the
/// invariant ‖VᵀV − I‖_F ≤ 1e−10.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    values: DMatrix<f64>,
}

impl StiefelPoint {
    /// Wrap a matrix that is already orthonormal.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let (p, q) = (values.nrows(), values.ncols());
        if q < 1 || q > p {
            return Err(Error::InvalidDimension(format!(
                "Stiefel point requires 1 <= q <= p, got p={p}, q={q}"
            )));
        }
        let gram = values.tr_mul(&values);
        let defect = (&gram - DMatrix::identity(q, q)).norm();
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::DegenerateBasis(format!(
                "columns not orthonormal: ||V'V - I|| = {defect:.3e}"
            )));
        }
        Ok(Self { values })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn q(&self) -> usize {
        self.values.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Orthogonal projector VVᵀ onto the column span.
    pub fn projector(&self) -> SubspaceProjector {
        SubspaceProjector {
            values: &self.values * self.values.transpose(),
        }
    }
}

/// A p×p orthogonal projection matrix (symmetric, idempotent).
#[derive(Debug, Clone)]
pub struct SubspaceProjector {
    values: DMatrix<f64>,
}

impl SubspaceProjector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn rank(&self) -> f64 {
        self.values.trace()
    }
}

/// A p×q matrix in the tangent space of a Stiefel point.
#[derive(Debug, Clone)]
pub struct TangentVector {
    values: DMatrix<f64>,
    base: StiefelPoint,
}

impl TangentVector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// Draw an orthogonally invariant random point: orthonormalize a matrix of
/// i.i.d. standard normals.
pub fn random_stiefel<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> Result<StiefelPoint> {
    if q < 1 || q > p {
        return Err(Error::InvalidDimension(format!(
            "random_stiefel requires 1 <= q <= p, got p={p}, q={q}"
        )));
    }
    let m = DMatrix::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&m)
}

/// Orthonormalize the columns of `m` by QR, preserving their span.
///
/// The R factor is forced to have a positive diagonal so the result is a
/// deterministic function of the input.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<StiefelPoint> {
    let (p, q) = (m.nrows(), m.ncols());
    if q < 1 || q > p {
        return Err(Error::InvalidDimension(format!(
            "orthonormalize requires 1 <= q <= p, got p={p}, q={q}"
        )));
    }
    let qr = m.clone().qr();
    let mut q_mat = qr.q();
    let r = qr.r();
    // Rank check: diagonal of R relative to the column scale.
    let scale = m.norm().max(1e-300);
    for j in 0..q {
        let d = r[(j, j)];
        if d.abs() <= 1e-12 * scale {
            return Err(Error::DegenerateBasis(format!(
                "column rank deficiency detected at column {j} (|r_jj| = {:.3e})",
                d.abs()
            )));
        }
        if d < 0.0 {
            for i in 0..p {
                q_mat[(i, j)] = -q_mat[(i, j)];
            }
        }
    }
    StiefelPoint::from_matrix(q_mat)
}

/// Orthonormal basis U of the orthogonal complement of span{V}, p×(p−q).
pub fn complement_basis(v: &StiefelPoint) -> Result<StiefelPoint> {
    let (p, q) = (v.p(), v.q());
    if q >= p {
        return Err(Error::InvalidDimension(format!(
            "complement of a full-dimensional span is empty (p = q = {p})"
        )));
    }
    // Column-pivoted QR of I - VV' keeps the p-q numerically independent
    // directions first.
    let residual = DMatrix::identity(p, p) - v.projector().values;
    let qr = residual.col_piv_qr();
    let q_mat = qr.q();
    let basis = q_mat.columns(0, p - q).into_owned();
    // Pin the sign convention: make the largest-magnitude entry of each
    // column positive, so the complement is deterministic.
    let mut basis = basis;
    for j in 0..(p - q) {
        let col = basis.column(j);
        let (imax, _) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        if basis[(imax, j)] < 0.0 {
            for i in 0..p {
                basis[(i, j)] = -basis[(i, j)];
            }
        }
    }
    StiefelPoint::from_matrix(basis)
}

/// Project an arbitrary p×q matrix onto the tangent space at `v`:
/// ξ = G − V·sym(VᵀG).
pub fn tangent_project(v: &StiefelPoint, g: &DMatrix<f64>) -> Result<TangentVector> {
    if g.nrows() != v.p() || g.ncols() != v.q() {
        return Err(Error::InvalidDimension(format!(
            "tangent_project: expected {}x{}, got {}x{}",
            v.p(),
            v.q(),
            g.nrows(),
            g.ncols()
        )));
    }
    let vtg = v.matrix().tr_mul(g);
    let sym = (&vtg + vtg.transpose()) * 0.5;
    let xi = g - v.matrix() * sym;
    Ok(TangentVector {
        values: xi,
        base: v.clone(),
    })
}

/// QR retraction: orthonormalize V + τξ. First-order consistent with the
/// straight-line step.
pub fn retract(v: &StiefelPoint, xi: &TangentVector, step: f64) -> Result<StiefelPoint> {
    let perturbed = v.matrix() + xi.matrix() * step;
    match orthonormalize(&perturbed) {
        Ok(point) => Ok(point),
        // A rank-deficient perturbation can only happen for extreme steps;
        // retreat to the base point.
        Err(Error::DegenerateBasis(_)) => Ok(v.clone()),
        Err(e) => Err(e),
    }
}

/// Normalized subspace distance err = ‖P_B − P_B̂‖_F / √(2k) ∈ [0,1].
///
/// Inputs need not be orthonormal, only full column rank; the projector of
/// each span is what enters the distance.
pub fn subspace_error(b: &DMatrix<f64>, b_hat: &DMatrix<f64>) -> Result<f64> {
    if b.nrows() != b_hat.nrows() || b.ncols() != b_hat.ncols() {
        return Err(Error::InvalidDimension(format!(
            "subspace_error: shapes {}x{} vs {}x{}",
            b.nrows(),
            b.ncols(),
            b_hat.nrows(),
            b_hat.ncols()
        )));
    }
    let k = b.ncols();
    let pa = orthonormalize(b)?.projector();
    let pb = orthonormalize(b_hat)?.projector();
    let err = (pa.matrix() - pb.matrix()).norm() / (2.0 * k as f64).sqrt();
    Ok(err.clamp(0.0, 1.0))
}

/// Frobenius distance between a projector and its target rank, used by tests.
pub fn projector_defect(p: &SubspaceProjector) -> f64 {
    let m = p.matrix();
    let sym = (m - m.transpose()).norm();
    let idem = (m * m - m).norm();
    sym.max(idem)
}

/// Convenience: unit vector e_i of length p.
pub fn basis_vector(p: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(p);
    v[i] = 1.0;
    v
}
