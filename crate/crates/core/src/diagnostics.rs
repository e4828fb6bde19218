//! Post-fit quantities: the MCPC projection matrix `A⁺`, sample scores,
//! per-context variance explained, off-diagonality of the projected
//! covariances and the log-determinant (KL) gap.

use nalgebra::{DMatrix, DVector};

use crate::decompose::{component_gram, McpcaModel};
use crate::linalg::{pseudo_inverse, svd_sorted, sym_eigen_desc};
use crate::tensor::CovarianceTensor;
use crate::{McpcaError, Result};

/// Largest accepted condition number of `A`.
pub const MAX_CONDITION: f64 = 1e12;
/// Projected covariances with smallest eigenvalue below this fraction of the
/// trace are treated as not positive definite.
pub const PD_TOL: f64 = 1e-12;

/// `A⁺ = (AᵀA)⁻¹Aᵀ`, an `r × p` matrix.
pub fn projection_matrix(m: &McpcaModel) -> Result<DMatrix<f64>> {
    projection_of(&m.a)
}

pub(crate) fn projection_of(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = svd_sorted(a).singular_values;
    let condition = match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    };
    if !(condition <= MAX_CONDITION) {
        return Err(McpcaError::RankDeficientComponents { condition });
    }
    Ok(pseudo_inverse(a, 0.0))
}

/// Component scores `X · A⁺ᵀ` for centered samples `X` (`n × p`).
pub fn score_samples(m: &McpcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != m.p() {
        return Err(McpcaError::DimensionMismatch(format!(
            "data has {} columns, model has p = {}",
            x.ncols(),
            m.p()
        )));
    }
    let proj = projection_matrix(m)?;
    Ok(x * proj.transpose())
}

fn check_shapes(t: &CovarianceTensor, m: &McpcaModel) -> Result<()> {
    if t.p() != m.p() || t.k() != m.k() {
        return Err(McpcaError::DimensionMismatch(format!(
            "model is p = {}, k = {}; tensor is p = {}, k = {}",
            m.p(),
            m.k(),
            t.p(),
            t.k()
        )));
    }
    Ok(())
}

fn projected_covariances(t: &CovarianceTensor, m: &McpcaModel) -> Result<Vec<DMatrix<f64>>> {
    check_shapes(t, m)?;
    let proj = projection_matrix(m)?;
    Ok(t.slices().iter().map(|s| &proj * s * proj.transpose()).collect())
}

fn offdiag_norm(s: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..s.ncols() {
        for i in 0..s.nrows() {
            if i != j {
                acc += s[(i, j)] * s[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// Entry `i` is `‖offdiag(A⁺ S_i A⁺ᵀ)‖_F`.
pub fn uncorrelatedness_score(t: &CovarianceTensor, m: &McpcaModel) -> Result<Vec<f64>> {
    Ok(projected_covariances(t, m)?.iter().map(offdiag_norm).collect())
}

/// `log det Diag(Σ) − log det Σ` for a symmetric positive definite `Σ`.
///
/// Returns `None` when the smallest eigenvalue is below `1e-12 · trace`.
pub fn kl_gap(sigma: &DMatrix<f64>) -> Option<f64> {
    let trace = sigma.trace();
    let (values, _) = sym_eigen_desc(sigma);
    let min = values.last().copied().unwrap_or(0.0);
    if !(trace > 0.0) || !(min > PD_TOL * trace) {
        return None;
    }
    let log_det: f64 = values.iter().map(|v| v.ln()).sum();
    let log_diag: f64 = sigma.diagonal().iter().map(|v| v.ln()).sum();
    Some((log_diag - log_det).max(0.0))
}

/// Per-context KL loss of imposing uncorrelatedness on the projected
/// covariances. `None` marks contexts whose projected covariance is not
/// positive definite.
pub fn kl_loss(t: &CovarianceTensor, m: &McpcaModel) -> Result<Vec<Option<f64>>> {
    Ok(projected_covariances(t, m)?.iter().map(kl_gap).collect())
}

/// Variance explained per context.
///
/// The fitted part of context `i` is `F_i = A·diag(b_i)·Aᵀ`. Its squared norm is
/// the quadratic form `b_iᵀ G b_i` with `G_jl = (a_jᵀa_l)²`; the naive
/// per-component split `Σ_j b_ij²` ignores the cross terms and agrees only when
/// the components are orthogonal. With NNLS loadings the Pythagorean split
/// `‖S_i‖² = ‖S_i − F_i‖² + ‖F_i‖²` can fail when a constraint is active, so the
/// unconstrained projection onto `span{a_j a_jᵀ}` is reported as well.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceExplained {
    /// `k × r`, entry `(i, j)` is `b_ij² ‖a_j a_jᵀ‖²_F = b_ij²`.
    pub per_component: DMatrix<f64>,
    /// `‖A·diag(b_i)·Aᵀ‖²_F` (exact quadratic form with the Gram matrix).
    pub explained: Vec<f64>,
    /// `Σ_j b_ij²`.
    pub naive: Vec<f64>,
    /// Squared norm of the unconstrained least-squares projection of `S_i`.
    pub unconstrained: Vec<f64>,
    /// `‖S_i‖²_F`.
    pub total: Vec<f64>,
    /// `explained / total` (0 for an all-zero slice).
    pub ratio: Vec<f64>,
}

pub fn variance_explained(t: &CovarianceTensor, m: &McpcaModel) -> Result<VarianceExplained> {
    check_shapes(t, m)?;
    let gram = component_gram(&m.a);
    let gram_inv = pseudo_inverse(&gram, 1e-14);
    let r = m.rank();
    let mut out = VarianceExplained {
        per_component: m.b.map(|x| x * x),
        explained: Vec::with_capacity(t.k()),
        naive: Vec::with_capacity(t.k()),
        unconstrained: Vec::with_capacity(t.k()),
        total: Vec::with_capacity(t.k()),
        ratio: Vec::with_capacity(t.k()),
    };
    for (i, s) in t.slices().iter().enumerate() {
        let b: DVector<f64> = m.b.row(i).transpose();
        let explained = b.dot(&(&gram * &b));
        let sa = s * &m.a;
        let h = DVector::from_fn(r, |j, _| m.a.column(j).dot(&sa.column(j)));
        let total = s.norm_squared();
        out.explained.push(explained);
        out.naive.push(b.norm_squared());
        out.unconstrained.push(h.dot(&(&gram_inv * &h)));
        out.total.push(total);
        out.ratio.push(if total > 0.0 { explained / total } else { 0.0 });
    }
    Ok(out)
}

/// Dimension `r(p + k − 1)` of the rank-`r` model.
pub fn model_dimension(p: usize, k: usize, r: usize) -> Result<usize> {
    if r > p {
        return Err(McpcaError::InvalidArgument(format!("rank {r} exceeds p = {p}; requires r ≤ p")));
    }
    Ok(r * (p + k).saturating_sub(1))
}

/// All post-fit diagnostics for one model and tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub variance_explained: VarianceExplained,
    pub uncorrelatedness: Vec<f64>,
    pub kl_loss: Vec<Option<f64>>,
    pub reconstruction_error: Vec<f64>,
    /// `A⁺`, `r × p`.
    pub projection: DMatrix<f64>,
}

impl Diagnostics {
    pub fn compute(t: &CovarianceTensor, m: &McpcaModel) -> Result<Self> {
        Ok(Self {
            variance_explained: variance_explained(t, m)?,
            uncorrelatedness: uncorrelatedness_score(t, m)?,
            kl_loss: kl_loss(t, m)?,
            reconstruction_error: crate::decompose::reconstruction_error(t, m)?.1,
            projection: projection_matrix(m)?,
        })
    }
}
