use nalgebra::{DMatrix, DVector};

use crate::linalg::svd_sorted;
use crate::tensor::Flattening;
use crate::{McpcaError, Result};

/// Singular values below this fraction of `σ₁` count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// The projected tensor `T_A`: an orthonormal basis of `r` matrices of size
/// `p × k` spanning the top-`r` row space of the flattening.
///
/// Alongside the basis it keeps the matching low-rank factorization of the
/// flattening, `M_r = L · diag(w) · Vᵀ`, which is what deflation updates.
#[derive(Debug, Clone)]
pub struct SubspaceTensor {
    p: usize,
    k: usize,
    /// `p·k × r`, orthonormal columns; column `ℓ` is slice `ℓ` vectorized column-major.
    basis: DMatrix<f64>,
    /// `p × r`, orthonormal columns.
    left: DMatrix<f64>,
    weights: Vec<f64>,
    source_singular_values: Vec<f64>,
}

/// Top-`r` right singular vectors of the flattening, reshaped into `p × k` slices.
pub fn extract_subspace(f: &Flattening, r: usize) -> Result<SubspaceTensor> {
    let sv = f.singular_values();
    if r == 0 || r > sv.len() {
        return Err(McpcaError::InvalidArgument(format!(
            "rank must be in 1..={}, got {r}",
            sv.len()
        )));
    }
    let max_rank = f.numerical_rank(RANK_TOL);
    if r > max_rank {
        return Err(McpcaError::RankDeficient {
            requested: r,
            max_rank,
        });
    }
    Ok(SubspaceTensor {
        p: f.p(),
        k: f.k(),
        basis: f.right_vectors().columns(0, r).into_owned(),
        left: f.left_vectors().columns(0, r).into_owned(),
        weights: sv[..r].to_vec(),
        source_singular_values: sv[..r].to_vec(),
    })
}

impl SubspaceTensor {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Current dimension of the subspace.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Top singular values of the flattening this subspace was extracted from.
    pub fn source_singular_values(&self) -> &[f64] {
        &self.source_singular_values
    }

    /// The `p·k × r` matrix whose columns are the vectorized basis slices.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Basis slice `ℓ` as a `p × k` matrix.
    pub fn slice(&self, l: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.p, self.k, self.basis.column(l).as_slice())
    }

    fn check_lengths(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<()> {
        if a.len() != self.p || b.len() != self.k {
            return Err(McpcaError::DimensionMismatch(format!(
                "expected vectors of length ({}, {}), got ({}, {})",
                self.p,
                self.k,
                a.len(),
                b.len()
            )));
        }
        Ok(())
    }

    /// `T_A(a, b, *)`: entry `ℓ` is `aᵀ · slice_ℓ · b`.
    pub fn contract_pair(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_lengths(a, b)?;
        Ok(self.basis.tr_mul(&outer_vec(a, b)))
    }

    /// `T_A(*, *, c) = Σ_ℓ c_ℓ · slice_ℓ`, a `p × k` matrix.
    pub fn contract_mode3(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let v = &self.basis * c;
        DMatrix::from_column_slice(self.p, self.k, v.as_slice())
    }

    /// `F_A(a, b) = ‖T_A(a, b, *)‖²`, the squared norm of the projection of `a ⊗ b`.
    pub fn objective(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        Ok(self.contract_pair(a, b)?.norm_squared())
    }

    /// Remove the rank-one element `a ⊗ b` and return the `(r−1)`-dimensional subspace.
    ///
    /// The working flattening `M_r = L diag(w) Vᵀ` is updated by the rank-reducing
    /// step `M_r − (M_r y)(xᵀ M_r)/(xᵀ M_r y)` with `y = M_r⁺ a`, `x = M_r⁺ᵀ vec(a bᵀ)`,
    /// which subtracts exactly the term `a · vec(a bᵀ)ᵀ` when `a ⊗ b` is one of the
    /// rank-one summands. The new subspace is the row space of the result.
    pub fn deflate(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<SubspaceTensor> {
        self.check_lengths(a, b)?;
        let r = self.rank();
        if r <= 1 {
            return Err(McpcaError::InvalidArgument(
                "cannot deflate a one-dimensional subspace".into(),
            ));
        }
        let alpha = self.left.tr_mul(a);
        let delta = self.basis.tr_mul(&outer_vec(a, b));
        let denom: f64 = (0..r).map(|l| delta[l] * alpha[l] / self.weights[l]).sum();
        let scale = alpha.norm() * delta.norm() / self.weights[0];
        if !(denom.abs() > 1e-14 * scale) {
            return Err(McpcaError::DegenerateStart);
        }
        let mut core = DMatrix::from_diagonal(&DVector::from_vec(self.weights.clone()));
        core -= &alpha * delta.transpose() / denom;
        let svd = svd_sorted(&core);
        let keep = r - 1;
        Ok(SubspaceTensor {
            p: self.p,
            k: self.k,
            basis: &self.basis * svd.v.columns(0, keep),
            left: &self.left * svd.u.columns(0, keep),
            weights: svd.singular_values[..keep].to_vec(),
            source_singular_values: self.source_singular_values.clone(),
        })
    }
}

/// `vec(a bᵀ)` in column-major order: entry `i·p + l` is `a_l · b_i`.
pub(crate) fn outer_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = a.len();
    DVector::from_fn(p * b.len(), |idx, _| a[idx % p] * b[idx / p])
}
