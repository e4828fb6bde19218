//! Dense partially symmetric `p × p × k` covariance tensors.
//!
//! Slice `i` of a [`CovarianceTensor`] is the covariance matrix of context `i`.
//! The flattening concatenates the slices horizontally, `M = [S_1 ⋯ S_k]`, so
//! column `i·p + l` of `M` is column `l` of `S_i`. Right singular vectors of `M`
//! therefore reshape column-major into `p × k` matrices whose `(l, i)` entry
//! pairs variable `l` with context `i`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{max_abs, max_asymmetry, svd_sorted, symmetrize};
use crate::{McpcaError, Result};

/// Relative tolerance for the symmetry check on input slices.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTensor {
    p: usize,
    k: usize,
    slices: Vec<DMatrix<f64>>,
    context_ids: Vec<String>,
}

impl CovarianceTensor {
    /// Stack `k` symmetric `p × p` matrices, in order.
    ///
    /// Each slice must be symmetric to within `1e-12` relative to its largest
    /// entry; accepted slices are stored as `(S + Sᵀ)/2`.
    pub fn stack(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = matrices.len();
        if k == 0 {
            return Err(McpcaError::EmptyInput("no covariance matrices to stack".into()));
        }
        let p = matrices[0].nrows();
        if p == 0 {
            return Err(McpcaError::DimensionMismatch("slices must be at least 1×1".into()));
        }
        let mut slices = Vec::with_capacity(k);
        for (i, m) in matrices.into_iter().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(McpcaError::DimensionMismatch(format!(
                    "slice {i} is {}×{}, expected {p}×{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(McpcaError::InvalidArgument(format!(
                    "slice {i} has non-finite entries"
                )));
            }
            let deviation = max_asymmetry(&m);
            if deviation > SYMMETRY_TOL * max_abs(&m) {
                return Err(McpcaError::Asymmetric { slice: i, deviation });
            }
            slices.push(symmetrize(&m));
        }
        let context_ids = (0..k).map(|i| i.to_string()).collect();
        Ok(Self {
            p,
            k,
            slices,
            context_ids,
        })
    }

    /// Build `T = Σ_j a_j ⊗ a_j ⊗ b_j`, i.e. `S_i = A · diag(B[i, :]) · Aᵀ`.
    ///
    /// `a` is `p × r`, `b` is `k × r`.
    pub fn from_factors(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        if a.ncols() != b.ncols() {
            return Err(McpcaError::DimensionMismatch(format!(
                "A has {} columns but B has {}",
                a.ncols(),
                b.ncols()
            )));
        }
        let slices = (0..b.nrows())
            .map(|i| {
                let mut scaled = a.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= b[(i, j)];
                }
                &scaled * a.transpose()
            })
            .collect();
        Self::stack(slices)
    }

    /// Build a tensor from explicit rank-one terms.
    pub fn from_terms(terms: &[RankOneTerm]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| McpcaError::EmptyInput("no rank-one terms".into()))?;
        let (p, k) = (first.a.len(), first.b.len());
        if terms.iter().any(|t| t.a.len() != p || t.b.len() != k) {
            return Err(McpcaError::DimensionMismatch(
                "rank-one terms have inconsistent lengths".into(),
            ));
        }
        let a = DMatrix::from_fn(p, terms.len(), |l, j| terms[j].a[l]);
        let b = DMatrix::from_fn(k, terms.len(), |i, j| terms[j].b[i]);
        Self::from_factors(&a, &b)
    }

    pub fn with_context_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.k {
            return Err(McpcaError::DimensionMismatch(format!(
                "{} context ids for {} slices",
                ids.len(),
                self.k
            )));
        }
        self.context_ids = ids;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn slice(&self, i: usize) -> &DMatrix<f64> {
        &self.slices[i]
    }

    pub fn context_ids(&self) -> &[String] {
        &self.context_ids
    }

    /// Multiply every slice by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            slices: self.slices.iter().map(|s| s * c).collect(),
            ..self.clone()
        }
    }

    /// Reorder contexts: slice `i` of the result is slice `order[i]` of `self`.
    pub fn permuted_contexts(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.k];
        if order.len() != self.k || order.iter().any(|&i| i >= self.k || std::mem::replace(&mut seen[i], true)) {
            return Err(McpcaError::InvalidArgument("order is not a permutation of the contexts".into()));
        }
        Ok(Self {
            p: self.p,
            k: self.k,
            slices: order.iter().map(|&i| self.slices[i].clone()).collect(),
            context_ids: order.iter().map(|&i| self.context_ids[i].clone()).collect(),
        })
    }

    /// The flattening `M = [S_1 ⋯ S_k]` and its singular value decomposition.
    pub fn flatten(&self) -> Flattening {
        let (p, k) = (self.p, self.k);
        let mut matrix = DMatrix::zeros(p, p * k);
        for (i, s) in self.slices.iter().enumerate() {
            matrix.view_mut((0, i * p), (p, p)).copy_from(s);
        }
        // SVD of the tall transpose: same factors, cheaper bidiagonalization.
        let svd = svd_sorted(&matrix.transpose());
        Flattening {
            p,
            k,
            matrix,
            singular_values: svd.singular_values,
            left: svd.v,
            right: svd.u,
        }
    }

    /// Mode-3 contraction `T(*, *, v) = Σ_i v_i · S_i`.
    pub fn contract_mode3(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        if v.len() != self.k {
            return Err(McpcaError::DimensionMismatch(format!(
                "contraction vector has length {}, expected {}",
                v.len(),
                self.k
            )));
        }
        let mut out = DMatrix::zeros(self.p, self.p);
        for (s, &w) in self.slices.iter().zip(v.iter()) {
            out += s * w;
        }
        Ok(out)
    }

    /// Frobenius norm of the whole tensor.
    pub fn norm(&self) -> f64 {
        self.slices.iter().map(|s| s.norm_squared()).sum::<f64>().sqrt()
    }
}

/// `p × (p·k)` flattening of a covariance tensor together with its SVD.
#[derive(Debug, Clone)]
pub struct Flattening {
    p: usize,
    k: usize,
    matrix: DMatrix<f64>,
    singular_values: Vec<f64>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl Flattening {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Singular values of `M`, nonincreasing, length `min(p, p·k) = p`.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Left singular vectors (`p × p`), columns ordered like the singular values.
    pub fn left_vectors(&self) -> &DMatrix<f64> {
        &self.left
    }

    /// Right singular vectors (`p·k × p`), columns ordered like the singular values.
    pub fn right_vectors(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// Number of singular values above `rel_tol · σ₁`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * top).count()
    }

    /// Undo the flattening. Slices are copied verbatim from the column blocks.
    pub fn to_tensor(&self) -> Result<CovarianceTensor> {
        let p = self.p;
        let slices = (0..self.k)
            .map(|i| self.matrix.view((0, i * p), (p, p)).into_owned())
            .collect();
        CovarianceTensor::stack(slices)
    }
}

/// A partially symmetric rank-one term `a ⊗ a ⊗ b` with `‖a‖ = 1`, `b ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneTerm {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
}

impl RankOneTerm {
    pub fn new(a: DVector<f64>, b: DVector<f64>) -> Result<Self> {
        if (a.norm() - 1.0).abs() > 1e-12 {
            return Err(McpcaError::InvalidArgument(format!(
                "component must have unit norm, got {}",
                a.norm()
            )));
        }
        if b.iter().any(|&x| !(x >= 0.0)) {
            return Err(McpcaError::InvalidArgument(
                "loadings must be non-negative".into(),
            ));
        }
        Ok(Self { a, b })
    }
}
