//! Reference methods: PCA on the pooled covariance and Jennrich's algorithm.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{fix_column_signs, normalize, pseudo_inverse, svd_sorted, sym_eigen_desc};
use crate::seed::{derive_seed, random_unit_vector, rng_from_seed};
use crate::tensor::CovarianceTensor;
use crate::{McpcaError, Result};

const PCA_TIE_TOL: f64 = 1e-12;
const JENNRICH_COLLISION_TOL: f64 = 1e-10;
const JENNRICH_REDRAWS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    PcaStack,
    Jennrich,
}

impl BaselineMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineMethod::PcaStack => "pca_stack",
            BaselineMethod::Jennrich => "jennrich",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    /// `p × r`, unit columns.
    pub a: DMatrix<f64>,
    /// The returned basis is not uniquely determined by the input.
    pub degenerate: bool,
    pub notes: Vec<String>,
}

fn check_rank(t: &CovarianceTensor, r: usize) -> Result<()> {
    if r == 0 || r > t.p() {
        return Err(McpcaError::InvalidArgument(format!(
            "rank must satisfy 1 ≤ r ≤ p = {}, got {r}",
            t.p()
        )));
    }
    Ok(())
}

/// Top-`r` eigenvectors of the pooled covariance `Σ_i w_i S_i`.
pub fn pca_stack(t: &CovarianceTensor, weights: &DVector<f64>, r: usize) -> Result<BaselineResult> {
    check_rank(t, r)?;
    if weights.len() != t.k() {
        return Err(McpcaError::DimensionMismatch(format!(
            "{} weights for {} contexts",
            weights.len(),
            t.k()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0)) || (weights.sum() - 1.0).abs() > 1e-9 {
        return Err(McpcaError::InvalidArgument(
            "weights must be positive and sum to 1".into(),
        ));
    }
    let pooled = t.contract_mode3(weights)?;
    let (values, vectors) = sym_eigen_desc(&pooled);
    let mut a = vectors.columns(0, r).into_owned();
    fix_column_signs(&mut a);

    let mut notes = Vec::new();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let degenerate = r < t.p() && (values[r - 1] - values[r]).abs() <= PCA_TIE_TOL * scale;
    if degenerate {
        notes.push(format!(
            "eigenvalues {} and {} tie ({:e}, {:e}); basis not unique",
            r,
            r + 1,
            values[r - 1],
            values[r]
        ));
    }
    Ok(BaselineResult {
        method: BaselineMethod::PcaStack,
        a,
        degenerate,
        notes,
    })
}

/// Pooled weights proportional to per-context sample sizes.
pub fn size_weights(sizes: &[usize]) -> DVector<f64> {
    let total: usize = sizes.iter().sum();
    DVector::from_iterator(sizes.len(), sizes.iter().map(|&n| n as f64 / total as f64))
}

/// Jennrich's simultaneous diagonalization.
///
/// With `M_u = Σ_i u_i S_i = A diag(Bᵀu) Aᵀ` and likewise `M_v`, the operator
/// `M_u M_v⁺` has the columns of `A` as eigenvectors with eigenvalues
/// `⟨b_j, u⟩ / ⟨b_j, v⟩`. Both contractions are restricted to the top-`r`
/// left singular space `U` of the flattening, and the eigenvectors are taken
/// from the `r × r` operator `(UᵀM_uU)(UᵀM_vU)⁺`. When two eigenvalues collide
/// the contraction vectors are redrawn up to twice; if they still collide
/// the result is returned with `degenerate` set.
pub fn jennrich(t: &CovarianceTensor, r: usize, seed: u64) -> Result<BaselineResult> {
    check_rank(t, r)?;
    let flat = t.flatten();
    let u_basis = flat.left_vectors().columns(0, r).into_owned();

    let mut last = None;
    for attempt in 0..=JENNRICH_REDRAWS {
        let mut rng = rng_from_seed(derive_seed(seed, attempt, 0));
        let u = random_unit_vector(t.k(), &mut rng);
        let v = random_unit_vector(t.k(), &mut rng);
        let n1 = u_basis.tr_mul(&(t.contract_mode3(&u)? * &u_basis));
        let n2 = u_basis.tr_mul(&(t.contract_mode3(&v)? * &u_basis));
        let op = &n1 * pseudo_inverse(&n2, 1e-12);
        let (a, collided, notes) = eigenvectors(&op, &u_basis);
        let result = BaselineResult {
            method: BaselineMethod::Jennrich,
            a,
            degenerate: collided,
            notes,
        };
        if !collided {
            return Ok(result);
        }
        last = Some(result);
    }
    let mut result = last.expect("at least one attempt");
    result
        .notes
        .push(format!("eigenvalue collision persisted after {JENNRICH_REDRAWS} redraws"));
    Ok(result)
}

/// Real eigenvectors of `op`, lifted through `basis` and normalized. Returns
/// whether two eigenvalues collide.
fn eigenvectors(op: &DMatrix<f64>, basis: &DMatrix<f64>) -> (DMatrix<f64>, bool, Vec<String>) {
    let r = op.nrows();
    let eigs = op.complex_eigenvalues();
    let scale = eigs.iter().fold(0.0_f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    let mut notes = Vec::new();
    let max_imag = eigs.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    if max_imag > 1e-8 * scale {
        notes.push(format!("complex eigenvalues (max imaginary part {max_imag:e}); real parts used"));
    }
    let mut values: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    let collided = values
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() <= JENNRICH_COLLISION_TOL * scale);
    if collided {
        notes.push("eigenvalue collision: ratios ⟨b_j,u⟩/⟨b_j,v⟩ coincide".into());
    }

    let mut a = DMatrix::zeros(basis.nrows(), r);
    for (j, &lambda) in values.iter().enumerate() {
        let shifted = op - DMatrix::identity(r, r) * lambda;
        let svd = svd_sorted(&shifted);
        let w = svd.v.column(r - 1).into_owned();
        let lifted = basis * w;
        let col = normalize(&lifted).unwrap_or_else(|| DVector::from_fn(basis.nrows(), |i, _| if i == 0 { 1.0 } else { 0.0 }));
        a.set_column(j, &col);
    }
    fix_column_signs(&mut a);
    (a, collided, notes)
}
