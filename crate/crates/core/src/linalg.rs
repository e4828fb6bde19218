//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// Returns `v / ‖v‖`, or `None` when the norm is zero or not finite.
pub fn normalize(v: &DVector<f64>) -> Option<DVector<f64>> {
    let norm = v.norm();
    if norm > 0.0 && norm.is_finite() {
        Some(v / norm)
    } else {
        None
    }
}

/// Index of the entry with the largest absolute value (first one on ties).
pub fn argmax_abs<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v.abs() > best_val {
            best_val = v.abs();
            best = i;
        }
    }
    best
}

/// Flip the sign of every column so that its largest-magnitude entry is positive.
pub fn fix_column_signs(a: &mut DMatrix<f64>) {
    for mut col in a.column_iter_mut() {
        let idx = argmax_abs(col.iter());
        if col[idx] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Divide every column by its Euclidean norm. Zero columns are left untouched.
pub fn normalize_columns(a: &mut DMatrix<f64>) {
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest absolute entry of `m - mᵀ`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing order.
/// Eigenvectors are the columns of the returned matrix, in the same order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Thin SVD with singular values sorted in nonincreasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns (`V`, not `Vᵀ`).
    pub v: DMatrix<f64>,
}

/// Thin SVD computed with faer; nalgebra's bidiagonal SVD loses accuracy on
/// rank-deficient inputs such as exact low-rank flattenings.
pub fn svd_sorted(m: &DMatrix<f64>) -> SortedSvd {
    let (rows, cols) = m.shape();
    let n = rows.min(cols);
    let input = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let (u, s, v) = match input.thin_svd() {
        Ok(svd) => (
            DMatrix::from_fn(rows, n, |i, j| svd.U()[(i, j)]),
            (0..n).map(|i| svd.S()[i]).collect::<Vec<f64>>(),
            DMatrix::from_fn(cols, n, |i, j| svd.V()[(i, j)]),
        ),
        Err(_) => {
            let svd = SVD::new(m.clone(), true, true);
            (
                svd.u.expect("requested U"),
                svd.singular_values.iter().copied().collect(),
                svd.v_t.expect("requested Vᵀ").transpose(),
            )
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    SortedSvd {
        u: DMatrix::from_fn(rows, n, |r, c| u[(r, order[c])]),
        singular_values: order.iter().map(|&i| s[i]).collect(),
        v: DMatrix::from_fn(cols, n, |r, c| v[(r, order[c])]),
    }
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = svd_sorted(m).singular_values;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Moore–Penrose pseudo-inverse, discarding singular values below `rel_tol · σ₁`.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = svd_sorted(m);
    let cutoff = svd.singular_values.first().copied().unwrap_or(0.0) * rel_tol;
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += svd.v.column(j) * svd.u.column(j).transpose() / s;
        }
    }
    out
}

/// Largest deviation of a column norm from 1.
pub fn max_unit_column_deviation(a: &DMatrix<f64>) -> f64 {
    a.column_iter().fold(0.0_f64, |acc, c| acc.max((c.norm() - 1.0).abs()))
}

/// Orthonormal basis for the columns of `m` via thin QR.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_fix_makes_largest_entry_positive() {
        let mut a = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.9, 0.3, 0.2, -0.5]);
        fix_column_signs(&mut a);
        assert!(a[(1, 0)] > 0.0);
        assert!(a[(2, 1)] > 0.0);
        assert_eq!(a[(0, 0)], -0.1);
    }

    #[test]
    fn sorted_svd_reconstructs() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0]);
        let svd = svd_sorted(&m);
        assert!(svd.singular_values[0] >= svd.singular_values[1]);
        let s = DMatrix::from_diagonal(&DVector::from_vec(svd.singular_values.clone()));
        let back = &svd.u * s * svd.v.transpose();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_full_column_rank() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 1.0, 2.0, 0.0]);
        let pinv = pseudo_inverse(&a, 1e-14);
        let id = &pinv * &a;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn eigen_desc_order() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
