use nalgebra::{DMatrix, DVector};

use crate::linalg::{condition_number, max_unit_column_deviation};
use crate::tensor::CovarianceTensor;
use crate::{McpcaError, Result};

/// Dual-feasibility tolerance, relative to the largest entry of the linear term.
pub const NNLS_TOL: f64 = 1e-10;
/// Largest accepted condition number of the component Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Non-negative loadings for fixed components.
///
/// Row `i` of the result minimizes `‖S_i − Σ_j b_ij a_j a_jᵀ‖²_F` over `b_i ≥ 0`.
/// With `G_jl = (a_jᵀ a_l)²` and `h_j = a_jᵀ S_i a_j` this is the quadratic
/// program `min ½ bᵀ G b − hᵀ b, b ≥ 0`, solved per context by an active-set
/// iteration in the style of Lawson and Hanson.
pub fn solve_nnls(t: &CovarianceTensor, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != t.p() {
        return Err(McpcaError::DimensionMismatch(format!(
            "components have {} rows, tensor has p = {}",
            a.nrows(),
            t.p()
        )));
    }
    let r = a.ncols();
    if r == 0 {
        return Ok(DMatrix::zeros(t.k(), 0));
    }
    let dev = max_unit_column_deviation(a);
    if dev > 1e-8 {
        return Err(McpcaError::InvalidArgument(format!(
            "components must have unit norm (deviation {dev:e})"
        )));
    }
    let gram = component_gram(a);
    let condition = condition_number(&gram);
    if !(condition <= MAX_GRAM_CONDITION) {
        let (first, second) = most_parallel_pair(a);
        return Err(McpcaError::GramSingular {
            first,
            second,
            condition,
        });
    }

    let mut b = DMatrix::zeros(t.k(), r);
    for (i, s) in t.slices().iter().enumerate() {
        let sa = s * a;
        let h = DVector::from_fn(r, |j, _| a.column(j).dot(&sa.column(j)));
        let x = nnls_gram(&gram, &h);
        b.row_mut(i).copy_from(&x.transpose());
    }
    Ok(b)
}

/// `G_jl = ⟨a_j a_jᵀ, a_l a_lᵀ⟩_F = (a_jᵀ a_l)²`.
pub fn component_gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.tr_mul(a).map(|x| x * x)
}

fn most_parallel_pair(a: &DMatrix<f64>) -> (usize, usize) {
    let cross = a.tr_mul(a);
    let mut best = (0, 1.min(a.ncols().saturating_sub(1)));
    let mut best_val = f64::NEG_INFINITY;
    for j in 0..a.ncols() {
        for l in (j + 1)..a.ncols() {
            if cross[(j, l)].abs() > best_val {
                best_val = cross[(j, l)].abs();
                best = (j, l);
            }
        }
    }
    best
}

/// Solve `min ½ xᵀ G x − hᵀ x` subject to `x ≥ 0` for symmetric positive definite `G`.
///
/// Entries of the returned vector are exactly `≥ 0`.
pub fn nnls_gram(gram: &DMatrix<f64>, h: &DVector<f64>) -> DVector<f64> {
    let n = h.len();
    let mut x = DVector::zeros(n);
    let scale = h.amax();
    if !(scale > 0.0) {
        return x;
    }
    let tol = NNLS_TOL * scale;
    let mut passive = vec![false; n];
    // Variables that made no progress on entering, excluded until x changes.
    let mut blocked = vec![false; n];
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = h - gram * &x;
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(enter) = candidate else { break };
        passive[enter] = true;
        let before = x.clone();

        for _ in 0..=n {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = solve_passive(gram, h, &idx);
            if z.iter().all(|&zj| zj > 0.0) {
                x.fill(0.0);
                for (&j, &zj) in idx.iter().zip(z.iter()) {
                    x[j] = zj;
                }
                break;
            }
            // Step from x toward z until the first passive variable hits zero.
            let mut alpha = 1.0_f64;
            let mut hit = None;
            for (&j, &zj) in idx.iter().zip(z.iter()) {
                if zj <= 0.0 {
                    let ratio = x[j] / (x[j] - zj);
                    if hit.is_none() || ratio < alpha {
                        alpha = ratio;
                        hit = Some(j);
                    }
                }
            }
            for (&j, &zj) in idx.iter().zip(z.iter()) {
                x[j] += alpha * (zj - x[j]);
            }
            if let Some(j) = hit {
                x[j] = 0.0;
            }
            for &j in &idx {
                if x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        if x == before {
            // Entering variable could not move off zero; skip it until x changes.
            blocked[enter] = true;
            passive[enter] = false;
        } else {
            blocked.fill(false);
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

fn solve_passive(gram: &DMatrix<f64>, h: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |r, c| gram[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(m, |r, _| h[idx[r]]);
    match sub.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => sub.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(m)),
    }
}
