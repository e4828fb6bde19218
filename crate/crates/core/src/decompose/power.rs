use nalgebra::DVector;

use super::SubspaceTensor;
use crate::linalg::normalize;
use crate::{McpcaError, Result};

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    /// `F_A(a, b)` at the returned point, in `[0, 1]`.
    pub objective: f64,
    /// Number of update sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// `F_A` at the start point followed by its value after every sweep.
    pub trace: Vec<f64>,
}

/// Alternating power iteration for the best rank-one element of the subspace.
///
/// One sweep is
///
/// ```text
/// c ← T_A(a, b, *) / ‖·‖
/// a ← T_A(*, b, c) / ‖·‖
/// b ← T_A(a, *, c) / ‖·‖
/// ```
///
/// Fixed points satisfy the first-order conditions of `max F_A(a, b)` on the
/// product of spheres. Each step maximizes the trilinear form `T_A(a, b, c)`
/// in one block, so `F_A` is nondecreasing. Stops when both
/// `1 − |⟨a_new, a_old⟩|` and `1 − |⟨b_new, b_old⟩|` drop below `tol`.
pub fn power_iterate(
    ts: &SubspaceTensor,
    a0: &DVector<f64>,
    b0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<PowerResult> {
    if !(tol > 0.0) {
        return Err(McpcaError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut a = normalize(a0).ok_or(McpcaError::DegenerateStart)?;
    let mut b = normalize(b0).ok_or(McpcaError::DegenerateStart)?;
    let mut c = ts.contract_pair(&a, &b)?;
    let mut objective = c.norm_squared();
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let c_unit = normalize(&c).ok_or(McpcaError::DegenerateStart)?;
        let w = ts.contract_mode3(&c_unit);
        let a_new = normalize(&(&w * &b)).ok_or(McpcaError::DegenerateStart)?;
        let b_new = normalize(&w.tr_mul(&a_new)).ok_or(McpcaError::DegenerateStart)?;
        iterations += 1;

        let gap_a = cosine_gap(&a_new, &a);
        let gap_b = cosine_gap(&b_new, &b);
        a = a_new;
        b = b_new;
        c = ts.contract_pair(&a, &b)?;
        objective = c.norm_squared();
        trace.push(objective);
        if gap_a < tol && gap_b < tol {
            converged = true;
            break;
        }
    }

    Ok(PowerResult {
        a,
        b,
        objective: objective.clamp(0.0, 1.0),
        iterations,
        converged,
        trace,
    })
}

/// `1 − |⟨x, y⟩|` for unit vectors, evaluated as `½‖x − s·y‖²` with
/// `s = sign⟨x, y⟩` so that gaps far below machine epsilon stay resolvable.
pub(crate) fn cosine_gap(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let s = if x.dot(y) < 0.0 { -1.0 } else { 1.0 };
    0.5 * x.iter().zip(y.iter()).map(|(u, v)| (u - s * v).powi(2)).sum::<f64>()
}
