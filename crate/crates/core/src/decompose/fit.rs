use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{extract_subspace, power_iterate, solve_nnls, PowerResult};
use crate::linalg::{argmax_abs, fix_column_signs, max_unit_column_deviation};
use crate::model_select::ascore;
use crate::seed::{derive_seed, random_unit_vector, rng_from_seed};
use crate::tensor::CovarianceTensor;
use crate::{McpcaError, Result};

pub const ORDERING_RULE: &str = "descending-loading-sum";
pub const SIGN_RULE: &str = "max-abs-entry-positive";

/// Per-pair cosine below which the two-seed check marks a component as unstable.
pub const STABILITY_PAIR_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub seed: u64,
    pub restarts_per_component: usize,
    /// Threshold on `1 − |cos|` between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Refit with a second seed and flag components that do not reappear.
    pub stability_check: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts_per_component: 10,
            tol: 1e-24,
            max_iter: 5000,
            stability_check: false,
        }
    }
}

impl FitConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Shared components `A` (`p × r`, unit columns) and loadings `B` (`k × r`, `≥ 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct McpcaModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub context_ids: Vec<String>,
    pub ordering_rule: String,
    pub sign_rule: String,
    pub seed: u64,
    pub converged: Vec<bool>,
}

impl McpcaModel {
    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    /// Check the model invariants: unit columns, non-negative loadings,
    /// nonincreasing loading sums and the sign convention.
    pub fn validate(&self) -> Result<()> {
        let (p, r) = self.a.shape();
        if self.b.ncols() != r || self.context_ids.len() != self.b.nrows() || self.converged.len() != r {
            return Err(McpcaError::DimensionMismatch(format!(
                "inconsistent model shapes: A {p}×{r}, B {}×{}, {} context ids, {} convergence flags",
                self.b.nrows(),
                self.b.ncols(),
                self.context_ids.len(),
                self.converged.len()
            )));
        }
        let dev = max_unit_column_deviation(&self.a);
        if dev > 1e-10 {
            return Err(McpcaError::InvalidArgument(format!(
                "component columns must have unit norm (deviation {dev:e})"
            )));
        }
        if self.b.iter().any(|&x| !(x >= 0.0)) {
            return Err(McpcaError::InvalidArgument("loadings must be non-negative".into()));
        }
        let sums = column_sums(&self.b);
        if sums.windows(2).any(|w| w[1] > w[0]) {
            return Err(McpcaError::InvalidArgument(
                "components must be ordered by nonincreasing loading sums".into(),
            ));
        }
        for (j, col) in self.a.column_iter().enumerate() {
            if col[argmax_abs(col.iter())] < 0.0 {
                return Err(McpcaError::InvalidArgument(format!(
                    "component {j} violates the sign convention"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// `‖T − Σ_j a_j ⊗ a_j ⊗ b_j‖_F`.
    pub reconstruction_error: f64,
    pub per_context_error: Vec<f64>,
    /// `F_A` along the best power run of each component, in discovery order.
    pub objective_trace: Vec<Vec<f64>>,
    pub best_objective: Vec<f64>,
    pub iterations: Vec<usize>,
    pub restarts_used: Vec<usize>,
    pub degenerate_restarts: Vec<usize>,
    pub elapsed_seconds: f64,
    /// Set when the two-seed check found components that are not reproduced.
    pub non_identifiable_suspect: bool,
    /// Final-order indices of the components the two-seed check could not match.
    pub suspect_components: Vec<usize>,
    /// Ascore between this fit and the second-seed fit, when the check ran.
    pub stability_ascore: Option<f64>,
}

/// Rank-`r` MCPCA fit.
///
/// 1. Extract the top-`r` subspace of the flattening once.
/// 2. For each component, run [`power_iterate`] from `restarts_per_component`
///    random starts (seeded from `(seed, component, restart)`), keep the best
///    objective (ties go to the lowest restart index), then deflate the
///    subspace by the found rank-one element.
/// 3. Recompute all loadings with [`solve_nnls`] against the original tensor.
/// 4. Fix signs and order columns by nonincreasing loading sums.
pub fn fit_mcpca(t: &CovarianceTensor, r: usize, cfg: &FitConfig) -> Result<(McpcaModel, FitReport)> {
    let start = Instant::now();
    if r == 0 || r > t.p() {
        return Err(McpcaError::InvalidArgument(format!(
            "rank must satisfy 1 ≤ r ≤ p = {}, got {r}",
            t.p()
        )));
    }
    if cfg.restarts_per_component == 0 {
        return Err(McpcaError::InvalidArgument("restarts_per_component must be at least 1".into()));
    }
    if !(cfg.tol > 0.0) {
        return Err(McpcaError::InvalidArgument(format!("tolerance must be positive, got {}", cfg.tol)));
    }

    let mut subspace = extract_subspace(&t.flatten(), r)?;
    let mut found: Vec<PowerResult> = Vec::with_capacity(r);
    let mut restarts_used = Vec::with_capacity(r);
    let mut degenerate_restarts = Vec::with_capacity(r);

    for j in 0..r {
        let mut best: Option<PowerResult> = None;
        let mut degenerate = 0;
        for q in 0..cfg.restarts_per_component {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, j as u64, q as u64));
            let a0 = random_unit_vector(t.p(), &mut rng);
            let b0 = random_unit_vector(t.k(), &mut rng);
            match power_iterate(&subspace, &a0, &b0, cfg.tol, cfg.max_iter) {
                Ok(res) => {
                    if best.as_ref().is_none_or(|b| res.objective > b.objective) {
                        best = Some(res);
                    }
                }
                Err(McpcaError::DegenerateStart) => degenerate += 1,
                Err(e) => return Err(e),
            }
        }
        let best = best.ok_or(McpcaError::AllRestartsDegenerate {
            component: j,
            restarts: cfg.restarts_per_component,
        })?;
        if j + 1 < r {
            subspace = subspace
                .deflate(&best.a, &best.b)
                .map_err(|_| McpcaError::DeflationFailed { component: j })?;
        }
        restarts_used.push(cfg.restarts_per_component);
        degenerate_restarts.push(degenerate);
        found.push(best);
    }

    let a_raw = DMatrix::from_columns(&found.iter().map(|f| f.a.clone()).collect::<Vec<DVector<f64>>>());
    let b_raw = solve_nnls(t, &a_raw)?;

    let order = component_order(&a_raw, &b_raw);
    let mut a = DMatrix::from_fn(t.p(), r, |i, c| a_raw[(i, order[c])]);
    let b = DMatrix::from_fn(t.k(), r, |i, c| b_raw[(i, order[c])]);
    fix_column_signs(&mut a);

    let model = McpcaModel {
        a,
        b,
        context_ids: t.context_ids().to_vec(),
        ordering_rule: ORDERING_RULE.to_string(),
        sign_rule: SIGN_RULE.to_string(),
        seed: cfg.seed,
        converged: order.iter().map(|&j| found[j].converged).collect(),
    };
    let (reconstruction_error, per_context_error) = reconstruction_error(t, &model)?;

    let mut report = FitReport {
        reconstruction_error,
        per_context_error,
        objective_trace: found.iter().map(|f| f.trace.clone()).collect(),
        best_objective: found.iter().map(|f| f.objective).collect(),
        iterations: found.iter().map(|f| f.iterations).collect(),
        restarts_used,
        degenerate_restarts,
        elapsed_seconds: 0.0,
        non_identifiable_suspect: false,
        suspect_components: Vec::new(),
        stability_ascore: None,
    };

    if cfg.stability_check {
        let second_cfg = FitConfig {
            seed: derive_seed(cfg.seed, u64::MAX, 1),
            stability_check: false,
            ..cfg.clone()
        };
        let (other, _) = fit_mcpca(t, r, &second_cfg)?;
        let matched = ascore(&model.a, &other.a)?;
        report.suspect_components = matched
            .per_pair_cosines
            .iter()
            .enumerate()
            .filter(|(_, &c)| c < STABILITY_PAIR_THRESHOLD)
            .map(|(j, _)| j)
            .collect();
        report.non_identifiable_suspect = !report.suspect_components.is_empty();
        report.stability_ascore = Some(matched.ascore);
    }

    report.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Column order: nonincreasing loading sum, then smaller row index of the
/// largest-magnitude component entry, then original position.
fn component_order(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<usize> {
    let sums = column_sums(b);
    let lead: Vec<usize> = a.column_iter().map(|c| argmax_abs(c.iter())).collect();
    let mut order: Vec<usize> = (0..a.ncols()).collect();
    order.sort_by(|&i, &j| {
        sums[j]
            .total_cmp(&sums[i])
            .then(lead[i].cmp(&lead[j]))
            .then(i.cmp(&j))
    });
    order
}

fn column_sums(b: &DMatrix<f64>) -> Vec<f64> {
    b.column_iter().map(|c| c.sum()).collect()
}

/// Per-context residuals `‖S_i − A·diag(B[i,:])·Aᵀ‖_F` and their root sum of squares.
pub fn reconstruction_error(t: &CovarianceTensor, m: &McpcaModel) -> Result<(f64, Vec<f64>)> {
    if m.a.nrows() != t.p() || m.b.nrows() != t.k() || m.a.ncols() != m.b.ncols() {
        return Err(McpcaError::DimensionMismatch(format!(
            "model is {}×{} / {}×{}, tensor is p = {}, k = {}",
            m.a.nrows(),
            m.a.ncols(),
            m.b.nrows(),
            m.b.ncols(),
            t.p(),
            t.k()
        )));
    }
    let per_context: Vec<f64> = t
        .slices()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut scaled = m.a.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= m.b[(i, j)];
            }
            (s - scaled * m.a.transpose()).norm()
        })
        .collect();
    let total = per_context.iter().map(|e| e * e).sum::<f64>().sqrt();
    Ok((total, per_context))
}
