//! Component matching (Ascore), cross-seed stability and rank selection.

use nalgebra::DMatrix;

use crate::decompose::{fit_mcpca, FitConfig};
use crate::seed::derive_seed;
use crate::tensor::CovarianceTensor;
use crate::{McpcaError, Result};

/// Default stability threshold for rank selection.
pub const DEFAULT_THRESHOLD: f64 = 0.8;
/// Default number of seed pairs per candidate rank.
pub const DEFAULT_SEED_PAIRS: usize = 5;

/// Cosines closer than this are treated as tied during greedy matching.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `permutation[i]` is the recovered column matched to true column `i`.
    pub permutation: Vec<usize>,
    /// Sign applied to the matched recovered column to make the cosine positive.
    pub signs: Vec<f64>,
    pub per_pair_cosines: Vec<f64>,
    pub ascore: f64,
}

/// Greedy matching of recovered columns to true columns.
///
/// True columns are visited in order; each takes the remaining recovered
/// column with the largest absolute cosine (lowest index on ties within
/// `1e-12`). The score is the mean matched absolute cosine.
pub fn ascore(a_true: &DMatrix<f64>, a_rec: &DMatrix<f64>) -> Result<MatchResult> {
    if a_true.shape() != a_rec.shape() {
        return Err(McpcaError::DimensionMismatch(format!(
            "component matrices are {}×{} and {}×{}",
            a_true.nrows(),
            a_true.ncols(),
            a_rec.nrows(),
            a_rec.ncols()
        )));
    }
    let r = a_true.ncols();
    let true_norms: Vec<f64> = a_true.column_iter().map(|c| c.norm()).collect();
    let rec_norms: Vec<f64> = a_rec.column_iter().map(|c| c.norm()).collect();
    let cross = a_true.tr_mul(a_rec);
    let cosine = |i: usize, j: usize| {
        let d = true_norms[i] * rec_norms[j];
        if d > 0.0 {
            cross[(i, j)] / d
        } else {
            0.0
        }
    };

    let mut used = vec![false; r];
    let mut permutation = Vec::with_capacity(r);
    let mut signs = Vec::with_capacity(r);
    let mut per_pair_cosines = Vec::with_capacity(r);
    for i in 0..r {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..r).filter(|&j| !used[j]) {
            let c = cosine(i, j).abs();
            if best.is_none_or(|(_, bc)| c > bc + TIE_TOL) {
                best = Some((j, c));
            }
        }
        let (j, c) = best.expect("a column remains for every true column");
        used[j] = true;
        permutation.push(j);
        signs.push(if cosine(i, j) < 0.0 { -1.0 } else { 1.0 });
        per_pair_cosines.push(c.min(1.0));
    }
    let ascore = if r == 0 {
        1.0
    } else {
        per_pair_cosines.iter().sum::<f64>() / r as f64
    };
    Ok(MatchResult {
        permutation,
        signs,
        per_pair_cosines,
        ascore,
    })
}

/// Seed for run `run` (0 or 1) of pair `pair`.
pub fn pair_seed(master: u64, pair: usize, run: usize) -> u64 {
    derive_seed(master, pair as u64, run as u64)
}

/// Mean Ascore between two fits with different seeds, over `n_seed_pairs` pairs.
pub fn stability_score(t: &CovarianceTensor, r: usize, n_seed_pairs: usize, cfg: &FitConfig) -> Result<f64> {
    if n_seed_pairs == 0 {
        return Err(McpcaError::InvalidArgument("n_seed_pairs must be at least 1".into()));
    }
    let base = FitConfig {
        stability_check: false,
        ..cfg.clone()
    };
    let mut total = 0.0;
    for pair in 0..n_seed_pairs {
        let (first, _) = fit_mcpca(t, r, &base.with_seed(pair_seed(cfg.seed, pair, 0)))?;
        let (second, _) = fit_mcpca(t, r, &base.with_seed(pair_seed(cfg.seed, pair, 1)))?;
        total += ascore(&first.a, &second.a)?.ascore;
    }
    Ok(total / n_seed_pairs as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSelectionReport {
    pub candidates: Vec<usize>,
    /// Stability per candidate; candidates whose fits fail score 0.
    pub stability: Vec<f64>,
    /// Error message for candidates whose fits failed.
    pub failures: Vec<Option<String>>,
    pub chosen: Option<usize>,
    pub threshold: f64,
    pub n_seed_pairs: usize,
    /// Singular values of the flattening.
    pub scree: Vec<f64>,
}

/// Pick the largest candidate rank whose stability reaches `threshold`.
pub fn select_rank(
    t: &CovarianceTensor,
    candidates: &[usize],
    threshold: f64,
    n_seed_pairs: usize,
    cfg: &FitConfig,
) -> Result<RankSelectionReport> {
    if candidates.is_empty() {
        return Err(McpcaError::InvalidArgument("no candidate ranks given".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&r| r == 0 || r > t.p()) {
        return Err(McpcaError::InvalidArgument(format!(
            "candidate rank {bad} outside 1..={}",
            t.p()
        )));
    }
    if n_seed_pairs == 0 {
        return Err(McpcaError::InvalidArgument("n_seed_pairs must be at least 1".into()));
    }
    let mut stability = Vec::with_capacity(candidates.len());
    let mut failures = Vec::with_capacity(candidates.len());
    for &r in candidates {
        match stability_score(t, r, n_seed_pairs, cfg) {
            Ok(s) => {
                stability.push(s);
                failures.push(None);
            }
            Err(e) => {
                stability.push(0.0);
                failures.push(Some(e.to_string()));
            }
        }
    }
    let chosen = candidates
        .iter()
        .zip(&stability)
        .filter(|(_, &s)| s >= threshold)
        .map(|(&r, _)| r)
        .max();
    Ok(RankSelectionReport {
        candidates: candidates.to_vec(),
        stability,
        failures,
        chosen,
        threshold,
        n_seed_pairs,
        scree: t.flatten().singular_values().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{random_unit_vector, rng_from_seed};
    use proptest::prelude::*;

    fn unit_columns(p: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_columns(&(0..r).map(|_| random_unit_vector(p, &mut rng)).collect::<Vec<_>>())
    }

    #[test]
    fn identity_scores_one() {
        let a = unit_columns(6, 4, 1);
        let m = ascore(&a, &a).unwrap();
        assert!((m.ascore - 1.0).abs() < 1e-12);
        assert_eq!(m.permutation, vec![0, 1, 2, 3]);
    }

    #[test]
    fn permutation_and_sign() {
        let a_true = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let a_rec = DMatrix::from_column_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let m = ascore(&a_true, &a_rec).unwrap();
        assert_eq!(m.ascore, 1.0);
        assert_eq!(m.permutation, vec![1, 0]);
        assert_eq!(m.signs, vec![-1.0, 1.0]);
    }

    #[test]
    fn single_pair_cosine() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m = ascore(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), &DMatrix::from_column_slice(2, 1, &[h, h])).unwrap();
        assert!((m.ascore - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(ascore(&unit_columns(3, 2, 0), &unit_columns(3, 3, 0)).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a_true = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a_rec = DMatrix::from_column_slice(2, 1, &[h, h]);
        // two identical candidates
        let a_true2 = DMatrix::from_columns(&[a_true.column(0).into_owned(), DMatrix::<f64>::from_column_slice(2, 1, &[0.0, 1.0]).column(0).into_owned()]);
        let a_rec2 = DMatrix::from_columns(&[a_rec.column(0).into_owned(), a_rec.column(0).into_owned()]);
        let m = ascore(&a_true2, &a_rec2).unwrap();
        assert_eq!(m.permutation, vec![0, 1]);
    }

    proptest! {
        #[test]
        fn invariant_to_permutation_and_signs(seed in 0u64..1000, shift in 0usize..5, flips in proptest::collection::vec(any::<bool>(), 5)) {
            let a = unit_columns(7, 5, seed);
            let b = unit_columns(7, 5, seed + 1);
            let base = ascore(&a, &b).unwrap().ascore;
            let mut permuted = DMatrix::zeros(7, 5);
            for j in 0..5 {
                let src = (j + shift) % 5;
                let s = if flips[j] { -1.0 } else { 1.0 };
                permuted.set_column(j, &(b.column(src) * s));
            }
            let again = ascore(&a, &permuted).unwrap().ascore;
            // Greedy matching visits true columns in order, so reordering the
            // recovered side leaves the score unchanged.
            prop_assert!((base - again).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&again));
            prop_assert!((ascore(&b, &b).unwrap().ascore - 1.0).abs() < 1e-12);
        }
    }
}
