//! Multi-context principal component analysis.
//!
//! Given covariance matrices `S_1, …, S_k` of the same `p` variables measured in
//! `k` contexts, MCPCA finds unit-norm directions `a_1, …, a_r` shared by all
//! contexts and non-negative loadings `b_ij` such that
//!
//! ```text
//! S_i ≈ A · diag(B[i, :]) · Aᵀ,   i.e.   T ≈ Σ_j a_j ⊗ a_j ⊗ b_j
//! ```
//!
//! where `T` is the `p × p × k` stack of the covariances. The fit extracts the
//! top-`r` row space of the flattening `[S_1 ⋯ S_k]`, finds rank-one elements
//! `a ⊗ b` of that space with an alternating power iteration plus deflation,
//! and finally solves a non-negative least-squares problem for the loadings.
//!
//! Modules:
//! - [`tensor`]: covariance tensor, flattening and contractions.
//! - [`ingest`]: delimited-text loading, sample covariances, global PCA.
//! - [`decompose`]: subspace extraction, power iteration, NNLS and the fit.
//! - [`model_select`]: Ascore matching, seed stability, rank selection.
//! - [`diagnostics`]: projection matrix, scores, off-diagonality and KL loss.
//! - [`baselines`]: PCA on pooled covariances and Jennrich's algorithm.
//! - [`synth`]: planted-model generators and the benchmark harness.

pub mod baselines;
pub mod decompose;
pub mod diagnostics;
mod error;
pub mod ingest;
pub mod linalg;
pub mod model_select;
pub mod seed;
pub mod synth;
pub mod tensor;

pub use error::{McpcaError, Result};

pub use baselines::{jennrich, pca_stack, BaselineMethod, BaselineResult};
pub use decompose::{
    extract_subspace, fit_mcpca, power_iterate, reconstruction_error, solve_nnls, FitConfig,
    FitReport, McpcaModel, PowerResult, SubspaceTensor,
};
pub use diagnostics::{
    kl_loss, model_dimension, projection_matrix, score_samples, uncorrelatedness_score,
    variance_explained, Diagnostics, VarianceExplained,
};
pub use ingest::{
    build_tensor, global_pca_reduce, load_contexts, sample_covariance, ContextData,
    ContextDataset, InputFormat, PcaProjection,
};
pub use model_select::{ascore, select_rank, stability_score, MatchResult, RankSelectionReport};
pub use synth::{
    generate_planted, run_accuracy_trials, run_sample_sweep, sample_dataset, AccuracyConfig,
    Method, PlantedModel, SweepConfig, TrialRecord,
};
pub use tensor::{CovarianceTensor, Flattening, RankOneTerm};
