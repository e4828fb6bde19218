//! The MCPCA engine: subspace extraction, alternating power iteration with
//! deflation, and non-negative least squares for the context loadings.

mod fit;
mod nnls;
mod power;
mod subspace;

pub use fit::{
    fit_mcpca, reconstruction_error, FitConfig, FitReport, McpcaModel, ORDERING_RULE, SIGN_RULE,
    STABILITY_PAIR_THRESHOLD,
};
pub use nnls::{component_gram, nnls_gram, solve_nnls, MAX_GRAM_CONDITION, NNLS_TOL};
pub use power::{power_iterate, PowerResult};
pub use subspace::{extract_subspace, SubspaceTensor, RANK_TOL};
