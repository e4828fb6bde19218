//! Versioned JSON model files.
//!
//! Matrices are stored row-major as arrays of rows. Floats are written in the
//! shortest form that parses back to the same bits, so load → save reproduces
//! a file byte for byte.

use std::fs;
use std::path::Path;

use mcpca::{McpcaModel, PcaProjection};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const CENTERING: &str = "per-context";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub p: usize,
    pub k: usize,
    pub r: usize,
    pub context_ids: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub ordering_rule: String,
    pub sign_rule: String,
    pub seed: u64,
    pub converged: Vec<bool>,
    pub preprocessing: Preprocessing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub centering: String,
    pub pca_components: Option<usize>,
    pub projection: Option<Projection>,
}

/// Global PCA applied to raw data before fitting: `(x − mean) · componentsᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projection {
    /// `pca_components × p_raw`, row-major.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> std::result::Result<DMatrix<f64>, String> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{name} must be {nrows}×{ncols}"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn new(model: &McpcaModel, projection: Option<&PcaProjection>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            p: model.p(),
            k: model.k(),
            r: model.rank(),
            context_ids: model.context_ids.clone(),
            a: rows(&model.a),
            b: rows(&model.b),
            ordering_rule: model.ordering_rule.clone(),
            sign_rule: model.sign_rule.clone(),
            seed: model.seed,
            converged: model.converged.clone(),
            preprocessing: Preprocessing {
                centering: CENTERING.to_string(),
                pca_components: projection.map(|p| p.components.nrows()),
                projection: projection.map(|p| Projection {
                    components: rows(&p.components),
                    mean: p.mean.iter().copied().collect(),
                    eigenvalues: p.eigenvalues.clone(),
                }),
            },
        }
    }

    /// The model, checked against the shape fields and the model invariants.
    pub fn model(&self) -> std::result::Result<McpcaModel, String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        let model = McpcaModel {
            a: matrix("A", &self.a, self.p, self.r)?,
            b: matrix("B", &self.b, self.k, self.r)?,
            context_ids: self.context_ids.clone(),
            ordering_rule: self.ordering_rule.clone(),
            sign_rule: self.sign_rule.clone(),
            seed: self.seed,
            converged: self.converged.clone(),
        };
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }

    pub fn projection(&self) -> std::result::Result<Option<PcaProjection>, String> {
        let Some(proj) = &self.preprocessing.projection else {
            return Ok(None);
        };
        let raw = proj.mean.len();
        let components = matrix("preprocessing.projection.components", &proj.components, self.p, raw)?;
        if self.preprocessing.pca_components != Some(self.p) {
            return Err("pca_components must equal p when a projection is stored".into());
        }
        Ok(Some(PcaProjection {
            components,
            mean: DVector::from_vec(proj.mean.clone()),
            eigenvalues: proj.eigenvalues.clone(),
        }))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("model files serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        file.model()?;
        file.projection()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|message| CliError::ModelFile {
            path: path.display().to_string(),
            message,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }
}
