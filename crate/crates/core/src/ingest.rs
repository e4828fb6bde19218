//! Loading per-context data, sample covariances and global PCA reduction.
//!
//! Two on-disk layouts are supported, both comma- or tab-delimited (detected
//! from the first line) with an optional header row:
//!
//! - **long table**: one file, one sample per row. The context id is the first
//!   column, or the column whose header is `context`. Contexts are ordered by
//!   first appearance.
//! - **per-context files**: a directory with one file per context; the context
//!   id is the file stem and contexts are ordered by file name.
//!
//! Missing or non-numeric cells are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::linalg::{fix_column_signs, sym_eigen_desc};
use crate::tensor::CovarianceTensor;
use crate::{McpcaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContextData {
    pub id: String,
    /// `n_i × p`, one sample per row.
    pub data: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextDataset {
    contexts: Vec<ContextData>,
    p: usize,
    variable_names: Option<Vec<String>>,
}

impl ContextDataset {
    pub fn new(contexts: Vec<ContextData>, variable_names: Option<Vec<String>>) -> Result<Self> {
        let first = contexts
            .first()
            .ok_or_else(|| McpcaError::EmptyInput("dataset has no contexts".into()))?;
        let p = first.data.ncols();
        if p == 0 {
            return Err(McpcaError::EmptyInput("dataset has no variables".into()));
        }
        for c in &contexts {
            if c.data.ncols() != p {
                return Err(McpcaError::DimensionMismatch(format!(
                    "context {} has {} variables, expected {p}",
                    c.id,
                    c.data.ncols()
                )));
            }
            if c.data.nrows() < 2 {
                return Err(McpcaError::TooFewSamples {
                    context: c.id.clone(),
                    samples: c.data.nrows(),
                });
            }
        }
        if let Some(names) = &variable_names {
            if names.len() != p {
                return Err(McpcaError::DimensionMismatch(format!(
                    "{} variable names for {p} variables",
                    names.len()
                )));
            }
        }
        Ok(Self {
            contexts,
            p,
            variable_names,
        })
    }

    pub fn contexts(&self) -> &[ContextData] {
        &self.contexts
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.contexts.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.contexts.iter().map(|c| c.data.nrows()).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.contexts.iter().map(|c| c.id.clone()).collect()
    }

    pub fn variable_names(&self) -> Option<&[String]> {
        self.variable_names.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    LongTable,
    PerContextFiles,
}

pub fn load_contexts(path: &Path, format: InputFormat) -> Result<ContextDataset> {
    match format {
        InputFormat::LongTable => load_long_table(path),
        InputFormat::PerContextFiles => load_directory(path),
    }
}

struct Table {
    header: Option<Vec<String>>,
    /// `(line number, cells)` for every data row.
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| McpcaError::Io {
        path: display.clone(),
        source,
    })?;
    let first_line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = if first_line.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| McpcaError::Csv {
            path: display.clone(),
            source,
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        rows.push((line, record.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(rows)
}

fn parse_cell(path: &Path, line: usize, column: usize, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(McpcaError::NonNumeric {
            path: path.display().to_string(),
            line,
            column: column + 1,
            value: cell.to_string(),
        }),
    }
}

fn is_number(cell: &str) -> bool {
    cell.parse::<f64>().is_ok_and(|v| v.is_finite())
}

fn split_header(mut rows: Vec<(usize, Vec<String>)>, numeric_from: usize) -> Table {
    let has_header = rows
        .first()
        .is_some_and(|(_, cells)| cells.iter().skip(numeric_from).any(|c| !is_number(c)));
    let header = if has_header { Some(rows.remove(0).1) } else { None };
    Table { header, rows }
}

fn check_width(path: &Path, rows: &[(usize, Vec<String>)], expected: usize) -> Result<()> {
    for (line, cells) in rows {
        if cells.len() != expected {
            return Err(McpcaError::RaggedRow {
                path: path.display().to_string(),
                line: *line,
                expected,
                found: cells.len(),
            });
        }
    }
    Ok(())
}

/// Read a numeric matrix (one row per line) with an optional header row.
pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let table = split_header(read_table(path)?, 0);
    let width = match (&table.header, table.rows.first()) {
        (Some(h), _) => h.len(),
        (None, Some((_, cells))) => cells.len(),
        (None, None) => return Err(McpcaError::EmptyInput(path.display().to_string())),
    };
    check_width(path, &table.rows, width)?;
    if table.rows.is_empty() {
        return Err(McpcaError::EmptyInput(format!("{}: no data rows", path.display())));
    }
    let mut values = Vec::with_capacity(table.rows.len() * width);
    for (line, cells) in &table.rows {
        for (c, cell) in cells.iter().enumerate() {
            values.push(parse_cell(path, *line, c, cell)?);
        }
    }
    Ok((DMatrix::from_row_slice(table.rows.len(), width, &values), table.header))
}

fn load_long_table(path: &Path) -> Result<ContextDataset> {
    let rows = read_table(path)?;
    let first = rows
        .first()
        .ok_or_else(|| McpcaError::EmptyInput(path.display().to_string()))?;
    let named = first.1.iter().position(|c| c.eq_ignore_ascii_case("context"));
    let table = match named {
        Some(_) => {
            let mut rows = rows;
            let header = rows.remove(0).1;
            Table {
                header: Some(header),
                rows,
            }
        }
        None => split_header(rows, 1),
    };
    let id_col = named.unwrap_or(0);
    let width = match (&table.header, table.rows.first()) {
        (Some(h), _) => h.len(),
        (None, Some((_, cells))) => cells.len(),
        (None, None) => return Err(McpcaError::EmptyInput(path.display().to_string())),
    };
    if width < 2 {
        return Err(McpcaError::EmptyInput(format!(
            "{}: long table needs a context column and at least one variable",
            path.display()
        )));
    }
    check_width(path, &table.rows, width)?;
    if table.rows.is_empty() {
        return Err(McpcaError::EmptyInput(format!("{}: no data rows", path.display())));
    }

    let mut ids: Vec<String> = Vec::new();
    let mut buffers: Vec<Vec<f64>> = Vec::new();
    for (line, cells) in &table.rows {
        let id = &cells[id_col];
        let slot = match ids.iter().position(|x| x == id) {
            Some(i) => i,
            None => {
                ids.push(id.clone());
                buffers.push(Vec::new());
                ids.len() - 1
            }
        };
        for (c, cell) in cells.iter().enumerate() {
            if c != id_col {
                buffers[slot].push(parse_cell(path, *line, c, cell)?);
            }
        }
    }
    let p = width - 1;
    let contexts = ids
        .into_iter()
        .zip(buffers)
        .map(|(id, values)| ContextData {
            id,
            data: DMatrix::from_row_slice(values.len() / p, p, &values),
        })
        .collect();
    let names = table.header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(c, _)| *c != id_col)
            .map(|(_, n)| n)
            .collect()
    });
    ContextDataset::new(contexts, names)
}

fn load_directory(path: &Path) -> Result<ContextDataset> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|source| McpcaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut files = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| McpcaError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let file = entry.path();
            let hidden = file
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'));
            if file.is_file() && !hidden {
                files.push(file);
            }
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(McpcaError::EmptyInput(format!("{}: no context files", path.display())));
    }
    let mut contexts = Vec::with_capacity(files.len());
    let mut names = None;
    for file in &files {
        let (data, header) = read_matrix(file)?;
        if names.is_none() {
            names = header;
        }
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        contexts.push(ContextData { id, data });
    }
    ContextDataset::new(contexts, names)
}

/// Unbiased sample covariance of the rows of `x` after centering each column.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(McpcaError::TooFewSamples {
            context: "<matrix>".into(),
            samples: n,
        });
    }
    let centered = center_columns(x);
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    Ok((&cov + cov.transpose()) * 0.5)
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut out = x.clone();
    for (mut col, m) in out.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    out
}

/// Global PCA fitted on the pooled samples of all contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// `n_components × p`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Pooled mean subtracted before projecting.
    pub mean: DVector<f64>,
    /// Pooled covariance eigenvalues of the retained components.
    pub eigenvalues: Vec<f64>,
}

impl PcaProjection {
    /// `(X − mean) · Pᵀ`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(McpcaError::DimensionMismatch(format!(
                "data has {} columns, projection expects {}",
                x.ncols(),
                self.mean.len()
            )));
        }
        let mut centered = x.clone();
        for (mut col, m) in centered.column_iter_mut().zip(self.mean.iter()) {
            col.add_scalar_mut(-m);
        }
        Ok(centered * self.components.transpose())
    }
}

/// Project every context onto the top `n_components` eigenvectors of the
/// pooled covariance. Scores are not whitened.
pub fn global_pca_reduce(d: &ContextDataset, n_components: usize) -> Result<(ContextDataset, PcaProjection)> {
    let total: usize = d.sizes().iter().sum();
    if n_components == 0 || n_components > d.p().min(total) {
        return Err(McpcaError::InvalidArgument(format!(
            "n_components must be in 1..={}, got {n_components}",
            d.p().min(total)
        )));
    }
    let mut pooled = DMatrix::zeros(total, d.p());
    let mut row = 0;
    for c in d.contexts() {
        pooled.view_mut((row, 0), c.data.shape()).copy_from(&c.data);
        row += c.data.nrows();
    }
    let mean = column_means(&pooled);
    let cov = sample_covariance(&pooled)?;
    let (values, vectors) = sym_eigen_desc(&cov);
    let mut top = vectors.columns(0, n_components).into_owned();
    fix_column_signs(&mut top);
    let projection = PcaProjection {
        components: top.transpose(),
        mean,
        eigenvalues: values[..n_components].to_vec(),
    };
    let contexts = d
        .contexts()
        .iter()
        .map(|c| {
            Ok(ContextData {
                id: c.id.clone(),
                data: projection.transform(&c.data)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names = (1..=n_components).map(|i| format!("PC{i}")).collect();
    Ok((ContextDataset::new(contexts, Some(names))?, projection))
}

/// Stack the per-context sample covariances, keeping context order and ids.
pub fn build_tensor(d: &ContextDataset) -> Result<CovarianceTensor> {
    let slices = d
        .contexts()
        .iter()
        .map(|c| {
            sample_covariance(&c.data).map_err(|e| match e {
                McpcaError::TooFewSamples { samples, .. } => McpcaError::TooFewSamples {
                    context: c.id.clone(),
                    samples,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CovarianceTensor::stack(slices)?.with_context_ids(d.ids())
}
