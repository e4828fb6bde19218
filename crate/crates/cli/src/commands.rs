use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcpca::decompose::FitReport;
use mcpca::ingest::{center_columns, read_matrix};
use mcpca::model_select::{DEFAULT_SEED_PAIRS, DEFAULT_THRESHOLD};
use mcpca::synth::{run_accuracy_trial_range, write_records, DEFAULT_SWEEP_GRID};
use mcpca::{
    build_tensor, fit_mcpca, global_pca_reduce, load_contexts, model_dimension, run_sample_sweep, score_samples,
    select_rank, AccuracyConfig, ContextData, ContextDataset, CovarianceTensor, Diagnostics, FitConfig, InputFormat,
    McpcaError, Method, PcaProjection, SweepConfig, TrialRecord,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::model_file::ModelFile;
use crate::table::{float, write_text, Table};

#[derive(Debug, Parser)]
#[command(name = "mcpca", version, about = "Multi-context principal component analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit shared components and per-context loadings.
    Fit(FitArgs),
    /// Pick a rank by cross-seed stability.
    SelectRank(SelectRankArgs),
    /// Project samples onto the components of a fitted model.
    Score(ScoreArgs),
    /// Per-context diagnostics of a fitted model.
    Diag(DiagArgs),
    /// Synthetic accuracy and sample-size benchmarks.
    Bench(BenchArgs),
}

impl Command {
    pub fn run(&self) -> Result<()> {
        match self {
            Command::Fit(args) => cmd_fit(args),
            Command::SelectRank(args) => cmd_select_rank(args),
            Command::Score(args) => cmd_score(args),
            Command::Diag(args) => cmd_diag(args),
            Command::Bench(args) => cmd_bench(args),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// One file; context id in the first column or a column named `context`.
    Long,
    /// A directory with one file per context.
    Dir,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Long-table file or directory of per-context files.
    #[arg(long)]
    pub input: PathBuf,
    /// Input layout; defaults to `dir` for directories and `long` otherwise.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl InputArgs {
    fn load(&self) -> Result<ContextDataset> {
        let format = match self.format {
            Some(FormatArg::Long) => InputFormat::LongTable,
            Some(FormatArg::Dir) => InputFormat::PerContextFiles,
            None if self.input.is_dir() => InputFormat::PerContextFiles,
            None => InputFormat::LongTable,
        };
        Ok(load_contexts(&self.input, format)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random starts per component.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    /// Convergence threshold on 1 − |cos| between successive iterates.
    #[arg(long, default_value_t = 1e-24)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            restarts_per_component: self.restarts as usize,
            tol: self.tol,
            max_iter: self.max_iter,
            stability_check: false,
        }
    }
}

/// Load the contexts, optionally reduce them by global PCA, and build the tensor.
fn prepare(input: &InputArgs, pca_components: Option<usize>) -> Result<(CovarianceTensor, Option<PcaProjection>)> {
    let data = input.load()?;
    match pca_components {
        Some(n) => {
            let (reduced, projection) = global_pca_reduce(&data, n)?;
            Ok((build_tensor(&reduced)?, Some(projection)))
        }
        None => Ok((build_tensor(&data)?, None)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_text(path, &text)
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Number of components, 1 ≤ r ≤ p.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rank: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Reduce the data to this many global principal components first.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub pca_components: Option<u64>,
    /// Refit with a second seed and flag components that are not reproduced.
    #[arg(long)]
    pub stability_check: bool,
    /// Model file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Fit report to write; defaults to the output path with extension `.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FitReportFile<'a> {
    reconstruction_error: f64,
    per_context_error: Vec<ContextValue<'a>>,
    model_dimension: usize,
    best_objective: &'a [f64],
    iterations: &'a [usize],
    restarts_used: &'a [usize],
    degenerate_restarts: &'a [usize],
    converged: &'a [bool],
    non_identifiable_suspect: bool,
    suspect_components: &'a [usize],
    stability_ascore: Option<f64>,
    elapsed_seconds: f64,
    objective_trace: &'a [Vec<f64>],
}

#[derive(Debug, Serialize)]
struct ContextValue<'a> {
    context: &'a str,
    value: f64,
}

/// `model.json` → `model.report.json`.
fn default_report_path(output: &Path) -> PathBuf {
    output.with_extension("report.json")
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let (t, projection) = prepare(&args.input, args.pca_components.map(|n| n as usize))?;
    let cfg = FitConfig {
        stability_check: args.stability_check,
        ..args.solver.config()
    };
    let (model, report): (_, FitReport) = fit_mcpca(&t, args.rank as usize, &cfg)?;
    ModelFile::new(&model, projection.as_ref()).save(&args.output)?;

    let report_file = FitReportFile {
        reconstruction_error: report.reconstruction_error,
        per_context_error: model
            .context_ids
            .iter()
            .zip(&report.per_context_error)
            .map(|(c, &value)| ContextValue { context: c, value })
            .collect(),
        model_dimension: model_dimension(model.p(), model.k(), model.rank())?,
        best_objective: &report.best_objective,
        iterations: &report.iterations,
        restarts_used: &report.restarts_used,
        degenerate_restarts: &report.degenerate_restarts,
        converged: &model.converged,
        non_identifiable_suspect: report.non_identifiable_suspect,
        suspect_components: &report.suspect_components,
        stability_ascore: report.stability_ascore,
        elapsed_seconds: report.elapsed_seconds,
        objective_trace: &report.objective_trace,
    };
    let report_path = args.report.clone().unwrap_or_else(|| default_report_path(&args.output));
    write_json(&report_path, &report_file)?;
    if report.non_identifiable_suspect {
        eprintln!(
            "warning: components {:?} were not reproduced by a second seed; loadings may be collinear",
            report.suspect_components
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SelectRankArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Candidate ranks, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub candidates: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SEED_PAIRS, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub n_seed_pairs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub pca_components: Option<u64>,
    /// Report file to write (JSON).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Serialize)]
struct RankReportFile<'a> {
    candidates: &'a [usize],
    stability: &'a [f64],
    failures: &'a [Option<String>],
    chosen: Option<usize>,
    threshold: f64,
    n_seed_pairs: usize,
    seed: u64,
    scree: &'a [f64],
}

pub fn cmd_select_rank(args: &SelectRankArgs) -> Result<()> {
    if args.candidates.is_empty() {
        return Err(CliError::Usage("at least one candidate rank is required".into()));
    }
    let (t, _) = prepare(&args.input, args.pca_components.map(|n| n as usize))?;
    let report = select_rank(&t, &args.candidates, args.threshold, args.n_seed_pairs, &args.solver.config())?;
    write_json(
        &args.output,
        &RankReportFile {
            candidates: &report.candidates,
            stability: &report.stability,
            failures: &report.failures,
            chosen: report.chosen,
            threshold: report.threshold,
            n_seed_pairs: report.n_seed_pairs,
            seed: args.solver.seed,
            scree: &report.scree,
        },
    )?;
    match report.chosen {
        Some(r) => eprintln!("chosen rank: {r}"),
        None => eprintln!("no candidate reached stability {}", args.threshold),
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Samples of one context, one per row.
    #[arg(long)]
    pub data: PathBuf,
    /// Scores file to write.
    #[arg(long)]
    pub output: PathBuf,
}

fn model_error(path: &Path, message: String) -> CliError {
    CliError::ModelFile {
        path: path.display().to_string(),
        message,
    }
}

/// Bring one context's samples to the model's variable space: apply the
/// stored projection when the data has its raw dimension.
fn to_model_space(file: &ModelFile, projection: Option<&PcaProjection>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match projection {
        Some(proj) if x.ncols() == proj.mean.len() => Ok(proj.transform(x)?),
        _ if x.ncols() == file.p => Ok(x.clone()),
        Some(proj) => Err(McpcaError::DimensionMismatch(format!(
            "data has {} columns; the model expects {} raw or {} projected variables",
            x.ncols(),
            proj.mean.len(),
            file.p
        ))
        .into()),
        None => Err(McpcaError::DimensionMismatch(format!(
            "data has {} columns, the model has p = {}",
            x.ncols(),
            file.p
        ))
        .into()),
    }
}

/// Scores of one context: stored preprocessing, per-context centering, then `A⁺`.
pub fn score_matrix(file: &ModelFile, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let model = file.model().map_err(|m| CliError::ModelFile {
        path: "<model>".into(),
        message: m,
    })?;
    let projection = file.projection().map_err(|m| CliError::ModelFile {
        path: "<model>".into(),
        message: m,
    })?;
    let x = to_model_space(file, projection.as_ref(), x)?;
    Ok(score_samples(&model, &center_columns(&x))?)
}

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let (x, _) = read_matrix(&args.data)?;
    let scores = score_matrix(&file, &x)?;
    let header: Vec<String> = (1..=file.r).map(|j| format!("mcpc{j}")).collect();
    let mut table = Table::create(&args.output, &header)?;
    for row in scores.row_iter() {
        table.row(row.iter().map(|&v| float(v)))?;
    }
    table.finish()
}

#[derive(Debug, Clone, Args)]
pub struct DiagArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Diagnostics table to write.
    #[arg(long)]
    pub output: PathBuf,
}

pub const DIAG_HEADER: [&str; 6] = [
    "context",
    "reconstruction_error",
    "variance_explained_ratio",
    "uncorrelatedness",
    "kl_loss",
    "positive_definite",
];

/// Reorder `data` to the model's context order when the ids match as sets.
fn align_contexts(model_ids: &[String], data: ContextDataset) -> Result<ContextDataset> {
    if data.k() != model_ids.len() {
        return Err(McpcaError::DimensionMismatch(format!(
            "input has {} contexts, the model has {}",
            data.k(),
            model_ids.len()
        ))
        .into());
    }
    let ids = data.ids();
    if ids == model_ids {
        return Ok(data);
    }
    let positions: Option<Vec<usize>> = model_ids.iter().map(|id| ids.iter().position(|x| x == id)).collect();
    match positions {
        Some(order) => {
            let names = data.variable_names().map(|n| n.to_vec());
            let contexts = order.iter().map(|&i| data.contexts()[i].clone()).collect();
            Ok(ContextDataset::new(contexts, names)?)
        }
        // Different ids: match contexts by position.
        None => Ok(data),
    }
}

pub fn cmd_diag(args: &DiagArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let model = file.model().map_err(|m| model_error(&args.model, m))?;
    let projection = file.projection().map_err(|m| model_error(&args.model, m))?;
    let data = align_contexts(&model.context_ids, args.input.load()?)?;
    let contexts = data
        .contexts()
        .iter()
        .map(|c| {
            Ok(ContextData {
                id: c.id.clone(),
                data: to_model_space(&file, projection.as_ref(), &c.data)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let t = build_tensor(&ContextDataset::new(contexts, None)?)?;
    let diag = Diagnostics::compute(&t, &model)?;

    let mut table = Table::create(&args.output, &DIAG_HEADER)?;
    for (i, id) in t.context_ids().iter().enumerate() {
        let kl = diag.kl_loss[i];
        table.row([
            id.clone(),
            float(diag.reconstruction_error[i]),
            float(diag.variance_explained.ratio[i]),
            float(diag.uncorrelatedness[i]),
            kl.map(float).unwrap_or_default(),
            kl.is_some().to_string(),
        ])?;
    }
    table.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    Accuracy,
    Sweep,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = BenchMode::Accuracy)]
    pub mode: BenchMode,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 60)]
    pub r: usize,
    #[arg(long, default_value_t = 0.2)]
    pub density: f64,
    /// Samples per context (accuracy mode).
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Fit the exact covariances instead of sampled ones (accuracy mode).
    #[arg(long)]
    pub noiseless: bool,
    /// Sample sizes per context (sweep mode), ascending.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_GRID)]
    pub n_grid: Vec<usize>,
    /// Trials (accuracy) or repetitions per sample size (sweep).
    #[arg(long, default_value_t = 40)]
    pub trials: usize,
    /// Methods: mcpca, pca_stack, jennrich or external:<dir>.
    #[arg(long, value_delimiter = ',', default_value = "mcpca,pca_stack,jennrich")]
    pub methods: Vec<String>,
    /// Redraw plants with zero or nearly collinear loading columns.
    #[arg(long)]
    pub generic: bool,
    /// Plant orthonormal components.
    #[arg(long)]
    pub orthonormal: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Records file to write.
    #[arg(long)]
    pub output: PathBuf,
}

pub fn bench_records(args: &BenchArgs) -> Result<Vec<TrialRecord>> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let fit = args.solver.config();
    let chunks: Vec<mcpca::Result<Vec<TrialRecord>>> = match args.mode {
        BenchMode::Accuracy => {
            let cfg = AccuracyConfig {
                p: args.p,
                k: args.k,
                r: args.r,
                density: args.density,
                samples: (!args.noiseless).then_some(args.samples),
                n_trials: args.trials,
                methods,
                seed: args.solver.seed,
                orthonormal: args.orthonormal,
                require_generic: args.generic,
                fit,
            };
            (0..args.trials)
                .into_par_iter()
                .map(|t| run_accuracy_trial_range(&cfg, t..t + 1))
                .collect()
        }
        BenchMode::Sweep => {
            let grid = &args.n_grid;
            if grid.is_empty() || grid[0] < 2 || grid.windows(2).any(|w| w[1] < w[0]) {
                return Err(CliError::Usage(
                    "--n-grid must be ascending with every entry at least 2".into(),
                ));
            }
            let cfg = SweepConfig {
                p: args.p,
                k: args.k,
                r: args.r,
                density: args.density,
                n_grid: grid.clone(),
                repetitions: args.trials,
                methods,
                seed: args.solver.seed,
                orthonormal: args.orthonormal,
                require_generic: args.generic,
                fit,
            };
            // Records depend only on (seed, N, repetition), so grid points run independently.
            grid.par_iter()
                .map(|&n| {
                    run_sample_sweep(&SweepConfig {
                        n_grid: vec![n],
                        ..cfg.clone()
                    })
                })
                .collect()
        }
    };
    let mut records = Vec::new();
    for chunk in chunks {
        records.extend(chunk?);
    }
    Ok(records)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let records = bench_records(args)?;
    let file = std::fs::File::create(&args.output).map_err(|e| CliError::io(&args.output, e))?;
    write_records(std::io::BufWriter::new(file), &records)?;
    Ok(())
}
