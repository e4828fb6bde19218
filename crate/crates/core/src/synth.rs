//! Planted-model generation and the synthetic benchmark harness.
//!
//! Seeds are derived from the master seed and the trial index, so every
//! record is reproducible on its own and independent of evaluation order.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::baselines::{jennrich, pca_stack, size_weights};
use crate::decompose::{fit_mcpca, FitConfig};
use crate::ingest::{build_tensor, read_matrix, ContextData, ContextDataset};
use crate::linalg::{normalize_columns, orthonormalize};
use crate::model_select::ascore;
use crate::seed::{derive_seed, rng_from_seed};
use crate::tensor::CovarianceTensor;
use crate::{McpcaError, Result};

/// Pairwise cosine between loading columns at or above which a plant is not
/// considered generic.
pub const GENERIC_COSINE_LIMIT: f64 = 0.99;
const GENERIC_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    /// `p × r`, unit columns.
    pub a: DMatrix<f64>,
    /// `k × r`, non-negative.
    pub b: DMatrix<f64>,
    pub seed: u64,
    pub density: f64,
    pub orthonormal: bool,
}

impl PlantedModel {
    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    /// The exact covariance tensor `S_i = A·diag(B[i,:])·Aᵀ`.
    pub fn exact_tensor(&self) -> Result<CovarianceTensor> {
        CovarianceTensor::from_factors(&self.a, &self.b)
    }

    /// No zero loading column and no pair of loading columns with cosine
    /// at or above [`GENERIC_COSINE_LIMIT`].
    pub fn is_generic(&self) -> bool {
        let norms: Vec<f64> = self.b.column_iter().map(|c| c.norm()).collect();
        if norms.iter().any(|&n| n == 0.0) {
            return false;
        }
        let r = self.rank();
        (0..r).all(|i| {
            (i + 1..r).all(|j| self.b.column(i).dot(&self.b.column(j)) / (norms[i] * norms[j]) < GENERIC_COSINE_LIMIT)
        })
    }
}

fn check_plant_args(p: usize, k: usize, r: usize, density: f64) -> Result<()> {
    if p == 0 || k == 0 || r == 0 {
        return Err(McpcaError::InvalidArgument(format!(
            "p, k and r must be positive (got {p}, {k}, {r})"
        )));
    }
    if r > p {
        return Err(McpcaError::InvalidArgument(format!("r ≤ p required (r = {r}, p = {p})")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(McpcaError::InvalidArgument(format!("density must be in (0, 1], got {density}")));
    }
    Ok(())
}

/// Random planted model: Gaussian `A` with normalized columns (or
/// orthonormalized by QR), and `B` with entries nonzero with probability
/// `density` and magnitudes `|N(0,1)|`.
pub fn generate_planted(p: usize, k: usize, r: usize, density: f64, orthonormal: bool, seed: u64) -> Result<PlantedModel> {
    check_plant_args(p, k, r, density)?;
    let mut rng = rng_from_seed(seed);
    let gaussian = DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = if orthonormal {
        orthonormalize(&gaussian)
    } else {
        let mut a = gaussian;
        normalize_columns(&mut a);
        a
    };
    let b = DMatrix::from_fn(k, r, |_, _| {
        let keep = rng.random::<f64>() < density;
        let magnitude = rng.sample::<f64, _>(StandardNormal).abs();
        if keep {
            magnitude
        } else {
            0.0
        }
    });
    Ok(PlantedModel {
        a,
        b,
        seed,
        density,
        orthonormal,
    })
}

/// Like [`generate_planted`], redrawing with derived seeds until the plant is
/// generic. The first attempt uses `seed` itself.
pub fn generate_generic_planted(p: usize, k: usize, r: usize, density: f64, orthonormal: bool, seed: u64) -> Result<PlantedModel> {
    check_plant_args(p, k, r, density)?;
    for attempt in 0..GENERIC_ATTEMPTS {
        let s = if attempt == 0 { seed } else { derive_seed(seed, attempt, u64::MAX) };
        let pm = generate_planted(p, k, r, density, orthonormal, s)?;
        if pm.is_generic() {
            return Ok(pm);
        }
    }
    Err(McpcaError::InvalidArgument(format!(
        "no generic plant found in {GENERIC_ATTEMPTS} draws for k = {k}, r = {r}, density = {density}"
    )))
}

/// `n` iid draws per context of `x = A·(√b_i ∘ z)` with `z ~ N(0, I_r)`.
pub fn sample_dataset(pm: &PlantedModel, n: usize, seed: u64) -> Result<ContextDataset> {
    if n < 2 {
        return Err(McpcaError::InvalidArgument(format!("need at least 2 samples per context, got {n}")));
    }
    let r = pm.rank();
    let contexts = (0..pm.k())
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64, 0));
            let roots: Vec<f64> = pm.b.row(i).iter().map(|v| v.sqrt()).collect();
            let z = DMatrix::from_fn(n, r, |_, j| roots[j] * rng.sample::<f64, _>(StandardNormal));
            ContextData {
                id: format!("context_{i}"),
                data: z * pm.a.transpose(),
            }
        })
        .collect();
    ContextDataset::new(contexts, None)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Mcpca,
    PcaStack,
    Jennrich,
    /// Components computed elsewhere, read from `<dir>/trial_<t>.csv`
    /// (`p` rows, `r` columns).
    External(PathBuf),
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mcpca => "mcpca",
            Method::PcaStack => "pca_stack",
            Method::Jennrich => "jennrich",
            Method::External(_) => "external",
        }
    }
}

impl FromStr for Method {
    type Err = McpcaError;

    /// `mcpca`, `pca_stack`, `jennrich` or `external:<dir>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcpca" => Ok(Method::Mcpca),
            "pca_stack" | "pca-stack" => Ok(Method::PcaStack),
            "jennrich" => Ok(Method::Jennrich),
            _ => match s.strip_prefix("external:") {
                Some(dir) if !dir.is_empty() => Ok(Method::External(PathBuf::from(dir))),
                _ => Err(McpcaError::InvalidArgument(format!(
                    "unknown method {s:?} (expected mcpca, pca_stack, jennrich or external:<dir>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub p: usize,
    pub k: usize,
    pub r: usize,
    /// Samples per context; 0 for exact covariances.
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub ascore: f64,
    pub runtime_seconds: f64,
    pub converged: bool,
}

impl TrialRecord {
    /// All fields except the runtime agree.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            runtime_seconds: 0.0,
            ..self.clone()
        } == Self {
            runtime_seconds: 0.0,
            ..other.clone()
        }
    }
}

pub const RECORD_HEADER: [&str; 10] = [
    "method",
    "p",
    "k",
    "r",
    "N",
    "trial",
    "seed",
    "ascore",
    "runtime_seconds",
    "converged",
];

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let wrap = |source| McpcaError::Csv {
        path: "<records>".into(),
        source,
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(RECORD_HEADER).map_err(wrap)?;
    for rec in records {
        w.write_record([
            rec.method.clone(),
            rec.p.to_string(),
            rec.k.to_string(),
            rec.r.to_string(),
            rec.n.to_string(),
            rec.trial.to_string(),
            rec.seed.to_string(),
            rec.ascore.to_string(),
            rec.runtime_seconds.to_string(),
            rec.converged.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| McpcaError::Io {
        path: "<records>".into(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyConfig {
    pub p: usize,
    pub k: usize,
    pub r: usize,
    pub density: f64,
    /// Samples per context; `None` fits the exact covariances.
    pub samples: Option<usize>,
    pub n_trials: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub orthonormal: bool,
    /// Redraw plants with zero or nearly collinear loading columns.
    pub require_generic: bool,
    /// Fit settings; the seed is replaced per trial.
    pub fit: FitConfig,
}

impl AccuracyConfig {
    /// `p = 100, k = 50, r = 60`, density 0.2, 1000 samples, 40 trials.
    pub fn full_scale(methods: Vec<Method>, seed: u64) -> Self {
        Self {
            p: 100,
            k: 50,
            r: 60,
            density: 0.2,
            samples: Some(1000),
            n_trials: 40,
            methods,
            seed,
            orthonormal: false,
            require_generic: false,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub p: usize,
    pub k: usize,
    pub r: usize,
    pub density: f64,
    /// Samples per context, nondecreasing.
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub orthonormal: bool,
    pub require_generic: bool,
    pub fit: FitConfig,
}

/// Default sweep grid: 10 to 10⁵ samples per context.
pub const DEFAULT_SWEEP_GRID: [usize; 5] = [10, 100, 1_000, 10_000, 100_000];

fn plant(p: usize, k: usize, r: usize, density: f64, orthonormal: bool, generic: bool, seed: u64) -> Result<PlantedModel> {
    if generic {
        generate_generic_planted(p, k, r, density, orthonormal, seed)
    } else {
        generate_planted(p, k, r, density, orthonormal, seed)
    }
}

struct Outcome {
    ascore: f64,
    runtime_seconds: f64,
    converged: bool,
}

fn failed(runtime_seconds: f64) -> Outcome {
    Outcome {
        ascore: 0.0,
        runtime_seconds,
        converged: false,
    }
}

/// Fit one method and score it against the planted components. Numerical
/// failures become records with `converged = false`; runtime covers the fit only.
fn evaluate(
    method: &Method,
    pm: &PlantedModel,
    t: &CovarianceTensor,
    sizes: &[usize],
    fit: &FitConfig,
    trial: usize,
) -> Result<Outcome> {
    let start = Instant::now();
    let fitted: Result<(DMatrix<f64>, bool)> = match method {
        Method::Mcpca => fit_mcpca(t, pm.rank(), fit).map(|(m, _)| {
            let ok = m.converged.iter().all(|&c| c);
            (m.a, ok)
        }),
        Method::PcaStack => pca_stack(t, &size_weights(sizes), pm.rank()).map(|res| (res.a, !res.degenerate)),
        Method::Jennrich => jennrich(t, pm.rank(), fit.seed).map(|res| (res.a, !res.degenerate)),
        Method::External(dir) => {
            let (a, _) = read_matrix(&dir.join(format!("trial_{trial}.csv")))?;
            if a.shape() != pm.a.shape() {
                return Err(McpcaError::DimensionMismatch(format!(
                    "external components for trial {trial} are {}×{}, expected {}×{}",
                    a.nrows(),
                    a.ncols(),
                    pm.p(),
                    pm.rank()
                )));
            }
            Ok((a, true))
        }
    };
    let runtime_seconds = start.elapsed().as_secs_f64();
    match fitted {
        Ok((a, converged)) => Ok(Outcome {
            ascore: ascore(&pm.a, &a)?.ascore,
            runtime_seconds: if matches!(method, Method::External(_)) { 0.0 } else { runtime_seconds },
            converged,
        }),
        Err(e) if e.is_numerical() => Ok(failed(runtime_seconds)),
        Err(e) => Err(e),
    }
}

fn observe(pm: &PlantedModel, samples: Option<usize>, seed: u64) -> Result<(CovarianceTensor, Vec<usize>)> {
    match samples {
        None => Ok((pm.exact_tensor()?, vec![1; pm.k()])),
        Some(n) => {
            let data = sample_dataset(pm, n, seed)?;
            Ok((build_tensor(&data)?, data.sizes()))
        }
    }
}

/// Accuracy and runtime trials. Trial `t` draws its plant, data and fit seeds
/// from `(seed, t)`.
pub fn run_accuracy_trials(cfg: &AccuracyConfig) -> Result<Vec<TrialRecord>> {
    run_accuracy_trial_range(cfg, 0..cfg.n_trials)
}

/// The records of trials `range` only; concatenating disjoint ranges in order
/// gives the same records as [`run_accuracy_trials`].
pub fn run_accuracy_trial_range(cfg: &AccuracyConfig, range: std::ops::Range<usize>) -> Result<Vec<TrialRecord>> {
    check_plant_args(cfg.p, cfg.k, cfg.r, cfg.density)?;
    if let Some(n) = cfg.samples {
        if n < 2 {
            return Err(McpcaError::InvalidArgument(format!("need at least 2 samples per context, got {n}")));
        }
    }
    let mut records = Vec::new();
    if cfg.methods.is_empty() {
        return Ok(records);
    }
    for trial in range {
        let trial_seed = derive_seed(cfg.seed, trial as u64, 0);
        let pm = plant(cfg.p, cfg.k, cfg.r, cfg.density, cfg.orthonormal, cfg.require_generic, derive_seed(trial_seed, 0, 0))?;
        let (t, sizes) = observe(&pm, cfg.samples, derive_seed(trial_seed, 1, 0))?;
        let fit = cfg.fit.with_seed(derive_seed(trial_seed, 2, 0));
        for method in &cfg.methods {
            let out = evaluate(method, &pm, &t, &sizes, &fit, trial)?;
            records.push(TrialRecord {
                method: method.as_str().to_string(),
                p: cfg.p,
                k: cfg.k,
                r: cfg.r,
                n: cfg.samples.unwrap_or(0),
                trial,
                seed: trial_seed,
                ascore: out.ascore,
                runtime_seconds: out.runtime_seconds,
                converged: out.converged,
            });
        }
    }
    Ok(records)
}

/// One planted model, refit at every sample size of the grid. The data seed
/// depends only on `(seed, N, repetition)`, so repeated grid entries give
/// identical records.
pub fn run_sample_sweep(cfg: &SweepConfig) -> Result<Vec<TrialRecord>> {
    check_plant_args(cfg.p, cfg.k, cfg.r, cfg.density)?;
    if cfg.n_grid.is_empty() {
        return Err(McpcaError::InvalidArgument("sample-size grid is empty".into()));
    }
    if cfg.n_grid[0] < 2 || cfg.n_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(McpcaError::InvalidArgument(
            "sample-size grid must be ascending with every entry at least 2".into(),
        ));
    }
    if cfg.repetitions == 0 {
        return Err(McpcaError::InvalidArgument("repetitions must be at least 1".into()));
    }
    let pm = plant(cfg.p, cfg.k, cfg.r, cfg.density, cfg.orthonormal, cfg.require_generic, derive_seed(cfg.seed, 0, 0))?;
    let mut records = Vec::new();
    for &n in &cfg.n_grid {
        for rep in 0..cfg.repetitions {
            let data_seed = derive_seed(derive_seed(cfg.seed, 1, n as u64), rep as u64, 0);
            let (t, sizes) = observe(&pm, Some(n), data_seed)?;
            let fit = cfg.fit.with_seed(derive_seed(cfg.seed, 2, rep as u64));
            for method in &cfg.methods {
                let out = evaluate(method, &pm, &t, &sizes, &fit, rep)?;
                records.push(TrialRecord {
                    method: method.as_str().to_string(),
                    p: cfg.p,
                    k: cfg.k,
                    r: cfg.r,
                    n,
                    trial: rep,
                    seed: data_seed,
                    ascore: out.ascore,
                    runtime_seconds: out.runtime_seconds,
                    converged: out.converged,
                });
            }
        }
    }
    Ok(records)
}

/// Per-context `‖S_i − A·diag(B[i,:])·Aᵀ‖_F / ‖A·diag(B[i,:])·Aᵀ‖_F`.
pub fn relative_covariance_error(pm: &PlantedModel, t: &CovarianceTensor) -> Result<Vec<f64>> {
    let exact = pm.exact_tensor()?;
    if exact.p() != t.p() || exact.k() != t.k() {
        return Err(McpcaError::DimensionMismatch("tensor does not match the planted model".into()));
    }
    Ok(exact
        .slices()
        .iter()
        .zip(t.slices())
        .map(|(e, s)| {
            let denom = e.norm();
            if denom > 0.0 {
                (s - e).norm() / denom
            } else {
                s.norm()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_density_has_no_zeros() {
        let pm = generate_planted(6, 5, 3, 1.0, false, 1).unwrap();
        assert!(pm.b.iter().all(|&x| x > 0.0));
        for c in pm.a.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_plants() {
        let pm = generate_planted(10, 4, 6, 0.5, true, 2).unwrap();
        assert!((pm.a.tr_mul(&pm.a) - DMatrix::identity(6, 6)).abs().max() < 1e-10);
    }

    #[test]
    fn full_scale_density_band() {
        let pm = generate_planted(100, 50, 60, 0.2, false, 7).unwrap();
        let zeros = pm.b.iter().filter(|&&x| x == 0.0).count() as f64 / 3000.0;
        assert!((0.76..=0.84).contains(&zeros), "zero fraction {zeros}");
    }

    #[test]
    fn plant_arguments_checked() {
        assert!(generate_planted(3, 2, 4, 0.5, false, 0).is_err());
        assert!(generate_planted(3, 2, 2, 0.0, false, 0).is_err());
        assert!(generate_planted(3, 2, 2, 1.5, false, 0).is_err());
    }

    #[test]
    fn zero_loading_context_samples_zero() {
        let mut pm = generate_planted(4, 3, 2, 1.0, false, 3).unwrap();
        pm.b.row_mut(1).fill(0.0);
        let d = sample_dataset(&pm, 10, 4).unwrap();
        assert!(d.contexts()[1].data.iter().all(|&x| x == 0.0));
        assert!(sample_dataset(&pm, 1, 4).is_err());
    }

    #[test]
    fn rank_one_axis_support() {
        let pm = PlantedModel {
            a: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            b: DMatrix::from_element(2, 1, 1.0),
            seed: 0,
            density: 1.0,
            orthonormal: true,
        };
        let t = build_tensor(&sample_dataset(&pm, 50, 5).unwrap()).unwrap();
        for s in t.slices() {
            for i in 1..3 {
                for j in 1..3 {
                    assert!(s[(i, j)].abs() <= 1e-20);
                }
            }
        }
    }

    #[test]
    fn large_samples_concentrate() {
        let pm = generate_planted(5, 3, 2, 1.0, false, 6).unwrap();
        let t = build_tensor(&sample_dataset(&pm, 100_000, 9).unwrap()).unwrap();
        for e in relative_covariance_error(&pm, &t).unwrap() {
            assert!(e <= 0.05, "relative error {e}");
        }
    }

    fn small_config(methods: Vec<Method>) -> AccuracyConfig {
        AccuracyConfig {
            p: 8,
            k: 6,
            r: 3,
            density: 0.5,
            samples: None,
            n_trials: 1,
            methods,
            seed: 21,
            orthonormal: false,
            require_generic: true,
            fit: FitConfig::default(),
        }
    }

    #[test]
    fn noiseless_trial_recovers() {
        let recs = run_accuracy_trials(&small_config(vec![Method::Mcpca, Method::Jennrich])).unwrap();
        assert_eq!(recs.len(), 2);
        for rec in &recs {
            assert!(rec.ascore >= 0.999, "{rec:?}");
            assert_eq!(rec.n, 0);
        }
    }

    #[test]
    fn no_methods_no_records() {
        assert!(run_accuracy_trials(&small_config(vec![])).unwrap().is_empty());
    }

    #[test]
    fn trials_are_deterministic_and_splittable() {
        let mut cfg = small_config(vec![Method::Mcpca, Method::PcaStack]);
        cfg.samples = Some(50);
        cfg.n_trials = 3;
        let a = run_accuracy_trials(&cfg).unwrap();
        let b = run_accuracy_trials(&cfg).unwrap();
        let mut split = run_accuracy_trial_range(&cfg, 0..1).unwrap();
        split.extend(run_accuracy_trial_range(&cfg, 1..3).unwrap());
        assert_eq!(a.len(), 6);
        for ((x, y), z) in a.iter().zip(&b).zip(&split) {
            assert!(x.same_outcome(y) && x.same_outcome(z));
            assert!((0.0..=1.0).contains(&x.ascore) && x.runtime_seconds >= 0.0);
        }
    }

    #[test]
    fn repeated_grid_entries_match() {
        let cfg = SweepConfig {
            p: 6,
            k: 4,
            r: 2,
            density: 1.0,
            n_grid: vec![40, 40],
            repetitions: 1,
            methods: vec![Method::Mcpca],
            seed: 3,
            orthonormal: false,
            require_generic: true,
            fit: FitConfig::default(),
        };
        let recs = run_sample_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].same_outcome(&recs[1]));
        let bad = SweepConfig {
            n_grid: vec![100, 10],
            ..cfg
        };
        assert!(run_sample_sweep(&bad).is_err());
    }

    #[test]
    fn external_components_are_scored() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(vec![Method::External(dir.path().to_path_buf())]);
        let trial_seed = derive_seed(cfg.seed, 0, 0);
        let pm = generate_generic_planted(8, 6, 3, 0.5, false, derive_seed(trial_seed, 0, 0)).unwrap();
        let mut body = String::new();
        for row in pm.a.row_iter() {
            body.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            body.push('\n');
        }
        std::fs::write(dir.path().join("trial_0.csv"), body).unwrap();
        let recs = run_accuracy_trials(&cfg).unwrap();
        assert!((recs[0].ascore - 1.0).abs() < 1e-12);
        assert_eq!(recs[0].method, "external");
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("mcpca".parse::<Method>().unwrap(), Method::Mcpca);
        assert_eq!("pca_stack".parse::<Method>().unwrap(), Method::PcaStack);
        assert_eq!("external:/tmp/x".parse::<Method>().unwrap(), Method::External("/tmp/x".into()));
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn records_serialize_with_header() {
        let rec = TrialRecord {
            method: "mcpca".into(),
            p: 2,
            k: 3,
            r: 1,
            n: 10,
            trial: 0,
            seed: 5,
            ascore: 0.5,
            runtime_seconds: 0.25,
            converged: true,
        };
        let mut out = Vec::new();
        write_records(&mut out, &[rec]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "method,p,k,r,N,trial,seed,ascore,runtime_seconds,converged\nmcpca,2,3,1,10,0,5,0.5,0.25,true\n"
        );
    }
}
