//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line.
//!
//! Run with `cargo test -p mcpca-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mcpca::ingest::center_columns;
use mcpca::model_select::stability_score;
use mcpca::synth::{generate_generic_planted, run_accuracy_trial_range};
use mcpca::*;
use mcpca_cli::ModelFile;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn verdict(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest |B_true − B_fit| after matching columns by Ascore.
fn matched_b_error(a_true: &DMatrix<f64>, b_true: &DMatrix<f64>, m: &McpcaModel) -> f64 {
    let matched = ascore(a_true, &m.a).unwrap();
    let mut worst = 0.0f64;
    for (c, &j) in matched.permutation.iter().enumerate() {
        for i in 0..b_true.nrows() {
            worst = worst.max((b_true[(i, c)] - m.b[(i, j)]).abs());
        }
    }
    worst
}

struct Instance {
    r: usize,
    plant: PlantedModel,
    tensor: CovarianceTensor,
    seed: u64,
}

/// 20 generic plants for each r ∈ {3, 8, 15} at p = 20, k = 10, density 0.5.
fn noiseless_instances() -> Vec<Instance> {
    let mut out = Vec::new();
    for r in [3usize, 8, 15] {
        for i in 0..20u64 {
            let seed = 1000 * r as u64 + i;
            let plant = generate_generic_planted(20, 10, r, 0.5, false, seed).unwrap();
            let tensor = plant.exact_tensor().unwrap();
            out.push(Instance { r, plant, tensor, seed });
        }
    }
    out
}

#[test]
fn criterion_1_noiseless_exact_recovery() {
    let start = Instant::now();
    let results: Vec<(f64, f64)> = noiseless_instances()
        .par_iter()
        .map(|inst| {
            let (m, _) = fit_mcpca(&inst.tensor, inst.r, &FitConfig::default().with_seed(inst.seed)).unwrap();
            (
                ascore(&inst.plant.a, &m.a).unwrap().ascore,
                matched_b_error(&inst.plant.a, &inst.plant.b, &m),
            )
        })
        .collect();
    let worst_ascore = results.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let worst_b = results.iter().map(|x| x.1).fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        worst_ascore >= 0.999 && worst_b <= 1e-6,
        format!(
            "{} instances, min Ascore {worst_ascore:.9}, max B error {worst_b:.3e}, {elapsed:.2} s",
            results.len()
        ),
    );
}

#[test]
fn criterion_2_oracle_equivalence() {
    let results: Vec<(f64, f64, f64)> = noiseless_instances()
        .par_iter()
        .map(|inst| {
            let (m, _) = fit_mcpca(&inst.tensor, inst.r, &FitConfig::default().with_seed(inst.seed)).unwrap();
            let j = jennrich(&inst.tensor, inst.r, inst.seed).unwrap();
            (
                ascore(&inst.plant.a, &j.a).unwrap().ascore,
                ascore(&m.a, &j.a).unwrap().ascore,
                ascore(&inst.plant.a, &m.a).unwrap().ascore,
            )
        })
        .collect();
    let jv = results.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let mj = results.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let mv = results.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    verdict(
        2,
        jv >= 0.999 && mj >= 0.999 && mv >= 0.999,
        format!("min Ascore: jennrich vs planted {jv:.9}, mcpca vs jennrich {mj:.9}, mcpca vs planted {mv:.9}"),
    );
}

#[test]
fn criterion_3_full_scale_run() {
    let start = Instant::now();
    let mut cfg = AccuracyConfig::full_scale(vec![Method::Mcpca, Method::PcaStack], 0);
    cfg.n_trials = 5;
    let records: Vec<TrialRecord> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| run_accuracy_trial_range(&cfg, t..t + 1).unwrap())
        .flatten()
        .collect();
    let score = |method: &str, t: usize| {
        records
            .iter()
            .find(|r| r.method == method && r.trial == t)
            .map(|r| r.ascore)
            .unwrap()
    };
    let mcpca: Vec<f64> = (0..cfg.n_trials).map(|t| score("mcpca", t)).collect();
    let stack: Vec<f64> = (0..cfg.n_trials).map(|t| score("pca_stack", t)).collect();
    let med = median(mcpca.clone());
    let ordered = mcpca.iter().zip(&stack).all(|(m, s)| m > s);
    verdict(
        3,
        med >= 0.95 && ordered,
        format!(
            "median MCPCA Ascore {med:.4}, MCPCA {mcpca:.4?} vs PCA-STACK {stack:.4?}, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_4_sample_complexity_trend() {
    let start = Instant::now();
    let grid = [100usize, 1000, 10_000];
    let cfg = SweepConfig {
        p: 20,
        k: 10,
        r: 8,
        density: 0.5,
        n_grid: grid.to_vec(),
        repetitions: 5,
        methods: vec![Method::Mcpca],
        seed: 0,
        orthonormal: false,
        require_generic: true,
        fit: FitConfig::default(),
    };
    let records = run_sample_sweep(&cfg).unwrap();
    let medians: Vec<f64> = grid
        .iter()
        .map(|&n| median(records.iter().filter(|r| r.n == n).map(|r| r.ascore).collect()))
        .collect();
    let xs: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| (1.0 - m).max(f64::MIN_POSITIVE).ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let monotone = medians.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        4,
        monotone && slope <= -0.5,
        format!(
            "medians {medians:.6?} at N = {grid:?}, log-log slope {slope:.3}, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_5_rank_selection() {
    let start = Instant::now();
    let chosen: Vec<Option<usize>> = (0..10u64)
        .into_par_iter()
        .map(|rep| {
            let plant = generate_generic_planted(20, 10, 3, 0.5, false, 500 + rep).unwrap();
            let t = plant.exact_tensor().unwrap();
            let cfg = FitConfig::default().with_seed(rep);
            select_rank(&t, &[2, 3, 4, 5], 0.8, 5, &cfg).unwrap().chosen
        })
        .collect();
    let hits = chosen.iter().filter(|c| **c == Some(3)).count();
    verdict(
        5,
        hits >= 9,
        format!("rank 3 chosen in {hits}/10 repetitions {chosen:?}, {:.1} s", start.elapsed().as_secs_f64()),
    );
}

fn unit_columns(n: usize, count: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_columns(&(0..count).map(|_| mcpca::seed::random_unit_vector(n, rng)).collect::<Vec<_>>())
}

/// Descriptions of every violated invariant.
fn invariant_violations(seed: u64) -> Vec<String> {
    let mut bad = Vec::new();
    let (p, k, r) = (9, 6, 4);
    // Full density: a zero loading makes the projected covariance singular and kl undefined.
    let plant = generate_generic_planted(p, k, r, 1.0, false, seed).unwrap();
    let t = plant.exact_tensor().unwrap();
    let cfg = FitConfig::default().with_seed(seed);
    let (m, report) = fit_mcpca(&t, r, &cfg).unwrap();

    if m.b.iter().any(|&x| x < 0.0) {
        bad.push("negative loading".into());
    }
    if m.a.column_iter().any(|c| (c.norm() - 1.0).abs() > 1e-10) {
        bad.push("non-unit column".into());
    }
    if report.objective_trace.iter().any(|tr| tr.windows(2).any(|w| w[1] < w[0] - 1e-9)) {
        bad.push("objective decreased".into());
    }
    let (again, _) = fit_mcpca(&t, r, &cfg).unwrap();
    if again != m {
        bad.push("re-run differs".into());
    }

    let c = 2.5;
    let (scaled, _) = fit_mcpca(&t.scaled(c), r, &cfg).unwrap();
    let matched = ascore(&m.a, &scaled.a).unwrap();
    let scale_ok = matched.ascore >= 1.0 - 1e-8
        && matched.permutation.iter().enumerate().all(|(j, &q)| {
            (0..k).all(|i| (scaled.b[(i, q)] - c * m.b[(i, j)]).abs() <= 1e-8 * (c * m.b[(i, j)]).max(1.0))
        });
    if !scale_ok {
        bad.push("scaling equivariance".into());
    }

    let order: Vec<usize> = (0..k).rev().collect();
    let (perm, _) = fit_mcpca(&t.permuted_contexts(&order).unwrap(), r, &cfg).unwrap();
    let matched = ascore(&m.a, &perm.a).unwrap();
    let perm_ok = matched.ascore >= 1.0 - 1e-8
        && matched.permutation.iter().enumerate().all(|(j, &q)| {
            order.iter().enumerate().all(|(new, &old)| (perm.b[(new, q)] - m.b[(old, j)]).abs() <= 1e-8)
        });
    if !perm_ok {
        bad.push("context permutation equivariance".into());
    }

    let unc = uncorrelatedness_score(&t, &m).unwrap();
    let kl = kl_loss(&t, &m).unwrap();
    for i in 0..k {
        if unc[i] > 1e-8 * t.slice(i).trace() {
            bad.push(format!("uncorrelatedness {} in context {i}", unc[i]));
        }
        match kl[i] {
            Some(v) if v <= 1e-8 => {}
            other => bad.push(format!("kl_loss {other:?} in context {i}")),
        }
    }

    // kl ≥ 0 for an arbitrary (wrong) model.
    let mut rng = mcpca::seed::rng_from_seed(seed ^ 0xabc);
    let a = unit_columns(p, p, &mut rng);
    let noisy = CovarianceTensor::stack(
        t.slices()
            .iter()
            .map(|s| s + DMatrix::identity(p, p) * 0.1)
            .collect(),
    )
    .unwrap();
    let b = solve_nnls(&noisy, &a).unwrap();
    let wrong = McpcaModel {
        a,
        b,
        context_ids: noisy.context_ids().to_vec(),
        ordering_rule: String::new(),
        sign_rule: String::new(),
        seed,
        converged: vec![true; p],
    };
    if kl_loss(&noisy, &wrong).unwrap().into_iter().flatten().any(|v| v < 0.0) {
        bad.push("negative kl_loss".into());
    }

    let x = unit_columns(12, 5, &mut rng);
    let y = &x + DMatrix::from_fn(12, 5, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
    let base = ascore(&x, &y).unwrap().ascore;
    let shuffled = DMatrix::from_columns(
        &[3usize, 0, 4, 2, 1]
            .iter()
            .enumerate()
            .map(|(n, &j)| y.column(j) * if n % 2 == 0 { -1.0 } else { 1.0 })
            .collect::<Vec<_>>(),
    );
    if (ascore(&x, &x).unwrap().ascore - 1.0).abs() > 1e-12 {
        bad.push("Ascore identity".into());
    }
    if (ascore(&x, &shuffled).unwrap().ascore - base).abs() > 1e-12 {
        bad.push("Ascore permutation/sign invariance".into());
    }
    bad
}

#[test]
fn criterion_6_invariant_suite() {
    let mut failures: Vec<String> = (0..10u64)
        .into_par_iter()
        .flat_map(|seed| invariant_violations(seed).into_iter().map(move |v| format!("seed {seed}: {v}")).collect::<Vec<_>>())
        .collect();
    let dim = model_dimension(100, 50, 60).unwrap();
    if dim != 8940 {
        failures.push(format!("model_dimension(100, 50, 60) = {dim}"));
    }
    verdict(
        6,
        failures.is_empty(),
        if failures.is_empty() {
            "all invariants hold over 10 seeds; model_dimension(100, 50, 60) = 8940".into()
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn criterion_7_non_identifiability_detection() {
    let cases: Vec<(f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let plant = generate_generic_planted(20, 10, 5, 0.5, false, seed).unwrap();
            let mut dup = plant.b.clone();
            let first = dup.column(0).into_owned();
            dup.set_column(1, &first);
            let t_dup = CovarianceTensor::from_factors(&plant.a, &dup).unwrap();

            // 10% relative noise on the duplicated column.
            let mut rng = mcpca::seed::rng_from_seed(seed + 100);
            let noise = DVector::<f64>::from_fn(10, |_, _| rng.sample(StandardNormal));
            let perturbed_col = (&first + noise.normalize() * (0.1 * first.norm())).map(f64::abs);
            let mut pert = dup.clone();
            pert.set_column(1, &perturbed_col);
            let t_pert = CovarianceTensor::from_factors(&plant.a, &pert).unwrap();

            let cfg = FitConfig::default().with_seed(seed);
            (
                stability_score(&t_dup, 5, 5, &cfg).unwrap(),
                stability_score(&t_pert, 5, 5, &cfg).unwrap(),
            )
        })
        .collect();
    let dup_ok = cases.iter().all(|c| c.0 < 0.8);
    let pert_ok = cases.iter().all(|c| c.1 >= 0.95);
    let dup: Vec<f64> = cases.iter().map(|c| c.0).collect();
    let pert: Vec<f64> = cases.iter().map(|c| c.1).collect();
    verdict(
        7,
        dup_ok && pert_ok,
        format!("stability duplicated {dup:.4?} (need < 0.8), perturbed {pert:.4?} (need >= 0.95)"),
    );
}

#[test]
fn criterion_8_pca_stack_contrast() {
    let results: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let plant = generate_generic_planted(20, 10, 8, 0.5, false, 800 + seed).unwrap();
            let t = plant.exact_tensor().unwrap();
            let (m, _) = fit_mcpca(&t, 8, &FitConfig::default().with_seed(seed)).unwrap();
            let stack = pca_stack(&t, &DVector::from_element(10, 0.1), 8).unwrap();
            (
                ascore(&plant.a, &stack.a).unwrap().ascore,
                ascore(&plant.a, &m.a).unwrap().ascore,
            )
        })
        .collect();
    let wins = results.iter().filter(|(s, m)| s < m).count();
    let stack: Vec<f64> = results.iter().map(|x| x.0).collect();
    let mcpca: Vec<f64> = results.iter().map(|x| x.1).collect();
    verdict(
        8,
        wins >= 9,
        format!("PCA-STACK below MCPCA in {wins}/10 plants; PCA-STACK {stack:.4?}, MCPCA {mcpca:.4?}"),
    );
}

fn write_rows(path: &Path, header: &[String], rows: &DMatrix<f64>, prefix: Option<&str>) {
    let mut body = header.join(",");
    body.push('\n');
    for row in rows.row_iter() {
        if let Some(p) = prefix {
            body.push_str(p);
            body.push(',');
        }
        body.push_str(&row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","));
        body.push('\n');
    }
    std::fs::write(path, body).unwrap();
}

fn read_scores(path: &Path) -> DMatrix<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mcpca")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn criterion_9_file_format_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let plant = generate_generic_planted(8, 4, 3, 1.0, false, 9).unwrap();
    let data = sample_dataset(&plant, 400, 3).unwrap();
    // Mild noise keeps the covariances full rank for the global PCA step.
    let mut rng = mcpca::seed::rng_from_seed(77);
    let names: Vec<String> = (0..8).map(|j| format!("x{j}")).collect();
    let mut long = String::from("context,");
    long.push_str(&names.join(","));
    long.push('\n');
    let mut first_context = None;
    for c in data.contexts() {
        let x = c.data.map(|v| v + 0.05 * rng.sample::<f64, _>(StandardNormal));
        for row in x.row_iter() {
            long.push_str(&c.id);
            for v in row.iter() {
                long.push_str(&format!(",{v}"));
            }
            long.push('\n');
        }
        first_context.get_or_insert(x);
    }
    let raw = first_context.unwrap();
    let long_path = dir.path().join("long.csv");
    std::fs::write(&long_path, long).unwrap();
    let model_path = dir.path().join("model.json");
    run_cli(&[
        "fit",
        "--input",
        long_path.to_str().unwrap(),
        "--rank",
        "3",
        "--pca-components",
        "6",
        "--output",
        model_path.to_str().unwrap(),
    ]);

    let written = std::fs::read_to_string(&model_path).unwrap();
    let file = ModelFile::load(&model_path).unwrap();
    let resaved = dir.path().join("again.json");
    file.save(&resaved).unwrap();
    let round_trip = std::fs::read_to_string(&resaved).unwrap() == written && file.to_json() == written;

    // Path 1: the CLI applies the stored projection to raw data.
    let raw_path = dir.path().join("raw.csv");
    write_rows(&raw_path, &names, &raw, None);
    let scores_raw = dir.path().join("scores_raw.csv");
    run_cli(&[
        "score",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        raw_path.to_str().unwrap(),
        "--output",
        scores_raw.to_str().unwrap(),
    ]);
    // Path 2: projection, centering and A⁺ done by hand through the library.
    let model = file.model().unwrap();
    let projection = file.projection().unwrap().unwrap();
    let projected = projection.transform(&raw).unwrap();
    let manual = score_samples(&model, &center_columns(&projected)).unwrap();
    // Path 3: the CLI on already projected data.
    let proj_path = dir.path().join("projected.csv");
    let pc_names: Vec<String> = (1..=6).map(|j| format!("PC{j}")).collect();
    write_rows(&proj_path, &pc_names, &projected, None);
    let scores_proj = dir.path().join("scores_proj.csv");
    run_cli(&[
        "score",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        proj_path.to_str().unwrap(),
        "--output",
        scores_proj.to_str().unwrap(),
    ]);

    let cli_raw = read_scores(&scores_raw);
    let cli_proj = read_scores(&scores_proj);
    let diff_raw = (&cli_raw - &manual).amax();
    let diff_proj = (&cli_proj - &manual).amax();
    verdict(
        9,
        round_trip && diff_raw <= 1e-10 && diff_proj <= 1e-10,
        format!(
            "byte-identical round trip: {round_trip}; max score difference {diff_raw:.3e} (raw input), {diff_proj:.3e} (projected input)"
        ),
    );
}
