//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Uses a synthetic MovieLens-1M shaped corpus unless `AFMC_DATA_DIR` names a
//! directory holding the real `ratings.dat` and `users.dat`.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use afmc_core::autoencoder::{finite_diff_gradient, gradient, init_model, max_relative_error};
use afmc_core::data::{Corpus, LocalDataset, RatingMatrix, VuRow, PERSONAL_WIDTH};
use afmc_core::experiment::{
    build_world, cell_means, emit_summary, load_corpus, run_baseline, run_experiment, ExperimentConfig,
    ExperimentOutput, Scheme,
};
use afmc_core::fl::{run_training, AggregationMode, Environment, TrainingConfig};
use afmc_core::mobility::{sample_velocity, truncated_gaussian_pdf, CoverageGeometry, Fleet, VelocityDistribution};
use afmc_core::oracle;
use afmc_core::popularity::{
    cosine_similarity, merge_popular, predict_interested, profile_matrix, select_active_vus, top_k_neighbors,
    PopularityReport, ProfileMatrix,
};
use afmc_core::seed::rng_from;
use afmc_core::synth::{generate, SynthConfig};
use common::{dataset_with_ratings, vehicle, FixedSource};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn data_files(tmp: &Path) -> (PathBuf, PathBuf) {
    if let Some(dir) = std::env::var_os("AFMC_DATA_DIR") {
        let dir = PathBuf::from(dir);
        return (dir.join("ratings.dat"), dir.join("users.dat"));
    }
    let cfg = SynthConfig::default();
    generate(&cfg).expect("synthetic corpus").write(tmp, cfg.seed).expect("write corpus");
    (tmp.join("ratings.dat"), tmp.join("users.dat"))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn random_baseline(corpus: &Arc<Corpus>, base: &ExperimentConfig) -> Outcome {
    let seeds = 20u64;
    let mut effs = Vec::new();
    for seed in 0..seeds {
        let world = build_world(corpus, base, 10.0, seed).expect("world");
        let stats = run_baseline(Scheme::Random, &world, 50, &base.evaluation, seed).expect("replay");
        effs.push(stats.hits as f64 / stats.total() as f64 * 100.0);
    }
    let m = mean(&effs);
    outcome(
        (1.0..=1.6).contains(&m),
        format!("Random at C=50 over {seeds} seeds: {m:.3} % (catalog {})", corpus.catalog_size()),
    )
}

fn capacity_monotonicity(sweep: &ExperimentOutput) -> Outcome {
    let means = cell_means(&sweep.rows);
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for scheme in Scheme::ALL {
        let series: Vec<f64> = means
            .iter()
            .filter(|((s, _, _), _)| *s == scheme)
            .map(|(_, &(m, _, _))| m)
            .collect();
        for w in series.windows(2) {
            worst = worst.max(w[0] - w[1]);
        }
        let shown: Vec<String> = series.iter().map(|m| format!("{m:.2}")).collect();
        parts.push(format!("{scheme} [{}]", shown.join(" ")));
    }
    let complete = means.len() == Scheme::ALL.len() * 8;
    outcome(
        complete && sweep.failures.is_empty() && worst <= 0.5,
        format!("largest drop {worst:.3} pp; {}", parts.join("; ")),
    )
}

fn scheme_ordering(default_run: &ExperimentOutput) -> Outcome {
    let means = cell_means(&default_run.rows);
    let get = |s: Scheme| means.get(&(s, 50, 10f64.to_bits())).map(|v| v.0).unwrap_or(f64::NAN);
    let (afmc, afc, greedy, thompson, random) =
        (get(Scheme::Afmc), get(Scheme::Afc), get(Scheme::Greedy), get(Scheme::Thompson), get(Scheme::Random));
    let passed = afmc >= afc - 0.3
        && afmc >= greedy
        && afmc > thompson
        && thompson > random
        && (afmc - 11.01).abs() <= 3.0;
    outcome(
        passed,
        format!(
            "AFMC {afmc:.2}, AFC {afc:.2}, FedAVG {:.2}, greedy {greedy:.2}, Thompson {thompson:.2}, Random {random:.2}",
            get(Scheme::Fedavg)
        ),
    )
}

fn density_trend(dens: &ExperimentOutput) -> Outcome {
    let means = cell_means(&dens.rows);
    let series: Vec<f64> = [2.0f64, 10.0, 25.0]
        .iter()
        .map(|d| means.get(&(Scheme::Afmc, 50, d.to_bits())).map(|v| v.0).unwrap_or(f64::NAN))
        .collect();
    let passed = series[0] < series[1] && series[1] < series[2] && series[2] - series[0] >= 2.0;
    outcome(
        passed,
        format!("AFMC at densities 2/10/25: {:.2} / {:.2} / {:.2}", series[0], series[1], series[2]),
    )
}

fn gradient_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = rng_from(seed);
        let input = rng.random_range(3..9);
        let latent = rng.random_range(1..input);
        let model = init_model(input, latent, &mut rng).unwrap();
        let global = init_model(input, latent, &mut rng).unwrap();
        let rows = rng.random_range(1..5);
        let batch: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..input).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random() }).collect())
            .collect();
        let rho = rng.random_range(0.0..0.5);
        let a = gradient(&model, &batch, &global, rho).unwrap();
        let n = finite_diff_gradient(&model, &batch, &global, rho, 1e-5).unwrap();
        worst = worst.max(max_relative_error(&a, &n, 1e-8));
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} over 100 instances"))
}

fn simpson(dist: &VelocityDistribution, steps: usize) -> f64 {
    let h = (dist.u_max - dist.u_min) / steps as f64;
    let mut total = 0.0;
    for i in 0..=steps {
        let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * truncated_gaussian_pdf(dist.u_min + i as f64 * h, dist);
    }
    total * h / 3.0
}

fn sampler() -> Outcome {
    let dist = VelocityDistribution::default();
    let mut rng = rng_from(2024);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_velocity(&dist, &mut rng).unwrap()).collect();
    let in_bounds = xs.iter().all(|&u| (dist.u_min..=dist.u_max).contains(&u));
    let m = mean(&xs);
    let se = (xs.iter().map(|u| (u - m).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
    let mass = simpson(&dist, 4000);
    let symmetric = ((dist.mu - dist.u_min) - (dist.u_max - dist.mu)).abs() < 1e-12;
    outcome(
        in_bounds && symmetric && (mass - 1.0).abs() < 1e-6 && (m - dist.mu).abs() < 3.0 * se,
        format!("in bounds {in_bounds}; pdf integral {mass:.9}; mean {m:.4} vs mu {} (3 SE = {:.4})", dist.mu, 3.0 * se),
    )
}

fn toy_rows(rng: &mut impl Rng, n: usize, width: usize, grid: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..width)
                .map(|_| if grid { rng.random_range(0..3) as f64 } else { rng.random_range(-1.0..1.0) })
                .collect()
        })
        .collect()
}

fn toy_dataset(rng: &mut impl Rng, n: usize, m: usize) -> LocalDataset {
    let rows = (0..n)
        .map(|i| {
            let mut ratings: Vec<(u32, u8)> = Vec::new();
            for c in 1..=m as u32 {
                if rng.random_bool(0.4) {
                    ratings.push((c, rng.random_range(1..=5)));
                }
            }
            let mut personal = [0.0; PERSONAL_WIDTH];
            personal[rng.random_range(0..2)] = 1.0;
            personal[2 + rng.random_range(0..21)] = 1.0;
            VuRow {
                user_id: i as u32 + 1,
                personal,
                test: (0..ratings.len()).collect(),
                train: Vec::new(),
                ratings,
            }
        })
        .collect();
    LocalDataset {
        vehicle_id: 0,
        catalog_size: m as u32,
        rows,
    }
}

fn oracle_equivalence() -> Outcome {
    let instances = 1000u64;
    let mut mismatches = Vec::new();
    let mut checks = 0usize;
    for seed in 0..instances {
        let mut rng = rng_from(seed);
        let n = rng.random_range(2..=10);
        let m = rng.random_range(1..=12);

        let rows = toy_rows(&mut rng, n, 3, seed % 2 == 0);
        for i in 0..n {
            for j in 0..n {
                checks += 1;
                let fast = cosine_similarity(&rows[i], &rows[j]).ok();
                let slow = oracle::cosine(&rows[i], &rows[j]);
                let same = match (fast, slow) {
                    (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
                    (None, None) => true,
                    _ => false,
                };
                if !same {
                    mismatches.push(format!("cosine seed {seed}"));
                }
            }
        }
        let profiles = ProfileMatrix::from_rows(&rows).unwrap();
        let k = rng.random_range(1..n);
        for a in (0..n).filter(|&a| rows[a].iter().any(|&v| v != 0.0)) {
            checks += 1;
            if top_k_neighbors(&profiles, a, k) != oracle::top_k_neighbors(&rows, a, k) {
                mismatches.push(format!("top-k seed {seed}"));
            }
        }

        let ds = toy_dataset(&mut rng, n, m);
        let model = init_model(ds.feature_width(), 3, &mut rng).unwrap();
        let (s, k, f_c) = (rng.random_range(1..=n), rng.random_range(1..n), rng.random_range(1..=m));
        let ratings: RatingMatrix = ds.test_rating_matrix();
        checks += 1;
        if select_active_vus(&ratings, s) != oracle::select_active_vus(&ratings, s) {
            mismatches.push(format!("active VUs seed {seed}"));
        }
        let report = predict_interested(&ds, &model, s, k, f_c).unwrap();
        let h = profile_matrix(&model, &ds).unwrap();
        let h_rows: Vec<Vec<f64>> = (0..h.rows()).map(|i| h.row(i).to_vec()).collect();
        let stacked: Vec<usize> = oracle::select_active_vus(&ratings, s)
            .iter()
            .flat_map(|&a| oracle::top_k_neighbors(&h_rows, a, k))
            .collect();
        checks += 1;
        if report.entries != oracle::popularity_counts(&ratings, &stacked, f_c) {
            mismatches.push(format!("popularity counts seed {seed}"));
        }

        let reports: Vec<PopularityReport> = (0..rng.random_range(1..5u64))
            .map(|v| {
                let mut entries = Vec::new();
                for c in 1..=m as u32 {
                    if rng.random_bool(0.5) {
                        entries.push((c, rng.random_range(1..6u32)));
                    }
                }
                entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                PopularityReport { vehicle_id: v, entries }
            })
            .collect();
        let cap = rng.random_range(1..=m);
        let raw: Vec<Vec<(u32, u32)>> = reports.iter().map(|r| r.entries.clone()).collect();
        checks += 1;
        if merge_popular(&reports, cap) != oracle::merge(&raw, cap) {
            mismatches.push(format!("merge seed {seed}"));
        }
    }
    let first = mismatches.first().cloned().unwrap_or_default();
    outcome(
        mismatches.is_empty(),
        format!("{} mismatches in {checks} comparisons over {instances} instances {first}", mismatches.len()),
    )
}

fn determinism(a: &ExperimentOutput, b: &ExperimentOutput, tmp: &Path) -> Outcome {
    let (da, db) = (tmp.join("run_a"), tmp.join("run_b"));
    emit_summary(a, &da).unwrap();
    emit_summary(b, &db).unwrap();
    let fa = std::fs::read(da.join("results.csv")).unwrap();
    let fb = std::fs::read(db.join("results.csv")).unwrap();
    outcome(
        fa == fb && !a.rows.is_empty(),
        format!("results.csv {} bytes vs {} bytes, identical: {}", fa.len(), fb.len(), fa == fb),
    )
}

fn aggregation_period() -> Outcome {
    let catalog = 30;
    let mut fleet = Fleet::from_vehicles(
        (0..10u64)
            .map(|i| vehicle(i, dataset_with_ratings(i, catalog, 3 * (i as usize + 1)), 0.0, 0.001))
            .collect(),
    );
    let cfg = TrainingConfig {
        rounds: 50,
        latent_dim: 4,
        timing_jitter: 0.0,
        aggregation: AggregationMode::Afmc,
        ..TrainingConfig::default()
    };
    let mut source = FixedSource::new(catalog, 10);
    let mut env = Environment {
        geometry: CoverageGeometry::new(1e9).unwrap(),
        velocity: VelocityDistribution::default(),
        source: &mut source,
    };
    let out = run_training(&mut fleet, &cfg, &mut env, &mut rng_from(3)).unwrap();
    let order: Vec<u64> = out.logs.iter().filter_map(|l| l.aggregator_id).collect();
    let periodic = order.len() == 50 && (0..40).all(|i| order[i] == order[i + 10]);
    let distinct = {
        let mut first: Vec<u64> = order.iter().take(10).copied().collect();
        first.sort_unstable();
        first.dedup();
        first.len() == 10
    };
    let shown: Vec<String> = order.iter().take(12).map(u64::to_string).collect();
    outcome(
        periodic && distinct,
        format!("aggregation order {} ...", shown.join(",")),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("tempdir");
    let (ratings, users) = data_files(tmp.path());
    let base = ExperimentConfig::with_paths(&ratings, &users);
    let corpus = load_corpus(&base).expect("corpus loads");

    let timed = |label: &str, cfg: &ExperimentConfig| {
        let start = Instant::now();
        let out = run_experiment(cfg, &corpus).expect("experiment runs");
        eprintln!("[acceptance] {label} took {:.0} s", start.elapsed().as_secs_f64());
        out
    };
    let run_a = timed("default run", &base);
    let run_b = timed("repeat default run", &base);
    let sweep = timed(
        "capacity sweep",
        &ExperimentConfig {
            capacities: (1..=8).map(|k| 50 * k).collect(),
            ..base.clone()
        },
    );
    let dens = timed(
        "density sweep",
        &ExperimentConfig {
            schemes: vec![Scheme::Afmc],
            densities: vec![2.0, 10.0, 25.0],
            ..base.clone()
        },
    );

    let results = [
        random_baseline(&corpus, &base),
        capacity_monotonicity(&sweep),
        scheme_ordering(&run_a),
        density_trend(&dens),
        gradient_oracle(),
        sampler(),
        oracle_equivalence(),
        determinism(&run_a, &run_b, tmp.path()),
        aggregation_period(),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!r.passed);
        println!("criterion {}: {verdict} {}", i + 1, r.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
