//! Fast self-checks against the brute-force oracles and analytic facts,
//! runnable from the command line without any data files.

use rand::Rng;

use crate::autoencoder::{finite_diff_gradient, gradient, init_model, max_relative_error};
use crate::cache::{cache_efficiency, evaluate_cache, random_policy, CacheState, CacheStats};
use crate::data::RatingMatrix;
use crate::mobility::{sample_velocity, truncated_gaussian_pdf, VelocityDistribution};
use crate::oracle;
use crate::popularity::{cosine_similarity, merge_popular, select_active_vus, top_k_neighbors, PopularityReport, ProfileMatrix};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_rows(rng: &mut impl Rng, n: usize, width: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..width)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-1.0..1.0) })
                .collect()
        })
        .collect()
}

fn random_ratings(rng: &mut impl Rng, n: usize, m: usize) -> RatingMatrix {
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| (0..m).map(|_| if rng.random_bool(0.6) { 0 } else { rng.random_range(1..=5) }).collect())
        .collect();
    RatingMatrix::from_rows(&rows).expect("rectangular")
}

fn gradient_check(instances: u64) -> Check {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = rng_from(seed);
        let input = rng.random_range(3..8);
        let latent = rng.random_range(1..input);
        let model = init_model(input, latent, &mut rng).expect("valid dims");
        let global = init_model(input, latent, &mut rng).expect("valid dims");
        let batch: Vec<Vec<f64>> = random_rows(&mut rng, 3, input)
            .into_iter()
            .map(|r| r.into_iter().map(f64::abs).collect())
            .collect();
        let analytic = gradient(&model, &batch, &global, 0.1).expect("shapes match");
        let numeric = finite_diff_gradient(&model, &batch, &global, 0.1, 1e-5).expect("shapes match");
        worst = worst.max(max_relative_error(&analytic, &numeric, 1e-8));
    }
    check(
        "gradient vs central differences",
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {instances} instances"),
    )
}

fn sampler_check() -> Check {
    let dist = VelocityDistribution::default();
    let mut rng = rng_from(11);
    let n = 20_000;
    let samples: Vec<f64> = (0..n).map(|_| sample_velocity(&dist, &mut rng).expect("valid")).collect();
    let in_bounds = samples.iter().all(|&u| (dist.u_min..=dist.u_max).contains(&u));
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    // Simpson's rule over the truncation interval
    let steps = 2000;
    let h = (dist.u_max - dist.u_min) / steps as f64;
    let mut integral = 0.0;
    for i in 0..=steps {
        let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        integral += w * truncated_gaussian_pdf(dist.u_min + i as f64 * h, &dist);
    }
    integral *= h / 3.0;
    let passed = in_bounds && (integral - 1.0).abs() < 1e-6 && (mean - dist.mu).abs() < 3.0 * se;
    check(
        "truncated Gaussian sampler",
        passed,
        format!("in bounds: {in_bounds}, pdf integral {integral:.9}, mean {mean:.4} (se {se:.4})"),
    )
}

fn popularity_oracles(instances: u64) -> Check {
    let mut mismatches = 0;
    for seed in 0..instances {
        let mut rng = rng_from(1000 + seed);
        let n = rng.random_range(2..=10);
        let m = rng.random_range(1..=12);
        let rows = random_rows(&mut rng, n, 4);
        let profiles = ProfileMatrix::from_rows(&rows).expect("rectangular");
        for i in 0..n {
            for j in 0..n {
                let fast = cosine_similarity(&rows[i], &rows[j]).ok();
                let slow = oracle::cosine(&rows[i], &rows[j]);
                if fast.is_some() != slow.is_some()
                    || fast.zip(slow).is_some_and(|(a, b)| (a - b).abs() > 1e-12)
                {
                    mismatches += 1;
                }
            }
        }
        let k = rng.random_range(1..n);
        for a in 0..n {
            if rows[a].iter().all(|&v| v == 0.0) {
                continue;
            }
            if top_k_neighbors(&profiles, a, k) != oracle::top_k_neighbors(&rows, a, k) {
                mismatches += 1;
            }
        }
        let ratings = random_ratings(&mut rng, n, m);
        let s = rng.random_range(1..=n);
        if select_active_vus(&ratings, s) != oracle::select_active_vus(&ratings, s) {
            mismatches += 1;
        }
        let reports: Vec<PopularityReport> = (0..3)
            .map(|v| {
                let mut entries = Vec::new();
                for c in 1..=m as u32 {
                    if rng.random_bool(0.5) {
                        entries.push((c, rng.random_range(1..6)));
                    }
                }
                entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                PopularityReport { vehicle_id: v, entries }
            })
            .collect();
        let cap = rng.random_range(1..=m);
        let raw: Vec<Vec<(u32, u32)>> = reports.iter().map(|r| r.entries.clone()).collect();
        if merge_popular(&reports, cap) != oracle::merge(&raw, cap) {
            mismatches += 1;
        }
    }
    check(
        "popularity operations vs brute force",
        mismatches == 0,
        format!("{mismatches} mismatches over {instances} toy instances"),
    )
}

fn cache_checks() -> Check {
    let mut rng = rng_from(5);
    let mut ok = true;
    for _ in 0..50 {
        let cache = random_policy(30, 7, &mut rng);
        let requests: Vec<u32> = (0..20).map(|_| rng.random_range(1..=30)).collect();
        let stats = evaluate_cache(&cache, &requests);
        let cached: Vec<u32> = cache.contents().collect();
        ok &= (stats.hits, stats.misses) == oracle::count_hits(&cached, &requests);
        ok &= stats.total() == requests.len() as u64;
    }
    ok &= cache_efficiency(&CacheStats { hits: 25, misses: 75 }).ok() == Some(25.0);
    ok &= cache_efficiency(&CacheStats::default()).is_err();
    ok &= evaluate_cache(&CacheState::empty(3), &[1, 2]).hits == 0;
    check("cache accounting", ok, "hit counts, efficiency, edge cases".into())
}

fn random_baseline_check() -> Check {
    let seeds = 200;
    let mut total = 0.0;
    let mut rng = rng_from(77);
    let requests: Vec<u32> = (0..500).map(|_| rng.random_range(1..=3883)).collect();
    for seed in 0..seeds {
        let cache = random_policy(3883, 50, &mut rng_from(seed));
        total += cache_efficiency(&evaluate_cache(&cache, &requests)).expect("requests present");
    }
    let mean = total / seeds as f64;
    check(
        "random cache hits about C/m",
        (1.0..=1.6).contains(&mean),
        format!("mean efficiency {mean:.3} % (expected {:.3} %)", 50.0 / 3883.0 * 100.0),
    )
}

/// Run every self-check.
pub fn run_selftest() -> Vec<Check> {
    vec![
        gradient_check(100),
        sampler_check(),
        popularity_oracles(200),
        cache_checks(),
        random_baseline_check(),
    ]
}
