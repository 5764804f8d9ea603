//! Experiment configuration, the seeded scheme x capacity x density x
//! repetition sweep, and CSV emission.
//!
//! Every `(density, repetition)` pair gets one evaluation world shared by all
//! schemes: a snapshot of vehicles whose predictions build the FL caches,
//! followed by `epochs` later snapshots whose VUs issue the requests. The
//! learning baselines replay the same epochs, updating their counters after
//! each one. FL schemes also share their training world, so AFMC, AFC and
//! FedAVG differ only in how they aggregate.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::autoencoder::ModelParams;
use crate::cache::{
    epsilon_greedy_policy, evaluate_cache, random_policy, thompson_policy, BanditFeedback, BanditState,
    CacheState, CacheStats, RequestCounts,
};
use crate::data::{Corpus, LocalDataset, UserPool};
use crate::error::{Error, Result};
use crate::fl::{run_training_observed, write_round_logs, AggregationMode, Environment, RoundLog, TrainingConfig};
use crate::mobility::{advance_fleet, CoverageGeometry, Fleet, VelocityDistribution};
use crate::popularity::{merge_popular, predict_interested, PopularityReport};
use crate::seed::{child_rng, child_seed};
use crate::cache::generate_requests;

/// Seed-path tags for the streams shared between schemes.
const WORLD_TAG: u64 = 0xE7A1;
const TRAIN_TAG: u64 = 0x7EA1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Afmc,
    Afc,
    Fedavg,
    Random,
    Thompson,
    Greedy,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Afmc,
        Scheme::Afc,
        Scheme::Fedavg,
        Scheme::Random,
        Scheme::Thompson,
        Scheme::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Afmc => "afmc",
            Scheme::Afc => "afc",
            Scheme::Fedavg => "fedavg",
            Scheme::Random => "random",
            Scheme::Thompson => "thompson",
            Scheme::Greedy => "greedy",
        }
    }

    /// Position in [`Scheme::ALL`], used in seed derivation.
    pub fn index(self) -> u64 {
        Scheme::ALL.iter().position(|&s| s == self).expect("listed") as u64
    }

    pub fn aggregation(self) -> Option<AggregationMode> {
        match self {
            Scheme::Afmc => Some(AggregationMode::Afmc),
            Scheme::Afc => Some(AggregationMode::Afc),
            Scheme::Fedavg => Some(AggregationMode::Fedavg),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub vus_per_vehicle: usize,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            vus_per_vehicle: 20,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionConfig {
    /// Active VUs per vehicle.
    pub active_vus: usize,
    /// Neighbors per active VU.
    pub neighbors: usize,
    /// Contents each vehicle reports; `null` means the cache capacity.
    pub popular_per_vehicle: Option<usize>,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            active_vus: 10,
            neighbors: 5,
            popular_per_vehicle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub epochs: usize,
    pub epoch_duration_s: f64,
    pub requests_per_vu: usize,
    pub epsilon: f64,
    pub bandit_feedback: BanditFeedback,
    /// Evaluate the FL caches every this many rounds for the per-round traces; 0 disables.
    pub trace_every: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            epoch_duration_s: 60.0,
            requests_per_vu: 2,
            epsilon: 0.1,
            bandit_feedback: BanditFeedback::HitCounts,
            trace_every: 10,
        }
    }
}

fn default_coverage() -> f64 {
    1000.0
}
fn default_capacities() -> Vec<usize> {
    vec![50]
}
fn default_densities() -> Vec<f64> {
    vec![10.0]
}
fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}
fn default_repetitions() -> usize {
    5
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Top-level experiment description. Relative paths are resolved against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ratings_path: PathBuf,
    pub users_path: PathBuf,
    /// Number of contents; defaults to the largest id in the ratings.
    #[serde(default)]
    pub catalog_size: Option<u32>,
    /// The `aggregation` field is overridden per scheme.
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub velocity: VelocityDistribution,
    #[serde(default = "default_coverage")]
    pub coverage_m: f64,
    #[serde(default = "default_capacities")]
    pub capacities: Vec<usize>,
    /// Vehicles per km.
    #[serde(default = "default_densities")]
    pub densities: Vec<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub prediction: PredictionConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Write each trained global model as a checkpoint.
    #[serde(default)]
    pub save_models: bool,
}

impl ExperimentConfig {
    /// A config with every optional key at its default.
    pub fn with_paths(ratings_path: impl Into<PathBuf>, users_path: impl Into<PathBuf>) -> Self {
        let json = serde_json::json!({
            "ratings_path": ratings_path.into(),
            "users_path": users_path.into(),
        });
        serde_json::from_value(json).expect("defaults deserialize")
    }

    /// Check every invariant except file existence.
    pub fn validate_values(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if self.capacities.is_empty() || self.densities.is_empty() || self.schemes.is_empty() {
            return bad("capacities, densities and schemes must be nonempty".into());
        }
        if self.capacities.contains(&0) {
            return bad("capacities must be positive".into());
        }
        if let Some(&d) = self.densities.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return bad(format!("density {d} must be positive"));
        }
        if !(self.coverage_m.is_finite() && self.coverage_m > 0.0) {
            return bad("coverage_m must be positive".into());
        }
        if self.catalog_size == Some(0) {
            return bad("catalog_size must be positive".into());
        }
        self.training.validate()?;
        self.velocity.validate()?;
        if self.data.vus_per_vehicle < 1 {
            return bad("data.vus_per_vehicle must be at least 1".into());
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return bad("data.train_fraction must lie in (0, 1)".into());
        }
        if self.prediction.active_vus < 1 || self.prediction.neighbors < 1 {
            return bad("prediction.active_vus and prediction.neighbors must be at least 1".into());
        }
        if self.prediction.popular_per_vehicle == Some(0) {
            return bad("prediction.popular_per_vehicle must be positive".into());
        }
        let e = &self.evaluation;
        if e.epochs < 1 || e.requests_per_vu < 1 {
            return bad("evaluation.epochs and evaluation.requests_per_vu must be at least 1".into());
        }
        if !(e.epoch_duration_s > 0.0) {
            return bad("evaluation.epoch_duration_s must be positive".into());
        }
        if !(0.0..=1.0).contains(&e.epsilon) {
            return bad("evaluation.epsilon must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        for p in [&self.ratings_path, &self.users_path] {
            if !p.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.ratings_path, &mut self.users_path, &mut self.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Parse strict JSON, resolve relative paths, and validate.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    cfg.resolve_paths(base_dir);
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}

pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Arc<Corpus>> {
    Ok(Arc::new(Corpus::load(&cfg.ratings_path, &cfg.users_path, cfg.catalog_size)?))
}

/// One `(scheme, capacity, density, repetition)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub capacity: usize,
    pub density: f64,
    pub repetition: usize,
    pub seed: u64,
    pub hits: u64,
    pub misses: u64,
    pub efficiency_pct: f64,
    /// Simulated training time; zero for the non-FL schemes.
    pub sim_training_s: f64,
    /// Aggregated rounds for FL schemes, replay epochs for the learning baselines.
    pub rounds_completed: usize,
}

pub const RESULTS_HEADER: &str =
    "scheme,capacity,density,seed,hits,misses,efficiency_pct,repetition,sim_training_s,rounds_completed";

impl ResultRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{},{:.3},{}",
            self.scheme,
            self.capacity,
            self.density,
            self.seed,
            self.hits,
            self.misses,
            self.efficiency_pct,
            self.repetition,
            self.sim_training_s,
            self.rounds_completed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub scheme: Scheme,
    pub capacity: usize,
    pub density: f64,
    pub repetition: usize,
    pub message: String,
}

/// Cache efficiency of an FL scheme part way through training.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub scheme: Scheme,
    pub capacity: usize,
    pub density: f64,
    pub repetition: usize,
    pub round: usize,
    pub efficiency_pct: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub scheme: Scheme,
    pub density: f64,
    pub repetition: usize,
    pub logs: Vec<RoundLog>,
    pub model: Option<ModelParams>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
    pub traces: Vec<TracePoint>,
    pub runs: Vec<TrainingRun>,
}

/// Seed of one sweep cell. Capacity 0 names the per-scheme training stream.
pub fn cell_seed(master: u64, scheme: Scheme, capacity: usize, density: f64, repetition: usize) -> u64 {
    child_seed(
        master,
        &[scheme.index(), capacity as u64, density.to_bits(), repetition as u64],
    )
}

/// Predictor snapshot plus the request trace of every replay epoch.
#[derive(Debug, Clone)]
pub struct EvalWorld {
    pub predictors: Vec<Arc<LocalDataset>>,
    pub epochs: Vec<Vec<u32>>,
    pub catalog_size: u32,
}

impl EvalWorld {
    pub fn total_requests(&self) -> usize {
        self.epochs.iter().map(Vec::len).sum()
    }

    /// Hits and misses of one static cache over every epoch.
    pub fn replay_static(&self, cache: &CacheState) -> CacheStats {
        let mut stats = CacheStats::default();
        for reqs in &self.epochs {
            stats += evaluate_cache(cache, reqs);
        }
        stats
    }
}

fn geometry(cfg: &ExperimentConfig) -> Result<CoverageGeometry> {
    CoverageGeometry::new(cfg.coverage_m)
}

pub fn build_world(corpus: &Arc<Corpus>, cfg: &ExperimentConfig, density: f64, seed: u64) -> Result<EvalWorld> {
    let mut rng = child_rng(seed, &[]);
    let geom = geometry(cfg)?;
    let mut pool = UserPool::new(corpus.clone(), cfg.data.vus_per_vehicle, cfg.data.train_fraction)?;
    let mut fleet = Fleet::populate(density, &geom, &cfg.velocity, &mut pool, &mut rng)?;
    let predictors = fleet.vehicles.iter().map(|v| v.dataset.clone()).collect();
    let mut epochs = Vec::with_capacity(cfg.evaluation.epochs);
    for _ in 0..cfg.evaluation.epochs {
        advance_fleet(
            &mut fleet,
            cfg.evaluation.epoch_duration_s,
            &geom,
            &cfg.velocity,
            &mut pool,
            &mut rng,
        )?;
        let reqs = generate_requests(
            fleet.vehicles.iter().map(|v| &*v.dataset),
            cfg.evaluation.requests_per_vu,
            &mut rng,
        );
        epochs.push(reqs);
    }
    Ok(EvalWorld {
        predictors,
        epochs,
        catalog_size: corpus.catalog_size(),
    })
}

/// Full (untruncated) popularity report of every predictor vehicle.
pub fn predict_reports(model: &ModelParams, world: &EvalWorld, pred: &PredictionConfig) -> Result<Vec<PopularityReport>> {
    world
        .predictors
        .iter()
        .map(|ds| predict_interested(ds, model, pred.active_vus, pred.neighbors, usize::MAX))
        .collect()
}

/// The RSU cache for `capacity` built from full reports truncated to `F_c`.
pub fn fl_cache(reports: &[PopularityReport], capacity: usize, pred: &PredictionConfig) -> CacheState {
    let f_c = pred.popular_per_vehicle.unwrap_or(capacity);
    let truncated: Vec<PopularityReport> = reports
        .iter()
        .map(|r| PopularityReport {
            vehicle_id: r.vehicle_id,
            entries: r.entries.iter().take(f_c).copied().collect(),
        })
        .collect();
    CacheState::new(capacity, merge_popular(&truncated, capacity)).expect("merge respects capacity")
}

fn efficiency(stats: &CacheStats) -> f64 {
    if stats.total() == 0 {
        0.0
    } else {
        stats.hits as f64 / stats.total() as f64 * 100.0
    }
}

fn row(scheme: Scheme, capacity: usize, density: f64, rep: usize, seed: u64, stats: CacheStats) -> ResultRow {
    ResultRow {
        scheme,
        capacity,
        density,
        repetition: rep,
        seed,
        hits: stats.hits,
        misses: stats.misses,
        efficiency_pct: efficiency(&stats),
        sim_training_s: 0.0,
        rounds_completed: 0,
    }
}

/// Replay a learning or random baseline over the epochs of `world`.
pub fn run_baseline(
    scheme: Scheme,
    world: &EvalWorld,
    capacity: usize,
    eval: &EvaluationConfig,
    seed: u64,
) -> Result<CacheStats> {
    let mut rng = child_rng(seed, &[]);
    let m = world.catalog_size;
    let mut bandit = BanditState::new(m);
    let mut counts = RequestCounts::new(m);
    let mut stats = CacheStats::default();
    for reqs in &world.epochs {
        let cache = match scheme {
            Scheme::Random => random_policy(m, capacity, &mut rng),
            Scheme::Thompson => thompson_policy(&bandit, capacity, &mut rng),
            Scheme::Greedy => epsilon_greedy_policy(&counts, capacity, eval.epsilon, &mut rng),
            other => return Err(Error::Config(format!("{other} is not a replay baseline"))),
        };
        stats += evaluate_cache(&cache, reqs);
        match scheme {
            Scheme::Thompson => bandit.update(&cache, reqs, eval.bandit_feedback),
            Scheme::Greedy => counts.record(reqs),
            _ => {}
        }
    }
    Ok(stats)
}

struct FlResult {
    outcome_time: f64,
    rounds: usize,
    reports: Vec<PopularityReport>,
    traces: Vec<(usize, usize, f64)>,
    logs: Vec<RoundLog>,
    model: ModelParams,
}

fn train_fl(
    scheme: Scheme,
    corpus: &Arc<Corpus>,
    cfg: &ExperimentConfig,
    world: &EvalWorld,
    density: f64,
    seed: u64,
) -> Result<FlResult> {
    let mut tcfg = cfg.training.clone();
    tcfg.aggregation = scheme.aggregation().expect("FL scheme");
    let mut rng = child_rng(seed, &[]);
    let geom = geometry(cfg)?;
    let mut pool = UserPool::new(corpus.clone(), cfg.data.vus_per_vehicle, cfg.data.train_fraction)?;
    let mut fleet = Fleet::populate(density, &geom, &cfg.velocity, &mut pool, &mut rng)?;
    let mut env = Environment {
        geometry: geom,
        velocity: cfg.velocity,
        source: &mut pool,
    };
    let every = cfg.evaluation.trace_every;
    let mut traces = Vec::new();
    let mut trace_err = None;
    let outcome = run_training_observed(&mut fleet, &tcfg, &mut env, &mut rng, |log, model| {
        if every == 0 || log.round % every != 0 || trace_err.is_some() {
            return;
        }
        match predict_reports(model, world, &cfg.prediction) {
            Ok(reports) => {
                for &c in &cfg.capacities {
                    let stats = world.replay_static(&fl_cache(&reports, c, &cfg.prediction));
                    traces.push((log.round, c, efficiency(&stats)));
                }
            }
            Err(e) => trace_err = Some(e),
        }
    })?;
    if let Some(e) = trace_err {
        return Err(e);
    }
    let reports = predict_reports(&outcome.model, world, &cfg.prediction)?;
    Ok(FlResult {
        outcome_time: outcome.sim_time_s,
        rounds: outcome.rounds_completed(),
        reports,
        traces,
        logs: outcome.logs,
        model: outcome.model,
    })
}

/// Run the whole sweep. Failing cells are recorded, never dropped.
pub fn run_experiment(cfg: &ExperimentConfig, corpus: &Arc<Corpus>) -> Result<ExperimentOutput> {
    cfg.validate_values()?;
    let mut out = ExperimentOutput::default();
    let mut schemes = cfg.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut capacities = cfg.capacities.clone();
    capacities.sort_unstable();
    capacities.dedup();

    for &density in &cfg.densities {
        for rep in 0..cfg.repetitions {
            let world_seed = child_seed(cfg.seed, &[WORLD_TAG, density.to_bits(), rep as u64]);
            let world = match build_world(corpus, cfg, density, world_seed) {
                Ok(w) => w,
                Err(e) => {
                    warn!("density {density} repetition {rep}: {e}");
                    for &s in &schemes {
                        for &c in &capacities {
                            out.failures.push(CellFailure {
                                scheme: s,
                                capacity: c,
                                density,
                                repetition: rep,
                                message: e.to_string(),
                            });
                        }
                    }
                    continue;
                }
            };
            if world.total_requests() == 0 {
                warn!("density {density} repetition {rep}: no requests were generated");
            }
            for &scheme in &schemes {
                info!("{scheme}: density {density}, repetition {rep}");
                if scheme.aggregation().is_some() {
                    let train_seed = child_seed(cfg.seed, &[TRAIN_TAG, density.to_bits(), rep as u64]);
                    match train_fl(scheme, corpus, cfg, &world, density, train_seed) {
                        Ok(fl) => {
                            for &c in &capacities {
                                let stats = world.replay_static(&fl_cache(&fl.reports, c, &cfg.prediction));
                                let mut r = row(scheme, c, density, rep, cell_seed(cfg.seed, scheme, c, density, rep), stats);
                                r.sim_training_s = fl.outcome_time;
                                r.rounds_completed = fl.rounds;
                                out.rows.push(r);
                            }
                            for (round, capacity, efficiency_pct) in fl.traces {
                                out.traces.push(TracePoint {
                                    scheme,
                                    capacity,
                                    density,
                                    repetition: rep,
                                    round,
                                    efficiency_pct,
                                });
                            }
                            out.runs.push(TrainingRun {
                                scheme,
                                density,
                                repetition: rep,
                                logs: fl.logs,
                                model: cfg.save_models.then_some(fl.model),
                            });
                        }
                        Err(e) => {
                            warn!("{scheme} density {density} repetition {rep}: {e}");
                            for &c in &capacities {
                                out.failures.push(CellFailure {
                                    scheme,
                                    capacity: c,
                                    density,
                                    repetition: rep,
                                    message: e.to_string(),
                                });
                            }
                        }
                    }
                } else {
                    for &c in &capacities {
                        let seed = cell_seed(cfg.seed, scheme, c, density, rep);
                        match run_baseline(scheme, &world, c, &cfg.evaluation, seed) {
                            Ok(stats) => {
                                let mut r = row(scheme, c, density, rep, seed, stats);
                                if scheme != Scheme::Random {
                                    r.rounds_completed = world.epochs.len();
                                }
                                out.rows.push(r);
                            }
                            Err(e) => out.failures.push(CellFailure {
                                scheme,
                                capacity: c,
                                density,
                                repetition: rep,
                                message: e.to_string(),
                            }),
                        }
                    }
                }
            }
        }
    }
    sort_output(&mut out);
    Ok(out)
}

fn cell_key(s: Scheme, c: usize, d: f64, r: usize) -> (Scheme, usize, u64, usize) {
    // densities are positive, so their bit patterns order like the values
    (s, c, d.to_bits(), r)
}

fn sort_output(out: &mut ExperimentOutput) {
    out.rows.sort_by_key(|r| cell_key(r.scheme, r.capacity, r.density, r.repetition));
    out.failures.sort_by_key(|f| cell_key(f.scheme, f.capacity, f.density, f.repetition));
    out.traces
        .sort_by_key(|t| (cell_key(t.scheme, t.capacity, t.density, t.repetition), t.round));
    out.runs.sort_by_key(|r| cell_key(r.scheme, 0, r.density, r.repetition));
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean efficiency per `(scheme, capacity, density)` over repetitions.
pub fn cell_means(rows: &[ResultRow]) -> BTreeMap<(Scheme, usize, u64), (f64, f64, usize)> {
    let mut groups: BTreeMap<(Scheme, usize, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scheme, r.capacity, r.density.to_bits()))
            .or_default()
            .push(r.efficiency_pct);
    }
    groups
        .into_iter()
        .map(|(k, v)| {
            let (m, s) = mean_std(&v);
            (k, (m, s, v.len()))
        })
        .collect()
}

pub const COLUMNS_README: &str = "\
# Output columns

## results.csv
One row per (scheme, capacity, density, repetition) cell, sorted in that order.
- `scheme`: afmc, afc, fedavg, random, thompson or greedy.
- `capacity`: cache capacity in contents.
- `density`: vehicles per km.
- `seed`: child seed of the cell, derived from the master seed.
- `hits`, `misses`: request outcomes summed over every replay epoch.
- `efficiency_pct`: hits / (hits + misses) x 100.
- `repetition`: repetition index from 0.
- `sim_training_s`: simulated training time of the FL run; 0 for other schemes.
- `rounds_completed`: aggregated rounds (FL) or replay epochs (thompson, greedy); 0 for random.

## table1.csv
Mean `efficiency_pct` over repetitions. One row per (scheme, density), one
column per capacity.

## fig4.csv
`scheme,capacity,density,mean_efficiency_pct,std_efficiency_pct,repetitions`:
the same means with their sample standard deviation, long format.

## fig5.csv
`scheme,capacity,density,round,mean_efficiency_pct,repetitions`: cache
efficiency of the FL caches built from the global model after `round`
aggregations, averaged over repetitions.

## fig3.csv
`scheme,density,repetition,round,aggregator_id,sim_duration_s,sim_time_s`:
per-round simulated training time of every FL run. `aggregator_id` is empty
for FedAVG rounds.

## failures.csv
`scheme,capacity,density,repetition,message`: cells that failed and have no
row in results.csv.

## round_logs/<scheme>_d<density>_r<repetition>.csv
`round,selected_count,aggregator_id,chi,weight,sim_duration_s,probe_loss`
for every FL run.
";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Write every summary file into `out_dir`, creating it if needed.
pub fn emit_summary(out: &ExperimentOutput, out_dir: &Path) -> Result<()> {
    if out.rows.is_empty() && out.failures.is_empty() {
        return Err(Error::Config("nothing to summarize".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("results.csv"), &results_csv(&out.rows))?;

    let means = cell_means(&out.rows);
    let mut capacities: Vec<usize> = out.rows.iter().map(|r| r.capacity).collect();
    capacities.sort_unstable();
    capacities.dedup();
    let mut table = String::from("scheme,density");
    for c in &capacities {
        table.push_str(&format!(",{c}"));
    }
    table.push('\n');
    let mut pairs: Vec<(Scheme, u64)> = means.keys().map(|&(s, _, d)| (s, d)).collect();
    pairs.dedup();
    pairs.sort();
    pairs.dedup();
    for (s, d) in pairs {
        table.push_str(&format!("{s},{}", f64::from_bits(d)));
        for &c in &capacities {
            match means.get(&(s, c, d)) {
                Some((m, _, _)) => table.push_str(&format!(",{m:.4}")),
                None => table.push(','),
            }
        }
        table.push('\n');
    }
    write_file(&out_dir.join("table1.csv"), &table)?;

    let mut fig4 = String::from("scheme,capacity,density,mean_efficiency_pct,std_efficiency_pct,repetitions\n");
    for (&(s, c, d), &(m, sd, n)) in &means {
        fig4.push_str(&format!("{s},{c},{},{m:.4},{sd:.4},{n}\n", f64::from_bits(d)));
    }
    write_file(&out_dir.join("fig4.csv"), &fig4)?;

    let mut traces: BTreeMap<(Scheme, usize, u64, usize), Vec<f64>> = BTreeMap::new();
    for t in &out.traces {
        traces
            .entry((t.scheme, t.capacity, t.density.to_bits(), t.round))
            .or_default()
            .push(t.efficiency_pct);
    }
    let mut fig5 = String::from("scheme,capacity,density,round,mean_efficiency_pct,repetitions\n");
    for (&(s, c, d, round), v) in &traces {
        let (m, _) = mean_std(v);
        fig5.push_str(&format!("{s},{c},{},{round},{m:.4},{}\n", f64::from_bits(d), v.len()));
    }
    write_file(&out_dir.join("fig5.csv"), &fig5)?;

    let mut fig3 = String::from("scheme,density,repetition,round,aggregator_id,sim_duration_s,sim_time_s\n");
    for run in &out.runs {
        for log in &run.logs {
            fig3.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6}\n",
                run.scheme,
                run.density,
                run.repetition,
                log.round,
                log.aggregator_id.map(|i| i.to_string()).unwrap_or_default(),
                log.sim_duration_s,
                log.sim_time_s
            ));
        }
    }
    write_file(&out_dir.join("fig3.csv"), &fig3)?;

    let mut failures = String::from("scheme,capacity,density,repetition,message\n");
    for f in &out.failures {
        failures.push_str(&format!(
            "{},{},{},{},{}\n",
            f.scheme,
            f.capacity,
            f.density,
            f.repetition,
            csv_field(&f.message)
        ));
    }
    write_file(&out_dir.join("failures.csv"), &failures)?;
    write_file(&out_dir.join("COLUMNS.md"), COLUMNS_README)?;

    if !out.runs.is_empty() {
        let logs_dir = out_dir.join("round_logs");
        fs::create_dir_all(&logs_dir).map_err(|e| Error::io(&logs_dir, e))?;
        for run in &out.runs {
            let stem = format!("{}_d{}_r{}", run.scheme, run.density, run.repetition);
            let path = logs_dir.join(format!("{stem}.csv"));
            let mut buf = Vec::new();
            write_round_logs(&run.logs, &mut buf).map_err(|e| Error::io(&path, e))?;
            fs::File::create(&path)
                .and_then(|mut f| f.write_all(&buf))
                .map_err(|e| Error::io(&path, e))?;
            if let Some(model) = &run.model {
                let models_dir = out_dir.join("models");
                fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
                model.save(models_dir.join(format!("{stem}.model")))?;
            }
        }
    }
    Ok(())
}
