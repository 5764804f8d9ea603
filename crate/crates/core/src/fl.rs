//! Mobility-aware asynchronous federated training of the autoencoder, plus
//! the AFC (no mobility weight) and FedAVG (synchronous) baselines.
//!
//! Time is simulated. Each training cohort starts when no local job is in
//! flight: every eligible vehicle downloads the current global model and
//! trains locally, taking `c * d_i * (1 + jitter)` seconds for a training set
//! of `d_i` ratings. In the asynchronous modes every completed upload is its
//! own round, applied in completion order; the first upload of a cohort is
//! fresh and the later ones are delayed models, whose final gradient is also
//! kept on the vehicle and folded into its next local run with weight `beta`.
//! Vehicles that leave coverage before finishing lose their job. FedAVG waits
//! for the whole cohort and averages the uploads that arrived.

use std::io::Write;

use log::{debug, warn};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, step_in_place, ModelParams};
use crate::autoencoder::Gradient;
use crate::data::SparseRow;
use crate::error::{Error, Result};
use crate::mobility::{
    advance_fleet, is_eligible, mobility_weight, CoverageGeometry, DatasetSource, Fleet, VehicleState,
    VelocityDistribution,
};
use crate::seed::child_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Asynchronous, weighted by data share and mobility.
    Afmc,
    /// Asynchronous, weighted by data share only.
    Afc,
    /// Synchronous data-size-weighted averaging.
    Fedavg,
}

/// How an asynchronous upload is folded into the global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsyncUpdate {
    /// `global + a * local`, exactly as the additive rule is written.
    Additive,
    /// `(1 - a) * global + a * local`.
    Convex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub local_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub beta: f64,
    /// Average local training time in seconds.
    pub t_training: f64,
    pub t_inference: f64,
    pub aggregation: AggregationMode,
    pub async_update: AsyncUpdate,
    pub latent_dim: usize,
    /// Relative half-width of the uniform jitter on simulated training time.
    pub timing_jitter: f64,
    /// Testing rows of the initial fleet used to report the global loss.
    pub probe_rows: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            local_iters: 5,
            batch_size: 32,
            learning_rate: 1.0,
            rho: 0.1,
            beta: 0.5,
            t_training: 10.0,
            t_inference: 2.0,
            aggregation: AggregationMode::Afmc,
            async_update: AsyncUpdate::Convex,
            latent_dim: 64,
            timing_jitter: 0.1,
            probe_rows: 32,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("training.{msg}")));
        if self.rounds < 1 {
            return bad("rounds must be at least 1");
        }
        if self.local_iters < 1 {
            return bad("local_iters must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.rho >= 0.0) {
            return bad("rho must be non-negative");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if !(self.t_training > 0.0) || !(self.t_inference >= 0.0) {
            return bad("t_training must be positive and t_inference non-negative");
        }
        if !(0.0..1.0).contains(&self.timing_jitter) {
            return bad("timing_jitter must lie in [0, 1)");
        }
        if self.latent_dim < 1 {
            return bad("latent_dim must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub selected_count: usize,
    /// `None` for FedAVG rounds, which aggregate the whole cohort.
    pub aggregator_id: Option<u64>,
    pub chi: f64,
    pub weight: f64,
    /// Training time of the aggregated upload, from model download to upload.
    pub sim_duration_s: f64,
    pub probe_loss: f64,
    /// Simulation clock when the round closed.
    pub sim_time_s: f64,
}

pub const ROUND_LOG_HEADER: &str = "round,selected_count,aggregator_id,chi,weight,sim_duration_s,probe_loss";

impl RoundLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.9}",
            self.round,
            self.selected_count,
            self.aggregator_id.map(|id| id.to_string()).unwrap_or_default(),
            self.chi,
            self.weight,
            self.sim_duration_s,
            self.probe_loss
        )
    }
}

pub fn write_round_logs(logs: &[RoundLog], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{ROUND_LOG_HEADER}")?;
    for log in logs {
        writeln!(w, "{}", log.csv_row())?;
    }
    Ok(())
}

/// `eta * max(1, ln r)`.
pub fn learning_rate(round: usize, eta: f64) -> f64 {
    eta * (round.max(1) as f64).ln().max(1.0)
}

#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub model: ModelParams,
    /// The last combined descent direction (regularized gradient plus weighted delayed gradient).
    pub last_direction: Gradient,
}

/// Run `local_iters` proximal SGD steps from `global`, folding in the
/// vehicle's delayed gradient (which is consumed). Returns `None` when the
/// vehicle has no training data.
pub fn local_train<R: Rng + ?Sized>(
    vehicle: &mut VehicleState,
    global: &ModelParams,
    cfg: &TrainingConfig,
    round: usize,
    rng: &mut R,
) -> Result<Option<LocalUpdate>> {
    let delayed = vehicle.delayed_gradient.take();
    let rows = vehicle.dataset.trainable_rows();
    if rows.is_empty() {
        warn!("vehicle {} has an empty training set, skipping", vehicle.id);
        return Ok(None);
    }
    if let Some(d) = &delayed {
        if !d.matches(global) {
            return Err(Error::Shape("delayed gradient does not match the global model".into()));
        }
    }
    let features: Vec<SparseRow> = rows.iter().map(|&i| vehicle.dataset.train_features(i)).collect();
    let lr = learning_rate(round, cfg.learning_rate);
    let batch_len = cfg.batch_size.min(features.len());
    let mut model = global.clone();
    let mut direction = Gradient::zeros_like(global);
    for _ in 0..cfg.local_iters {
        let batch: Vec<SparseRow> = index::sample(rng, features.len(), batch_len)
            .into_iter()
            .map(|k| features[k].clone())
            .collect();
        autoencoder::gradient_into(&model, &batch, global, cfg.rho, &mut direction)?;
        if let Some(d) = &delayed {
            if cfg.beta != 0.0 {
                direction.add_scaled(d, cfg.beta)?;
            }
        }
        step_in_place(&mut model, &direction, lr)?;
    }
    Ok(Some(LocalUpdate {
        model,
        last_direction: direction,
    }))
}

/// Fold one upload into the global model with coefficient `(d_i / d_total) * chi`.
pub fn aggregate_async(
    global: &ModelParams,
    local: &ModelParams,
    d_i: usize,
    d_total: usize,
    chi: f64,
    rule: AsyncUpdate,
) -> Result<ModelParams> {
    if !global.same_shape(local) {
        return Err(Error::Shape("local and global models differ".into()));
    }
    if d_i == 0 || d_i > d_total || !(0.0..=1.0).contains(&chi) {
        return Err(Error::Aggregation(format!(
            "invalid weights d_i={d_i}, d_total={d_total}, chi={chi}"
        )));
    }
    let alpha = d_i as f64 / d_total as f64 * chi;
    if alpha > 1.0 {
        return Err(Error::Aggregation(format!("mixing coefficient {alpha} exceeds 1")));
    }
    let mut next = global.clone();
    let out = next.as_flat_mut();
    match rule {
        AsyncUpdate::Additive => {
            for (w, &l) in out.iter_mut().zip(local.as_flat()) {
                *w += alpha * l;
            }
        }
        AsyncUpdate::Convex => {
            for (w, &l) in out.iter_mut().zip(local.as_flat()) {
                *w = (1.0 - alpha) * *w + alpha * l;
            }
        }
    }
    Ok(next)
}

/// Data-size-weighted average of the local models.
pub fn aggregate_fedavg(global: &ModelParams, locals: &[(ModelParams, usize)]) -> Result<ModelParams> {
    if locals.is_empty() {
        return Err(Error::Aggregation("no local models to average".into()));
    }
    let total: usize = locals.iter().map(|(_, d)| d).sum();
    if total == 0 {
        return Err(Error::Aggregation("local data sizes sum to zero".into()));
    }
    // Running weighted mean: identical locals reproduce that local exactly.
    let mut acc = vec![0.0; global.num_params()];
    let mut seen = 0usize;
    for (m, d) in locals {
        if !m.same_shape(global) {
            return Err(Error::Shape("local and global models differ".into()));
        }
        if *d == 0 {
            continue;
        }
        seen += d;
        let w = *d as f64 / seen as f64;
        for (a, &v) in acc.iter_mut().zip(m.as_flat()) {
            *a += w * (v - *a);
        }
    }
    ModelParams::from_flat(global.input_dim(), global.latent_dim(), acc)
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: ModelParams,
    pub logs: Vec<RoundLog>,
    pub skipped_rounds: Vec<usize>,
    pub sim_time_s: f64,
}

impl TrainingOutcome {
    pub fn rounds_completed(&self) -> usize {
        self.logs.len()
    }
}

/// Simulation environment shared by the training loop.
pub struct Environment<'a> {
    pub geometry: CoverageGeometry,
    pub velocity: VelocityDistribution,
    pub source: &'a mut dyn DatasetSource,
}

struct Job {
    vehicle_id: u64,
    update: LocalUpdate,
    data_size: usize,
    duration: f64,
}

fn median(mut xs: Vec<usize>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_unstable();
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2] as f64
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) as f64 / 2.0
    })
}

fn probe_batch(fleet: &Fleet, limit: usize) -> Vec<SparseRow> {
    let mut out = Vec::new();
    for v in &fleet.vehicles {
        for i in 0..v.dataset.len() {
            if out.len() >= limit {
                return out;
            }
            if !v.dataset.rows[i].test.is_empty() {
                out.push(v.dataset.test_features(i));
            }
        }
    }
    out
}

/// Run the full training protocol; see the module docs.
pub fn run_training<R: Rng>(
    fleet: &mut Fleet,
    cfg: &TrainingConfig,
    env: &mut Environment<'_>,
    rng: &mut R,
) -> Result<TrainingOutcome> {
    run_training_observed(fleet, cfg, env, rng, |_, _| {})
}

/// [`run_training`] with a callback after every aggregated round.
pub fn run_training_observed<R: Rng>(
    fleet: &mut Fleet,
    cfg: &TrainingConfig,
    env: &mut Environment<'_>,
    rng: &mut R,
    mut observer: impl FnMut(&RoundLog, &ModelParams),
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let input_dim = fleet
        .vehicles
        .first()
        .map(|v| v.dataset.feature_width())
        .ok_or_else(|| Error::Config("training needs a nonempty fleet".into()))?;
    let run_seed: u64 = rng.random();
    let mut global = autoencoder::init_model(input_dim, cfg.latent_dim, rng)?;
    let probe = probe_batch(fleet, cfg.probe_rows);
    let probe_loss = |m: &ModelParams| -> Result<f64> {
        if probe.is_empty() {
            Ok(f64::NAN)
        } else {
            autoencoder::mse_loss(m, &probe)
        }
    };

    let sizes: Vec<usize> = fleet
        .vehicles
        .iter()
        .map(|v| v.dataset.train_size())
        .filter(|&d| d > 0)
        .collect();
    let secs_per_sample = cfg.t_training / median(sizes).unwrap_or(1.0);

    let mut logs = Vec::new();
    let mut skipped = Vec::new();
    let mut clock = 0.0;
    let mut round = 1;

    while round <= cfg.rounds {
        let mut selected: Vec<u64> = fleet
            .vehicles
            .iter()
            .filter(|v| is_eligible(v, &env.geometry, cfg.t_training, cfg.t_inference))
            .map(|v| v.id)
            .collect();
        selected.sort_unstable();

        let mut jobs = Vec::with_capacity(selected.len());
        for &id in &selected {
            let vehicle = fleet.get_mut(id).expect("selected vehicle is in the fleet");
            let mut job_rng = child_rng(run_seed, &[round as u64, id]);
            let Some(update) = local_train(vehicle, &global, cfg, round, &mut job_rng)? else {
                continue;
            };
            let data_size = vehicle.dataset.train_size();
            let jitter = if cfg.timing_jitter > 0.0 {
                1.0 + cfg.timing_jitter * job_rng.random_range(-1.0..=1.0)
            } else {
                1.0
            };
            jobs.push(Job {
                vehicle_id: id,
                update,
                data_size,
                duration: secs_per_sample * data_size as f64 * jitter,
            });
        }

        if jobs.is_empty() {
            warn!("round {round}: no eligible vehicle, global model unchanged");
            skipped.push(round);
            round += 1;
            advance_fleet(fleet, cfg.t_training, &env.geometry, &env.velocity, env.source, rng)?;
            clock += cfg.t_training;
            continue;
        }

        let d_total: usize = jobs.iter().map(|j| j.data_size).sum();
        let cohort = jobs.len();
        jobs.sort_by(|a, b| a.duration.total_cmp(&b.duration).then(a.vehicle_id.cmp(&b.vehicle_id)));
        let start = clock;
        let mut elapsed = 0.0;

        match cfg.aggregation {
            AggregationMode::Fedavg => {
                let longest = jobs.last().map_or(0.0, |j| j.duration);
                advance_fleet(fleet, longest, &env.geometry, &env.velocity, env.source, rng)?;
                clock = start + longest;
                let arrived: Vec<(ModelParams, usize)> = jobs
                    .into_iter()
                    .filter(|j| fleet.get(j.vehicle_id).is_some())
                    .map(|j| (j.update.model, j.data_size))
                    .collect();
                if arrived.is_empty() {
                    warn!("round {round}: every vehicle left before uploading");
                    skipped.push(round);
                } else {
                    global = aggregate_fedavg(&global, &arrived)?;
                    let log = RoundLog {
                        round,
                        selected_count: cohort,
                        aggregator_id: None,
                        chi: 1.0,
                        weight: 1.0,
                        sim_duration_s: longest,
                        probe_loss: probe_loss(&global)?,
                        sim_time_s: clock,
                    };
                    observer(&log, &global);
                    logs.push(log);
                }
                round += 1;
            }
            AggregationMode::Afmc | AggregationMode::Afc => {
                let mut uploads = 0;
                for job in jobs {
                    if round > cfg.rounds {
                        break;
                    }
                    advance_fleet(
                        fleet,
                        job.duration - elapsed,
                        &env.geometry,
                        &env.velocity,
                        env.source,
                        rng,
                    )?;
                    elapsed = job.duration;
                    clock = start + elapsed;
                    let Some(vehicle) = fleet.get_mut(job.vehicle_id) else {
                        debug!("vehicle {} left coverage before uploading", job.vehicle_id);
                        continue;
                    };
                    let chi = match cfg.aggregation {
                        AggregationMode::Afmc => mobility_weight(vehicle, &env.geometry),
                        _ => 1.0,
                    };
                    if uploads > 0 {
                        vehicle.delayed_gradient = Some(job.update.last_direction);
                    }
                    global = aggregate_async(
                        &global,
                        &job.update.model,
                        job.data_size,
                        d_total,
                        chi,
                        cfg.async_update,
                    )?;
                    uploads += 1;
                    let log = RoundLog {
                        round,
                        selected_count: cohort,
                        aggregator_id: Some(job.vehicle_id),
                        chi,
                        weight: job.data_size as f64 / d_total as f64,
                        sim_duration_s: job.duration,
                        probe_loss: probe_loss(&global)?,
                        sim_time_s: clock,
                    };
                    observer(&log, &global);
                    logs.push(log);
                    round += 1;
                }
                if uploads == 0 {
                    warn!("round {round}: every vehicle left before uploading");
                    skipped.push(round);
                    round += 1;
                }
            }
        }
        if !global.all_finite() {
            return Err(Error::Aggregation(format!(
                "global model diverged (non-finite parameters) by round {}",
                round - 1
            )));
        }
    }

    Ok(TrainingOutcome {
        model: global,
        logs,
        skipped_rounds: skipped,
        sim_time_s: clock,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LocalDataset, VuRow, PERSONAL_WIDTH};
    use crate::seed::rng_from;
    use crate::autoencoder::apply_step;
    use std::sync::Arc;

    fn toy_model(values: &[f64]) -> ModelParams {
        // 2 inputs, 1 latent -> 7 parameters
        ModelParams::from_flat(2, 1, values.to_vec()).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn learning_rate_schedule() {
        assert_eq!(learning_rate(1, 0.01), 0.01);
        assert_eq!(learning_rate(2, 0.01), 0.01);
        assert!((learning_rate(10, 0.01) - 0.01 * 10f64.ln()).abs() < 1e-15);
        assert!((learning_rate(10, 1.0) - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn additive_update_hand_value() {
        let g = toy_model(&[1.0; 7]);
        let l = toy_model(&[2.0; 7]);
        // 1 + 0.5 * 0.2 * 2 = 1.2
        let out = aggregate_async(&g, &l, 1, 2, 0.2, AsyncUpdate::Additive).unwrap();
        assert!(out.as_flat().iter().all(|&v| (v - 1.2).abs() < 1e-15));
    }

    #[test]
    fn convex_update_endpoints() {
        let g = toy_model(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let l = toy_model(&[-1.0; 7]);
        assert_eq!(aggregate_async(&g, &l, 3, 3, 1.0, AsyncUpdate::Convex).unwrap(), l);
        assert_eq!(aggregate_async(&g, &l, 1, 3, 0.0, AsyncUpdate::Convex).unwrap(), g);
        assert!(aggregate_async(&g, &l, 4, 3, 1.0, AsyncUpdate::Convex).is_err());
        assert!(aggregate_async(&g, &l, 1, 3, 1.5, AsyncUpdate::Convex).is_err());
    }

    #[test]
    fn fedavg_hand_values() {
        let g = toy_model(&[0.0; 7]);
        let only = toy_model(&[3.0; 7]);
        assert_eq!(aggregate_fedavg(&g, &[(only.clone(), 5)]).unwrap(), only);

        let a = toy_model(&[0.0; 7]);
        let b = toy_model(&[2.0; 7]);
        let mid = aggregate_fedavg(&g, &[(a, 4), (b, 4)]).unwrap();
        assert!(mid.as_flat().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let locals = [(toy_model(&[6.0; 7]), 1), (toy_model(&[6.0; 7]), 2), (toy_model(&[12.0; 7]), 3)];
        let avg = aggregate_fedavg(&g, &locals).unwrap();
        assert!(avg.as_flat().iter().all(|&v| (v - 9.0).abs() < 1e-12));

        assert!(matches!(aggregate_fedavg(&g, &[]), Err(Error::Aggregation(_))));
    }

    fn toy_vehicle(id: u64, ratings: &[(u32, u8)], position: f64) -> VehicleState {
        let row = VuRow {
            user_id: id as u32 + 1,
            personal: [0.0; PERSONAL_WIDTH],
            ratings: ratings.to_vec(),
            train: (0..ratings.len()).collect(),
            test: Vec::new(),
        };
        VehicleState {
            id,
            position,
            velocity: 20.0,
            dataset: Arc::new(LocalDataset {
                vehicle_id: id,
                catalog_size: 4,
                rows: vec![row],
            }),
            delayed_gradient: None,
        }
    }

    #[test]
    fn single_iteration_matches_manual_step() {
        // e = 1 with a one-row dataset: the batch is fixed, so the result is
        // exactly global - lr * grad(global).
        let mut v = toy_vehicle(0, &[(1, 5), (3, 2)], 0.0);
        let global = autoencoder::init_model(PERSONAL_WIDTH + 4, 3, &mut rng_from(1)).unwrap();
        let cfg = TrainingConfig {
            local_iters: 1,
            learning_rate: 0.5,
            ..TrainingConfig::default()
        };
        let up = local_train(&mut v, &global, &cfg, 1, &mut rng_from(2)).unwrap().unwrap();
        let x = v.dataset.train_features(0);
        let g = autoencoder::gradient(&global, &[x], &global, cfg.rho).unwrap();
        let want = apply_step(&global, &g, 0.5).unwrap();
        assert_eq!(up.model, want);
        assert_eq!(up.last_direction, g);
    }

    #[test]
    fn delayed_gradient_is_added_with_beta_and_consumed() {
        let mut v = toy_vehicle(0, &[(2, 4)], 0.0);
        let global = autoencoder::init_model(PERSONAL_WIDTH + 4, 2, &mut rng_from(3)).unwrap();
        let delayed = Gradient::from_flat_like(&global, vec![0.25; global.num_params()]).unwrap();
        v.delayed_gradient = Some(delayed.clone());
        let cfg = TrainingConfig {
            local_iters: 1,
            beta: 0.5,
            ..TrainingConfig::default()
        };
        let up = local_train(&mut v, &global, &cfg, 1, &mut rng_from(0)).unwrap().unwrap();
        assert!(v.delayed_gradient.is_none());
        let mut want = autoencoder::gradient(&global, &[v.dataset.train_features(0)], &global, cfg.rho).unwrap();
        want.add_scaled(&delayed, 0.5).unwrap();
        assert_eq!(up.last_direction, want);

        // beta = 0 with no buffer is plain proximal SGD
        let cfg0 = TrainingConfig { beta: 0.0, ..cfg };
        let a = local_train(&mut v, &global, &cfg0, 1, &mut rng_from(0)).unwrap().unwrap();
        let plain = autoencoder::gradient(&global, &[v.dataset.train_features(0)], &global, cfg0.rho).unwrap();
        assert_eq!(a.last_direction, plain);
    }

    #[test]
    fn empty_training_set_is_skipped() {
        let mut v = toy_vehicle(0, &[], 0.0);
        let global = ModelParams::zeros(PERSONAL_WIDTH + 4, 2).unwrap();
        let out = local_train(&mut v, &global, &TrainingConfig::default(), 1, &mut rng_from(0)).unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn invalid_training_config_is_rejected() {
        for cfg in [
            TrainingConfig { rounds: 0, ..Default::default() },
            TrainingConfig { local_iters: 0, ..Default::default() },
            TrainingConfig { learning_rate: 0.0, ..Default::default() },
            TrainingConfig { rho: -1.0, ..Default::default() },
            TrainingConfig { beta: -0.1, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        TrainingConfig::default().validate().unwrap();
    }

    #[test]
    fn round_log_csv_layout() {
        let log = RoundLog {
            round: 3,
            selected_count: 10,
            aggregator_id: Some(7),
            chi: 0.5,
            weight: 0.1,
            sim_duration_s: 12.5,
            probe_loss: 0.25,
            sim_time_s: 40.0,
        };
        assert_eq!(log.csv_row(), "3,10,7,0.500000,0.100000,12.500000,0.250000000");
        let mut buf = Vec::new();
        write_round_logs(&[log], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(ROUND_LOG_HEADER));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn convex_update_stays_between_endpoints(
            seed in any::<u64>(), d_i in 1usize..50, extra in 0usize..50, chi in 0.0f64..=1.0,
        ) {
            let mut rng = rng_from(seed);
            let g = autoencoder::init_model(6, 2, &mut rng).unwrap();
            let l = autoencoder::init_model(6, 2, &mut rng).unwrap();
            let out = aggregate_async(&g, &l, d_i, d_i + extra, chi, AsyncUpdate::Convex).unwrap();
            for ((&o, &a), &b) in out.as_flat().iter().zip(g.as_flat()).zip(l.as_flat()) {
                prop_assert!(o >= a.min(b) - 1e-15 && o <= a.max(b) + 1e-15);
            }
        }

        #[test]
        fn fedavg_of_identical_locals_is_that_local(seed in any::<u64>(), sizes in prop::collection::vec(1usize..100, 1..6)) {
            let mut rng = rng_from(seed);
            let g = autoencoder::init_model(5, 2, &mut rng).unwrap();
            let l = autoencoder::init_model(5, 2, &mut rng).unwrap();
            let locals: Vec<_> = sizes.iter().map(|&d| (l.clone(), d)).collect();
            let out = aggregate_fedavg(&g, &locals).unwrap();
            for (&o, &w) in out.as_flat().iter().zip(l.as_flat()) {
                prop_assert_eq!(o, w);
            }
        }
    }
}
