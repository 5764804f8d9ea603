//! End-to-end behaviour of the simulated training loop.

mod common;

use afmc_core::fl::{run_training, AggregationMode, Environment, TrainingConfig};
use afmc_core::mobility::{CoverageGeometry, Fleet, VelocityDistribution};
use afmc_core::seed::rng_from;
use common::{dataset_with_ratings, vehicle, FixedSource};

const CATALOG: u32 = 30;

fn slow_fleet(sizes: &[usize]) -> Fleet {
    Fleet::from_vehicles(
        sizes
            .iter()
            .enumerate()
            .map(|(i, &d)| vehicle(i as u64, dataset_with_ratings(i as u64, CATALOG, d), 0.0, 0.001))
            .collect(),
    )
}

fn cfg(mode: AggregationMode, rounds: usize) -> TrainingConfig {
    TrainingConfig {
        rounds,
        local_iters: 2,
        batch_size: 4,
        latent_dim: 4,
        timing_jitter: 0.0,
        aggregation: mode,
        ..TrainingConfig::default()
    }
}

fn train(fleet: &mut Fleet, cfg: &TrainingConfig, seed: u64) -> afmc_core::TrainingOutcome {
    let mut source = FixedSource::new(CATALOG, 10);
    let mut env = Environment {
        geometry: CoverageGeometry::new(1_000_000.0).unwrap(),
        velocity: VelocityDistribution::default(),
        source: &mut source,
    };
    run_training(fleet, cfg, &mut env, &mut rng_from(seed)).unwrap()
}

#[test]
fn increasing_data_sizes_give_a_period_of_ten() {
    let sizes: Vec<usize> = (1..=10).map(|k| 3 * k).collect();
    let mut fleet = slow_fleet(&sizes);
    let out = train(&mut fleet, &cfg(AggregationMode::Afmc, 40), 1);
    let order: Vec<u64> = out.logs.iter().map(|l| l.aggregator_id.unwrap()).collect();
    assert_eq!(order.len(), 40);
    assert_eq!(&order[..10], &(0..10).collect::<Vec<u64>>()[..]);
    for i in 0..30 {
        assert_eq!(order[i], order[i + 10]);
    }
    // each cohort's first upload is the smallest vehicle, and durations grow within a cohort
    for cohort in out.logs.chunks(10) {
        assert!(cohort.windows(2).all(|w| w[0].sim_duration_s < w[1].sim_duration_s));
    }
}

#[test]
fn later_uploads_in_a_cohort_leave_a_delayed_gradient() {
    let mut fleet = slow_fleet(&[4, 8, 12]);
    train(&mut fleet, &cfg(AggregationMode::Afc, 3), 2);
    assert!(fleet.get(0).unwrap().delayed_gradient.is_none());
    assert!(fleet.get(1).unwrap().delayed_gradient.is_some());
    assert!(fleet.get(2).unwrap().delayed_gradient.is_some());
}

#[test]
fn afc_always_uses_unit_mobility_weight() {
    let mut fleet = slow_fleet(&[4, 8, 12]);
    let out = train(&mut fleet, &cfg(AggregationMode::Afc, 9), 3);
    assert!(out.logs.iter().all(|l| l.chi == 1.0));
}

#[test]
fn fedavg_aggregates_whole_cohorts() {
    let mut fleet = slow_fleet(&[4, 8, 12, 16]);
    let out = train(&mut fleet, &cfg(AggregationMode::Fedavg, 5), 4);
    assert_eq!(out.rounds_completed(), 5);
    for (i, log) in out.logs.iter().enumerate() {
        assert_eq!(log.round, i + 1);
        assert_eq!(log.selected_count, 4);
        assert_eq!(log.aggregator_id, None);
    }
    // the slowest vehicle sets the pace of every synchronous round
    let durations: Vec<f64> = out.logs.iter().map(|l| l.sim_duration_s).collect();
    assert!(durations.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9));
}

#[test]
fn asynchronous_rounds_are_faster_than_synchronous_ones() {
    let sizes = [4, 8, 12, 16, 20];
    let a = train(&mut slow_fleet(&sizes), &cfg(AggregationMode::Afmc, 10), 5);
    let f = train(&mut slow_fleet(&sizes), &cfg(AggregationMode::Fedavg, 10), 5);
    assert!(a.sim_time_s < f.sim_time_s);
}

#[test]
fn training_is_deterministic() {
    let sizes = [5, 9, 13];
    let a = train(&mut slow_fleet(&sizes), &cfg(AggregationMode::Afmc, 6), 6);
    let b = train(&mut slow_fleet(&sizes), &cfg(AggregationMode::Afmc, 6), 6);
    assert_eq!(a.model, b.model);
    // no testing rows here, so the probe loss is NaN; compare the rendered logs
    let render = |o: &afmc_core::TrainingOutcome| o.logs.iter().map(|l| l.csv_row()).collect::<Vec<_>>();
    assert_eq!(render(&a), render(&b));
}

#[test]
fn no_eligible_vehicle_skips_rounds() {
    // every vehicle is about to leave coverage
    let mut fleet = Fleet::from_vehicles(vec![vehicle(0, dataset_with_ratings(0, CATALOG, 6), 999.0, 20.0)]);
    let mut source = FixedSource::new(CATALOG, 6);
    let mut env = Environment {
        geometry: CoverageGeometry::new(1000.0).unwrap(),
        velocity: VelocityDistribution::default(),
        source: &mut source,
    };
    let out = run_training(&mut fleet, &cfg(AggregationMode::Afmc, 3), &mut env, &mut rng_from(0)).unwrap();
    assert_eq!(out.skipped_rounds.first(), Some(&1));
    assert!(source.drawn >= 1, "the departed vehicle is replaced");
}

#[test]
fn vehicles_leaving_mid_training_lose_their_upload() {
    // vehicle 1 is eligible at the start but fast enough to leave before its long job ends
    let mut fleet = Fleet::from_vehicles(vec![
        vehicle(0, dataset_with_ratings(0, CATALOG, 4), 0.0, 0.001),
        vehicle(1, dataset_with_ratings(1, CATALOG, 40), 600.0, 10.0),
    ]);
    let mut source = FixedSource::new(CATALOG, 4);
    let mut env = Environment {
        geometry: CoverageGeometry::new(1000.0).unwrap(),
        velocity: VelocityDistribution::default(),
        source: &mut source,
    };
    let c = TrainingConfig {
        t_training: 4.0,
        t_inference: 0.0,
        ..cfg(AggregationMode::Afmc, 1)
    };
    let out = run_training(&mut fleet, &c, &mut env, &mut rng_from(0)).unwrap();
    assert_eq!(out.logs[0].aggregator_id, Some(0));
    assert!(out.logs.iter().all(|l| l.aggregator_id != Some(1)));
}
