#![allow(dead_code)]

use std::sync::Arc;

use afmc_core::data::{Corpus, LocalDataset, VuRow, PERSONAL_WIDTH};
use afmc_core::mobility::{DatasetSource, VehicleState};
use afmc_core::synth::{generate, SynthConfig};
use afmc_core::Result;

/// A small synthetic corpus that still has MovieLens-like skew.
pub fn small_corpus(seed: u64) -> Arc<Corpus> {
    let cfg = SynthConfig {
        users: 400,
        movies: 120,
        seed,
        median_ratings: 25.0,
        min_ratings: 8,
        max_ratings: 100,
        popularity_offset: 5.0,
        ..SynthConfig::default()
    };
    let synth = generate(&cfg).unwrap();
    Arc::new(Corpus::new(&synth.ratings, &synth.profiles, Some(cfg.movies)).unwrap())
}

/// One VU whose `count` ratings are all in the training set.
pub fn dataset_with_ratings(vehicle_id: u64, catalog: u32, count: usize) -> LocalDataset {
    let ratings: Vec<(u32, u8)> = (0..count).map(|k| ((k as u32 % catalog) + 1, (k % 5 + 1) as u8)).collect();
    let mut personal = [0.0; PERSONAL_WIDTH];
    personal[0] = 1.0;
    personal[2 + vehicle_id as usize % 21] = 1.0;
    let n = ratings.len();
    LocalDataset {
        vehicle_id,
        catalog_size: catalog,
        rows: vec![VuRow {
            user_id: vehicle_id as u32 + 1,
            personal,
            ratings,
            train: (0..n).collect(),
            test: Vec::new(),
        }],
    }
}

pub fn vehicle(id: u64, dataset: LocalDataset, position: f64, velocity: f64) -> VehicleState {
    VehicleState {
        id,
        position,
        velocity,
        dataset: Arc::new(dataset),
        delayed_gradient: None,
    }
}

/// Hands every arriving vehicle a fixed-size dataset.
pub struct FixedSource {
    pub catalog: u32,
    pub ratings: usize,
    pub drawn: usize,
}

impl FixedSource {
    pub fn new(catalog: u32, ratings: usize) -> Self {
        Self {
            catalog,
            ratings,
            drawn: 0,
        }
    }
}

impl DatasetSource for FixedSource {
    fn draw(&mut self, vehicle_id: u64, _rng: &mut dyn rand::RngCore) -> Result<LocalDataset> {
        self.drawn += 1;
        Ok(dataset_with_ratings(vehicle_id, self.catalog, self.ratings))
    }

    fn release(&mut self, _dataset: &LocalDataset) {}
}
