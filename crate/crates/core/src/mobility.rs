//! Vehicle kinematics inside one RSU's coverage.
//!
//! Positions are measured in meters from the coverage entrance, speeds in m/s.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::autoencoder::Gradient;
use crate::data::{LocalDataset, UserPool};
use crate::error::{Error, Result};

/// Smallest probability mass of the truncation interval that still admits sampling.
pub const MIN_TRUNCATION_MASS: f64 = 1e-12;

/// Gaussian speed distribution truncated to `[u_min, u_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for VelocityDistribution {
    fn default() -> Self {
        Self {
            mu: 20.0,
            sigma: 5.0,
            u_min: 10.0,
            u_max: 30.0,
        }
    }
}

impl VelocityDistribution {
    pub fn new(mu: f64, sigma: f64, u_min: f64, u_max: f64) -> Result<Self> {
        let d = Self { mu, sigma, u_min, u_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.sigma, self.u_min, self.u_max].iter().all(|v| v.is_finite());
        if !finite || !(self.sigma > 0.0) || !(self.u_min < self.u_max) || !(self.u_min > 0.0) {
            return Err(Error::Config(format!(
                "velocity distribution needs sigma > 0 and 0 < u_min < u_max, got {self:?}"
            )));
        }
        if self.mass() < MIN_TRUNCATION_MASS {
            return Err(Error::Config(format!(
                "truncation interval [{}, {}] carries negligible probability mass",
                self.u_min, self.u_max
            )));
        }
        Ok(())
    }

    /// Probability mass of the untruncated Gaussian inside `[u_min, u_max]`.
    pub fn mass(&self) -> f64 {
        let s = self.sigma * std::f64::consts::SQRT_2;
        0.5 * (erf((self.u_max - self.mu) / s) - erf((self.u_min - self.mu) / s))
    }
}

/// Density of the truncated Gaussian; zero outside the bounds.
pub fn truncated_gaussian_pdf(u: f64, dist: &VelocityDistribution) -> f64 {
    if u < dist.u_min || u > dist.u_max {
        return 0.0;
    }
    let var = dist.sigma * dist.sigma;
    let kernel = (-(u - dist.mu).powi(2) / (2.0 * var)).exp();
    let s = dist.sigma * std::f64::consts::SQRT_2;
    let norm = (2.0 * std::f64::consts::PI * var).sqrt()
        * (erf((dist.u_max - dist.mu) / s) - erf((dist.u_min - dist.mu) / s));
    // The erf difference is twice the interval mass, hence the factor 2.
    2.0 * kernel / norm
}

/// Rejection sampling from the untruncated Gaussian.
pub fn sample_velocity<R: Rng + ?Sized>(dist: &VelocityDistribution, rng: &mut R) -> Result<f64> {
    dist.validate()?;
    let normal = Normal::new(dist.mu, dist.sigma).map_err(|e| Error::Config(e.to_string()))?;
    loop {
        let u = normal.sample(rng);
        if (dist.u_min..=dist.u_max).contains(&u) {
            return Ok(u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageGeometry {
    /// Coverage range of the RSU in meters.
    pub length: f64,
}

impl CoverageGeometry {
    pub fn new(length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("coverage length must be positive, got {length}")));
        }
        Ok(Self { length })
    }

    pub fn length_km(&self) -> f64 {
        self.length / 1000.0
    }
}

#[derive(Debug, Clone)]
pub struct VehicleState {
    pub id: u64,
    pub position: f64,
    pub velocity: f64,
    pub dataset: Arc<LocalDataset>,
    pub delayed_gradient: Option<Gradient>,
}

/// Remaining time inside coverage.
pub fn staying_time(v: &VehicleState, geom: &CoverageGeometry) -> f64 {
    (geom.length - v.position).max(0.0) / v.velocity
}

/// Time since entering coverage.
pub fn passing_time(v: &VehicleState) -> f64 {
    v.position / v.velocity
}

/// Whether the vehicle stays long enough to train and run inference.
pub fn is_eligible(v: &VehicleState, geom: &CoverageGeometry, t_training: f64, t_inference: f64) -> bool {
    staying_time(v, geom) > t_training + t_inference
}

/// Fraction of the coverage already traversed, clamped to `[0, 1]`.
pub fn mobility_weight(v: &VehicleState, geom: &CoverageGeometry) -> f64 {
    (v.position / geom.length).clamp(0.0, 1.0)
}

/// Vehicles per coverage area for a density in vehicles/km (at least one).
pub fn fleet_size(density: f64, geom: &CoverageGeometry) -> usize {
    ((density * geom.length_km()).round() as usize).max(1)
}

/// Where arriving vehicles get their local data from.
pub trait DatasetSource {
    fn draw(&mut self, vehicle_id: u64, rng: &mut dyn rand::RngCore) -> Result<LocalDataset>;
    fn release(&mut self, dataset: &LocalDataset);
}

impl DatasetSource for UserPool {
    fn draw(&mut self, vehicle_id: u64, rng: &mut dyn rand::RngCore) -> Result<LocalDataset> {
        UserPool::draw(self, vehicle_id, rng)
    }

    fn release(&mut self, dataset: &LocalDataset) {
        UserPool::release(self, dataset)
    }
}

/// The set of vehicles currently inside coverage.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub vehicles: Vec<VehicleState>,
    next_id: u64,
    target_size: usize,
}

impl Fleet {
    /// Explicit fleet, mostly for tests.
    pub fn from_vehicles(vehicles: Vec<VehicleState>) -> Self {
        let next_id = vehicles.iter().map(|v| v.id + 1).max().unwrap_or(0);
        let target_size = vehicles.len();
        Self {
            vehicles,
            next_id,
            target_size,
        }
    }

    /// Initial fleet with positions uniform over the coverage.
    pub fn populate<R: Rng>(
        density: f64,
        geom: &CoverageGeometry,
        dist: &VelocityDistribution,
        source: &mut dyn DatasetSource,
        rng: &mut R,
    ) -> Result<Self> {
        let mut fleet = Self {
            vehicles: Vec::new(),
            next_id: 0,
            target_size: fleet_size(density, geom),
        };
        for _ in 0..fleet.target_size {
            let position = rng.random_range(0.0..=geom.length);
            let v = fleet.arrival(position, dist, source, rng)?;
            fleet.vehicles.push(v);
        }
        Ok(fleet)
    }

    fn arrival<R: Rng>(
        &mut self,
        position: f64,
        dist: &VelocityDistribution,
        source: &mut dyn DatasetSource,
        rng: &mut R,
    ) -> Result<VehicleState> {
        let id = self.next_id;
        self.next_id += 1;
        let velocity = sample_velocity(dist, rng)?;
        let dataset = source.draw(id, rng)?;
        Ok(VehicleState {
            id,
            position,
            velocity,
            dataset: Arc::new(dataset),
            delayed_gradient: None,
        })
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut VehicleState> {
        self.vehicles.iter_mut().find(|v| v.id == id)
    }
}

/// Move every vehicle by `velocity * dt`; vehicles past the exit are replaced
/// in place by fresh arrivals at the entrance. Returns the departed vehicles.
pub fn advance_fleet<R: Rng>(
    fleet: &mut Fleet,
    dt: f64,
    geom: &CoverageGeometry,
    dist: &VelocityDistribution,
    source: &mut dyn DatasetSource,
    rng: &mut R,
) -> Result<Vec<VehicleState>> {
    let mut departed = Vec::new();
    if !(dt > 0.0) {
        return Ok(departed);
    }
    for i in 0..fleet.vehicles.len() {
        fleet.vehicles[i].position += fleet.vehicles[i].velocity * dt;
        if fleet.vehicles[i].position > geom.length {
            source.release(&fleet.vehicles[i].dataset);
            let fresh = fleet.arrival(0.0, dist, source, rng)?;
            departed.push(std::mem::replace(&mut fleet.vehicles[i], fresh));
        }
    }
    while fleet.vehicles.len() < fleet.target_size {
        let v = fleet.arrival(0.0, dist, source, rng)?;
        fleet.vehicles.push(v);
    }
    Ok(departed)
}
