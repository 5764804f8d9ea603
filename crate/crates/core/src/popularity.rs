//! Content popularity prediction from the trained global model.
//!
//! Each vehicle encodes its VUs' testing rows, appends their personal
//! information, finds the `K` most cosine-similar VUs for each of its `s`
//! most active VUs, and counts how many of those neighbor rows rated each
//! content. The RSU sums the per-vehicle reports and caches the top contents.

use std::collections::BTreeMap;
use std::io::Write;

use log::warn;

use crate::autoencoder::{self, ModelParams};
use crate::data::{LocalDataset, RatingMatrix};
use crate::error::{Error, Result};

/// Per-VU latent features followed by personal information, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    width: usize,
    values: Vec<f64>,
}

impl ProfileMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape("profile rows have different widths".into()));
        }
        Ok(Self {
            width,
            values: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopularityReport {
    pub vehicle_id: u64,
    /// `(content_id, count)`, count descending then id ascending.
    pub entries: Vec<(u32, u32)>,
}

impl PopularityReport {
    pub fn content_ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// `vehicle_id,content_id,count` lines, no header.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        for (c, n) in &self.entries {
            writeln!(w, "{},{},{}", self.vehicle_id, c, n)?;
        }
        Ok(())
    }
}

/// Encoder output for every VU's testing feature row.
pub fn latent_features(model: &ModelParams, dataset: &LocalDataset) -> Result<Vec<Vec<f64>>> {
    if dataset.feature_width() != model.input_dim() {
        return Err(Error::Shape(format!(
            "dataset width {} does not match model input {}",
            dataset.feature_width(),
            model.input_dim()
        )));
    }
    (0..dataset.len())
        .map(|i| autoencoder::encode(model, &dataset.test_features(i)))
        .collect()
}

pub fn profile_matrix(model: &ModelParams, dataset: &LocalDataset) -> Result<ProfileMatrix> {
    let latent = latent_features(model, dataset)?;
    let rows: Vec<Vec<f64>> = latent
        .into_iter()
        .zip(&dataset.rows)
        .map(|(mut z, row)| {
            z.extend_from_slice(&row.personal);
            z
        })
        .collect();
    ProfileMatrix::from_rows(&rows)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vector widths {} and {} differ", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// The `s` rows with the most nonzero ratings, ties to the lower index.
pub fn select_active_vus(ratings: &RatingMatrix, s: usize) -> Vec<usize> {
    let mut order: Vec<(usize, usize)> = (0..ratings.rows()).map(|i| (ratings.nonzero_count(i), i)).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(s).map(|(_, i)| i).collect()
}

/// The `k` rows most similar to `active`, excluding itself and zero rows.
pub fn top_k_neighbors(profiles: &ProfileMatrix, active: usize, k: usize) -> Vec<usize> {
    let anchor = profiles.row(active);
    let mut scored: Vec<(f64, usize)> = (0..profiles.rows())
        .filter(|&j| j != active)
        .filter_map(|j| cosine_similarity(anchor, profiles.row(j)).ok().map(|s| (s, j)))
        .collect();
    if scored.len() < k {
        warn!(
            "VU {active}: only {} neighbor candidates for K = {k}",
            scored.len()
        );
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Sort `(content, count)` by count descending, id ascending, and keep `limit`.
fn rank_counts(counts: impl IntoIterator<Item = (u32, u32)>, limit: usize) -> Vec<(u32, u32)> {
    let mut v: Vec<(u32, u32)> = counts.into_iter().filter(|&(_, n)| n > 0).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(limit);
    v
}

/// Predict a vehicle's `f_c` most interesting contents. `s` and `k` are
/// clamped to the number of VUs available.
pub fn predict_interested(
    dataset: &LocalDataset,
    model: &ModelParams,
    s: usize,
    k: usize,
    f_c: usize,
) -> Result<PopularityReport> {
    let profiles = profile_matrix(model, dataset)?;
    let ratings = dataset.test_rating_matrix();
    let active = select_active_vus(&ratings, s.min(ratings.rows()));
    let k = k.min(ratings.rows().saturating_sub(1));
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for &a in &active {
        for nb in top_k_neighbors(&profiles, a, k) {
            for (j, &r) in ratings.row(nb).iter().enumerate() {
                if r != 0 {
                    *counts.entry(j as u32 + 1).or_default() += 1;
                }
            }
        }
    }
    Ok(PopularityReport {
        vehicle_id: dataset.vehicle_id,
        entries: rank_counts(counts, f_c),
    })
}

/// Sum counts across reports and keep the `capacity` most popular contents.
pub fn merge_popular(reports: &[PopularityReport], capacity: usize) -> Vec<u32> {
    let mut totals: BTreeMap<u32, u32> = BTreeMap::new();
    for r in reports {
        for &(c, n) in &r.entries {
            *totals.entry(c).or_default() += n;
        }
    }
    rank_counts(totals, capacity).into_iter().map(|(c, _)| c).collect()
}
