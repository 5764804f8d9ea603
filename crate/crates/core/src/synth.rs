//! Synthetic rating corpus in the MovieLens `.dat` layout.
//!
//! Useful when the real files are unavailable. Content popularity follows a
//! shifted power law over a random rank-to-id permutation, per-user rating
//! counts are log-normal, and every user leans towards one genre that is
//! mostly determined by their profile, so personal information carries signal
//! about taste.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Gender, RatingRecord, UserProfile, AGE_CODES, MAX_RATING, OCCUPATIONS};
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Approximate MovieLens-1M shares of the seven age buckets.
const AGE_WEIGHTS: [f64; 7] = [222.0, 1103.0, 2096.0, 1193.0, 550.0, 496.0, 380.0];
/// Approximate MovieLens-1M shares of the ratings 1 to 5.
const RATING_WEIGHTS: [f64; 5] = [0.056, 0.108, 0.261, 0.349, 0.226];
const FIRST_TIMESTAMP: i64 = 956_703_932;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub users: usize,
    pub movies: u32,
    pub seed: u64,
    /// Median ratings per user.
    pub median_ratings: f64,
    /// Log-scale spread of ratings per user.
    pub ratings_sigma: f64,
    pub min_ratings: usize,
    pub max_ratings: usize,
    /// Popularity of rank `r` (from 1) is `(r + offset)^-exponent`.
    pub popularity_offset: f64,
    pub popularity_exponent: f64,
    pub genres: usize,
    /// Weight multiplier for contents of a user's preferred genre.
    pub taste_boost: f64,
    /// Probability that a user's preferred genre follows from their profile.
    pub profile_taste: f64,
    pub male_share: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 6040,
            movies: 3883,
            seed: 1,
            median_ratings: 96.0,
            ratings_sigma: 1.04,
            min_ratings: 20,
            max_ratings: 2314,
            popularity_offset: 45.0,
            popularity_exponent: 1.02,
            genres: 18,
            taste_boost: 3.0,
            profile_taste: 0.7,
            male_share: 0.72,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.users == 0 || self.movies == 0 {
            return bad("users and movies must be positive");
        }
        if self.min_ratings == 0 || self.min_ratings > self.max_ratings {
            return bad("need 1 <= min_ratings <= max_ratings");
        }
        if self.max_ratings > self.movies as usize {
            return bad("max_ratings exceeds the catalog");
        }
        if !(self.median_ratings > 0.0) || !(self.ratings_sigma >= 0.0) {
            return bad("median_ratings must be positive and ratings_sigma non-negative");
        }
        if !(self.popularity_offset >= 0.0) || !(self.popularity_exponent >= 0.0) {
            return bad("popularity parameters must be non-negative");
        }
        if self.genres == 0 || !(self.taste_boost >= 1.0) {
            return bad("need at least one genre and taste_boost >= 1");
        }
        if !(0.0..=1.0).contains(&self.profile_taste) || !(0.0..=1.0).contains(&self.male_share) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub profiles: Vec<UserProfile>,
    pub ratings: Vec<RatingRecord>,
}

fn preferred_genre<R: Rng + ?Sized>(p: &UserProfile, cfg: &SynthConfig, rng: &mut R) -> usize {
    if rng.random_bool(cfg.profile_taste) {
        let g = matches!(p.gender, Gender::Male) as usize;
        (p.age_bucket as usize * 5 + p.occupation as usize * 3 + g * 7) % cfg.genres
    } else {
        rng.random_range(0..cfg.genres)
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = rng_from(cfg.seed);
    let m = cfg.movies as usize;

    // content id of each popularity rank
    let mut ids: Vec<u32> = (1..=cfg.movies).collect();
    ids.shuffle(&mut rng);
    let base: Vec<f64> = (1..=m)
        .map(|r| (r as f64 + cfg.popularity_offset).powf(-cfg.popularity_exponent))
        .collect();
    let genre: Vec<usize> = (0..m).map(|_| rng.random_range(0..cfg.genres)).collect();

    let ages = WeightedIndex::new(AGE_WEIGHTS).expect("static weights");
    let stars = WeightedIndex::new(RATING_WEIGHTS).expect("static weights");
    let counts = LogNormal::new(cfg.median_ratings.ln(), cfg.ratings_sigma)
        .map_err(|e| Error::Config(format!("synth: {e}")))?;

    let mut profiles = Vec::with_capacity(cfg.users);
    let mut ratings = Vec::new();
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(m);
    for u in 0..cfg.users {
        let profile = UserProfile {
            user_id: u as u32 + 1,
            gender: if rng.random_bool(cfg.male_share) {
                Gender::Male
            } else {
                Gender::Female
            },
            age_bucket: ages.sample(&mut rng) as u8,
            occupation: rng.random_range(0..OCCUPATIONS as u8),
            zip_prefix: rng.random_range(0..10),
        };
        let fav = preferred_genre(&profile, cfg, &mut rng);
        let n = (counts.sample(&mut rng).round() as usize).clamp(cfg.min_ratings, cfg.max_ratings);

        // Weighted sampling without replacement: keep the n smallest Exp(1)/w keys.
        keys.clear();
        for r in 0..m {
            let w = if genre[r] == fav { base[r] * cfg.taste_boost } else { base[r] };
            let e: f64 = -(1.0 - rng.random::<f64>()).ln();
            keys.push((e / w, r));
        }
        keys.select_nth_unstable_by(n - 1, |a, b| a.0.total_cmp(&b.0));
        let mut chosen: Vec<u32> = keys[..n].iter().map(|&(_, r)| ids[r]).collect();
        chosen.sort_unstable();
        let mut t = FIRST_TIMESTAMP + rng.random_range(0..20_000_000);
        for content_id in chosen {
            t += rng.random_range(1..600);
            ratings.push(RatingRecord {
                user_id: profile.user_id,
                content_id,
                rating: stars.sample(&mut rng) as u8 + 1,
                timestamp: t,
            });
        }
        profiles.push(profile);
    }
    debug_assert!(ratings.iter().all(|r| r.rating <= MAX_RATING));
    Ok(SynthCorpus { profiles, ratings })
}

fn zip_code<R: Rng + ?Sized>(prefix: u8, rng: &mut R) -> String {
    format!("{prefix}{:04}", rng.random_range(0..10_000))
}

impl SynthCorpus {
    pub fn users_dat(&self, seed: u64) -> String {
        let mut rng = rng_from(seed ^ 0x5a5a);
        let mut out = String::new();
        for p in &self.profiles {
            let g = match p.gender {
                Gender::Female => 'F',
                Gender::Male => 'M',
            };
            let _ = writeln!(
                out,
                "{}::{}::{}::{}::{}",
                p.user_id,
                g,
                AGE_CODES[p.age_bucket as usize],
                p.occupation,
                zip_code(p.zip_prefix, &mut rng)
            );
        }
        out
    }

    pub fn ratings_dat(&self) -> String {
        let mut out = String::with_capacity(self.ratings.len() * 24);
        for r in &self.ratings {
            let _ = writeln!(out, "{}::{}::{}::{}", r.user_id, r.content_id, r.rating, r.timestamp);
        }
        out
    }

    /// Write `ratings.dat` and `users.dat` into `dir`.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ratings = dir.join("ratings.dat");
        fs::write(&ratings, self.ratings_dat()).map_err(|e| Error::io(&ratings, e))?;
        let users = dir.join("users.dat");
        fs::write(&users, self.users_dat(seed)).map_err(|e| Error::io(&users, e))?;
        Ok(())
    }
}
