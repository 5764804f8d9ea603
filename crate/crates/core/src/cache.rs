//! Request replay, hit accounting and the non-learning cache baselines.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::LocalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    capacity: usize,
    contents: BTreeSet<u32>,
}

impl CacheState {
    pub fn new(capacity: usize, contents: impl IntoIterator<Item = u32>) -> Result<Self> {
        let contents: BTreeSet<u32> = contents.into_iter().collect();
        if contents.len() > capacity {
            return Err(Error::Config(format!(
                "{} contents do not fit a cache of capacity {capacity}",
                contents.len()
            )));
        }
        Ok(Self { capacity, contents })
    }

    pub fn empty(capacity: usize) -> Self {
        Self {
            capacity,
            contents: BTreeSet::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn contains(&self, content_id: u32) -> bool {
        self.contents.contains(&content_id)
    }

    pub fn contents(&self) -> impl Iterator<Item = u32> + '_ {
        self.contents.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn total(&self) -> u64 {
        self.hits + self.misses
    }
}

impl std::ops::AddAssign for CacheStats {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.misses += rhs.misses;
    }
}

/// Each VU requests up to `q_per_vu` distinct contents drawn from its testing set.
pub fn generate_requests<'a, R: Rng + ?Sized>(
    datasets: impl IntoIterator<Item = &'a LocalDataset>,
    q_per_vu: usize,
    rng: &mut R,
) -> Vec<u32> {
    let mut out = Vec::new();
    for ds in datasets {
        for i in 0..ds.len() {
            let contents = ds.test_contents(i);
            let take = q_per_vu.min(contents.len());
            if take == 0 {
                continue;
            }
            out.extend(index::sample(rng, contents.len(), take).into_iter().map(|k| contents[k]));
        }
    }
    out
}

pub fn evaluate_cache(cache: &CacheState, requests: &[u32]) -> CacheStats {
    let hits = requests.iter().filter(|&&r| cache.contains(r)).count() as u64;
    CacheStats {
        hits,
        misses: requests.len() as u64 - hits,
    }
}

/// Hits as a percentage of all requests.
pub fn cache_efficiency(stats: &CacheStats) -> Result<f64> {
    if stats.total() == 0 {
        return Err(Error::NoRequests);
    }
    Ok(stats.hits as f64 / stats.total() as f64 * 100.0)
}

/// `capacity` distinct contents uniformly from `1..=catalog_size`.
pub fn random_policy<R: Rng + ?Sized>(catalog_size: u32, capacity: usize, rng: &mut R) -> CacheState {
    let m = catalog_size as usize;
    let take = capacity.min(m);
    CacheState {
        capacity,
        contents: index::sample(rng, m, take).into_iter().map(|i| i as u32 + 1).collect(),
    }
}

/// How replay outcomes are turned into Beta pseudo-counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BanditFeedback {
    /// Every request is a trial of the requested content: a hit adds to
    /// `alpha`, a request for an uncached content adds to `beta`.
    Requests,
    /// Every cached content is one trial per replay: `alpha` grows if it was
    /// requested at least once, `beta` grows if it sat unused.
    CachedArms,
    /// `alpha` grows by the number of hits on each cached content, `beta` by
    /// one for every cached content nobody requested.
    HitCounts,
}

/// Per-content Beta pseudo-counts, indexed by content id - 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl BanditState {
    /// Uniform `Beta(1, 1)` prior for every content.
    pub fn new(catalog_size: u32) -> Self {
        Self {
            alpha: vec![1.0; catalog_size as usize],
            beta: vec![1.0; catalog_size as usize],
        }
    }

    pub fn catalog_size(&self) -> u32 {
        self.alpha.len() as u32
    }

    pub fn params(&self, content_id: u32) -> (f64, f64) {
        let i = content_id as usize - 1;
        (self.alpha[i], self.beta[i])
    }

    pub fn set(&mut self, content_id: u32, alpha: f64, beta: f64) {
        let i = content_id as usize - 1;
        self.alpha[i] = alpha.max(1.0);
        self.beta[i] = beta.max(1.0);
    }

    pub fn update(&mut self, cache: &CacheState, requests: &[u32], feedback: BanditFeedback) {
        match feedback {
            BanditFeedback::Requests => self.update_per_request(cache, requests),
            BanditFeedback::CachedArms => self.update_cached_arms(cache, requests),
            BanditFeedback::HitCounts => self.update_hit_counts(cache, requests),
        }
    }

    /// Each hit adds to its content's `alpha`, each request for an uncached
    /// content adds to that content's `beta`.
    pub fn update_per_request(&mut self, cache: &CacheState, requests: &[u32]) {
        for &r in requests {
            let i = r as usize - 1;
            if i >= self.alpha.len() {
                continue;
            }
            if cache.contains(r) {
                self.alpha[i] += 1.0;
            } else {
                self.beta[i] += 1.0;
            }
        }
    }

    /// One Bernoulli trial per cached content: requested at least once or not.
    pub fn update_cached_arms(&mut self, cache: &CacheState, requests: &[u32]) {
        let requested: BTreeSet<u32> = requests.iter().copied().collect();
        for c in cache.contents() {
            let i = c as usize - 1;
            if i >= self.alpha.len() {
                continue;
            }
            if requested.contains(&c) {
                self.alpha[i] += 1.0;
            } else {
                self.beta[i] += 1.0;
            }
        }
    }

    pub fn update_hit_counts(&mut self, cache: &CacheState, requests: &[u32]) {
        let mut hits: BTreeMap<u32, u32> = cache.contents().map(|c| (c, 0)).collect();
        for r in requests {
            if let Some(h) = hits.get_mut(r) {
                *h += 1;
            }
        }
        for (c, h) in hits {
            let i = c as usize - 1;
            if i >= self.alpha.len() {
                continue;
            }
            if h > 0 {
                self.alpha[i] += h as f64;
            } else {
                self.beta[i] += 1.0;
            }
        }
    }
}

/// Cache the `capacity` contents with the largest Beta draws.
pub fn thompson_policy<R: Rng + ?Sized>(bandit: &BanditState, capacity: usize, rng: &mut R) -> CacheState {
    let mut draws: Vec<(f64, u32)> = bandit
        .alpha
        .iter()
        .zip(&bandit.beta)
        .enumerate()
        .map(|(i, (&a, &b))| {
            let d = Beta::new(a, b).expect("pseudo-counts are at least 1");
            (d.sample(rng), i as u32 + 1)
        })
        .collect();
    draws.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    CacheState {
        capacity,
        contents: draws.into_iter().take(capacity).map(|(_, c)| c).collect(),
    }
}

/// Historical request counts per content, indexed by content id - 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestCounts(Vec<u64>);

impl RequestCounts {
    pub fn new(catalog_size: u32) -> Self {
        Self(vec![0; catalog_size as usize])
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self(counts)
    }

    pub fn record(&mut self, requests: &[u32]) {
        for &r in requests {
            if let Some(c) = self.0.get_mut(r as usize - 1) {
                *c += 1;
            }
        }
    }

    pub fn get(&self, content_id: u32) -> u64 {
        self.0[content_id as usize - 1]
    }

    pub fn catalog_size(&self) -> u32 {
        self.0.len() as u32
    }
}

/// With probability `1 - epsilon` the top contents by request count (ties to
/// the lower id), otherwise a uniformly random cache.
pub fn epsilon_greedy_policy<R: Rng + ?Sized>(
    counts: &RequestCounts,
    capacity: usize,
    epsilon: f64,
    rng: &mut R,
) -> CacheState {
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        return random_policy(counts.catalog_size(), capacity, rng);
    }
    let mut order: Vec<(u64, u32)> = counts.0.iter().enumerate().map(|(i, &n)| (n, i as u32 + 1)).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    CacheState {
        capacity,
        contents: order.into_iter().take(capacity).map(|(_, c)| c).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{VuRow, PERSONAL_WIDTH};
    use crate::oracle;
    use crate::seed::rng_from;

    fn ds(tests: &[&[u32]]) -> LocalDataset {
        LocalDataset {
            vehicle_id: 0,
            catalog_size: 10,
            rows: tests
                .iter()
                .enumerate()
                .map(|(i, t)| VuRow {
                    user_id: i as u32 + 1,
                    personal: [0.0; PERSONAL_WIDTH],
                    ratings: t.iter().map(|&c| (c, 3)).collect(),
                    train: Vec::new(),
                    test: (0..t.len()).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn requests_respect_availability() {
        let d = ds(&[&[4], &[1, 2, 3, 5, 6], &[]]);
        let reqs = generate_requests([&d], 3, &mut rng_from(0));
        assert_eq!(reqs.len(), 1 + 3);
        assert_eq!(reqs[0], 4);
        let mut vu2 = reqs[1..].to_vec();
        vu2.sort_unstable();
        vu2.dedup();
        assert_eq!(vu2.len(), 3);
        assert_eq!(reqs, generate_requests([&d], 3, &mut rng_from(0)));
    }

    #[test]
    fn evaluation_edge_cases() {
        let reqs = [1, 2, 3, 2, 9];
        let none = evaluate_cache(&CacheState::empty(5), &reqs);
        assert_eq!((none.hits, none.misses), (0, 5));
        let all = CacheState::new(10, 1..=10).unwrap();
        assert_eq!(evaluate_cache(&all, &reqs).hits, 5);
        let some = CacheState::new(2, [2, 9]).unwrap();
        let s = evaluate_cache(&some, &reqs);
        assert_eq!((s.hits, s.misses), oracle::count_hits(&[2, 9], &reqs));
        assert_eq!((s.hits, s.misses), (3, 2));
    }

    #[test]
    fn efficiency_values() {
        let eff = |h, m| cache_efficiency(&CacheStats { hits: h, misses: m }).unwrap();
        assert_eq!(eff(25, 75), 25.0);
        assert_eq!(eff(4, 0), 100.0);
        assert!((eff(11, 89) - 11.0).abs() < 1e-12);
        assert!(matches!(cache_efficiency(&CacheStats::default()), Err(Error::NoRequests)));
    }

    #[test]
    fn random_policy_cases() {
        let whole = random_policy(6, 6, &mut rng_from(0));
        assert_eq!(whole.contents().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(random_policy(100, 7, &mut rng_from(3)), random_policy(100, 7, &mut rng_from(3)));
        assert_eq!(random_policy(100, 7, &mut rng_from(3)).len(), 7);
    }

    #[test]
    fn greedy_takes_top_counts_with_tie_rule() {
        let counts = RequestCounts::from_counts(vec![9, 5, 5, 1]);
        let c = epsilon_greedy_policy(&counts, 2, 0.0, &mut rng_from(0));
        assert_eq!(c.contents().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn greedy_with_full_exploration_is_random_policy() {
        let counts = RequestCounts::from_counts(vec![9, 5, 5, 1, 0, 0, 0, 0]);
        for seed in 0..20 {
            let mut a = rng_from(seed);
            let mut b = rng_from(seed);
            let _coin: f64 = b.random();
            assert_eq!(epsilon_greedy_policy(&counts, 3, 1.0, &mut a), random_policy(8, 3, &mut b));
        }
    }

    #[test]
    fn thompson_favours_the_strong_arm() {
        let mut bandit = BanditState::new(20);
        for c in 1..=20 {
            bandit.set(c, 1.0, 100.0);
        }
        bandit.set(7, 100.0, 1.0);
        let trials = 1000;
        let picked = (0..trials)
            .filter(|&s| thompson_policy(&bandit, 1, &mut rng_from(s)).contains(7))
            .count();
        assert!(picked as f64 / trials as f64 > 0.99);
    }

    #[test]
    fn thompson_is_seeded_and_sized() {
        let bandit = BanditState::new(50);
        let a = thompson_policy(&bandit, 10, &mut rng_from(4));
        assert_eq!(a, thompson_policy(&bandit, 10, &mut rng_from(4)));
        assert_eq!(a.len(), 10);
        assert_eq!(thompson_policy(&bandit, 80, &mut rng_from(4)).len(), 50);
    }

    #[test]
    fn bandit_feedback_counts_hits_and_uncached_requests() {
        let mut bandit = BanditState::new(5);
        let cache = CacheState::new(2, [1, 2]).unwrap();
        bandit.update(&cache, &[1, 1, 3, 2, 3], BanditFeedback::Requests);
        assert_eq!(bandit.params(1), (3.0, 1.0));
        assert_eq!(bandit.params(2), (2.0, 1.0));
        assert_eq!(bandit.params(3), (1.0, 3.0));
        assert_eq!(bandit.params(4), (1.0, 1.0));
    }

    #[test]
    fn cached_arm_feedback_scores_each_cached_content_once() {
        let mut bandit = BanditState::new(5);
        let cache = CacheState::new(3, [1, 2, 5]).unwrap();
        bandit.update(&cache, &[1, 1, 3, 1], BanditFeedback::CachedArms);
        assert_eq!(bandit.params(1), (2.0, 1.0));
        assert_eq!(bandit.params(2), (1.0, 2.0));
        assert_eq!(bandit.params(5), (1.0, 2.0));
        assert_eq!(bandit.params(3), (1.0, 1.0));
    }
}
