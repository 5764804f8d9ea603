//! Brute-force reference implementations used to cross-check the
//! popularity pipeline and cache accounting. They share no code with the
//! production paths and favour obviousness over speed.

use crate::data::RatingMatrix;

fn naive_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = (0..a.len()).map(|i| a[i] * b[i]).sum();
    let na: f64 = (0..a.len()).map(|i| a[i] * a[i]).sum::<f64>().sqrt();
    let nb: f64 = (0..b.len()).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// Cosine similarity by the textbook formula.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    naive_cosine(a, b)
}

/// Rank every candidate by counting how many other candidates beat it, then
/// keep ranks `0..k`.
pub fn top_k_neighbors(rows: &[Vec<f64>], active: usize, k: usize) -> Vec<usize> {
    let sims: Vec<Option<f64>> = rows
        .iter()
        .enumerate()
        .map(|(j, r)| if j == active { None } else { naive_cosine(&rows[active], r) })
        .collect();
    let beats = |a: usize, b: usize| -> bool {
        // does candidate a rank ahead of candidate b?
        let (sa, sb) = (sims[a].unwrap(), sims[b].unwrap());
        sa > sb || (sa == sb && a < b)
    };
    let mut ranked: Vec<(usize, usize)> = Vec::new();
    for j in 0..rows.len() {
        if sims[j].is_none() {
            continue;
        }
        let rank = (0..rows.len()).filter(|&o| o != j && sims[o].is_some() && beats(o, j)).count();
        ranked.push((rank, j));
    }
    ranked.sort();
    ranked.into_iter().filter(|&(r, _)| r < k).map(|(_, j)| j).collect()
}

/// Active VUs by exhaustive comparison.
pub fn select_active_vus(ratings: &RatingMatrix, s: usize) -> Vec<usize> {
    let n = ratings.rows();
    let count = |i: usize| (1..=ratings.cols() as u32).filter(|&c| ratings.get(i, c) != 0).count();
    let mut ranked: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            let rank = (0..n)
                .filter(|&o| o != i && (count(o) > count(i) || (count(o) == count(i) && o < i)))
                .count();
            (rank, i)
        })
        .collect();
    ranked.sort();
    ranked.into_iter().filter(|&(r, _)| r < s).map(|(_, i)| i).collect()
}

/// Nonzero tally per content over the stacked neighbor rows, then the top
/// `f_c` by count with ties to the lower id.
pub fn popularity_counts(ratings: &RatingMatrix, stacked_rows: &[usize], f_c: usize) -> Vec<(u32, u32)> {
    let m = ratings.cols() as u32;
    let mut tally: Vec<(u32, u32)> = (1..=m)
        .map(|c| {
            let n = stacked_rows.iter().filter(|&&r| ratings.get(r, c) != 0).count() as u32;
            (c, n)
        })
        .filter(|&(_, n)| n > 0)
        .collect();
    let mut out = Vec::new();
    while out.len() < f_c && !tally.is_empty() {
        // repeatedly extract the best remaining entry
        let mut best = 0;
        for i in 1..tally.len() {
            let (c, n) = tally[i];
            let (bc, bn) = tally[best];
            if n > bn || (n == bn && c < bc) {
                best = i;
            }
        }
        out.push(tally.remove(best));
    }
    out
}

/// Sum counts per content across reports by scanning every id.
pub fn merge(reports: &[Vec<(u32, u32)>], capacity: usize) -> Vec<u32> {
    let max_id = reports.iter().flatten().map(|e| e.0).max().unwrap_or(0);
    let mut totals: Vec<(u32, u32)> = Vec::new();
    for c in 1..=max_id {
        let sum: u32 = reports.iter().flatten().filter(|e| e.0 == c).map(|e| e.1).sum();
        if sum > 0 {
            totals.push((c, sum));
        }
    }
    let mut out = Vec::new();
    while out.len() < capacity && !totals.is_empty() {
        let mut best = 0;
        for i in 1..totals.len() {
            if totals[i].1 > totals[best].1 || (totals[i].1 == totals[best].1 && totals[i].0 < totals[best].0) {
                best = i;
            }
        }
        out.push(totals.remove(best).0);
    }
    out
}

/// Hits by checking each request against each cached id.
pub fn count_hits(cached: &[u32], requests: &[u32]) -> (u64, u64) {
    let mut hits = 0;
    for r in requests {
        let mut found = false;
        for c in cached {
            if c == r {
                found = true;
            }
        }
        if found {
            hits += 1;
        }
    }
    (hits, requests.len() as u64 - hits)
}
