//! Space-filling initial designs on a convex hull domain.
//!
//! Candidate pool = hull vertices plus uniform bounding-box draws projected
//! onto the hull. Greedy farthest-point selection seeds the design, then a
//! few exchange passes swap single points whenever that strictly increases
//! the minimum pairwise distance.

use crate::density::HullDomain;
use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng_from};
use rand::Rng;

const POOL_SIZE: usize = 1000;
const EXCHANGE_PASSES: usize = 3;
const DEDUP_TOL: f64 = 1e-12;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Picks `n` well-separated points inside `domain`, deterministically in
/// `seed`. The result approximately maximizes the minimum pairwise distance.
pub fn maximin_design(domain: &HullDomain, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid_parameter("n", "must be >= 1"));
    }
    let dim = domain.dim();
    let mut pool: Vec<Vec<f64>> = domain.vertices().to_vec();

    let (lo, hi) = domain.bounding_box();
    let mut rng = rng_from(mix_seed(seed, "maximin pool", &[n as u64, dim as u64]));
    while pool.len() < POOL_SIZE {
        let raw: Vec<f64> = (0..dim)
            .map(|k| {
                if hi[k] > lo[k] {
                    rng.gen_range(lo[k]..hi[k])
                } else {
                    lo[k]
                }
            })
            .collect();
        pool.push(domain.project(&raw)?);
    }

    // Deduplicate: projections of exterior draws pile up on facets.
    let mut unique: Vec<Vec<f64>> = Vec::with_capacity(pool.len());
    for p in pool {
        if unique.iter().all(|q| dist(q, &p) > DEDUP_TOL) {
            unique.push(p);
        }
    }
    if unique.len() < n {
        return Err(Error::invalid_parameter(
            "n",
            format!(
                "domain supports only {} distinct candidates, {} requested",
                unique.len(),
                n
            ),
        ));
    }
    let pool = unique;

    // Greedy farthest-point start, anchored at the point farthest from the
    // centroid so corners are preferred over interior points.
    let centroid = domain.centroid();
    let first = argmax_by(&pool, |p| dist(p, &centroid));
    let mut chosen: Vec<usize> = vec![first];
    while chosen.len() < n {
        let next = argmax_by(&pool, |p| {
            chosen
                .iter()
                .map(|&c| dist(p, &pool[c]))
                .fold(f64::INFINITY, f64::min)
        });
        chosen.push(next);
    }

    // Exchange passes: replace one design point at a time if the swap
    // strictly improves the design-wide minimum pairwise distance.
    for _ in 0..EXCHANGE_PASSES {
        let mut improved = false;
        for slot in 0..n {
            let mut best_score = design_min_dist(&pool, &chosen);
            let mut best_cand = None;
            for cand in 0..pool.len() {
                if chosen.contains(&cand) {
                    continue;
                }
                let saved = chosen[slot];
                chosen[slot] = cand;
                let score = design_min_dist(&pool, &chosen);
                chosen[slot] = saved;
                if score > best_score + 1e-15 {
                    best_score = score;
                    best_cand = Some(cand);
                }
            }
            if let Some(cand) = best_cand {
                chosen[slot] = cand;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
}

fn design_min_dist(pool: &[Vec<f64>], chosen: &[usize]) -> f64 {
    if chosen.len() < 2 {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    for i in 0..chosen.len() {
        for j in (i + 1)..chosen.len() {
            best = best.min(dist(&pool[chosen[i]], &pool[chosen[j]]));
        }
    }
    best
}

/// First index attaining the maximum; ties break to the lowest index so the
/// result does not depend on iteration incidentals.
fn argmax_by(pool: &[Vec<f64>], score: impl Fn(&[f64]) -> f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, p) in pool.iter().enumerate() {
        let s = score(p);
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}
