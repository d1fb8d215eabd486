//! Bayesian optimization of a black-box objective over a convex hull of
//! density coefficients: maximin initialization, GP surrogate, expected
//! improvement acquisition.
//!
//! The driver never fabricates objective values. A failed evaluation is
//! recorded, retried once, and then skipped; the surrogate only ever sees
//! values the objective actually returned.

pub mod acquisition;
pub mod design;
pub mod gp;

pub use acquisition::{acquire_next, ei_closed_form, expected_improvement};
pub use design::maximin_design;
pub use gp::{gp_fit, matern52, GpModel};

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::density::HullDomain;
use crate::error::{Error, Result};
use crate::rng::mix_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoConfig {
    /// Size of the maximin initialization design.
    pub n_init: usize,
    /// Total evaluation budget, counting one unit per chosen point
    /// (a retry of a failed point does not consume extra budget).
    pub n_evals: usize,
    /// Multi-starts for the acquisition ascent.
    pub n_starts: usize,
    /// Relative diagonal nugget for the GP fit.
    pub jitter: f64,
    pub seed: u64,
    /// When false (the default), every record reports wall_time 0.0 so that
    /// run outputs are byte-identical across machines.
    pub record_timings: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            n_init: 20,
            n_evals: 80,
            n_starts: 8,
            jitter: 1e-8,
            seed: 0,
            record_timings: false,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 2 {
            return Err(Error::invalid_parameter("n_init", "must be >= 2"));
        }
        if self.n_evals < self.n_init {
            return Err(Error::invalid_parameter("n_evals", "must be >= n_init"));
        }
        if self.n_starts == 0 {
            return Err(Error::invalid_parameter("n_starts", "must be >= 1"));
        }
        if !self.jitter.is_finite() || self.jitter < 0.0 {
            return Err(Error::invalid_parameter("jitter", "must be >= 0"));
        }
        Ok(())
    }
}

/// One objective evaluation attempt. Failed attempts carry `cost: None`
/// plus the error text; they are never replaced by imputed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRecord {
    /// Budget index of the chosen point (0-based).
    pub eval: usize,
    /// 0 for the first attempt, 1 for the retry of a failed attempt.
    pub attempt: usize,
    /// "init" for design points, "acquired" for EI-selected points.
    pub phase: String,
    pub z: Vec<f64>,
    pub cost: Option<f64>,
    pub error: Option<String>,
    /// Seconds; 0.0 unless `record_timings` was set.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptOutcome {
    pub best_z: Vec<f64>,
    pub best_cost: f64,
    pub records: Vec<OptRecord>,
    pub n_failures: usize,
}

/// Minimizes `objective` over `domain` within `cfg.n_evals` evaluations.
/// `on_record` fires after every attempt (success or failure), in order,
/// so callers can stream an append-only history to disk.
pub fn optimize_density<F, C>(
    domain: &HullDomain,
    cfg: &BoConfig,
    mut objective: F,
    mut on_record: C,
) -> Result<OptOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
    C: FnMut(&OptRecord) -> Result<()>,
{
    cfg.validate()?;
    let init = maximin_design(domain, cfg.n_init, mix_seed(cfg.seed, "bo init", &[]))?;

    let mut records: Vec<OptRecord> = Vec::new();
    let mut successes: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut n_failures = 0usize;
    let mut best: Option<(Vec<f64>, f64)> = None;

    for eval in 0..cfg.n_evals {
        let (z, phase) = if eval < cfg.n_init {
            (init[eval].clone(), "init")
        } else {
            (next_point(domain, cfg, &successes, eval)?, "acquired")
        };

        for attempt in 0..2 {
            let t0 = Instant::now();
            let outcome = objective(&z).and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Objective(format!("non-finite objective value {v}")))
                }
            });
            let wall_time = if cfg.record_timings {
                t0.elapsed().as_secs_f64()
            } else {
                0.0
            };
            let record = OptRecord {
                eval,
                attempt,
                phase: phase.to_string(),
                z: z.clone(),
                cost: outcome.as_ref().ok().copied(),
                error: outcome.as_ref().err().map(|e| e.to_string()),
                wall_time,
            };
            on_record(&record)?;
            records.push(record);
            match outcome {
                Ok(v) => {
                    successes.push((z.clone(), v));
                    let improves = best.as_ref().map_or(true, |(_, b)| v < *b);
                    if improves {
                        best = Some((z.clone(), v));
                    }
                    break;
                }
                Err(_) => {
                    n_failures += 1;
                    // One retry, then the point is skipped for good.
                }
            }
        }
    }

    let (best_z, best_cost) = best.ok_or_else(|| {
        Error::Objective("every objective evaluation failed; nothing to report".into())
    })?;
    Ok(OptOutcome { best_z, best_cost, records, n_failures })
}

/// Acquisition step: fit the surrogate on the successes and maximize EI.
/// With too little data (or an unfittable surrogate) fall back to a fresh
/// space-filling point so the budget is still spent deterministically.
fn next_point(
    domain: &HullDomain,
    cfg: &BoConfig,
    successes: &[(Vec<f64>, f64)],
    eval: usize,
) -> Result<Vec<f64>> {
    if successes.len() >= 2 {
        let z: Vec<Vec<f64>> = successes.iter().map(|(z, _)| z.clone()).collect();
        let y: Vec<f64> = successes.iter().map(|(_, v)| *v).collect();
        if let Ok(model) = gp_fit(&z, &y, cfg.jitter) {
            return acquire_next(
                &model,
                domain,
                cfg.n_starts,
                mix_seed(cfg.seed, "bo acquire", &[eval as u64]),
            );
        }
    }
    let fallback = maximin_design(domain, 2, mix_seed(cfg.seed, "bo fallback", &[eval as u64]));
    match fallback {
        Ok(points) => Ok(points.into_iter().last().expect("two points")),
        // Single-point domains cannot host two distinct candidates.
        Err(_) => Ok(domain.vertices()[0].clone()),
    }
}
