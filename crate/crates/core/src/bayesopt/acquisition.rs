//! Expected improvement acquisition for minimization, and its maximizer
//! over a hull domain via multi-start projected gradient ascent.

use rayon::prelude::*;

use super::design::maximin_design;
use super::gp::GpModel;
use crate::density::HullDomain;
use crate::error::{Error, Result};
use crate::rng::mix_seed;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const STD_FLOOR: f64 = 1e-14;
const ASCENT_ITERS: usize = 80;
const BACKTRACKS: usize = 30;

fn normal_cdf(u: f64) -> f64 {
    0.5 * (1.0 + libm::erf(u / SQRT_2))
}

fn normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Closed-form expected improvement of a Gaussian belief N(mean, std^2)
/// below the incumbent `best`: E[max(best - Y, 0)].
pub fn ei_closed_form(mean: f64, std: f64, best: f64) -> f64 {
    let gap = best - mean;
    if std <= STD_FLOOR {
        return gap.max(0.0);
    }
    let u = gap / std;
    (gap * normal_cdf(u) + std * normal_pdf(u)).max(0.0)
}

/// Expected improvement of the model posterior at `z` below `best_f`.
pub fn expected_improvement(model: &GpModel, z: &[f64], best_f: f64) -> f64 {
    let (mean, var) = model.predict(z);
    ei_closed_form(mean, var.max(0.0).sqrt(), best_f)
}

/// Expected improvement together with its gradient in `z`.
///
/// dEI/dmean = -Phi(u) and dEI/dstd = phi(u); both chain through the
/// posterior mean and variance gradients (dstd = dvar / (2 std)).
pub fn expected_improvement_with_grad(
    model: &GpModel,
    z: &[f64],
    best_f: f64,
) -> (f64, Vec<f64>) {
    let (mean, var, dmean, dvar) = model.predict_with_grad(z);
    let std = var.max(0.0).sqrt();
    if std <= STD_FLOOR {
        // Flat-posterior region: EI is piecewise linear in the mean alone.
        let gap = best_f - mean;
        let grad = if gap > 0.0 {
            dmean.iter().map(|g| -g).collect()
        } else {
            vec![0.0; z.len()]
        };
        return (gap.max(0.0), grad);
    }
    let u = (best_f - mean) / std;
    let cdf = normal_cdf(u);
    let pdf = normal_pdf(u);
    let ei = ((best_f - mean) * cdf + std * pdf).max(0.0);
    let grad = dmean
        .iter()
        .zip(&dvar)
        .map(|(&dm, &dv)| -cdf * dm + pdf * dv / (2.0 * std))
        .collect();
    (ei, grad)
}

/// Next evaluation point: the expected-improvement maximizer over `domain`,
/// found by projected gradient ascent from a maximin set of starts. The
/// incumbent is the best (smallest) training target of `model`.
///
/// Deterministic in (model, domain, n_starts, seed) regardless of thread
/// count: starts are fixed up front and the winner is picked by value with
/// ties broken by start index.
pub fn acquire_next(
    model: &GpModel,
    domain: &HullDomain,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_starts == 0 {
        return Err(Error::invalid_parameter("n_starts", "must be >= 1"));
    }
    if model.dim() != domain.dim() {
        return Err(Error::ShapeMismatch(format!(
            "model dimension {} vs domain dimension {}",
            model.dim(),
            domain.dim()
        )));
    }
    let best_f = model.best_observed();
    let starts = maximin_design(
        domain,
        n_starts.min(max_distinct(domain)),
        mix_seed(seed, "acquisition starts", &[n_starts as u64]),
    )?;

    let (lo, hi) = domain.bounding_box();
    let diam = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    if diam == 0.0 {
        // Point domain: nothing to optimize.
        return Ok(domain.vertices()[0].clone());
    }

    let candidates: Vec<Result<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|start| ascend(model, domain, start, best_f, diam))
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for cand in candidates {
        let (ei, z) = cand?;
        let better = match &best {
            None => true,
            Some((best_ei, _)) => ei > *best_ei,
        };
        if better {
            best = Some((ei, z));
        }
    }
    Ok(best.expect("at least one start").1)
}

/// Upper bound on distinct maximin points a domain can host; a single-vertex
/// hull cannot seed more than one start.
fn max_distinct(domain: &HullDomain) -> usize {
    let (lo, hi) = domain.bounding_box();
    if lo.iter().zip(&hi).all(|(a, b)| a == b) {
        1
    } else {
        usize::MAX
    }
}

fn ascend(
    model: &GpModel,
    domain: &HullDomain,
    start: &[f64],
    best_f: f64,
    diam: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut z = domain.project(start)?;
    let (mut ei, mut grad) = expected_improvement_with_grad(model, &z, best_f);
    let mut step = 0.1 * diam;
    for _ in 0..ASCENT_ITERS {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm * diam <= 1e-16 + 1e-12 * ei.abs() {
            break;
        }
        let mut accepted = false;
        for _ in 0..BACKTRACKS {
            let trial: Vec<f64> = z
                .iter()
                .zip(&grad)
                .map(|(x, g)| x + step * g / gnorm)
                .collect();
            let trial = domain.project(&trial)?;
            let (trial_ei, trial_grad) = expected_improvement_with_grad(model, &trial, best_f);
            if trial_ei > ei {
                z = trial;
                ei = trial_ei;
                grad = trial_grad;
                step *= 1.3;
                accepted = true;
                break;
            }
            step *= 0.5;
            if step < 1e-14 * diam {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    Ok((ei, z))
}
