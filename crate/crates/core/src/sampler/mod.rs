//! Density-to-trajectory sampler: projected gradient descent on a kernel
//! discrepancy between the empirical measure of the free sample points
//! and a target density, under kinematic constraints.
//!
//! The density enters as a weighted point cloud at cell centers, so both
//! the discrepancy and its gradient are exact double sums. The comparison
//! is restricted to the exterior of an exclusion disk around the origin
//! (where a fixed radial prefix already covers k-space densely enough)
//! and both restricted measures are renormalized; an excluded point
//! contributes nothing and receives a zero gradient, as do pinned ones.
//!
//! Sign convention: with `pc`, `pp`, `cc` the weighted point-to-cell,
//! point-to-point and cell-to-cell kernel sums, the value reported is
//! `2*pc - pp - cc`. For the kernels here (increasing in distance) this
//! quadratic form is nonnegative and vanishes exactly when the two
//! restricted measures coincide; its gradient attracts free points to
//! the density and makes them repel each other. The guarded diagonal is
//! included in all three sums so that identical measures cancel exactly.

mod prefix;
mod project;

pub use prefix::{default_shannon_gap, radial_prefix, RadialPrefix};
pub use project::{constraint_violation, project_constraints, ProjectionWorkspace};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::kinematics::ConstraintSpec;
use crate::scheme::SamplingScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// h(r) = r
    Linear,
    /// h(r) = sqrt(r)
    Sqrt,
    /// h(r) = ln(r)
    Log,
}

/// Radial interaction kernel with a near-origin guard: distances below
/// `delta` are treated as `delta`, which keeps `ln` finite and makes the
/// kernel flat (zero slope) inside the guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyKernel {
    pub kind: KernelKind,
    pub delta: f64,
}

impl DiscrepancyKernel {
    pub fn new(kind: KernelKind) -> Self {
        DiscrepancyKernel { kind, delta: crate::BOX_WIDTH * 1e-6 }
    }

    pub fn with_delta(kind: KernelKind, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid_parameter(
                "delta",
                format!("must be positive and finite, got {}", delta),
            ));
        }
        Ok(DiscrepancyKernel { kind, delta })
    }

    fn h(&self, r: f64) -> f64 {
        let r = r.max(self.delta);
        match self.kind {
            KernelKind::Linear => r,
            KernelKind::Sqrt => r.sqrt(),
            KernelKind::Log => r.ln(),
        }
    }

    /// phi(r) = h'(r) / r, zero inside the guard.
    fn phi(&self, r: f64) -> f64 {
        if r <= self.delta {
            return 0.0;
        }
        match self.kind {
            KernelKind::Linear => 1.0 / r,
            KernelKind::Sqrt => 0.5 / (r * r.sqrt()),
            KernelKind::Log => 1.0 / (r * r),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Gradient step in k-space units per unit gradient.
    pub tau: f64,
    /// Number of projected-gradient iterations.
    pub iters: usize,
    pub kernel: DiscrepancyKernel,
    /// Radius of the central disk left out of the discrepancy.
    pub exclusion_radius: f64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid_parameter("tau", format!("got {}", self.tau)));
        }
        if self.iters == 0 {
            return Err(Error::invalid_parameter("iters", "must be at least 1"));
        }
        if !(self.exclusion_radius >= 0.0) || self.exclusion_radius >= crate::BOX_HALF {
            return Err(Error::invalid_parameter(
                "exclusion_radius",
                format!("must lie in [0, pi), got {}", self.exclusion_radius),
            ));
        }
        DiscrepancyKernel::with_delta(self.kernel.kind, self.kernel.delta)?;
        Ok(())
    }
}

/// Precomputed target-side quantities for repeated discrepancy and
/// gradient evaluations against one density.
pub struct DiscrepancyContext {
    kernel: DiscrepancyKernel,
    exclusion_radius: f64,
    cell_pos: Vec<[f64; 2]>,
    cell_weight: Vec<f64>,
    /// Cached cell-to-cell term of the quadratic form.
    cc: f64,
}

impl DiscrepancyContext {
    pub fn new(
        rho: &DensityGrid,
        kernel: DiscrepancyKernel,
        exclusion_radius: f64,
    ) -> Result<Self> {
        if !(exclusion_radius >= 0.0) || !exclusion_radius.is_finite() {
            return Err(Error::invalid_parameter(
                "exclusion_radius",
                format!("got {}", exclusion_radius),
            ));
        }
        let res = rho.res();
        let mut cell_pos = Vec::new();
        let mut cell_weight = Vec::new();
        let mut kept_mass = 0.0;
        for i in 0..res {
            for j in 0..res {
                let c = rho.cell_center(i, j);
                let m = rho.cells()[i * res + j];
                if m > 0.0 && (c[0] * c[0] + c[1] * c[1]).sqrt() > exclusion_radius {
                    cell_pos.push(c);
                    cell_weight.push(m);
                    kept_mass += m;
                }
            }
        }
        if kept_mass <= 0.0 {
            return Err(Error::InvalidInput(
                "density has no mass outside the exclusion disk".into(),
            ));
        }
        for w in cell_weight.iter_mut() {
            *w /= kept_mass;
        }
        // Cell-to-cell term, fixed per context. Chunked parallel sum with
        // a sequential combine keeps the value thread-count independent.
        let n = cell_pos.len();
        let chunk = 64usize;
        let partials: Vec<f64> = (0..n.div_ceil(chunk))
            .into_par_iter()
            .map(|ci| {
                let lo = ci * chunk;
                let hi = (lo + chunk).min(n);
                let mut acc = 0.0;
                for a in lo..hi {
                    let pa = cell_pos[a];
                    let wa = cell_weight[a];
                    for b in 0..n {
                        let d0 = pa[0] - cell_pos[b][0];
                        let d1 = pa[1] - cell_pos[b][1];
                        acc += wa * cell_weight[b] * kernel.h((d0 * d0 + d1 * d1).sqrt());
                    }
                }
                acc
            })
            .collect();
        let cc = partials.iter().sum();
        Ok(DiscrepancyContext { kernel, exclusion_radius, cell_pos, cell_weight, cc })
    }

    fn kept_indices(&self, scheme: &SamplingScheme) -> Vec<usize> {
        let r2 = self.exclusion_radius * self.exclusion_radius;
        scheme
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| p[0] * p[0] + p[1] * p[1] > r2)
            .map(|(i, _)| i)
            .collect()
    }

    /// Quadratic-form discrepancy between the scheme's restricted
    /// empirical measure and the restricted density.
    pub fn discrepancy(&self, scheme: &SamplingScheme) -> Result<f64> {
        let kept = self.kept_indices(scheme);
        if kept.is_empty() {
            return Err(Error::InvalidInput(
                "no sample points outside the exclusion disk".into(),
            ));
        }
        let ma = kept.len() as f64;
        let pts = scheme.points();
        // Point-to-cell and point-to-point sums, one row per kept point.
        let rows: Vec<(f64, f64)> = kept
            .par_iter()
            .map(|&m| {
                let x = pts[m];
                let mut pc = 0.0;
                for (c, w) in self.cell_pos.iter().zip(&self.cell_weight) {
                    let d0 = x[0] - c[0];
                    let d1 = x[1] - c[1];
                    pc += w * self.kernel.h((d0 * d0 + d1 * d1).sqrt());
                }
                let mut pp = 0.0;
                for &m2 in &kept {
                    let y = pts[m2];
                    let d0 = x[0] - y[0];
                    let d1 = x[1] - y[1];
                    pp += self.kernel.h((d0 * d0 + d1 * d1).sqrt());
                }
                (pc, pp)
            })
            .collect();
        let mut pc = 0.0;
        let mut pp = 0.0;
        for (a, b) in rows {
            pc += a;
            pp += b;
        }
        pc /= ma;
        pp /= ma * ma;
        Ok(2.0 * pc - pp - self.cc)
    }

    /// Gradient w.r.t. every point; zero on pinned and excluded points.
    pub fn gradient(&self, scheme: &SamplingScheme) -> Result<Vec<[f64; 2]>> {
        let kept = self.kept_indices(scheme);
        if kept.is_empty() {
            return Err(Error::InvalidInput(
                "no sample points outside the exclusion disk".into(),
            ));
        }
        let ma = kept.len() as f64;
        let pts = scheme.points();
        let mut grad = vec![[0.0, 0.0]; pts.len()];
        let kept_set: Vec<bool> = {
            let mut v = vec![false; pts.len()];
            for &m in &kept {
                v[m] = true;
            }
            v
        };
        grad.par_iter_mut().enumerate().for_each(|(m, g)| {
            if !kept_set[m] || scheme.is_pinned(m) {
                return;
            }
            let x = pts[m];
            let mut gx = 0.0;
            let mut gy = 0.0;
            // Attraction toward the density cells.
            for (c, w) in self.cell_pos.iter().zip(&self.cell_weight) {
                let d0 = x[0] - c[0];
                let d1 = x[1] - c[1];
                let f = w * self.kernel.phi((d0 * d0 + d1 * d1).sqrt());
                gx += f * d0;
                gy += f * d1;
            }
            gx *= 2.0 / ma;
            gy *= 2.0 / ma;
            // Repulsion from the other kept points.
            let mut rx = 0.0;
            let mut ry = 0.0;
            for &m2 in &kept {
                let y = pts[m2];
                let d0 = x[0] - y[0];
                let d1 = x[1] - y[1];
                let f = self.kernel.phi((d0 * d0 + d1 * d1).sqrt());
                rx += f * d0;
                ry += f * d1;
            }
            g[0] = gx - rx * 2.0 / (ma * ma);
            g[1] = gy - ry * 2.0 / (ma * ma);
        });
        Ok(grad)
    }
}

/// One-shot discrepancy evaluation; see [`DiscrepancyContext`] for reuse.
pub fn discrepancy(
    scheme: &SamplingScheme,
    rho: &DensityGrid,
    kernel: DiscrepancyKernel,
    exclusion_radius: f64,
) -> Result<f64> {
    DiscrepancyContext::new(rho, kernel, exclusion_radius)?.discrepancy(scheme)
}

/// One-shot gradient evaluation; see [`DiscrepancyContext`] for reuse.
pub fn discrepancy_gradient(
    scheme: &SamplingScheme,
    rho: &DensityGrid,
    kernel: DiscrepancyKernel,
    exclusion_radius: f64,
) -> Result<Vec<[f64; 2]>> {
    DiscrepancyContext::new(rho, kernel, exclusion_radius)?.gradient(scheme)
}

/// Projected gradient descent on the discrepancy, returning the best
/// iterate seen (including the projected initializer).
pub fn sample_scheme(
    rho: &DensityGrid,
    constraints: &ConstraintSpec,
    cfg: &SamplerConfig,
    init: &SamplingScheme,
) -> Result<SamplingScheme> {
    cfg.validate()?;
    let ctx = DiscrepancyContext::new(rho, cfg.kernel, cfg.exclusion_radius)?;
    let mut ws = ProjectionWorkspace::new(init);
    let mut current = project::project_with_workspace(init, constraints, &mut ws)?;
    let mut best = current.clone();
    let mut best_val = ctx.discrepancy(&current)?;
    for _ in 0..cfg.iters {
        let grad = ctx.gradient(&current)?;
        {
            let pts = current.points_mut();
            for (p, g) in pts.iter_mut().zip(&grad) {
                p[0] -= cfg.tau * g[0];
                p[1] -= cfg.tau * g[1];
            }
        }
        current = project::project_with_workspace(&current, constraints, &mut ws)?;
        let val = ctx.discrepancy(&current)?;
        if val < best_val {
            best_val = val;
            best = current.clone();
        }
    }
    Ok(best)
}

/// Mean consecutive-point distance in pixel units, over free pairs whose
/// endpoints both lie within `center_radius` of the origin.
pub fn neighbor_spacing(
    scheme: &SamplingScheme,
    center_radius: f64,
    n_grid: usize,
) -> Result<f64> {
    if scheme.points_per_shot() < 2 {
        return Err(Error::InvalidInput("neighbor spacing needs at least 2 points per shot".into()));
    }
    if n_grid == 0 {
        return Err(Error::invalid_parameter("n_grid", "must be positive"));
    }
    let r2 = center_radius * center_radius;
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in 0..scheme.n_shots() {
        let shot = scheme.shot(s);
        // A pair counts when its second endpoint is free: the step from the
        // last pinned point into the free region is still sampler-controlled.
        for p in scheme.fixed_prefix_len().max(1)..shot.len() {
            let a = shot[p - 1];
            let b = shot[p];
            if a[0] * a[0] + a[1] * a[1] <= r2 && b[0] * b[0] + b[1] * b[1] <= r2 {
                sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput(
            "no consecutive free pairs inside the center disk".into(),
        ));
    }
    Ok(sum / count as f64 * n_grid as f64 / crate::BOX_WIDTH)
}
