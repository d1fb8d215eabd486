//! Exact non-uniform discrete Fourier operators.
//!
//! The forward map evaluates, for every sample location `xi_m`,
//!
//! ```text
//! y_m = w(xi_m) * sum_n x[n] * exp(-i <p_n, xi_m>)
//! ```
//!
//! where `p_n` runs over the centered pixel lattice and `w` is an
//! interpolation window. Sums are evaluated exactly in O(M*N); there is
//! no gridding or FFT approximation. The exponential factorizes over
//! axes, so a plan caches the per-axis phase tables for a fixed scheme
//! and reuses them across applications.
//!
//! Parallel loops always write disjoint output elements and reduce
//! sequentially, so results are bit-identical for any thread count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::scheme::SamplingScheme;

/// Interpolation window applied per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpWindow {
    /// No windowing; unit weight everywhere.
    Dirac,
    /// Fourier transform of the unit pixel indicator:
    /// `sinc(xi_1/2) * sinc(xi_2/2)` with `sinc(t) = sin(t)/t`.
    PixelIndicator,
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        // Quadratic Taylor term keeps the value exact to f64 here.
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

impl InterpWindow {
    pub fn eval(self, xi: [f64; 2]) -> f64 {
        match self {
            InterpWindow::Dirac => 1.0,
            InterpWindow::PixelIndicator => sinc(xi[0] / 2.0) * sinc(xi[1] / 2.0),
        }
    }
}

/// Precomputed operator for one scheme and image shape.
///
/// Holds the per-sample window weights and per-axis phase tables
/// `exp(-i * p * xi)` for each sample.
pub struct NuftPlan {
    n1: usize,
    n2: usize,
    m: usize,
    weights: Vec<f64>,
    // Row-major m x n1 and m x n2 tables of exp(-i * p_axis * xi_axis).
    phase1: Vec<Complex64>,
    phase2: Vec<Complex64>,
}

impl NuftPlan {
    pub fn new(scheme: &SamplingScheme, window: InterpWindow, n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 || n1 % 2 != 0 || n2 % 2 != 0 {
            return Err(Error::invalid_parameter(
                "image dims",
                format!("dimensions must be even and at least 2, got {}x{}", n1, n2),
            ));
        }
        let points = scheme.points();
        if points.is_empty() {
            return Err(Error::InvalidInput("empty sampling scheme".into()));
        }
        let m = points.len();
        let mut weights = Vec::with_capacity(m);
        let mut phase1 = vec![Complex64::new(0.0, 0.0); m * n1];
        let mut phase2 = vec![Complex64::new(0.0, 0.0); m * n2];
        let half1 = (n1 / 2) as f64;
        let half2 = (n2 / 2) as f64;
        for (k, &xi) in points.iter().enumerate() {
            weights.push(window.eval(xi));
            for a in 0..n1 {
                let p = a as f64 - half1;
                let t = -p * xi[0];
                phase1[k * n1 + a] = Complex64::new(t.cos(), t.sin());
            }
            for b in 0..n2 {
                let p = b as f64 - half2;
                let t = -p * xi[1];
                phase2[k * n2 + b] = Complex64::new(t.cos(), t.sin());
            }
        }
        Ok(NuftPlan { n1, n2, m, weights, phase1, phase2 })
    }

    pub fn n_samples(&self) -> usize {
        self.m
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Forward map: image to samples.
    pub fn forward(&self, img: &ImageGrid) -> Result<Vec<Complex64>> {
        if img.n1() != self.n1 || img.n2() != self.n2 {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} vs plan {}x{}",
                img.n1(),
                img.n2(),
                self.n1,
                self.n2
            )));
        }
        let x = img.as_slice();
        let mut out = vec![Complex64::new(0.0, 0.0); self.m];
        out.par_iter_mut().enumerate().for_each(|(k, y)| {
            let e1 = &self.phase1[k * self.n1..(k + 1) * self.n1];
            let e2 = &self.phase2[k * self.n2..(k + 1) * self.n2];
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..self.n1 {
                let row = &x[a * self.n2..(a + 1) * self.n2];
                let mut inner = Complex64::new(0.0, 0.0);
                for b in 0..self.n2 {
                    inner += row[b] * e2[b];
                }
                acc += e1[a] * inner;
            }
            *y = acc * self.weights[k];
        });
        Ok(out)
    }

    /// Adjoint map: samples to image.
    pub fn adjoint(&self, samples: &[Complex64]) -> Result<ImageGrid> {
        if samples.len() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "{} samples vs plan {}",
                samples.len(),
                self.m
            )));
        }
        // Window weights are real, so conj(w) = w.
        let weighted: Vec<Complex64> =
            samples.iter().zip(&self.weights).map(|(s, &w)| s * w).collect();
        let mut img = ImageGrid::zeros(self.n1, self.n2)?;
        let n1 = self.n1;
        let n2 = self.n2;
        img.as_mut_slice()
            .par_chunks_mut(n2)
            .enumerate()
            .for_each(|(a, row)| {
                for (b, out) in row.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..self.m {
                        let e = self.phase1[k * n1 + a] * self.phase2[k * n2 + b];
                        acc += weighted[k] * e.conj();
                    }
                    *out = acc;
                }
            });
        Ok(img)
    }

    /// Operator norm estimate by power iteration on the normal operator.
    ///
    /// Deterministic for a fixed seed; the returned Rayleigh quotient is
    /// non-decreasing in the iteration count (up to roundoff).
    pub fn spectral_norm(&self, iters: usize, seed: u64) -> Result<f64> {
        if iters == 0 {
            return Err(Error::invalid_parameter("iters", "must be at least 1"));
        }
        let mut rng = crate::rng::rng_from(seed);
        let mut v = ImageGrid::zeros(self.n1, self.n2)?;
        for val in v.as_mut_slice() {
            use rand::Rng;
            *val = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let mut norm = v.norm_sq().sqrt();
        if norm == 0.0 {
            return Err(Error::NonConvergence {
                op: "spectral_norm",
                detail: "degenerate start vector".into(),
            });
        }
        let mut lambda = 0.0;
        for _ in 0..iters {
            for val in v.as_mut_slice() {
                *val /= norm;
            }
            let w = self.adjoint(&self.forward(&v)?)?;
            // Rayleigh quotient <v, A*A v> with unit v; real by symmetry.
            lambda = v
                .as_slice()
                .iter()
                .zip(w.as_slice())
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>();
            v = w;
            norm = v.norm_sq().sqrt();
            if norm == 0.0 {
                return Ok(0.0);
            }
        }
        Ok(lambda.max(0.0).sqrt())
    }
}

/// One-shot forward map. See [`NuftPlan::forward`].
pub fn forward(
    img: &ImageGrid,
    scheme: &SamplingScheme,
    window: InterpWindow,
) -> Result<Vec<Complex64>> {
    NuftPlan::new(scheme, window, img.n1(), img.n2())?.forward(img)
}

/// One-shot adjoint map. See [`NuftPlan::adjoint`].
pub fn adjoint(
    samples: &[Complex64],
    scheme: &SamplingScheme,
    window: InterpWindow,
    n1: usize,
    n2: usize,
) -> Result<ImageGrid> {
    NuftPlan::new(scheme, window, n1, n2)?.adjoint(samples)
}

/// One-shot spectral norm. See [`NuftPlan::spectral_norm`].
pub fn spectral_norm(
    scheme: &SamplingScheme,
    window: InterpWindow,
    n1: usize,
    n2: usize,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    NuftPlan::new(scheme, window, n1, n2)?.spectral_norm(iters, seed)
}
