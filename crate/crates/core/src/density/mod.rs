//! Sampling densities on the k-space box and the parametric family they
//! are drawn from.
//!
//! A density is a nonnegative raster of cell masses over `[-pi, pi]^2`
//! summing to one. The elementary family blends a central plateau with
//! an anisotropic power-law decay,
//!
//! ```text
//! g(x, y) = min(plateau, 1 / ((x_a/sigma_x)^2 + (y_a/sigma_y)^2 + eps)^decay)
//! ```
//!
//! where `(x_a, y_a)` are the coordinates rotated by `angle`, followed by
//! normalization and an optional Gaussian smoothing of width `smoothing`
//! (k-space units).

mod basis;
mod hull;
mod pca;

pub use basis::{build_basis, generate_density, load_basis, save_basis, BasisBuild, DensityBasis};
pub use hull::HullDomain;
pub use pca::second_moment_top_eigen;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::{BOX_HALF, BOX_WIDTH};

/// Nonnegative cell masses over the box, row-major `res x res`.
///
/// Cell `(i, j)` is centered at
/// `(-pi + (i+0.5) * 2pi/res, -pi + (j+0.5) * 2pi/res)`. Constructors
/// normalize, so the total mass is 1 up to roundoff.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    res: usize,
    cells: Vec<f64>,
}

impl DensityGrid {
    pub fn from_masses(res: usize, mut cells: Vec<f64>) -> Result<Self> {
        if res < 2 {
            return Err(Error::invalid_parameter("res", format!("must be >= 2, got {}", res)));
        }
        if cells.len() != res * res {
            return Err(Error::ShapeMismatch(format!(
                "density has {} cells, expected {}",
                cells.len(),
                res * res
            )));
        }
        let mut sum = 0.0;
        for c in cells.iter_mut() {
            if !c.is_finite() {
                return Err(Error::InvalidInput("density cell not finite".into()));
            }
            if *c < 0.0 {
                if *c < -1e-12 {
                    return Err(Error::InvalidInput(format!("negative density cell {}", c)));
                }
                *c = 0.0;
            }
            sum += *c;
        }
        if !(sum > 0.0) {
            return Err(Error::InvalidInput("density has zero total mass".into()));
        }
        for c in cells.iter_mut() {
            *c /= sum;
        }
        Ok(DensityGrid { res, cells })
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn cell_width(&self) -> f64 {
        BOX_WIDTH / self.res as f64
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let w = self.cell_width();
        [-BOX_HALF + (i as f64 + 0.5) * w, -BOX_HALF + (j as f64 + 0.5) * w]
    }

    /// Value per unit area at cell `(i, j)`.
    pub fn cell_density(&self, i: usize, j: usize) -> f64 {
        let w = self.cell_width();
        self.cells[i * self.res + j] / (w * w)
    }
}

/// Parameters of one elementary density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementaryParams {
    /// Scale length along the rotated first axis.
    pub sigma_x: f64,
    /// Scale length along the rotated second axis.
    pub sigma_y: f64,
    /// Rotation angle in `[0, pi)`.
    pub angle: f64,
    /// Plateau level clipping the profile near the center (pre-normalization).
    pub plateau: f64,
    /// Power-law decay exponent.
    pub decay: f64,
    /// Additive guard inside the power law.
    pub eps: f64,
    /// Gaussian smoothing width in k-space units; 0 disables smoothing.
    pub smoothing: f64,
}

impl ElementaryParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("sigma_x", self.sigma_x > 0.0),
            ("sigma_y", self.sigma_y > 0.0),
            ("plateau", self.plateau > 0.0),
            ("decay", self.decay > 0.0),
            ("eps", self.eps > 0.0),
            ("smoothing", self.smoothing >= 0.0),
            ("angle", (0.0..std::f64::consts::PI).contains(&self.angle)),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::invalid_parameter(
                    "elementary density",
                    format!("{} out of range in {:?}", name, self),
                ));
            }
        }
        Ok(())
    }
}

fn raw_profile(params: &ElementaryParams, x: f64, y: f64) -> f64 {
    let (s, c) = params.angle.sin_cos();
    let xr = x * c + y * s;
    let yr = -x * s + y * c;
    let q = (xr / params.sigma_x).powi(2) + (yr / params.sigma_y).powi(2) + params.eps;
    params.plateau.min(q.powf(-params.decay))
}

/// Separable Gaussian blur with zero padding, kernel truncated at four
/// standard deviations, followed by renormalization.
fn gaussian_smooth(cells: &mut Vec<f64>, res: usize, sigma_cells: f64) {
    if sigma_cells <= 0.0 {
        return;
    }
    let radius = (4.0 * sigma_cells).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let mut ksum = 0.0;
    for t in -(radius as isize)..=(radius as isize) {
        let v = (-0.5 * (t as f64 / sigma_cells).powi(2)).exp();
        kernel.push(v);
        ksum += v;
    }
    for k in kernel.iter_mut() {
        *k /= ksum;
    }
    let mut tmp = vec![0.0; res * res];
    // Blur along the first axis.
    for i in 0..res {
        for j in 0..res {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                let ii = i as isize + t as isize - radius as isize;
                if ii >= 0 && (ii as usize) < res {
                    acc += k * cells[ii as usize * res + j];
                }
            }
            tmp[i * res + j] = acc;
        }
    }
    // Blur along the second axis.
    for i in 0..res {
        for j in 0..res {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                let jj = j as isize + t as isize - radius as isize;
                if jj >= 0 && (jj as usize) < res {
                    acc += k * tmp[i * res + jj as usize];
                }
            }
            cells[i * res + j] = acc;
        }
    }
    let sum: f64 = cells.iter().sum();
    for c in cells.iter_mut() {
        *c /= sum;
    }
}

/// Rasterize one elementary density at resolution `res`.
pub fn elementary_density(params: &ElementaryParams, res: usize) -> Result<DensityGrid> {
    params.validate()?;
    if res < 2 {
        return Err(Error::invalid_parameter("res", format!("must be >= 2, got {}", res)));
    }
    let w = BOX_WIDTH / res as f64;
    let mut cells = Vec::with_capacity(res * res);
    // Centers via the antisymmetric factor (i + 0.5 - res/2): mirrored cells
    // then evaluate at exactly negated coordinates, so isotropic profiles
    // come out exactly symmetric on the raster (no roundoff skew).
    for i in 0..res {
        let x = (i as f64 + 0.5 - 0.5 * res as f64) * w;
        for j in 0..res {
            let y = (j as f64 + 0.5 - 0.5 * res as f64) * w;
            cells.push(raw_profile(params, x, y));
        }
    }
    let sum: f64 = cells.iter().sum();
    for c in cells.iter_mut() {
        *c /= sum;
    }
    if params.smoothing > 0.0 {
        gaussian_smooth(&mut cells, res, params.smoothing / w);
    }
    DensityGrid::from_masses(res, cells)
}

/// Parameter ranges for random draws from the elementary family.
///
/// The plateau is not drawn directly: a target center density between
/// `center_mult` multiples of the Shannon center density (the uniform
/// density at which `m_samples` points tile the grid at one sample per
/// pixel cell) is drawn, and the plateau solved for by bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBox {
    pub sigma: [f64; 2],
    pub decay: [f64; 2],
    pub smoothing: [f64; 2],
    pub center_mult: [f64; 2],
    pub eps: f64,
}

impl Default for GeneratorBox {
    fn default() -> Self {
        // The smoothing lower bound is kept positive: unsmoothed members
        // carry a raster-scale crease where the plateau meets the power
        // falloff, and that crease spreads energy across high PCA modes.
        // With the floor at pi/32 the 64x64 family at 20 modes keeps its
        // spectral tail well under one percent; with zero it does not.
        GeneratorBox {
            sigma: [BOX_HALF / 16.0, BOX_HALF],
            decay: [0.5, 3.0],
            smoothing: [BOX_HALF / 32.0, BOX_HALF / 16.0],
            center_mult: [1.0, 4.0],
            eps: 1e-2,
        }
    }
}

impl GeneratorBox {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("sigma", self.sigma, 0.0),
            ("decay", self.decay, 0.0),
            ("smoothing", self.smoothing, -1e-300),
            ("center_mult", self.center_mult, 0.0),
        ];
        for (name, [lo, hi], min) in ranges {
            if !(lo > min) && !(lo >= 0.0 && name == "smoothing") {
                return Err(Error::invalid_parameter(
                    "generator box",
                    format!("{} lower bound {} invalid", name, lo),
                ));
            }
            if hi < lo {
                return Err(Error::invalid_parameter(
                    "generator box",
                    format!("{} range [{}, {}] inverted", name, lo, hi),
                ));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid_parameter("generator box", "eps must be positive"));
        }
        Ok(())
    }
}

/// Shannon center density per unit area: `m_samples` points at one per
/// pixel cell of an `n_grid` image covering the box.
pub fn shannon_center_density(n_grid: usize, m_samples: usize) -> f64 {
    (n_grid * n_grid) as f64 / (BOX_WIDTH * BOX_WIDTH * m_samples as f64)
}

/// Solve for the plateau whose normalized center density hits `target`
/// (per unit area, at raster resolution `res`). Saturates at the profile
/// peak when the target is unreachable.
fn calibrate_plateau(shape: &ElementaryParams, res: usize, target: f64) -> Result<f64> {
    let peak = shape.eps.powf(-shape.decay);
    let center_density = |plateau: f64| -> Result<f64> {
        let mut p = *shape;
        p.plateau = plateau;
        let rho = elementary_density(&p, res)?;
        // Maximum cell density stands in for the center value; the profile
        // peaks at the origin but the origin is not a cell center.
        Ok(rho
            .cells()
            .iter()
            .fold(0.0f64, |a, &b| a.max(b))
            / (rho.cell_width() * rho.cell_width()))
    };
    if center_density(peak)? <= target {
        return Ok(peak);
    }
    let mut lo = peak * 1e-9;
    let mut hi = peak;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if center_density(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draw `count` elementary generators, plateau calibrated per draw.
pub fn draw_generators(
    gbox: &GeneratorBox,
    count: usize,
    res: usize,
    n_grid: usize,
    m_samples: usize,
    seed: u64,
) -> Result<Vec<ElementaryParams>> {
    gbox.validate()?;
    if count == 0 {
        return Err(Error::invalid_parameter("count", "must be positive"));
    }
    if m_samples == 0 || n_grid < 2 {
        return Err(Error::invalid_parameter(
            "generator scale",
            format!("n_grid {} m_samples {}", n_grid, m_samples),
        ));
    }
    let shannon = shannon_center_density(n_grid, m_samples);
    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut shape = ElementaryParams {
            sigma_x: rng.gen_range(gbox.sigma[0]..=gbox.sigma[1]),
            sigma_y: rng.gen_range(gbox.sigma[0]..=gbox.sigma[1]),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            plateau: 1.0,
            decay: rng.gen_range(gbox.decay[0]..=gbox.decay[1]),
            eps: gbox.eps,
            smoothing: rng.gen_range(gbox.smoothing[0]..=gbox.smoothing[1]),
        };
        let target = rng.gen_range(gbox.center_mult[0]..=gbox.center_mult[1]) * shannon;
        shape.plateau = calibrate_plateau(&shape, res, target)?;
        shape.validate()?;
        out.push(shape);
    }
    Ok(out)
}
