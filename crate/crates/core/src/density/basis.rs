//! Affine low-dimensional family of densities fitted to a generator set.
//!
//! From `I` generator densities the builder keeps the top `L + 1`
//! eigenvectors of the uncentered second moment, normalizes the leading
//! one to unit mass (`mu0`), and turns the remainder into an orthonormal
//! set of zero-mass modes, so `rho(z) = mu0 + sum_l z_l * mode_l` has
//! unit mass for every coefficient vector `z`. Each generator maps to
//! its coefficient vector; their convex hull is the search domain.
//! Rasters are persisted as little-endian `f32`, mirroring the image
//! format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hull::HullDomain;
use super::pca::second_moment_top_eigen;
use super::DensityGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DensityBasis {
    res: usize,
    /// Unit-mass mean raster, row-major `res x res` cell masses.
    mu0: Vec<f64>,
    /// Orthonormal zero-mass modes, one raster per coefficient.
    modes: Vec<Vec<f64>>,
    hull: HullDomain,
}

#[derive(Debug, Clone)]
pub struct BasisBuild {
    pub basis: DensityBasis,
    /// Retained eigenvalues of the second-moment matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Energy fraction lost by truncating to the retained subspace.
    pub tail_energy_fraction: f64,
}

impl DensityBasis {
    pub fn res(&self) -> usize {
        self.res
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    pub fn hull(&self) -> &HullDomain {
        &self.hull
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = 0.0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Fit the affine family with `n_modes` coefficients to the generators.
pub fn build_basis(generators: &[DensityGrid], n_modes: usize, seed: u64) -> Result<BasisBuild> {
    if n_modes == 0 {
        return Err(Error::invalid_parameter("n_modes", "must be at least 1"));
    }
    if generators.len() < n_modes + 1 {
        return Err(Error::invalid_parameter(
            "generators",
            format!(
                "need at least n_modes + 1 = {} generator densities, got {}",
                n_modes + 1,
                generators.len()
            ),
        ));
    }
    let res = generators[0].res();
    for (i, g) in generators.iter().enumerate() {
        if g.res() != res {
            return Err(Error::ShapeMismatch(format!(
                "generator {} has resolution {}, expected {}",
                i,
                g.res(),
                res
            )));
        }
    }
    let n = res * res;
    let mut data = Vec::with_capacity(generators.len() * n);
    for g in generators {
        data.extend_from_slice(g.cells());
    }
    let eig = second_moment_top_eigen(&data, generators.len(), n, n_modes + 1, seed)?;

    // mu0 = nu0 / <nu0, 1>; the division also fixes the sign.
    let mass0: f64 = eig.eigenvectors[0].iter().sum();
    if mass0.abs() < 1e-9 {
        return Err(Error::InvalidInput(
            "leading eigenvector carries no total mass; generators are not densities".into(),
        ));
    }
    let mu0: Vec<f64> = eig.eigenvectors[0].iter().map(|x| x / mass0).collect();

    // Remove the mass component from each trailing eigenvector by
    // subtracting the right multiple of u = projection of the constant
    // vector onto the retained span. <u, 1> equals ||u||^2.
    let coeffs: Vec<f64> = eig.eigenvectors.iter().map(|v| v.iter().sum::<f64>()).collect();
    let u_norm2: f64 = coeffs.iter().map(|c| c * c).sum();
    if u_norm2 <= 1e-18 * n as f64 {
        return Err(Error::InvalidInput(
            "retained subspace is orthogonal to the constant vector".into(),
        ));
    }
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for l in 1..=n_modes {
        let f = coeffs[l] / u_norm2;
        let mut w = eig.eigenvectors[l].clone();
        for (j, cj) in coeffs.iter().enumerate() {
            let s = f * cj;
            if s != 0.0 {
                for (wi, vi) in w.iter_mut().zip(&eig.eigenvectors[j]) {
                    *wi -= s * vi;
                }
            }
        }
        modes.push(w);
    }
    // Orthonormalize (two passes), pin total mass back to zero, fix signs.
    for l in 0..n_modes {
        for _ in 0..2 {
            for m in 0..l {
                let (head, tail) = modes.split_at_mut(l);
                let d = dot(&tail[0], &head[m]);
                for (wi, vi) in tail[0].iter_mut().zip(&head[m]) {
                    *wi -= d * vi;
                }
            }
        }
        let mean = modes[l].iter().sum::<f64>() / n as f64;
        for x in modes[l].iter_mut() {
            *x -= mean;
        }
        let norm = dot(&modes[l], &modes[l]).sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateFamily { rank: l + 1, required: n_modes + 1 });
        }
        for x in modes[l].iter_mut() {
            *x /= norm;
        }
        fix_sign(&mut modes[l]);
    }

    // Coefficients of each generator relative to the affine family.
    let vertices: Vec<Vec<f64>> = generators
        .iter()
        .map(|g| {
            let diff: Vec<f64> = g.cells().iter().zip(&mu0).map(|(a, b)| a - b).collect();
            modes.iter().map(|m| dot(&diff, m)).collect()
        })
        .collect();
    let hull = HullDomain::new(vertices)?;

    let retained: f64 = eig.eigenvalues.iter().sum();
    let tail = (1.0 - retained / eig.total_energy).max(0.0);
    Ok(BasisBuild {
        basis: DensityBasis { res, mu0, modes, hull },
        eigenvalues: eig.eigenvalues,
        tail_energy_fraction: tail,
    })
}

/// Density at coefficients `z`: negative cells are clipped to zero and
/// the result renormalized to unit mass.
pub fn generate_density(basis: &DensityBasis, z: &[f64]) -> Result<DensityGrid> {
    if z.len() != basis.modes.len() {
        return Err(Error::ShapeMismatch(format!(
            "coefficient vector has length {}, basis has {} modes",
            z.len(),
            basis.modes.len()
        )));
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("coefficients must be finite".into()));
    }
    let mut cells = basis.mu0.clone();
    for (zl, mode) in z.iter().zip(&basis.modes) {
        if *zl != 0.0 {
            for (c, m) in cells.iter_mut().zip(mode) {
                *c += zl * m;
            }
        }
    }
    for c in cells.iter_mut() {
        *c = c.max(0.0);
    }
    DensityGrid::from_masses(basis.res, cells)
}

#[derive(Debug, Serialize, Deserialize)]
struct BasisManifest {
    res: usize,
    n_modes: usize,
    n_vertices: usize,
}

fn write_f32_file(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

fn read_f32_file(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 4 {
        return Err(Error::InvalidInput(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            expected * 4,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Persist a basis into `dir` as `manifest.json`, `rasters.bin`
/// (`mu0` then each mode) and `vertices.bin`.
pub fn save_basis(basis: &DensityBasis, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = BasisManifest {
        res: basis.res,
        n_modes: basis.modes.len(),
        n_vertices: basis.hull.n_vertices(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    let rasters = basis
        .mu0
        .iter()
        .copied()
        .chain(basis.modes.iter().flat_map(|m| m.iter().copied()));
    write_f32_file(&dir.join("rasters.bin"), rasters)?;
    let verts = basis.hull.vertices().iter().flat_map(|v| v.iter().copied());
    write_f32_file(&dir.join("vertices.bin"), verts)?;
    Ok(())
}

pub fn load_basis(dir: &Path) -> Result<DensityBasis> {
    let manifest: BasisManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.res < 2 || manifest.n_modes == 0 || manifest.n_vertices == 0 {
        return Err(Error::InvalidInput("basis manifest has degenerate shape".into()));
    }
    let n = manifest.res * manifest.res;
    let rasters = read_f32_file(&dir.join("rasters.bin"), n * (manifest.n_modes + 1))?;
    let mu0 = rasters[..n].to_vec();
    let modes: Vec<Vec<f64>> = (0..manifest.n_modes)
        .map(|l| rasters[(l + 1) * n..(l + 2) * n].to_vec())
        .collect();
    let verts_flat = read_f32_file(
        &dir.join("vertices.bin"),
        manifest.n_vertices * manifest.n_modes,
    )?;
    let vertices: Vec<Vec<f64>> = (0..manifest.n_vertices)
        .map(|i| verts_flat[i * manifest.n_modes..(i + 1) * manifest.n_modes].to_vec())
        .collect();
    let hull = HullDomain::new(vertices)?;
    Ok(DensityBasis { res: manifest.res, mu0, modes, hull })
}
