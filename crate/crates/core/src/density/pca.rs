//! Leading eigenpairs of the uncentered second-moment matrix of a stack
//! of rasters.
//!
//! For a row-major `rows x cols` matrix `X` of rasters, computes the top
//! eigenpairs of `X^T X`. Small problems (either dimension at most
//! [`DENSE_LIMIT`]) go through a dense symmetric eigendecomposition of
//! the smaller Gram matrix; large ones use blocked subspace iteration
//! with a Rayleigh-Ritz finish. Both paths are deterministic, including
//! under any thread count: parallel accumulations use fixed chunk
//! boundaries combined in index order, and eigenvector signs follow a
//! fixed convention.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

const DENSE_LIMIT: usize = 700;
const OVERSAMPLE: usize = 8;
const SUBSPACE_ITERS: usize = 30;
/// Fixed row-chunk size keeping parallel accumulation deterministic.
const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Top eigenvalues of `X^T X`, descending.
    pub eigenvalues: Vec<f64>,
    /// Matching orthonormal eigenvectors, each of length `cols`.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Total energy `||X||_F^2 = sum of all eigenvalues`.
    pub total_energy: f64,
}

/// `Y = X * V` for `V` given as `cols x k` column list.
fn mat_mul(data: &[f64], rows: usize, cols: usize, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = v.len();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; rows]; k];
    let mut tmp: Vec<Vec<f64>> = vec![Vec::new(); rows];
    tmp.par_iter_mut().enumerate().for_each(|(r, slot)| {
        let row = &data[r * cols..(r + 1) * cols];
        let mut vals = vec![0.0; k];
        for (j, vj) in v.iter().enumerate() {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += row[c] * vj[c];
            }
            vals[j] = acc;
        }
        *slot = vals;
    });
    for (r, vals) in tmp.into_iter().enumerate() {
        for (j, val) in vals.into_iter().enumerate() {
            out[j][r] = val;
        }
    }
    out
}

/// `W = X^T * U` for `U` given as `rows x k` column list.
fn mat_t_mul(data: &[f64], rows: usize, cols: usize, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = u.len();
    let n_chunks = rows.div_ceil(CHUNK);
    // Per-chunk partial accumulators, combined in chunk order afterwards.
    let partials: Vec<Vec<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * CHUNK;
            let hi = (lo + CHUNK).min(rows);
            let mut acc: Vec<Vec<f64>> = vec![vec![0.0; cols]; k];
            for r in lo..hi {
                let row = &data[r * cols..(r + 1) * cols];
                for (j, uj) in u.iter().enumerate() {
                    let w = uj[r];
                    if w != 0.0 {
                        let a = &mut acc[j];
                        for c in 0..cols {
                            a[c] += w * row[c];
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; cols]; k];
    for acc in partials {
        for (j, a) in acc.into_iter().enumerate() {
            let o = &mut out[j];
            for c in 0..cols {
                o[c] += a[c];
            }
        }
    }
    out
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
fn orthonormalize(v: &mut Vec<Vec<f64>>) {
    let mut kept = Vec::with_capacity(v.len());
    for mut x in v.drain(..) {
        for _ in 0..2 {
            for q in kept.iter() {
                let q: &Vec<f64> = q;
                let dot: f64 = x.iter().zip(q).map(|(a, b)| a * b).sum();
                for (xi, qi) in x.iter_mut().zip(q) {
                    *xi -= dot * qi;
                }
            }
        }
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-300 {
            for xi in x.iter_mut() {
                *xi /= norm;
            }
            kept.push(x);
        }
    }
    *v = kept;
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

fn sorted_eigen(sym: SymmetricEigen<f64, nalgebra::Dyn>) -> (Vec<f64>, DMatrix<f64>) {
    let n = sym.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| sym.eigenvalues[b].partial_cmp(&sym.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| sym.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(sym.eigenvectors.nrows(), n);
    for (dst, &src) in idx.iter().enumerate() {
        vecs.set_column(dst, &sym.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Top-`k` eigenpairs of `X^T X`. `seed` fixes the subspace start.
pub fn second_moment_top_eigen(
    data: &[f64],
    rows: usize,
    cols: usize,
    k: usize,
    seed: u64,
) -> Result<EigenResult> {
    if rows == 0 || cols == 0 || data.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "matrix {}x{} with {} entries",
            rows,
            cols,
            data.len()
        )));
    }
    if k == 0 || k > rows.min(cols) {
        return Err(Error::invalid_parameter(
            "k",
            format!("need 1 <= k <= min(rows, cols) = {}, got {}", rows.min(cols), k),
        ));
    }
    let total_energy: f64 = data.iter().map(|x| x * x).sum();

    let (vals, mut vecs) = if cols <= DENSE_LIMIT {
        // Dense eigendecomposition of X^T X.
        let cov = {
            let mut cov = vec![0.0; cols * cols];
            let n_chunks = rows.div_ceil(CHUNK);
            let partials: Vec<Vec<f64>> = (0..n_chunks)
                .into_par_iter()
                .map(|ci| {
                    let lo = ci * CHUNK;
                    let hi = (lo + CHUNK).min(rows);
                    let mut acc = vec![0.0; cols * cols];
                    for r in lo..hi {
                        let row = &data[r * cols..(r + 1) * cols];
                        for a in 0..cols {
                            let ra = row[a];
                            if ra != 0.0 {
                                let dst = &mut acc[a * cols..(a + 1) * cols];
                                for b in 0..cols {
                                    dst[b] += ra * row[b];
                                }
                            }
                        }
                    }
                    acc
                })
                .collect();
            for acc in partials {
                for (dst, src) in cov.iter_mut().zip(&acc) {
                    *dst += src;
                }
            }
            cov
        };
        let m = DMatrix::from_row_slice(cols, cols, &cov);
        let (vals, vecs) = sorted_eigen(SymmetricEigen::new(m));
        let picked: Vec<Vec<f64>> =
            (0..k).map(|j| vecs.column(j).iter().copied().collect()).collect();
        (vals[..k].to_vec(), picked)
    } else if rows <= DENSE_LIMIT {
        // Dense eigendecomposition of the Gram matrix X X^T; map back.
        let mut gram = DMatrix::zeros(rows, rows);
        for a in 0..rows {
            let ra = &data[a * cols..(a + 1) * cols];
            for b in a..rows {
                let rb = &data[b * cols..(b + 1) * cols];
                let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                gram[(a, b)] = dot;
                gram[(b, a)] = dot;
            }
        }
        let (vals, uvecs) = sorted_eigen(SymmetricEigen::new(gram));
        let mut picked = Vec::with_capacity(k);
        for j in 0..k {
            if vals[j] <= 0.0 {
                return Err(Error::DegenerateFamily { rank: j, required: k });
            }
            let u: Vec<f64> = uvecs.column(j).iter().copied().collect();
            let mut v = vec![0.0; cols];
            for r in 0..rows {
                let w = u[r];
                if w != 0.0 {
                    let row = &data[r * cols..(r + 1) * cols];
                    for c in 0..cols {
                        v[c] += w * row[c];
                    }
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
            picked.push(v);
        }
        (vals[..k].to_vec(), picked)
    } else {
        // Blocked subspace iteration with Rayleigh-Ritz.
        let kk = (k + OVERSAMPLE).min(rows.min(cols));
        let mut rng = crate::rng::rng_from(seed);
        let mut v: Vec<Vec<f64>> = (0..kk)
            .map(|_| {
                (0..cols)
                    .map(|_| {
                        use rand::Rng;
                        rng.gen::<f64>() - 0.5
                    })
                    .collect()
            })
            .collect();
        orthonormalize(&mut v);
        for _ in 0..SUBSPACE_ITERS {
            let u = mat_mul(data, rows, cols, &v);
            v = mat_t_mul(data, rows, cols, &u);
            orthonormalize(&mut v);
            if v.len() < k {
                return Err(Error::DegenerateFamily { rank: v.len(), required: k });
            }
        }
        // Rayleigh-Ritz on the converged block.
        let b = mat_mul(data, rows, cols, &v);
        let kk = v.len();
        let mut small = DMatrix::zeros(kk, kk);
        for a in 0..kk {
            for c in a..kk {
                let dot: f64 = b[a].iter().zip(&b[c]).map(|(x, y)| x * y).sum();
                small[(a, c)] = dot;
                small[(c, a)] = dot;
            }
        }
        let (vals, w) = sorted_eigen(SymmetricEigen::new(small));
        let mut picked = Vec::with_capacity(k);
        for j in 0..k {
            let mut out = vec![0.0; cols];
            for a in 0..kk {
                let coef = w[(a, j)];
                for c in 0..cols {
                    out[c] += coef * v[a][c];
                }
            }
            picked.push(out);
        }
        (vals[..k].to_vec(), picked)
    };

    for v in vecs.iter_mut() {
        fix_sign(v);
    }
    // Guard against rank deficiency relative to the request.
    let cutoff = vals.first().copied().unwrap_or(0.0).max(total_energy) * 1e-13;
    let rank = vals.iter().take_while(|&&l| l > cutoff).count();
    if rank < k {
        return Err(Error::DegenerateFamily { rank, required: k });
    }
    Ok(EigenResult { eigenvalues: vals, eigenvectors: vecs, total_energy })
}
