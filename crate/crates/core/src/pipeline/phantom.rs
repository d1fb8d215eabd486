//! Synthetic piecewise-constant phantoms: a handful of random ellipses and
//! rectangles painted over a zero background, peak-normalized to one.
//!
//! The generator is the built-in stand-in for an imaging dataset; the
//! pipeline also ingests user rasters through the image file format.

use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;
use crate::grid::ImageGrid;
use crate::rng::{mix_seed, rng_from};

/// One phantom, deterministic in (seed, role, index). Role strings keep
/// training and held-out populations disjoint under a single master seed.
pub fn synthetic_phantom(
    n1: usize,
    n2: usize,
    seed: u64,
    role: &str,
    index: u64,
) -> Result<ImageGrid> {
    let mut img = ImageGrid::zeros(n1, n2)?;
    let mut rng = rng_from(mix_seed(seed, role, &[index, n1 as u64, n2 as u64]));

    let n_shapes = rng.gen_range(4..=8);
    for _ in 0..n_shapes {
        let cx: f64 = rng.gen_range(0.15..0.85);
        let cy: f64 = rng.gen_range(0.15..0.85);
        let a: f64 = rng.gen_range(0.08..0.30);
        let b: f64 = a * rng.gen_range(0.35..1.0);
        let angle: f64 = rng.gen_range(-0.6..0.6);
        let value: f64 = rng.gen_range(0.2..1.0);
        let is_ellipse = rng.gen_range(0.0..1.0) < 0.7;
        let (sin, cos) = angle.sin_cos();

        for i in 0..n1 {
            let u = (i as f64 + 0.5) / n1 as f64 - cx;
            for j in 0..n2 {
                let v = (j as f64 + 0.5) / n2 as f64 - cy;
                let ur = u * cos + v * sin;
                let vr = -u * sin + v * cos;
                let inside = if is_ellipse {
                    (ur / a).powi(2) + (vr / b).powi(2) <= 1.0
                } else {
                    ur.abs() <= a && vr.abs() <= b
                };
                if inside {
                    // Later shapes overwrite earlier ones, keeping the image
                    // piecewise constant rather than accumulating.
                    img.set(i, j, Complex64::new(value, 0.0));
                }
            }
        }
    }

    let peak = img.max_modulus();
    if peak > 0.0 {
        for v in img.as_mut_slice() {
            *v /= peak;
        }
    }
    Ok(img)
}

/// A batch of phantoms under one role.
pub fn phantom_set(
    n1: usize,
    n2: usize,
    seed: u64,
    role: &str,
    count: usize,
) -> Result<Vec<ImageGrid>> {
    (0..count)
        .map(|k| synthetic_phantom(n1, n2, seed, role, k as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_role_separated() {
        let a = synthetic_phantom(16, 16, 9, "train phantom", 3).unwrap();
        let b = synthetic_phantom(16, 16, 9, "train phantom", 3).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = synthetic_phantom(16, 16, 9, "holdout phantom", 3).unwrap();
        assert_ne!(a.as_slice(), c.as_slice(), "roles must draw disjoint phantoms");
        let d = synthetic_phantom(16, 16, 9, "train phantom", 4).unwrap();
        assert_ne!(a.as_slice(), d.as_slice(), "indices must differ");
    }

    #[test]
    fn piecewise_constant_with_unit_peak() {
        for index in 0..6 {
            let img = synthetic_phantom(32, 32, 4, "train phantom", index).unwrap();
            assert!((img.max_modulus() - 1.0).abs() < 1e-12, "peak must be 1");
            assert!(img.as_slice().iter().all(|v| v.im == 0.0 && v.re >= 0.0));
            // Piecewise constant: few distinct levels relative to pixel count.
            let mut levels: Vec<u64> = img.as_slice().iter().map(|v| v.re.to_bits()).collect();
            levels.sort_unstable();
            levels.dedup();
            assert!(
                levels.len() <= 9,
                "expected at most background + 8 shape levels, got {}",
                levels.len()
            );
        }
    }

    #[test]
    fn batch_matches_individual_draws() {
        let batch = phantom_set(16, 16, 2, "train phantom", 4).unwrap();
        assert_eq!(batch.len(), 4);
        for (k, img) in batch.iter().enumerate() {
            let single = synthetic_phantom(16, 16, 2, "train phantom", k as u64).unwrap();
            assert_eq!(img.as_slice(), single.as_slice());
        }
    }
}
