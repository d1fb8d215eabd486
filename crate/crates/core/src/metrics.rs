//! Image quality metrics.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Cap applied when the candidate matches the reference exactly.
pub const PSNR_CAP_DB: f64 = 300.0;

/// Peak signal-to-noise ratio in dB.
///
/// The peak is the maximum modulus of the *reference* image; the error
/// is the mean squared modulus difference. An exact match returns
/// [`PSNR_CAP_DB`], and the value is clamped at that cap. A reference
/// that is identically zero has no meaningful peak and is rejected.
pub fn psnr(reference: &ImageGrid, candidate: &ImageGrid) -> Result<f64> {
    if reference.n1() != candidate.n1() || reference.n2() != candidate.n2() {
        return Err(Error::ShapeMismatch(format!(
            "psnr shapes {}x{} vs {}x{}",
            reference.n1(),
            reference.n2(),
            candidate.n1(),
            candidate.n2()
        )));
    }
    let peak = reference.max_modulus();
    if peak == 0.0 {
        return Err(Error::InvalidInput(
            "psnr reference image is identically zero".into(),
        ));
    }
    let mse: f64 = reference
        .as_slice()
        .iter()
        .zip(candidate.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Squared-error cost `0.5 * ||a - b||^2`.
pub fn l2_cost(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    if a.n1() != b.n1() || a.n2() != b.n2() {
        return Err(Error::ShapeMismatch(format!(
            "cost shapes {}x{} vs {}x{}",
            a.n1(),
            a.n2(),
            b.n1(),
            b.n2()
        )));
    }
    Ok(0.5
        * a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::Rng;

    fn constant(n: usize, v: f64) -> ImageGrid {
        ImageGrid::from_real(n, n, &vec![v; n * n]).unwrap()
    }

    #[test]
    fn unit_error_on_unit_peak_is_zero_db() {
        let r = constant(4, 1.0);
        let c = constant(4, 0.0);
        assert!((psnr(&r, &c).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn point_one_error_is_twenty_db() {
        let r = constant(4, 1.0);
        let c = constant(4, 0.9);
        assert!((psnr(&r, &c).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn exact_match_hits_cap() {
        let r = constant(4, 0.7);
        assert_eq!(psnr(&r, &r).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn zero_reference_rejected() {
        let r = constant(4, 0.0);
        let c = constant(4, 0.1);
        assert!(psnr(&r, &c).is_err());
    }

    #[test]
    fn decreases_with_noise_amplitude() {
        let mut rng = crate::rng::rng_from(42);
        let n = 8;
        let r = constant(n, 1.0);
        let mut means = Vec::new();
        for amp in [0.01, 0.1, 0.5] {
            let mut acc = 0.0;
            for _ in 0..20 {
                let data: Vec<Complex64> = (0..n * n)
                    .map(|_| Complex64::new(1.0 + amp * (rng.gen::<f64>() - 0.5), 0.0))
                    .collect();
                let c = ImageGrid::from_vec(n, n, data).unwrap();
                acc += psnr(&r, &c).unwrap();
            }
            means.push(acc / 20.0);
        }
        assert!(
            means[0] > means[1] && means[1] > means[2],
            "psnr means not decreasing with noise: {:?}",
            means
        );
    }

    #[test]
    fn l2_cost_half_norm() {
        let a = constant(4, 1.0);
        let b = constant(4, 0.0);
        assert!((l2_cost(&a, &b).unwrap() - 8.0).abs() < 1e-12);
    }
}
