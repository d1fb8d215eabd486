//! Complex images on a centered pixel lattice.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex image of shape `n1 x n2`, row-major.
///
/// Pixel `(i1, i2)` sits at integer position `(i1 - n1/2, i2 - n2/2)`,
/// so the lattice runs over `[-n/2, n/2 - 1]` per axis. Dimensions must
/// be even so the lattice is exactly centered.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    n1: usize,
    n2: usize,
    data: Vec<Complex64>,
}

impl ImageGrid {
    pub fn zeros(n1: usize, n2: usize) -> Result<Self> {
        Self::check_dims(n1, n2)?;
        Ok(ImageGrid { n1, n2, data: vec![Complex64::new(0.0, 0.0); n1 * n2] })
    }

    pub fn from_vec(n1: usize, n2: usize, data: Vec<Complex64>) -> Result<Self> {
        Self::check_dims(n1, n2)?;
        if data.len() != n1 * n2 {
            return Err(Error::ShapeMismatch(format!(
                "image data length {} does not match {}x{}",
                data.len(),
                n1,
                n2
            )));
        }
        Ok(ImageGrid { n1, n2, data })
    }

    /// Build from a real-valued raster (imaginary parts zero).
    pub fn from_real(n1: usize, n2: usize, data: &[f64]) -> Result<Self> {
        let complex: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_vec(n1, n2, complex)
    }

    fn check_dims(n1: usize, n2: usize) -> Result<()> {
        if n1 < 2 || n2 < 2 || n1 % 2 != 0 || n2 % 2 != 0 {
            return Err(Error::invalid_parameter(
                "image dims",
                format!("dimensions must be even and at least 2, got {}x{}", n1, n2),
            ));
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize) -> Complex64 {
        self.data[i1 * self.n2 + i2]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, v: Complex64) {
        self.data[i1 * self.n2 + i2] = v;
    }

    /// Centered lattice coordinate of pixel `(i1, i2)`.
    #[inline]
    pub fn pixel_position(&self, i1: usize, i2: usize) -> (f64, f64) {
        (
            i1 as f64 - (self.n1 / 2) as f64,
            i2 as f64 - (self.n2 / 2) as f64,
        )
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Stable hash of dimensions and pixel values, used to derive
    /// content-addressed noise seeds.
    pub fn content_hash(&self) -> u64 {
        let mut flat = Vec::with_capacity(2 * self.data.len());
        for v in &self.data {
            flat.push(v.re);
            flat.push(v.im);
        }
        crate::rng::mix_seed(
            crate::rng::hash_f64_slice(&flat),
            "image",
            &[self.n1 as u64, self.n2 as u64],
        )
    }

    pub fn max_modulus(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_tiny_dims() {
        assert!(ImageGrid::zeros(3, 4).is_err());
        assert!(ImageGrid::zeros(4, 6).is_ok());
        assert!(ImageGrid::zeros(0, 4).is_err());
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(ImageGrid::from_vec(2, 2, vec![Complex64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn lattice_is_centered() {
        let g = ImageGrid::zeros(4, 6).unwrap();
        assert_eq!(g.pixel_position(0, 0), (-2.0, -3.0));
        assert_eq!(g.pixel_position(2, 3), (0.0, 0.0));
        assert_eq!(g.pixel_position(3, 5), (1.0, 2.0));
    }
}
