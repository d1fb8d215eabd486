//! Multi-shot sampling schemes.

use crate::error::{Error, Result};

/// A k-space sampling scheme: `n_shots` trajectories of `points_per_shot`
/// points each, in normalized units.
///
/// Points are stored shot-major. The first `fixed_prefix_len` points of
/// every shot form a pinned prefix that samplers must not move. Box
/// membership (`[-pi, pi]^2`) is established by constraint projection,
/// not asserted at construction, so shifted copies used by diagnostic
/// scans remain representable.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingScheme {
    n_shots: usize,
    points_per_shot: usize,
    fixed_prefix_len: usize,
    points: Vec<[f64; 2]>,
}

impl SamplingScheme {
    pub fn new(
        n_shots: usize,
        points_per_shot: usize,
        fixed_prefix_len: usize,
        points: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if n_shots == 0 || points_per_shot == 0 {
            return Err(Error::invalid_parameter(
                "scheme dims",
                format!("{} shots x {} points", n_shots, points_per_shot),
            ));
        }
        if fixed_prefix_len > points_per_shot {
            return Err(Error::invalid_parameter(
                "fixed_prefix_len",
                format!("{} exceeds points per shot {}", fixed_prefix_len, points_per_shot),
            ));
        }
        if points.len() != n_shots * points_per_shot {
            return Err(Error::ShapeMismatch(format!(
                "scheme has {} points, expected {}",
                points.len(),
                n_shots * points_per_shot
            )));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidInput("scheme contains non-finite points".into()));
        }
        Ok(SamplingScheme { n_shots, points_per_shot, fixed_prefix_len, points })
    }

    pub fn n_shots(&self) -> usize {
        self.n_shots
    }

    pub fn points_per_shot(&self) -> usize {
        self.points_per_shot
    }

    pub fn fixed_prefix_len(&self) -> usize {
        self.fixed_prefix_len
    }

    /// Total number of samples `n_shots * points_per_shot`.
    pub fn m_total(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.points
    }

    pub fn shot(&self, s: usize) -> &[[f64; 2]] {
        let start = s * self.points_per_shot;
        &self.points[start..start + self.points_per_shot]
    }

    /// True when point `p` of any shot belongs to the pinned prefix.
    pub fn is_pinned(&self, p: usize) -> bool {
        p < self.fixed_prefix_len
    }

    /// Copy with every point shifted by `(dx, dy)`; used by diagnostic
    /// scans, so the shift may leave the box.
    pub fn shifted(&self, dx: f64, dy: f64) -> SamplingScheme {
        let mut out = self.clone();
        for p in out.points.iter_mut() {
            p[0] += dx;
            p[1] += dy;
        }
        out
    }

    /// Hash of the exact point bit patterns plus shape, for seeding.
    pub fn content_hash(&self) -> u64 {
        let flat: Vec<f64> = self.points.iter().flat_map(|p| [p[0], p[1]]).collect();
        crate::rng::hash_f64_slice(&flat)
            ^ crate::rng::mix_seed(
                self.n_shots as u64,
                "scheme-shape",
                &[self.points_per_shot as u64, self.fixed_prefix_len as u64],
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shape() {
        assert!(SamplingScheme::new(2, 3, 0, vec![[0.0, 0.0]; 5]).is_err());
        assert!(SamplingScheme::new(2, 3, 4, vec![[0.0, 0.0]; 6]).is_err());
        assert!(SamplingScheme::new(2, 3, 1, vec![[0.0, 0.0]; 6]).is_ok());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SamplingScheme::new(1, 2, 0, vec![[0.0, 0.0], [f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn shot_slices() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let s = SamplingScheme::new(2, 2, 1, pts).unwrap();
        assert_eq!(s.shot(1), &[[2.0, 0.0], [3.0, 0.0]]);
        assert!(s.is_pinned(0));
        assert!(!s.is_pinned(1));
    }

    #[test]
    fn content_hash_tracks_points_and_shape() {
        let a = SamplingScheme::new(1, 4, 0, vec![[0.1, 0.2]; 4]).unwrap();
        let b = SamplingScheme::new(2, 2, 0, vec![[0.1, 0.2]; 4]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        let mut c = a.clone();
        c.points_mut()[0][0] = 0.1000001;
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
