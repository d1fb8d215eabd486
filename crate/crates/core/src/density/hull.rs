//! Convex hull of the family coordinates, with Euclidean projection.
//!
//! The search domain is `conv{v_1, ..., v_I}` in coefficient space. A
//! point is projected by solving `min_w ||V w - z||^2` over the simplex
//! via accelerated projected gradient; the simplex projection itself is
//! the exact sort-based algorithm, so each iterate stays feasible and
//! the returned point is always a convex combination of vertices.

use crate::error::{Error, Result};

const PROJECTION_TOL: f64 = 1e-8;
const IDENTITY_TOL: f64 = 1e-7;
const MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HullDomain {
    dim: usize,
    /// Vertex coordinates, one `dim`-vector per generator density.
    vertices: Vec<Vec<f64>>,
}

/// Exact Euclidean projection onto the probability simplex.
fn project_simplex(w: &mut [f64]) {
    let n = w.len();
    let mut sorted: Vec<f64> = w.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let cand = (cumsum - 1.0) / (i + 1) as f64;
        if u - cand > 0.0 {
            theta = cand;
        } else {
            break;
        }
    }
    let _ = n;
    for x in w.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

impl HullDomain {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidInput("hull needs at least one vertex".into()));
        }
        let dim = vertices[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("hull vertices must have dimension >= 1".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "hull vertex {} has dimension {}, expected {}",
                    i,
                    v.len(),
                    dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("hull vertex {} not finite", i)));
            }
        }
        Ok(Self { dim, vertices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Centroid of the vertices (always interior for a nondegenerate hull).
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for v in &self.vertices {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi;
            }
        }
        let n = self.vertices.len() as f64;
        for ci in c.iter_mut() {
            *ci /= n;
        }
        c
    }

    /// Axis-aligned bounding box as `(lower, upper)` coordinate vectors.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in &self.vertices {
            for l in 0..self.dim {
                lo[l] = lo[l].min(v[l]);
                hi[l] = hi[l].max(v[l]);
            }
        }
        (lo, hi)
    }

    fn combination(&self, w: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        for (wi, v) in w.iter().zip(&self.vertices) {
            if *wi != 0.0 {
                for (zi, vi) in z.iter_mut().zip(v) {
                    *zi += wi * vi;
                }
            }
        }
        z
    }

    /// Largest squared singular value bound `||V||_F^2` used as the
    /// gradient Lipschitz constant of `w -> ||V w - z||^2 / 2`.
    fn lipschitz(&self) -> f64 {
        let mut s = 0.0;
        for v in &self.vertices {
            for x in v {
                s += x * x;
            }
        }
        s.max(1e-300)
    }

    /// Euclidean projection of `z` onto the hull.
    ///
    /// Returns `z` unchanged (up to re-expression as a vertex combination)
    /// when it is already inside; errors with
    /// [`Error::NonConvergence`] if the iteration budget runs out.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let w = self.project_weights(z)?;
        let proj = self.combination(&w);
        let dist2: f64 = proj.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist2.sqrt() <= IDENTITY_TOL {
            return Ok(z.to_vec());
        }
        Ok(proj)
    }

    /// Convex weights of the projection of `z`.
    pub fn project_weights(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "point has dimension {}, hull has {}",
                z.len(),
                self.dim
            )));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("projection input not finite".into()));
        }
        let n = self.vertices.len();
        let lip = self.lipschitz();
        let step = 1.0 / lip;

        let mut w = vec![1.0 / n as f64; n];
        let mut y = w.clone();
        let mut t = 1.0f64;
        let mut grad = vec![0.0; n];
        for iter in 0..MAX_ITERS {
            // grad = V^T (V y - z)
            let r = {
                let mut r = self.combination(&y);
                for (ri, zi) in r.iter_mut().zip(z) {
                    *ri -= zi;
                }
                r
            };
            for (gi, v) in grad.iter_mut().zip(&self.vertices) {
                *gi = r.iter().zip(v).map(|(a, b)| a * b).sum();
            }
            let mut w_next = y.clone();
            for (wi, gi) in w_next.iter_mut().zip(&grad) {
                *wi -= step * gi;
            }
            project_simplex(&mut w_next);

            // Projected-gradient residual at the new point, scaled back by
            // the step so the tolerance is step-independent.
            let res: f64 = w_next
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                * lip;
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let mut y_next = w_next.clone();
            for ((yi, wn), wo) in y_next.iter_mut().zip(&w_next).zip(&w) {
                *yi = wn + beta * (wn - wo);
            }
            w = w_next;
            y = y_next;
            t = t_next;
            if res <= PROJECTION_TOL {
                return Ok(w);
            }
            if iter == MAX_ITERS - 1 {
                break;
            }
        }
        Err(Error::NonConvergence {
            op: "hull projection".into(),
            detail: format!("projected-gradient residual above {} after {} iterations", PROJECTION_TOL, MAX_ITERS),
        })
    }

    /// Whether `z` lies in the hull up to the projection tolerance.
    pub fn contains(&self, z: &[f64]) -> Result<bool> {
        let w = self.project_weights(z)?;
        let proj = self.combination(&w);
        let dist: f64 = proj
            .iter()
            .zip(z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(dist <= IDENTITY_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn square() -> HullDomain {
        HullDomain::new(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap()
    }

    /// Brute-force projection onto a 2-D hull: examine every vertex and
    /// every edge segment.
    fn brute_project_2d(vertices: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
        let mut best = vertices[0].clone();
        let mut best_d = f64::INFINITY;
        let inside = {
            // z is inside iff it can be written as a convex combination;
            // for these fixed test hulls we check via the support of edges
            // (convex polygon with vertices in order is assumed).
            let n = vertices.len();
            let mut all_left = true;
            let mut all_right = true;
            for i in 0..n {
                let a = &vertices[i];
                let b = &vertices[(i + 1) % n];
                let cross = (b[0] - a[0]) * (z[1] - a[1]) - (b[1] - a[1]) * (z[0] - a[0]);
                if cross < -1e-12 {
                    all_left = false;
                }
                if cross > 1e-12 {
                    all_right = false;
                }
            }
            all_left || all_right
        };
        if inside {
            return z.to_vec();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = &vertices[i];
            let b = &vertices[(i + 1) % n];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let denom = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if denom > 0.0 {
                (((z[0] - a[0]) * ab[0] + (z[1] - a[1]) * ab[1]) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let p = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d = (p[0] - z[0]).powi(2) + (p[1] - z[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = vec![p[0], p[1]];
            }
        }
        best
    }

    #[test]
    fn simplex_projection_basic() {
        let mut w = vec![0.5, 0.5];
        project_simplex(&mut w);
        assert_eq!(w, vec![0.5, 0.5]);

        let mut w = vec![2.0, 0.0];
        project_simplex(&mut w);
        assert!((w[0] - 1.0).abs() < 1e-15 && w[1].abs() < 1e-15);

        let mut w = vec![0.4, 0.1, -0.3];
        project_simplex(&mut w);
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "sum {}", sum);
        assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn interior_point_is_returned_unchanged() {
        let hull = square();
        let z = vec![0.25, 0.75];
        let p = hull.project(&z).unwrap();
        assert_eq!(p, z);
        assert!(hull.contains(&z).unwrap());
    }

    #[test]
    fn exterior_point_matches_geometric_projection() {
        let hull = square();
        // Outside past the top-right corner: nearest point is the corner.
        let p = hull.project(&[2.0, 3.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-6 && (p[1] - 1.0).abs() < 1e-6, "{:?}", p);
        // Straight out of the right edge.
        let p = hull.project(&[1.5, 0.5]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-6 && (p[1] - 0.5).abs() < 1e-6, "{:?}", p);
        assert!(!hull.contains(&[1.5, 0.5]).unwrap());
    }

    #[test]
    fn projection_matches_brute_force_on_polygon() {
        let verts = vec![
            vec![0.0, 0.0],
            vec![2.0, -0.5],
            vec![3.0, 1.0],
            vec![1.5, 2.5],
            vec![-0.5, 1.0],
        ];
        let hull = HullDomain::new(verts.clone()).unwrap();
        let mut rng = crate::rng::rng_from(11);
        for _ in 0..200 {
            let z = vec![rng.gen::<f64>() * 8.0 - 3.0, rng.gen::<f64>() * 8.0 - 3.0];
            let got = hull.project(&z).unwrap();
            let want = brute_project_2d(&verts, &z);
            let d = ((got[0] - want[0]).powi(2) + (got[1] - want[1]).powi(2)).sqrt();
            assert!(d < 5e-6, "z {:?}: got {:?}, want {:?}", z, got, want);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let hull = square();
        let p = hull.project(&[4.0, -2.0]).unwrap();
        let q = hull.project(&p).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn degenerate_single_vertex() {
        let hull = HullDomain::new(vec![vec![3.0, -1.0]]).unwrap();
        let p = hull.project(&[0.0, 0.0]).unwrap();
        assert!((p[0] - 3.0).abs() < 1e-9 && (p[1] + 1.0).abs() < 1e-9);
        assert!(hull.contains(&[3.0, -1.0]).unwrap());
    }

    #[test]
    fn bounding_box_and_centroid() {
        let hull = HullDomain::new(vec![vec![-1.0, 2.0], vec![3.0, 0.0], vec![1.0, 4.0]]).unwrap();
        let (lo, hi) = hull.bounding_box();
        assert_eq!(lo, vec![-1.0, 0.0]);
        assert_eq!(hi, vec![3.0, 4.0]);
        let c = hull.centroid();
        assert!((c[0] - 1.0).abs() < 1e-15 && (c[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(HullDomain::new(vec![]).is_err());
        assert!(HullDomain::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        assert!(HullDomain::new(vec![vec![f64::NAN]]).is_err());
        let hull = square();
        assert!(hull.project(&[0.0]).is_err());
        assert!(hull.project(&[f64::INFINITY, 0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Projection onto a convex set is 1-Lipschitz.
        #[test]
        fn projection_is_nonexpansive(
            ax in -4.0f64..4.0, ay in -4.0f64..4.0,
            bx in -4.0f64..4.0, by in -4.0f64..4.0,
        ) {
            let hull = square();
            let pa = hull.project(&[ax, ay]).unwrap();
            let pb = hull.project(&[bx, by]).unwrap();
            let din = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            let dout = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            prop_assert!(dout <= din + 1e-6, "projection expanded {} -> {}", din, dout);
        }

        /// Projected points satisfy the variational inequality against all
        /// vertices: <z - Pz, v - Pz> <= 0.
        #[test]
        fn variational_inequality_holds(zx in -5.0f64..5.0, zy in -5.0f64..5.0) {
            let hull = square();
            let p = hull.project(&[zx, zy]).unwrap();
            for v in hull.vertices() {
                let ip = (zx - p[0]) * (v[0] - p[0]) + (zy - p[1]) * (v[1] - p[1]);
                prop_assert!(ip <= 1e-5, "vertex {:?} violates optimality: {}", v, ip);
            }
        }
    }
}
