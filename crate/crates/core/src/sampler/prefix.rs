//! Fixed radial prefixes: every shot leaves the origin along its own
//! spoke, accelerating as hard as the constraints allow until adjacent
//! spokes have drifted `shannon_gap` apart, after which free samples
//! take over. The disk traced out this way is also the region excluded
//! from the discrepancy.

use crate::error::{Error, Result};
use crate::kinematics::ConstraintSpec;

/// Hard cap on prefix length; reaching it means the spacing condition is
/// unattainable inside the box anyway.
const MAX_PREFIX: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct RadialPrefix {
    /// Prefix points per shot, each starting with the origin.
    pub shots: Vec<Vec<[f64; 2]>>,
    /// Common number of prefix points in every shot.
    pub prefix_len: usize,
    /// Radius of the disk covered by the prefixes.
    pub exclusion_radius: f64,
}

/// Default spacing target of half a pixel for an `n_grid` reconstruction.
pub fn default_shannon_gap(n_grid: usize) -> f64 {
    std::f64::consts::PI / n_grid as f64
}

/// Build the per-shot radial prefixes.
///
/// Shot `s` heads out at angle `2*pi*s / n_shots`. Radii follow a
/// maximal-acceleration ramp capped at maximal speed; the prefix stops at
/// the first point where same-index samples of adjacent shots are at
/// least `shannon_gap` apart (that point included). A single shot has no
/// adjacent spoke, so its prefix is just the origin pin.
pub fn radial_prefix(
    constraints: &ConstraintSpec,
    n_shots: usize,
    shannon_gap: f64,
) -> Result<RadialPrefix> {
    if n_shots == 0 {
        return Err(Error::invalid_parameter("n_shots", "must be at least 1"));
    }
    if !(shannon_gap > 0.0) || !shannon_gap.is_finite() {
        return Err(Error::invalid_parameter(
            "shannon_gap",
            format!("must be positive and finite, got {}", shannon_gap),
        ));
    }
    let mut radii = vec![0.0];
    if n_shots > 1 {
        let half_angle = std::f64::consts::PI / n_shots as f64;
        // Adjacent shots at radius r are 2 r sin(pi / n_shots) apart.
        let spread = 2.0 * half_angle.sin();
        let mut r = 0.0;
        let mut v = 0.0;
        loop {
            v = (v + constraints.max_accel()).min(constraints.max_speed());
            r += v;
            if r > crate::BOX_HALF {
                return Err(Error::InvalidInput(format!(
                    "radial prefix left the box (radius {:.4}) before reaching a spacing of {}",
                    r, shannon_gap
                )));
            }
            radii.push(r);
            if r * spread >= shannon_gap {
                break;
            }
            if radii.len() >= MAX_PREFIX {
                return Err(Error::InvalidInput(
                    "radial prefix exceeded the length cap without reaching the spacing target"
                        .into(),
                ));
            }
        }
    }
    let exclusion_radius = *radii.last().unwrap();
    let shots: Vec<Vec<[f64; 2]>> = (0..n_shots)
        .map(|s| {
            let angle = crate::BOX_WIDTH * s as f64 / n_shots as f64;
            let (sin, cos) = angle.sin_cos();
            radii.iter().map(|&r| [r * cos, r * sin]).collect()
        })
        .collect();
    Ok(RadialPrefix { prefix_len: radii.len(), shots, exclusion_radius })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_shot_pins_only_the_origin() {
        let constraints = ConstraintSpec::new(0.1, 0.01).unwrap();
        let p = radial_prefix(&constraints, 1, 0.05).unwrap();
        assert_eq!(p.prefix_len, 1);
        assert_eq!(p.shots, vec![vec![[0.0, 0.0]]]);
        assert_eq!(p.exclusion_radius, 0.0);
    }

    #[test]
    fn ramp_matches_independent_simulation() {
        // alpha = 0.05, beta = 0.004, 8 shots, gap = pi/64.
        let alpha = 0.05;
        let beta = 0.004;
        let n_shots = 8;
        let gap = default_shannon_gap(64);
        let constraints = ConstraintSpec::new(alpha, beta).unwrap();
        let p = radial_prefix(&constraints, n_shots, gap).unwrap();

        // Independent ramp: velocities grow by beta up to alpha, radii
        // accumulate, stop at the first radius with enough spread.
        let spread = 2.0 * (std::f64::consts::PI / n_shots as f64).sin();
        let mut radii = vec![0.0f64];
        let mut v: f64 = 0.0;
        while radii.last().unwrap() * spread < gap {
            v = (v + beta).min(alpha);
            let r = radii.last().unwrap() + v;
            radii.push(r);
        }
        assert_eq!(p.prefix_len, radii.len());
        assert_eq!(p.prefix_len, 7, "expected ramp 0.004, 0.012, ..., 0.084");
        assert!((p.exclusion_radius - radii.last().unwrap()).abs() < 1e-15);
        for (s, shot) in p.shots.iter().enumerate() {
            let angle = 2.0 * std::f64::consts::PI * s as f64 / n_shots as f64;
            for (k, pt) in shot.iter().enumerate() {
                let want = [radii[k] * angle.cos(), radii[k] * angle.sin()];
                assert!(
                    (pt[0] - want[0]).abs() < 1e-12 && (pt[1] - want[1]).abs() < 1e-12,
                    "shot {} point {}: {:?} vs {:?}",
                    s,
                    k,
                    pt,
                    want
                );
            }
        }
        // The prefix itself obeys the constraints it was built from.
        for shot in &p.shots {
            for w in shot.windows(2) {
                let step = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
                assert!(step <= alpha + 1e-12);
            }
            for w in shot.windows(3) {
                let ax = w[2][0] - 2.0 * w[1][0] + w[0][0];
                let ay = w[2][1] - 2.0 * w[1][1] + w[0][1];
                assert!((ax * ax + ay * ay).sqrt() <= beta + 1e-12);
            }
        }
    }

    #[test]
    fn four_shots_are_quarter_turn_symmetric() {
        let constraints = ConstraintSpec::new(0.05, 0.004).unwrap();
        let p = radial_prefix(&constraints, 4, default_shannon_gap(32)).unwrap();
        for s in 0..4 {
            let a = &p.shots[s];
            let b = &p.shots[(s + 1) % 4];
            for (pa, pb) in a.iter().zip(b) {
                // Rotating shot s by 90 degrees gives shot s+1.
                let rot = [-pa[1], pa[0]];
                assert!(
                    (rot[0] - pb[0]).abs() < 1e-12 && (rot[1] - pb[1]).abs() < 1e-12,
                    "shot {}: {:?} rotated {:?} vs {:?}",
                    s,
                    pa,
                    rot,
                    pb
                );
            }
        }
    }

    #[test]
    fn unreachable_spacing_is_an_error() {
        let constraints = ConstraintSpec::new(0.05, 0.004).unwrap();
        // Many shots need a huge radius for the same spacing; the prefix
        // exits the box first.
        let err = radial_prefix(&constraints, 1_000_000, default_shannon_gap(64));
        assert!(err.is_err());
        assert!(radial_prefix(&constraints, 0, 0.1).is_err());
        assert!(radial_prefix(&constraints, 4, 0.0).is_err());
    }

    #[test]
    fn speed_cap_engages_on_long_ramps() {
        // Tiny acceleration with a tight gap forces the ramp into the
        // constant-speed phase.
        let constraints = ConstraintSpec::new(0.01, 0.0005).unwrap();
        let p = radial_prefix(&constraints, 3, 0.9).unwrap();
        let shot = &p.shots[0];
        let mut steps = Vec::new();
        for w in shot.windows(2) {
            steps.push(((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt());
        }
        let capped = steps.iter().filter(|&&s| (s - 0.01).abs() < 1e-12).count();
        assert!(capped >= 2, "expected several maximal-speed steps, got {:?}", steps);
        assert!(steps.windows(2).all(|w| w[1] >= w[0] - 1e-15), "ramp must be monotone");
    }
}
