//! Kinematic constraints on sampling trajectories.
//!
//! A shot `xi_1..xi_P` is feasible when consecutive steps stay below a
//! speed bound, second differences stay below an acceleration bound,
//! every point lies in the normalized box `[-pi, pi]^2`, and pinned
//! points keep their prescribed positions:
//!
//! ```text
//! max_p ||xi_{p+1} - xi_p||_2             <= max_speed
//! max_p ||xi_{p+1} + xi_{p-1} - 2 xi_p||_2 <= max_accel
//! ```
//!
//! # Unit conventions
//!
//! This is the single place where physical units are converted. Gradient
//! hardware is described by `g_max` (mT/m), `s_max` (T/m/s), a
//! gyromagnetic ratio `gyro` (MHz/T), a dwell time `dt` (ms), and the
//! normalization constant `k_max` (radians, the full width `2*pi` of the
//! normalized box; the field of view is normalized to 1 m). In these
//! units the per-step bounds are
//!
//! ```text
//! max_speed = dt * gyro * g_max / k_max
//! max_accel = dt^2 * gyro * s_max / k_max
//! ```
//!
//! after converting each quantity to SI (seconds, Hz/T, T/m).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::SamplingScheme;
use crate::BOX_HALF;

/// Length of the maximal-acceleration speed ramp, in samples, for
/// [`HardwareParams::standard_for_grid`].
pub const RAMP_STEPS: f64 = 8.0;

/// Gradient system description. See the module docs for units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareParams {
    /// Peak gradient amplitude, mT/m.
    pub g_max: f64,
    /// Peak slew rate, T/m/s.
    pub s_max: f64,
    /// Normalization constant of the k-space box, radians.
    pub k_max: f64,
    /// Gyromagnetic ratio, MHz/T.
    pub gyro: f64,
    /// Dwell time between consecutive samples, ms.
    pub dt: f64,
}

impl HardwareParams {
    /// Standard 40 mT/m, 180 T/m/s system with the given dwell time.
    pub fn standard(dt_ms: f64) -> Self {
        HardwareParams { g_max: 40.0, s_max: 180.0, k_max: 2.0 * BOX_HALF, gyro: 42.57, dt: dt_ms }
    }

    /// Standard system with the dwell time calibrated so that one step at
    /// peak speed covers exactly the Shannon spacing `2*pi/n_grid`, and
    /// the slew raised so the speed ramp lasts [`RAMP_STEPS`] samples.
    ///
    /// Full-scale shots hold thousands of samples, so ramping at the
    /// physical slew occupies a small fraction of a shot. Desk-scale
    /// shots hold tens of samples; at the physical slew they would spend
    /// hundreds of steps below peak speed and never leave the center of
    /// k-space. Scaling the slew with the dwell keeps the regime (short
    /// ramp, then cruising) instead of the raw numbers.
    pub fn standard_for_grid(n_grid: usize) -> Self {
        let mut hw = HardwareParams::standard(1.0);
        let shannon = 2.0 * BOX_HALF / n_grid as f64;
        let g_t = hw.g_max * 1e-3;
        let dt_s = shannon * hw.k_max / (hw.gyro * 1e6 * g_t);
        hw.dt = dt_s * 1e3;
        hw.s_max = g_t / (RAMP_STEPS * dt_s);
        hw
    }
}

/// Per-step speed and acceleration bounds derived from hardware limits.
///
/// Returns `(max_speed, max_accel)` in normalized k-space units per step
/// and per step squared.
pub fn hardware_constraints(hw: &HardwareParams) -> Result<(f64, f64)> {
    for (name, v) in [
        ("g_max", hw.g_max),
        ("s_max", hw.s_max),
        ("k_max", hw.k_max),
        ("gyro", hw.gyro),
        ("dt", hw.dt),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid_parameter(
                "hardware",
                format!("{} must be positive and finite, got {}", name, v),
            ));
        }
    }
    let dt_s = hw.dt * 1e-3;
    let gyro_hz = hw.gyro * 1e6;
    let g_t = hw.g_max * 1e-3;
    let max_speed = dt_s * gyro_hz * g_t / hw.k_max;
    let max_accel = dt_s * dt_s * gyro_hz * hw.s_max / hw.k_max;
    Ok((max_speed, max_accel))
}

/// A point with a prescribed fixed position inside one shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinnedPoint {
    pub shot: usize,
    pub index: usize,
    pub position: [f64; 2],
}

/// Constraint set for trajectory projection: speed and acceleration
/// bounds plus explicitly pinned points. The box `[-pi, pi]^2` is
/// implicit and always enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    max_speed: f64,
    max_accel: f64,
    pinned: Vec<PinnedPoint>,
}

impl ConstraintSpec {
    pub fn new(max_speed: f64, max_accel: f64) -> Result<Self> {
        if !(max_speed > 0.0) || !max_speed.is_finite() {
            return Err(Error::invalid_parameter(
                "max_speed",
                format!("must be positive and finite, got {}", max_speed),
            ));
        }
        if !(max_accel > 0.0) || !max_accel.is_finite() {
            return Err(Error::invalid_parameter(
                "max_accel",
                format!("must be positive and finite, got {}", max_accel),
            ));
        }
        Ok(ConstraintSpec { max_speed, max_accel, pinned: Vec::new() })
    }

    pub fn from_hardware(hw: &HardwareParams) -> Result<Self> {
        let (speed, accel) = hardware_constraints(hw)?;
        ConstraintSpec::new(speed, accel)
    }

    pub fn with_pins(mut self, pinned: Vec<PinnedPoint>) -> Result<Self> {
        if pinned
            .iter()
            .any(|p| p.position.iter().any(|c| !c.is_finite() || c.abs() > BOX_HALF))
        {
            return Err(Error::InvalidInput("pinned point outside the box".into()));
        }
        self.pinned = pinned;
        Ok(self)
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    pub fn max_accel(&self) -> f64 {
        self.max_accel
    }

    pub fn pinned(&self) -> &[PinnedPoint] {
        &self.pinned
    }
}

/// Worst-case step norm and second-difference norm over all shots.
///
/// Requires at least 3 points per shot so both quantities exist.
pub fn speed_acceleration(scheme: &SamplingScheme) -> Result<(f64, f64)> {
    if scheme.points_per_shot() < 3 {
        return Err(Error::InvalidInput(format!(
            "speed/acceleration need at least 3 points per shot, got {}",
            scheme.points_per_shot()
        )));
    }
    let mut speed = 0.0f64;
    let mut accel = 0.0f64;
    for s in 0..scheme.n_shots() {
        let shot = scheme.shot(s);
        for w in shot.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            speed = speed.max(d);
        }
        for w in shot.windows(3) {
            let ax = w[2][0] + w[0][0] - 2.0 * w[1][0];
            let ay = w[2][1] + w[0][1] - 2.0 * w[1][1];
            accel = accel.max((ax * ax + ay * ay).sqrt());
        }
    }
    Ok((speed, accel))
}
