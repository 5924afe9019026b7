//! Unit conventions and small phase helpers.
//!
//! Internally every rate and detuning is an angular frequency in rad/ns.
//! Laser and transition frequencies are ordinary frequencies in GHz, so a
//! detuning of `f - f0` GHz corresponds to `2π (f - f0)` rad/ns.

use std::f64::consts::{PI, TAU};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Convert a frequency difference in GHz to an angular detuning in rad/ns.
#[inline]
pub fn ghz_to_rad_per_ns(f_ghz: f64) -> f64 {
    TAU * f_ghz
}

#[inline]
pub fn rad_per_ns_to_ghz(w: f64) -> f64 {
    w / TAU
}

/// MHz to rad/ns.
#[inline]
pub fn mhz_to_rad_per_ns(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e-3
}

/// Fringe period in laser frequency (GHz) for a path-length imbalance in m.
#[inline]
pub fn fringe_period_ghz(delta_l: f64) -> f64 {
    SPEED_OF_LIGHT / delta_l * 1e-9
}

/// Geometric interferometer phase `2π f δL / c` for `f` in GHz.
#[inline]
pub fn geometric_phase(f_ghz: f64, delta_l: f64) -> f64 {
    TAU * f_ghz * 1e9 * delta_l / SPEED_OF_LIGHT
}

/// Wrap an angle into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Continue `phi` onto the branch nearest to `reference`.
pub fn nearest_branch(phi: f64, reference: f64) -> f64 {
    reference + wrap_phase(phi - reference)
}

/// Unwrap a phase series by nearest-branch continuation from the first sample.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    for &p in phases {
        let next = match out.last() {
            Some(&prev) => nearest_branch(p, prev),
            None => p,
        };
        out.push(next);
    }
    out
}
