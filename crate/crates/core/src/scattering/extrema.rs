//! Phase-shift extrema, saturation flux and chiral phase-jump thresholds.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{scatter_unchecked, Coupling, Drive, DriveState, EmitterParams};
use crate::error::{Error, Result};

/// Grid size of the coarse detuning scan in [`phase_extrema_numeric`].
pub const EXTREMUM_GRID_POINTS: usize = 2001;
/// Scan half-width in units of `gamma2`.
const SCAN_HALF_WIDTH: f64 = 20.0;
const GOLDEN_REL_WIDTH: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticExtremum {
    /// Detuning of the phase maximum on the positive side, rad/ns.
    pub delta_plus: f64,
    pub delta_minus: f64,
    /// `|φ|_max`, rad.
    pub phi_max: f64,
    /// Set when `beta = 1` and the value is the `β → 1` limit π/2.
    pub at_limit: bool,
}

/// Low-power, dephasing-free extremum of `arg t` for isotropic coupling:
/// `Δ± = ±γ√(1−β)/2`, `|φ|_max = atan(β / (2√(1−β)))`.
pub fn phase_extrema_analytic(p: &EmitterParams) -> Result<AnalyticExtremum> {
    p.validate()?;
    let beta = match p.coupling {
        Coupling::Isotropic { beta } => beta,
        Coupling::Chiral { .. } => {
            return Err(Error::Domain(
                "closed-form phase extremum exists only for isotropic coupling".into(),
            ))
        }
    };
    if p.gamma_dp != 0.0 {
        return Err(Error::Domain(format!(
            "closed-form phase extremum requires gamma_dp = 0, got {}",
            p.gamma_dp
        )));
    }
    if beta >= 1.0 {
        return Ok(AnalyticExtremum {
            delta_plus: 0.0,
            delta_minus: 0.0,
            phi_max: FRAC_PI_2,
            at_limit: true,
        });
    }
    let root = (1.0 - beta).sqrt();
    let delta = 0.5 * p.gamma * root;
    Ok(AnalyticExtremum {
        delta_plus: delta,
        delta_minus: -delta,
        phi_max: (beta / (2.0 * root)).atan(),
        at_limit: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseExtremum {
    /// Detuning of the largest `|arg t|`, rad/ns. Ties between the mirror
    /// images go to the non-negative detuning.
    pub delta_star: f64,
    /// Signed `arg t` at `delta_star`, wrapped to (−π, π].
    pub phi_max: f64,
    /// The response has no phase at all (e.g. `beta = 0`).
    pub flat: bool,
}

/// Numerical maximum of `|arg t(Δ)|` for arbitrary parameters and drive.
///
/// Scans Δ ∈ [−20γ₂, 20γ₂] on a 2001-point grid, then refines the best cell
/// by golden-section search to a relative bracket width of 1e-10.
pub fn phase_extrema_numeric(p: &EmitterParams, drive: Drive) -> Result<PhaseExtremum> {
    p.validate()?;
    drive.validate()?;
    let abs_phase = |delta: f64| scatter_unchecked(p, &DriveState { delta, drive }).phase().abs();

    let half = (EXTREMUM_GRID_POINTS - 1) / 2;
    let step = SCAN_HALF_WIDTH * p.gamma2() / half as f64;
    let at = |i: usize| (i as f64 - half as f64) * step;

    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..EXTREMUM_GRID_POINTS {
        let v = abs_phase(at(i));
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    // |arg t| is even in Δ; mirror images differ only by rounding.
    let mirror = EXTREMUM_GRID_POINTS - 1 - best;
    if best < half && abs_phase(at(mirror)) >= best_val * (1.0 - 1e-12) {
        best = mirror;
        best_val = abs_phase(at(mirror));
    }
    if best_val == 0.0 {
        return Ok(PhaseExtremum {
            delta_star: 0.0,
            phi_max: 0.0,
            flat: true,
        });
    }

    let lo = at(best.saturating_sub(1));
    let hi = at((best + 1).min(EXTREMUM_GRID_POINTS - 1));
    let mut delta_star = golden_max(abs_phase, lo, hi, p.gamma2());
    if abs_phase(delta_star) < best_val {
        delta_star = at(best);
    }
    let phi_max = scatter_unchecked(p, &DriveState { delta: delta_star, drive }).phase();
    Ok(PhaseExtremum {
        delta_star,
        phi_max,
        flat: false,
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, scale: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > GOLDEN_REL_WIDTH * (0.5 * (a + b)).abs().max(scale) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Mean photon number per lifetime at saturation, `(1 + 2γ_dp/γ) / (4β²)`.
pub fn critical_photon_flux(p: &EmitterParams) -> Result<f64> {
    p.validate()?;
    match p.coupling {
        Coupling::Isotropic { beta } if beta > 0.0 => {
            Ok((1.0 + 2.0 * p.gamma_dp / p.gamma) / (4.0 * beta * beta))
        }
        Coupling::Isotropic { .. } => Err(Error::invalid(
            "critical photon flux is undefined for beta = 0",
        )),
        Coupling::Chiral { .. } => Err(Error::Domain(
            "critical photon flux is defined for isotropic coupling".into(),
        )),
    }
}

/// Points where the real resonant chiral transmission
/// `t_dir(Δ=0) = 1 − β_dir γ / (γ₂ + 4Ω²/γ)` crosses zero, i.e. where the
/// phase jumps between π and 0.
///
/// Each threshold varies one quantity while holding the others at the
/// emitter's values (Ω → 0 for the dephasing and coupling thresholds). For
/// `beta_dir = 1`, `gamma_dp = 0` they are `γ/(2√2)`, `γ/2` and `1/2`.
/// `None` means the crossing does not exist in the allowed range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralThresholds {
    pub omega_c: Option<f64>,
    pub gamma_dp_c: Option<f64>,
    pub beta_dir_c: Option<f64>,
}

pub fn chiral_thresholds(p: &EmitterParams) -> Result<ChiralThresholds> {
    p.validate()?;
    let beta_dir = match p.coupling {
        Coupling::Chiral { beta_dir } => beta_dir,
        Coupling::Isotropic { .. } => {
            return Err(Error::Domain("chiral thresholds need chiral coupling".into()))
        }
    };
    let gamma = p.gamma;
    let g2 = p.gamma2();
    let excess = beta_dir * gamma - g2;
    let omega_c = (excess > 0.0).then(|| (gamma * excess / 4.0).sqrt());
    let dp = beta_dir * gamma - 0.5 * gamma;
    let gamma_dp_c = (dp >= 0.0).then_some(dp);
    let b = g2 / gamma;
    let beta_dir_c = (b <= 1.0).then_some(b);
    Ok(ChiralThresholds {
        omega_c,
        gamma_dp_c,
        beta_dir_c,
    })
}
