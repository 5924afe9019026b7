//! Time integration of the two-level Lindblad master equation.
//!
//! This is deliberately a different route to the steady state than the closed
//! form in the parent module: the full 2×2 density matrix is propagated with a
//! fixed-step classical Runge-Kutta scheme from the ground state, using the
//! rotating-frame Hamiltonian
//!
//! ```text
//! H = −Δ |e⟩⟨e| − Ω (|e⟩⟨g| + |g⟩⟨e|)
//! ```
//!
//! with jump operators `√γ |g⟩⟨e|` (decay) and `√(2γ_dp) |e⟩⟨e|` (pure
//! dephasing, which damps coherences at `γ_dp`).

use num_complex::Complex64;

use super::{BlochSteadyState, DriveState, EmitterParams};
use crate::error::{Error, Result};

type Mat = [[Complex64; 2]; 2];

const G: usize = 0;
const E: usize = 1;

/// Relative change per step below which the state counts as stationary.
const CONVERGENCE_TOL: f64 = 1e-12;
/// Consecutive quiet steps required before declaring convergence.
const QUIET_STEPS: usize = 16;

/// Step and horizon for [`bloch_oracle_integrate`].
#[derive(Clone, Copy, Debug)]
pub struct OracleSettings {
    pub dt: f64,
    pub horizon: f64,
}

impl OracleSettings {
    /// Step resolving the fastest coherent frequency, horizon covering many
    /// relaxation times of the slowest mode.
    pub fn auto(p: &EmitterParams, d: &DriveState) -> Self {
        let g2 = p.gamma2();
        let fastest = d.delta.abs() + 2.0 * d.drive.omega() + g2 + p.gamma;
        let slowest = p.gamma.min(g2);
        OracleSettings {
            dt: 0.1 / fastest,
            horizon: 80.0 / slowest,
        }
    }
}

struct Lindblad {
    h: Mat,
    gamma: f64,
    dephasing: f64,
}

impl Lindblad {
    fn new(p: &EmitterParams, d: &DriveState) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        let omega = Complex64::new(-d.drive.omega(), 0.0);
        let mut h = [[zero; 2]; 2];
        h[E][E] = Complex64::new(-d.delta, 0.0);
        h[E][G] = omega;
        h[G][E] = omega;
        Lindblad {
            h,
            gamma: p.gamma,
            dephasing: 2.0 * p.gamma_dp,
        }
    }

    fn rhs(&self, rho: &Mat) -> Mat {
        let i = Complex64::new(0.0, 1.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        // −i[H, ρ]
        for r in 0..2 {
            for c in 0..2 {
                let mut comm = Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    comm += self.h[r][k] * rho[k][c] - rho[r][k] * self.h[k][c];
                }
                out[r][c] = -i * comm;
            }
        }
        // D[√γ σ_ge]: population flows e → g, coherences decay at γ/2.
        out[G][G] += self.gamma * rho[E][E];
        out[E][E] -= self.gamma * rho[E][E];
        out[G][E] -= 0.5 * self.gamma * rho[G][E];
        out[E][G] -= 0.5 * self.gamma * rho[E][G];
        // D[√κ σ_ee] with κ = 2γ_dp: coherences decay at κ/2.
        out[G][E] -= 0.5 * self.dephasing * rho[G][E];
        out[E][G] -= 0.5 * self.dephasing * rho[E][G];
        out
    }
}

fn axpy(a: &Mat, s: f64, b: &Mat) -> Mat {
    let mut out = *a;
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] += s * b[r][c];
        }
    }
    out
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

fn rk4_step(sys: &Lindblad, rho: &Mat, dt: f64) -> Mat {
    let k1 = sys.rhs(rho);
    let k2 = sys.rhs(&axpy(rho, 0.5 * dt, &k1));
    let k3 = sys.rhs(&axpy(rho, 0.5 * dt, &k2));
    let k4 = sys.rhs(&axpy(rho, dt, &k3));
    let mut out = *rho;
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] += dt / 6.0 * (k1[r][c] + 2.0 * k2[r][c] + 2.0 * k3[r][c] + k4[r][c]);
        }
    }
    out
}

/// Integrate the master equation from the ground state until the relative
/// change per step stays below 1e-12, and return the final state.
///
/// Fails with [`Error::NotConverged`] (carrying the last relative change) if
/// the horizon is exhausted first.
pub fn bloch_oracle_integrate(
    p: &EmitterParams,
    d: &DriveState,
    dt: f64,
    horizon: f64,
) -> Result<BlochSteadyState> {
    p.validate()?;
    d.validate()?;
    if !(dt > 0.0 && dt.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("dt and horizon must be positive and finite"));
    }
    let sys = Lindblad::new(p, d);
    let zero = Complex64::new(0.0, 0.0);
    let mut rho: Mat = [[zero; 2]; 2];
    rho[G][G] = Complex64::new(1.0, 0.0);

    let steps = (horizon / dt).ceil() as u64;
    let mut quiet = 0;
    let mut last_change = f64::INFINITY;
    for _ in 0..steps {
        let next = rk4_step(&sys, &rho, dt);
        let mut diff = next;
        for r in 0..2 {
            for c in 0..2 {
                diff[r][c] -= rho[r][c];
            }
        }
        last_change = max_abs(&diff) / max_abs(&next);
        rho = next;
        if last_change < CONVERGENCE_TOL {
            quiet += 1;
            if quiet >= QUIET_STEPS {
                return Ok(BlochSteadyState {
                    rho_ee: rho[E][E].re,
                    rho_ge: rho[G][E],
                });
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NotConverged { last_change })
}

/// [`bloch_oracle_integrate`] with [`OracleSettings::auto`].
pub fn bloch_oracle_steady_state(p: &EmitterParams, d: &DriveState) -> Result<BlochSteadyState> {
    let s = OracleSettings::auto(p, d);
    bloch_oracle_integrate(p, d, s.dt, s.horizon)
}
