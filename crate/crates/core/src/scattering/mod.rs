//! Steady-state response of a driven two-level emitter coupled to a
//! single-mode waveguide.
//!
//! The emitter is described by its total decay rate `gamma`, pure dephasing
//! rate `gamma_dp` and a coupling efficiency into the guided mode. Coherences
//! decay at `gamma2 = gamma/2 + gamma_dp`. All closed forms share the
//! saturation denominator
//!
//! ```text
//! D = gamma2² + Δ² + 4 (gamma2/gamma) Ω²
//! ```
//!
//! Isotropic coupling splits the guided emission equally between the two
//! propagation directions, chiral coupling emits a fraction `beta_dir` into
//! the forward (transmitted) mode.

mod extrema;
mod oracle;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{ghz_to_rad_per_ns, wrap_phase};

pub use extrema::{
    chiral_thresholds, critical_photon_flux, phase_extrema_analytic, phase_extrema_numeric,
    AnalyticExtremum, ChiralThresholds, PhaseExtremum, EXTREMUM_GRID_POINTS,
};
pub use oracle::{bloch_oracle_integrate, bloch_oracle_steady_state, OracleSettings};

/// Emitter-waveguide coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coupling {
    /// Equal coupling to both directions; `beta = gamma_wg / gamma`.
    Isotropic { beta: f64 },
    /// Directional coupling; `beta_dir = gamma_t / gamma`.
    Chiral { beta_dir: f64 },
}

impl Coupling {
    /// The raw efficiency, whichever variant.
    pub fn efficiency(&self) -> f64 {
        match *self {
            Coupling::Isotropic { beta } => beta,
            Coupling::Chiral { beta_dir } => beta_dir,
        }
    }

    pub fn is_chiral(&self) -> bool {
        matches!(self, Coupling::Chiral { .. })
    }

    /// Amplitude of the scattered field relative to `gamma (gamma2 + iΔ) / D`.
    fn field_weight(&self) -> f64 {
        match *self {
            Coupling::Isotropic { beta } => beta / 2.0,
            Coupling::Chiral { beta_dir } => beta_dir,
        }
    }
}

/// Emitter parameters. Rates in rad/ns, `f0` in GHz, `phi0` in rad.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    pub gamma: f64,
    pub gamma_dp: f64,
    pub coupling: Coupling,
    /// Transition frequency, GHz.
    #[serde(default)]
    pub f0: f64,
    /// Constant spectral phase offset from parasitic reflections. Applied only
    /// to "as-measured" phases, never inside the physics.
    #[serde(default)]
    pub phi0: f64,
}

impl EmitterParams {
    pub fn isotropic(gamma: f64, gamma_dp: f64, beta: f64) -> Result<Self> {
        Self {
            gamma,
            gamma_dp,
            coupling: Coupling::Isotropic { beta },
            f0: 0.0,
            phi0: 0.0,
        }
        .validated()
    }

    pub fn chiral(gamma: f64, gamma_dp: f64, beta_dir: f64) -> Result<Self> {
        Self {
            gamma,
            gamma_dp,
            coupling: Coupling::Chiral { beta_dir },
            f0: 0.0,
            phi0: 0.0,
        }
        .validated()
    }

    pub fn with_f0(mut self, f0: f64) -> Self {
        self.f0 = f0;
        self
    }

    pub fn with_phi0(mut self, phi0: f64) -> Self {
        self.phi0 = phi0;
        self
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let eff = self.coupling.efficiency();
        for (name, v) in [
            ("gamma", self.gamma),
            ("gamma_dp", self.gamma_dp),
            ("coupling", eff),
            ("f0", self.f0),
            ("phi0", self.phi0),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.gamma_dp < 0.0 {
            return Err(Error::invalid(format!(
                "gamma_dp must be >= 0, got {}",
                self.gamma_dp
            )));
        }
        if !(0.0..=1.0).contains(&eff) {
            return Err(Error::invalid(format!(
                "coupling efficiency must lie in [0, 1], got {eff}"
            )));
        }
        Ok(())
    }

    /// Coherence decay rate `gamma/2 + gamma_dp`.
    #[inline]
    pub fn gamma2(&self) -> f64 {
        0.5 * self.gamma + self.gamma_dp
    }

    /// Angular detuning (rad/ns) of a laser at `f_ghz` from this transition.
    #[inline]
    pub fn detuning(&self, f_ghz: f64) -> f64 {
        ghz_to_rad_per_ns(f_ghz - self.f0)
    }

    /// Saturation denominator `gamma2² + Δ² + 4 (gamma2/gamma) Ω²`.
    #[inline]
    pub fn denominator(&self, d: &DriveState) -> f64 {
        let g2 = self.gamma2();
        g2 * g2 + d.delta * d.delta + 4.0 * (g2 / self.gamma) * d.drive.omega_sq()
    }
}

/// Drive strength. `LinearResponse` drops the Ω² saturation term exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "omega", rename_all = "snake_case")]
pub enum Drive {
    LinearResponse,
    /// Rabi frequency Ω in rad/ns.
    Rabi(f64),
}

impl Drive {
    #[inline]
    pub fn omega(&self) -> f64 {
        match *self {
            Drive::LinearResponse => 0.0,
            Drive::Rabi(o) => o,
        }
    }

    #[inline]
    pub fn omega_sq(&self) -> f64 {
        let o = self.omega();
        o * o
    }

    pub fn validate(&self) -> Result<()> {
        if let Drive::Rabi(o) = *self {
            if !o.is_finite() {
                return Err(Error::NonFinite("omega_r"));
            }
            if o < 0.0 {
                return Err(Error::invalid(format!("omega_r must be >= 0, got {o}")));
            }
        }
        Ok(())
    }
}

/// Laser detuning `Δ = ω − ω_TLS` (rad/ns) and drive strength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveState {
    pub delta: f64,
    pub drive: Drive,
}

impl DriveState {
    pub fn linear(delta: f64) -> Self {
        Self {
            delta,
            drive: Drive::LinearResponse,
        }
    }

    pub fn rabi(delta: f64, omega_r: f64) -> Self {
        Self {
            delta,
            drive: Drive::Rabi(omega_r),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::NonFinite("delta"));
        }
        self.drive.validate()
    }
}

/// Steady-state excited population and ground-excited coherence `ρ_ge`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochSteadyState {
    pub rho_ee: f64,
    pub rho_ge: Complex64,
}

/// Complex transmission amplitude and normalized transmitted intensity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterResponse {
    pub t: Complex64,
    pub i_t: f64,
}

impl ScatterResponse {
    /// Unit transmission, i.e. no emitter.
    pub const TRANSPARENT: ScatterResponse = ScatterResponse {
        t: Complex64 { re: 1.0, im: 0.0 },
        i_t: 1.0,
    };

    /// `arg t` wrapped to (−π, π].
    pub fn phase(&self) -> f64 {
        wrap_phase(self.t.arg())
    }

    /// Phase as it would appear in measured data: `arg t + phi0`.
    pub fn measured_phase(&self, phi0: f64) -> f64 {
        wrap_phase(self.t.arg() + phi0)
    }

    pub fn amplitude(&self) -> f64 {
        self.t.norm()
    }

    /// `I_t − |t|²`, the incoherently scattered part of the transmitted power.
    pub fn incoherent_excess(&self) -> f64 {
        self.i_t - self.t.norm_sqr()
    }

    /// Cascade two scatterers along the waveguide.
    pub fn cascade(&self, other: &ScatterResponse) -> ScatterResponse {
        ScatterResponse {
            t: self.t * other.t,
            i_t: self.i_t * other.i_t,
        }
    }
}

/// Closed-form steady state of the optical Bloch equations.
///
/// `ρ_ee = 2γ₂Ω² / (γ D)`, `ρ_ge = −Ω (iγ₂ + Δ) / D`.
pub fn steady_state_bloch(p: &EmitterParams, d: &DriveState) -> Result<BlochSteadyState> {
    p.validate()?;
    d.validate()?;
    let omega = d.drive.omega();
    let g2 = p.gamma2();
    let den = p.denominator(d);
    let rho_ee = 2.0 * g2 * omega * omega / (p.gamma * den);
    let rho_ge = -omega * Complex64::new(d.delta, g2) / den;
    Ok(BlochSteadyState { rho_ee, rho_ge })
}

/// Transmission coefficient `t` and transmitted intensity `I_t`.
///
/// Isotropic: `t = 1 − (βγ/2)(γ₂ + iΔ)/D`, `I_t = 1 − βγγ₂(2 − β)/(2D)`.
/// Chiral: `t = 1 − β_dir γ(γ₂ + iΔ)/D`, `I_t = 1 + 2β_dir γγ₂(β_dir − 1)/D`.
///
/// The returned phase is raw `arg t`; `phi0` is not applied.
pub fn scatter_response(p: &EmitterParams, d: &DriveState) -> Result<ScatterResponse> {
    p.validate()?;
    d.validate()?;
    Ok(scatter_unchecked(p, d))
}

/// Same as [`scatter_response`] without validation, for inner loops over
/// already-validated inputs.
#[inline]
pub(crate) fn scatter_unchecked(p: &EmitterParams, d: &DriveState) -> ScatterResponse {
    scatter_with_omega_sq(p, d.delta, d.drive.omega_sq())
}

/// Response for a given Ω² rather than Ω. Fits that parametrize Ω² = kP use
/// this directly; Ω² may go slightly negative at finite-difference probes.
#[inline]
pub(crate) fn scatter_with_omega_sq(p: &EmitterParams, delta: f64, omega_sq: f64) -> ScatterResponse {
    let g2 = p.gamma2();
    let den = g2 * g2 + delta * delta + 4.0 * (g2 / p.gamma) * omega_sq;
    let w = p.coupling.field_weight();
    let t = Complex64::new(1.0, 0.0) - w * p.gamma * Complex64::new(g2, delta) / den;
    let i_t = match p.coupling {
        Coupling::Isotropic { beta } => 1.0 - beta * p.gamma * g2 * (2.0 - beta) / (2.0 * den),
        Coupling::Chiral { beta_dir } => {
            1.0 + 2.0 * beta_dir * p.gamma * g2 * (beta_dir - 1.0) / den
        }
    };
    ScatterResponse { t, i_t }
}

/// One or more emitters in series on the waveguide, all under the same drive.
///
/// The total transmission is the product of the individual ones and the
/// intensities multiply; for well-separated resonances this reduces to the
/// single-emitter response near each line. The setup phase offset `phi0` is
/// shared, so all emitters must agree on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub emitters: Vec<EmitterParams>,
    pub drive: Drive,
}

impl Scatterer {
    pub fn new(emitters: Vec<EmitterParams>, drive: Drive) -> Result<Self> {
        if emitters.is_empty() {
            return Err(Error::invalid("scatterer needs at least one emitter"));
        }
        for e in &emitters {
            e.validate()?;
        }
        let phi0 = emitters[0].phi0;
        if emitters.iter().any(|e| e.phi0 != phi0) {
            return Err(Error::invalid(
                "emitters in one scatterer must share the same phi0",
            ));
        }
        drive.validate()?;
        Ok(Self { emitters, drive })
    }

    pub fn single(p: EmitterParams, drive: Drive) -> Result<Self> {
        Self::new(vec![p], drive)
    }

    pub fn phi0(&self) -> f64 {
        self.emitters[0].phi0
    }

    /// Response at laser frequency `f_ghz`.
    pub fn response(&self, f_ghz: f64) -> ScatterResponse {
        self.emitters
            .iter()
            .map(|p| {
                scatter_unchecked(
                    p,
                    &DriveState {
                        delta: p.detuning(f_ghz),
                        drive: self.drive,
                    },
                )
            })
            .fold(ScatterResponse::TRANSPARENT, |acc, r| acc.cascade(&r))
    }
}
