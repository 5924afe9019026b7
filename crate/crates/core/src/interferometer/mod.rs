//! Mach-Zehnder fringe synthesis.
//!
//! The signal arm passes the emitter, the local-oscillator (LO) arm does not.
//! With coherent amplitude `t` and transmitted intensity `I_t` the expected
//! detector rate at laser frequency `f` is
//!
//! ```text
//! I(f) = p_lo + p_sig·I_t + 2 v √(p_lo p_sig) |t| cos(2π f δL/c + φ_env + φ₀ + arg t)
//! ```
//!
//! The incoherent part of the transmitted light lands in the background, only
//! the coherent amplitude `|t|` modulates the fringe. For `v = 1`,
//! `p_lo = p_sig`, `t = 1` this is `4 p cos²(δφ/2)`, the ideal two-beam
//! pattern.

mod lock;
mod noise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattering::{ScatterResponse, Scatterer};
use crate::units::geometric_phase;

pub use lock::{lock_loop_residual, Pid, PidGains};
pub use noise::{apply_shot_noise, bin_rng};

/// Version tag written into every trace sidecar.
pub const TRACE_SCHEMA_VERSION: &str = "qdphase.trace/1";

/// Environmental (path-length drift) phase model, sampled once per bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvPhase {
    Constant {
        phase: f64,
    },
    /// Unlocked random walk with step standard deviation `sigma` (rad/sample).
    RandomWalk {
        sigma: f64,
        seed: u64,
    },
    /// `amplitude · sin(2π frequency_hz · t)` with `t` the bin time.
    Sinusoid {
        amplitude: f64,
        frequency_hz: f64,
    },
    /// Random-walk drift suppressed by the PID lock; the residual is used.
    Locked {
        sigma: f64,
        seed: u64,
        #[serde(default)]
        gains: PidGains,
    },
}

impl Default for EnvPhase {
    fn default() -> Self {
        EnvPhase::Locked {
            sigma: 0.02,
            seed: 0,
            gains: PidGains::default(),
        }
    }
}

impl EnvPhase {
    pub fn zero() -> Self {
        EnvPhase::Constant { phase: 0.0 }
    }

    /// Phase for `n` consecutive bins spaced `dt` seconds apart.
    pub fn series(&self, n: usize, dt: f64) -> Result<Vec<f64>> {
        Ok(match *self {
            EnvPhase::Constant { phase } => vec![phase; n],
            EnvPhase::RandomWalk { sigma, seed } => noise::random_walk(n, sigma, seed)?,
            EnvPhase::Sinusoid {
                amplitude,
                frequency_hz,
            } => (0..n)
                .map(|k| amplitude * (std::f64::consts::TAU * frequency_hz * k as f64 * dt).sin())
                .collect(),
            EnvPhase::Locked { sigma, seed, gains } => {
                let drift = noise::random_walk(n, sigma, seed)?;
                lock_loop_residual(&drift, gains, dt)?
            }
        })
    }
}

/// Interferometer and acquisition settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferometerConfig {
    /// Path-length imbalance δL, m.
    pub delta_l: f64,
    pub visibility: f64,
    /// LO photon rate at the detector, counts/s.
    pub p_lo: f64,
    /// Signal-arm photon rate at the detector without emitter, counts/s.
    pub p_sig: f64,
    /// Integration time per frequency bin, s.
    pub integration_time: f64,
    pub dark_rate: f64,
    pub phi_env: EnvPhase,
}

impl Default for InterferometerConfig {
    fn default() -> Self {
        InterferometerConfig {
            delta_l: 2.78,
            visibility: 0.65,
            p_lo: 1.0e6,
            p_sig: 1.0e4,
            integration_time: 0.1,
            dark_rate: 0.0,
            phi_env: EnvPhase::default(),
        }
    }
}

impl InterferometerConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.delta_l,
            self.visibility,
            self.p_lo,
            self.p_sig,
            self.integration_time,
            self.dark_rate,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interferometer config"));
        }
        if self.delta_l < 0.0 {
            return Err(Error::invalid("delta_l must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::invalid("visibility must lie in [0, 1]"));
        }
        if self.p_lo < 0.0 || self.p_sig < 0.0 || self.dark_rate < 0.0 {
            return Err(Error::invalid("photon rates must be >= 0"));
        }
        if self.integration_time <= 0.0 {
            return Err(Error::invalid("integration_time must be > 0"));
        }
        Ok(())
    }

    /// Coherent fringe amplitude for unit transmission, counts/s.
    pub fn fringe_amplitude(&self) -> f64 {
        2.0 * self.visibility * (self.p_lo * self.p_sig).sqrt()
    }
}

/// Offset, amplitude and phase of the fringe at one frequency (rates).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeComponents {
    pub offset: f64,
    pub amplitude: f64,
    /// Everything inside the cosine.
    pub phase: f64,
}

impl FringeComponents {
    pub fn rate(&self) -> f64 {
        (self.offset + self.amplitude * self.phase.cos()).max(0.0)
    }
}

/// Fringe components for a given response, environmental phase and `phi0`.
pub fn fringe_components(
    cfg: &InterferometerConfig,
    f_ghz: f64,
    response: &ScatterResponse,
    phi_env: f64,
    phi0: f64,
) -> FringeComponents {
    FringeComponents {
        offset: cfg.p_lo + cfg.p_sig * response.i_t + cfg.dark_rate,
        amplitude: cfg.fringe_amplitude() * response.amplitude(),
        phase: geometric_phase(f_ghz, cfg.delta_l) + phi_env + phi0 + response.t.arg(),
    }
}

/// Noise bookkeeping carried with a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseMeta {
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub schema_version: String,
    pub interferometer: InterferometerConfig,
    pub scatterer: Scatterer,
    pub qd_on: bool,
    #[serde(default)]
    pub shot_noise: Option<NoiseMeta>,
}

/// Interferometer counts versus laser frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct FringeTrace {
    /// Laser frequency, GHz, strictly increasing.
    pub freq: Vec<f64>,
    /// Counts per bin (expected or sampled).
    pub counts: Vec<f64>,
    pub meta: Option<TraceMeta>,
}

impl FringeTrace {
    pub fn new(freq: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let t = FringeTrace {
            freq,
            counts,
            meta: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.freq.len() != self.counts.len() {
            return Err(Error::Grid(format!(
                "{} frequencies but {} count values",
                self.freq.len(),
                self.counts.len()
            )));
        }
        validate_sweep(&self.freq)?;
        if let Some(i) = self
            .counts
            .iter()
            .position(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(Error::invalid(format!(
                "counts must be finite and >= 0 (bin {i}: {})",
                self.counts[i]
            )));
        }
        Ok(())
    }
}

pub(crate) fn validate_sweep(freq: &[f64]) -> Result<()> {
    if freq.is_empty() {
        return Err(Error::Grid("frequency grid is empty".into()));
    }
    if let Some(i) = freq.iter().position(|f| !f.is_finite()) {
        return Err(Error::Grid(format!("non-finite frequency at index {i}")));
    }
    if let Some(i) = freq.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Grid(format!(
            "frequency grid not strictly increasing at index {}: {} -> {}",
            i + 1,
            freq[i],
            freq[i + 1]
        )));
    }
    Ok(())
}

/// Evenly spaced grid of `n` points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    }
}

/// Expected counts per bin for the emitter tuned on (`qd_on`) or off.
///
/// With the emitter off the transmission is 1 and `phi0` is not applied.
pub fn fringe_trace(
    cfg: &InterferometerConfig,
    scatterer: &Scatterer,
    sweep: &[f64],
    qd_on: bool,
) -> Result<FringeTrace> {
    cfg.validate()?;
    validate_sweep(sweep)?;
    let env = cfg.phi_env.series(sweep.len(), cfg.integration_time)?;
    let phi0 = if qd_on { scatterer.phi0() } else { 0.0 };
    let counts = sweep
        .iter()
        .zip(&env)
        .map(|(&f, &phi_env)| {
            let response = if qd_on {
                scatterer.response(f)
            } else {
                ScatterResponse::TRANSPARENT
            };
            fringe_components(cfg, f, &response, phi_env, phi0).rate() * cfg.integration_time
        })
        .collect();
    Ok(FringeTrace {
        freq: sweep.to_vec(),
        counts,
        meta: Some(TraceMeta {
            schema_version: TRACE_SCHEMA_VERSION.to_string(),
            interferometer: cfg.clone(),
            scatterer: scatterer.clone(),
            qd_on,
            shot_noise: None,
        }),
    })
}
