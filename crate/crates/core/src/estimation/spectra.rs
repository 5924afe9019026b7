//! Joint phase + intensity fits of one or two emitter resonances.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::lm::{lm_minimize, Bounds, FitResult, LmOptions};
use crate::estimation::phasor::PhasorPoint;
use crate::interferometer::bin_rng;
use crate::scattering::{scatter_with_omega_sq, EmitterParams, ScatterResponse};
use crate::units::{ghz_to_rad_per_ns, wrap_phase};

/// Minimum points per channel.
pub const MIN_CHANNEL_POINTS: usize = 5;

/// Uncertainties are floored here so noiseless inputs keep finite weights.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPoint {
    /// Laser frequency, GHz.
    pub freq: f64,
    pub value: f64,
    pub sigma: f64,
}

/// Phase (rad, including φ₀) and intensity-transmission spectra of one line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSpectrum {
    #[serde(default)]
    pub label: String,
    pub phase: Vec<ChannelPoint>,
    pub intensity: Vec<ChannelPoint>,
}

impl DipoleSpectrum {
    /// Phase channel from `phase_shift`, intensity channel from `offset_ratio`.
    pub fn from_phasors(label: impl Into<String>, pts: &[PhasorPoint]) -> Self {
        DipoleSpectrum {
            label: label.into(),
            phase: pts
                .iter()
                .map(|p| ChannelPoint {
                    freq: p.freq,
                    value: p.phase_shift,
                    sigma: p.phase_err,
                })
                .collect(),
            intensity: pts
                .iter()
                .map(|p| ChannelPoint {
                    freq: p.freq,
                    value: p.offset_ratio,
                    sigma: p.offset_err,
                })
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.phase.is_empty() && self.intensity.is_empty() {
            return Err(Error::InsufficientData(format!("'{}' has no data", self.label)));
        }
        // A channel may be omitted entirely; one that is present must be
        // long enough to constrain a line.
        for (name, ch) in [("phase", &self.phase), ("intensity", &self.intensity)] {
            if !ch.is_empty() && ch.len() < MIN_CHANNEL_POINTS {
                return Err(Error::InsufficientData(format!(
                    "{} channel of '{}' has {} points, need {MIN_CHANNEL_POINTS}",
                    name,
                    self.label,
                    ch.len()
                )));
            }
            if ch
                .iter()
                .any(|c| !c.freq.is_finite() || !c.value.is_finite() || !(c.sigma >= 0.0) || !c.sigma.is_finite())
            {
                return Err(Error::NonFinite("spectrum point"));
            }
        }
        Ok(())
    }

    fn freq_range(&self) -> (f64, f64) {
        self.phase
            .iter()
            .chain(&self.intensity)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.freq), hi.max(c.freq))
            })
    }
}

/// One or two dipole spectra, optionally tagged with the excitation power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDataset {
    pub dipoles: Vec<DipoleSpectrum>,
    #[serde(default)]
    pub power: Option<f64>,
}

impl SpectrumDataset {
    pub fn single(d: DipoleSpectrum) -> Self {
        SpectrumDataset {
            dipoles: vec![d],
            power: None,
        }
    }

    pub fn pair(d1: DipoleSpectrum, d2: DipoleSpectrum) -> Self {
        SpectrumDataset {
            dipoles: vec![d1, d2],
            power: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dipoles.is_empty() || self.dipoles.len() > 2 {
            return Err(Error::invalid(format!(
                "expected one or two dipole spectra, got {}",
                self.dipoles.len()
            )));
        }
        self.dipoles.iter().try_for_each(DipoleSpectrum::validate)
    }
}

/// How the lines combine when evaluating each dipole's spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// Each line seen alone on its own detuning axis.
    #[default]
    Isolated,
    /// `t = t₁ t₂`, `I = I₁ I₂` everywhere.
    Product,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraFitOptions {
    pub combination: Combination,
    /// Starting point; the heuristic initializer is used when absent.
    pub init: Option<Vec<f64>>,
    pub bounds: Option<Bounds>,
    pub lm: LmOptions,
}

/// Parameter names for `n` dipoles: `beta_i, gamma_i, f0_i` per line, then
/// the shared `gamma_dp` and `phi0`.
pub fn spectra_param_names(n: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * n + 2);
    for i in 1..=n {
        names.push(format!("beta_{i}"));
        names.push(format!("gamma_{i}"));
        names.push(format!("f0_{i}"));
    }
    names.push("gamma_dp".into());
    names.push("phi0".into());
    names
}

/// Emitters described by a spectra parameter vector.
pub fn emitters_from_params(x: &[f64]) -> Vec<EmitterParams> {
    let n = (x.len() - 2) / 3;
    let gamma_dp = x[3 * n];
    let phi0 = x[3 * n + 1];
    (0..n)
        .map(|i| EmitterParams {
            gamma: x[3 * i + 1],
            gamma_dp,
            coupling: crate::scattering::Coupling::Isotropic { beta: x[3 * i] },
            f0: x[3 * i + 2],
            phi0,
        })
        .collect()
}

/// Response of emitter `p` at `f_ghz` under a drive of strength `omega_sq`.
#[inline]
pub(crate) fn response_at(p: &EmitterParams, f_ghz: f64, omega_sq: f64) -> ScatterResponse {
    scatter_with_omega_sq(p, ghz_to_rad_per_ns(f_ghz - p.f0), omega_sq)
}

/// Model response seen in the spectrum of line `line` at `f_ghz`.
pub fn line_response(
    emitters: &[EmitterParams],
    line: usize,
    comb: Combination,
    omega_sq: f64,
    f_ghz: f64,
) -> ScatterResponse {
    match comb {
        Combination::Isolated => response_at(&emitters[line], f_ghz, omega_sq),
        Combination::Product => emitters
            .iter()
            .map(|e| response_at(e, f_ghz, omega_sq))
            .fold(ScatterResponse::TRANSPARENT, |a, r| a.cascade(&r)),
    }
}

/// Weighted residuals of one dataset, appended to `out`.
pub(crate) fn dataset_residuals(
    data: &SpectrumDataset,
    emitters: &[EmitterParams],
    phi0: f64,
    omega_sq: f64,
    comb: Combination,
    out: &mut Vec<f64>,
) {
    for (i, d) in data.dipoles.iter().enumerate() {
        let model = |f: f64| line_response(emitters, i, comb, omega_sq, f);
        for c in &d.phase {
            let r = model(c.freq);
            out.push(wrap_phase(r.t.arg() + phi0 - c.value) / c.sigma.max(SIGMA_FLOOR));
        }
        for c in &d.intensity {
            let r = model(c.freq);
            out.push((r.i_t - c.value) / c.sigma.max(SIGMA_FLOOR));
        }
    }
}

/// Model spectrum of line `line` sampled at `freqs`, with optional Gaussian
/// noise of the given standard deviations. Noise is drawn per point from
/// [`bin_rng`] so the result does not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_spectrum(
    emitters: &[EmitterParams],
    line: usize,
    comb: Combination,
    omega_sq: f64,
    freqs: &[f64],
    sigma_phase: f64,
    sigma_intensity: f64,
    seed: Option<u64>,
) -> Result<DipoleSpectrum> {
    if line >= emitters.len() {
        return Err(Error::invalid(format!("line {line} of {} emitters", emitters.len())));
    }
    for e in emitters {
        e.validate()?;
    }
    if !(sigma_phase >= 0.0 && sigma_intensity >= 0.0) {
        return Err(Error::invalid("noise levels must be >= 0"));
    }
    let phi0 = emitters[0].phi0;
    let stream_seed = seed.map(|s| s.wrapping_add((line as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    let noise = |idx: u64, sigma: f64| -> f64 {
        match stream_seed {
            Some(s) if sigma > 0.0 => {
                let mut rng = bin_rng(s, idx);
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sigma
            }
            _ => 0.0,
        }
    };
    let model = |f: f64| line_response(emitters, line, comb, omega_sq, f);
    let mut phase = Vec::with_capacity(freqs.len());
    let mut intensity = Vec::with_capacity(freqs.len());
    for (i, &f) in freqs.iter().enumerate() {
        let r = model(f);
        phase.push(ChannelPoint {
            freq: f,
            value: wrap_phase(r.t.arg() + phi0 + noise(2 * i as u64, sigma_phase)),
            sigma: sigma_phase,
        });
        intensity.push(ChannelPoint {
            freq: f,
            value: r.i_t + noise(2 * i as u64 + 1, sigma_intensity),
            sigma: sigma_intensity,
        });
    }
    Ok(DipoleSpectrum {
        label: format!("line {}", line + 1),
        phase,
        intensity,
    })
}

/// Circular mean of phases.
fn circular_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0.0), |(s, c), x| (s + x.sin(), c + x.cos()));
    s.atan2(c)
}

/// Per-line starting values from the data shape alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LineGuess {
    pub f0: f64,
    /// Coherence decay rate γ₂, rad/ns.
    pub gamma2: f64,
    pub depth: f64,
    pub phi_max: f64,
    pub phi0: f64,
}

/// `φ₀` from the outer tenths of the phase channel, `f0` and FWHM from the
/// intensity dip, and the extremal phase excursion. Missing channels fall
/// back on the other one with `β ≈ 0.9`.
pub(crate) fn guess_line(d: &DipoleSpectrum) -> LineGuess {
    const BETA_FALLBACK: f64 = 0.9;
    let sorted = |v: &[ChannelPoint]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.freq.total_cmp(&b.freq));
        s
    };
    let ph = sorted(&d.phase);
    let it = sorted(&d.intensity);

    let phase_part = (!ph.is_empty()).then(|| {
        let tail = (ph.len() / 10).max(1);
        let phi0 = circular_mean(ph[..tail].iter().chain(&ph[ph.len() - tail..]).map(|c| c.value));
        let rel: Vec<f64> = ph.iter().map(|c| wrap_phase(c.value - phi0)).collect();
        let imax = (0..rel.len()).max_by(|&a, &b| rel[a].total_cmp(&rel[b])).unwrap();
        let imin = (0..rel.len()).min_by(|&a, &b| rel[a].total_cmp(&rel[b])).unwrap();
        let phi_max = rel[imax].abs().max(rel[imin].abs()).min(1.5);
        // extrema sit near ±γ₂ in the weak-coupling limit
        let f_mid = 0.5 * (ph[imax].freq + ph[imin].freq);
        let half_sep = 0.5 * (ph[imax].freq - ph[imin].freq).abs();
        (phi0, phi_max, f_mid, ghz_to_rad_per_ns(half_sep).max(1e-3))
    });

    let intensity_part = (!it.is_empty()).then(|| {
        let n = (it.len() / 10).max(1);
        let base = it[..n].iter().chain(&it[it.len() - n..]).map(|c| c.value).sum::<f64>() / (2 * n) as f64;
        let imin = (0..it.len()).min_by(|&a, &b| it[a].value.total_cmp(&it[b].value)).unwrap();
        let depth = (base - it[imin].value).max(1e-6);
        let half = base - 0.5 * depth;
        let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
            let mut prev = imin;
            for j in range {
                if it[j].value >= half {
                    let (a, b) = (&it[prev], &it[j]);
                    let w = (half - a.value) / (b.value - a.value);
                    return Some(a.freq + w * (b.freq - a.freq));
                }
                prev = j;
            }
            None
        };
        let right = cross(&mut (imin + 1..it.len()));
        let left = cross(&mut (0..imin).rev());
        let span = it[it.len() - 1].freq - it[0].freq;
        let fwhm = match (left, right) {
            (Some(l), Some(r)) => r - l,
            (Some(l), None) => 2.0 * (it[imin].freq - l),
            (None, Some(r)) => 2.0 * (r - it[imin].freq),
            (None, None) => 0.5 * span,
        }
        .max(1e-6);
        (it[imin].freq, std::f64::consts::PI * fwhm, depth / base.max(1e-6))
    });

    match (phase_part, intensity_part) {
        (Some((phi0, phi_max, _, _)), Some((f0, gamma2, depth))) => LineGuess { f0, gamma2, depth, phi_max, phi0 },
        (None, Some((f0, gamma2, depth))) => {
            let a = (depth / (2.0 - BETA_FALLBACK)).min(0.999);
            LineGuess { f0, gamma2, depth, phi_max: (a / (2.0 * (1.0 - a).sqrt())).atan(), phi0: 0.0 }
        }
        (Some((phi0, phi_max, f0, gamma2)), None) => {
            let t = phi_max.tan();
            let a = -2.0 * t * t + 2.0 * t * (t * t + 1.0).sqrt();
            LineGuess { f0, gamma2, depth: a * (2.0 - BETA_FALLBACK), phi_max, phi0 }
        }
        (None, None) => unreachable!("validated spectra have at least one channel"),
    }
}

/// `(β, γ)` from a line guess for a given dephasing rate, using
/// `|φ|max = atan(a / (2√(1−a)))` and `depth = a(2 − β)`, `a = βγ/(2γ₂)`.
pub(crate) fn beta_gamma_from_guess(g: &LineGuess) -> (f64, f64, f64) {
    let t = g.phi_max.tan();
    let a = (-2.0 * t * t + 2.0 * t * (t * t + 1.0).sqrt()).clamp(1e-3, 0.999);
    let beta = (2.0 - g.depth / a).clamp(0.05, 1.0);
    let gamma = 2.0 * a * g.gamma2 / beta;
    let gamma_dp = g.gamma2 - 0.5 * gamma;
    (beta, gamma, gamma_dp)
}

fn default_init(data: &SpectrumDataset) -> Vec<f64> {
    let guesses: Vec<LineGuess> = data.dipoles.iter().map(guess_line).collect();
    let bg: Vec<(f64, f64, f64)> = guesses.iter().map(beta_gamma_from_guess).collect();
    let gamma_dp = (bg.iter().map(|v| v.2).sum::<f64>() / bg.len() as f64).clamp(0.0, 50.0);
    let phi0 = circular_mean(guesses.iter().map(|g| g.phi0));
    let mut x = Vec::new();
    for (g, &(beta, _, _)) in guesses.iter().zip(&bg) {
        let gamma = (2.0 * (g.gamma2 - gamma_dp)).max(0.2);
        x.extend([beta, gamma, g.f0]);
    }
    x.extend([gamma_dp, phi0]);
    x
}

/// Default box: β ∈ [0, 1], γ ∈ [0.1, 200], f0 within the line's data,
/// γ_dp ∈ [0, 100], φ₀ ∈ [−π, π].
pub fn default_spectra_bounds(data: &SpectrumDataset) -> Bounds {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for d in &data.dipoles {
        let (lo, hi) = d.freq_range();
        lower.extend([0.0, 0.1, lo]);
        upper.extend([1.0, 200.0, hi]);
    }
    lower.extend([0.0, -std::f64::consts::PI]);
    upper.extend([100.0, std::f64::consts::PI]);
    Bounds { lower, upper }
}

/// Joint weighted least-squares fit of all phase and intensity channels.
pub fn fit_two_dipole_spectra(data: &SpectrumDataset, opts: &SpectraFitOptions) -> Result<FitResult> {
    data.validate()?;
    let n = data.dipoles.len();
    let names = spectra_param_names(n);
    let bounds = opts.bounds.clone().unwrap_or_else(|| default_spectra_bounds(data));
    if bounds.len() != names.len() {
        return Err(Error::invalid(format!(
            "bounds for {} parameters, model has {}",
            bounds.len(),
            names.len()
        )));
    }
    let init = match &opts.init {
        Some(v) => {
            if v.len() != names.len() {
                return Err(Error::invalid(format!(
                    "initial vector has {} entries, model has {}",
                    v.len(),
                    names.len()
                )));
            }
            v.clone()
        }
        None => {
            let mut v = default_init(data);
            bounds.project(&mut v);
            v
        }
    };
    let comb = opts.combination;
    let model = |x: &[f64]| {
        let em = emitters_from_params(x);
        let mut r = Vec::new();
        dataset_residuals(data, &em, x[3 * n + 1], 0.0, comb, &mut r);
        r
    };
    Ok(lm_minimize(model, &init, &bounds, &opts.lm)?.with_names(&names))
}
