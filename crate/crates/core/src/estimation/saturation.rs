//! Global fit of a power series of spectra and the φmax(P) prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::lm::{lm_minimize, Bounds, FitResult, LmOptions};
use crate::estimation::spectra::{
    beta_gamma_from_guess, dataset_residuals, guess_line, Combination, SpectrumDataset,
};
use crate::scattering::{phase_extrema_numeric, Coupling, Drive, EmitterParams};

pub const SATURATION_PARAMS: [&str; 6] = ["beta", "gamma", "gamma_dp", "phi0", "k", "f0"];

/// Minimum number of distinct power levels.
pub const MIN_POWER_LEVELS: usize = 3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationFitOptions {
    /// Starting point in [`SATURATION_PARAMS`] order.
    pub init: Option<Vec<f64>>,
    pub bounds: Option<Bounds>,
    pub lm: LmOptions,
}

fn emitter(x: &[f64]) -> EmitterParams {
    EmitterParams {
        gamma: x[1],
        gamma_dp: x[2],
        coupling: Coupling::Isotropic { beta: x[0] },
        f0: x[5],
        phi0: x[3],
    }
}

/// The emitter described by a saturation-fit result.
pub fn saturation_emitter(fit: &FitResult) -> EmitterParams {
    emitter(&fit.params)
}

fn powers(data: &[SpectrumDataset]) -> Result<Vec<f64>> {
    let mut ps = Vec::with_capacity(data.len());
    for (i, d) in data.iter().enumerate() {
        d.validate()?;
        if d.dipoles.len() != 1 {
            return Err(Error::invalid(format!(
                "saturation dataset {i} must hold exactly one line, has {}",
                d.dipoles.len()
            )));
        }
        let p = d
            .power
            .ok_or_else(|| Error::invalid(format!("saturation dataset {i} has no power")))?;
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::invalid(format!("power of dataset {i} must be ≥ 0, got {p}")));
        }
        ps.push(p);
    }
    let mut distinct = ps.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_POWER_LEVELS {
        return Err(Error::InsufficientData(format!(
            "{} distinct power level(s); the calibration k needs at least {MIN_POWER_LEVELS}",
            distinct.len()
        )));
    }
    Ok(ps)
}

/// Starting point: line shape at the lowest power, `k` from the resonant
/// depth ratio between lowest and highest power.
fn default_init(data: &[SpectrumDataset], ps: &[f64]) -> Vec<f64> {
    let ilo = (0..ps.len()).min_by(|&a, &b| ps[a].total_cmp(&ps[b])).unwrap();
    let ihi = (0..ps.len()).max_by(|&a, &b| ps[a].total_cmp(&ps[b])).unwrap();
    let glo = guess_line(&data[ilo].dipoles[0]);
    let ghi = guess_line(&data[ihi].dipoles[0]);
    // depth(P) = d∞ / (1 + sP)
    let r = glo.depth / ghi.depth;
    let denom = ps[ihi] - r * ps[ilo];
    let s = if denom > 0.0 { ((r - 1.0) / denom).max(0.0) } else { 0.0 };
    let mut g = glo;
    g.depth *= 1.0 + s * ps[ilo];
    g.gamma2 /= (1.0 + s * ps[ilo]).sqrt();
    let (beta, _, gamma_dp) = beta_gamma_from_guess(&g);
    let gamma_dp = gamma_dp.clamp(0.0, 50.0);
    let gamma = (2.0 * (g.gamma2 - gamma_dp)).max(0.2);
    let k = s * gamma * g.gamma2 / 4.0;
    vec![beta, gamma, gamma_dp, g.phi0, k, g.f0]
}

fn default_bounds(data: &[SpectrumDataset]) -> Bounds {
    let (lo, hi) = data
        .iter()
        .flat_map(|d| d.dipoles[0].phase.iter().chain(&d.dipoles[0].intensity))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.freq), hi.max(c.freq))
        });
    Bounds {
        lower: vec![0.0, 0.1, 0.0, -std::f64::consts::PI, 0.0, lo],
        upper: vec![1.0, 200.0, 100.0, std::f64::consts::PI, f64::INFINITY, hi],
    }
}

/// Fit `(β, γ, γ_dp, φ₀, k, f0)` to all datasets with `Ω_j² = k P_j`.
pub fn fit_saturation_series(data: &[SpectrumDataset], opts: &SaturationFitOptions) -> Result<FitResult> {
    let ps = powers(data)?;
    let bounds = opts.bounds.clone().unwrap_or_else(|| default_bounds(data));
    if bounds.len() != SATURATION_PARAMS.len() {
        return Err(Error::invalid(format!(
            "bounds for {} parameters, model has {}",
            bounds.len(),
            SATURATION_PARAMS.len()
        )));
    }
    let init = match &opts.init {
        Some(v) if v.len() != SATURATION_PARAMS.len() => {
            return Err(Error::invalid(format!(
                "initial vector has {} entries, model has {}",
                v.len(),
                SATURATION_PARAMS.len()
            )))
        }
        Some(v) => v.clone(),
        None => {
            let mut v = default_init(data, &ps);
            bounds.project(&mut v);
            v
        }
    };
    let model = |x: &[f64]| {
        let em = [emitter(x)];
        let mut r = Vec::new();
        for (d, &p) in data.iter().zip(&ps) {
            dataset_residuals(d, &em, x[3], x[4] * p, Combination::Isolated, &mut r);
        }
        r
    };
    let fit = lm_minimize(model, &init, &bounds, &opts.lm)?.with_names(&SATURATION_PARAMS);
    if fit.at_bound[4] {
        log::warn!("calibration k pinned at its bound {}", fit.params[4]);
    }
    Ok(fit)
}

/// Signed `φmax` versus power with `Ω = √(kP)`.
pub fn predict_phase_vs_power(p: &EmitterParams, k: f64, powers: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("calibration k must be > 0, got {k}")));
    }
    powers
        .iter()
        .map(|&pw| {
            if !(pw >= 0.0 && pw.is_finite()) {
                return Err(Error::invalid(format!("power must be ≥ 0, got {pw}")));
            }
            let ext = phase_extrema_numeric(p, Drive::Rabi((k * pw).sqrt()))?;
            Ok((pw, ext.phi_max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::spectra::{ChannelPoint, DipoleSpectrum};
    use crate::interferometer::linspace;
    use crate::scattering::{critical_photon_flux, scatter_response, DriveState};

    fn truth() -> EmitterParams {
        EmitterParams::isotropic(12.6, 3.4, 0.99).unwrap().with_phi0(-0.26)
    }

    fn series(p: &EmitterParams, k: f64, powers: &[f64]) -> Vec<SpectrumDataset> {
        powers
            .iter()
            .map(|&pw| {
                let freqs = linspace(-8.0, 8.0, 81);
                let r = |f: f64| {
                    scatter_response(p, &DriveState::rabi(p.detuning(f), (k * pw).sqrt())).unwrap()
                };
                SpectrumDataset {
                    dipoles: vec![DipoleSpectrum {
                        label: format!("P={pw}"),
                        phase: freqs
                            .iter()
                            .map(|&f| ChannelPoint { freq: f, value: r(f).measured_phase(p.phi0), sigma: 0.01 })
                            .collect(),
                        intensity: freqs
                            .iter()
                            .map(|&f| ChannelPoint { freq: f, value: r(f).i_t, sigma: 0.01 })
                            .collect(),
                    }],
                    power: Some(pw),
                }
            })
            .collect()
    }

    /// Saturation power where `4(γ₂/γ)Ω² = γ₂²`.
    fn p_sat(p: &EmitterParams, k: f64) -> f64 {
        p.gamma * p.gamma2() / (4.0 * k)
    }

    #[test]
    fn noiseless_series_round_trip() {
        let p = truth();
        let k = 2.0;
        let ps: Vec<f64> = [0.1, 0.3, 1.0, 3.0, 10.0].iter().map(|x| x * p_sat(&p, k)).collect();
        let fit = fit_saturation_series(&series(&p, k, &ps), &SaturationFitOptions::default()).unwrap();
        for (name, t) in [("beta", 0.99), ("gamma", 12.6), ("gamma_dp", 3.4), ("phi0", -0.26), ("k", k)] {
            let v = fit.get(name).unwrap();
            assert!((v - t).abs() / t.abs() < 1e-6, "{name} = {v}");
        }
        let nc = critical_photon_flux(&saturation_emitter(&fit)).unwrap();
        let nc_true = critical_photon_flux(&p).unwrap();
        assert!((nc - nc_true).abs() / nc_true < 1e-6);
    }

    #[test]
    fn zero_calibration_pins_k() {
        let p = truth();
        let fit = fit_saturation_series(&series(&p, 0.0, &[1.0, 2.0, 3.0]), &SaturationFitOptions::default())
            .unwrap();
        assert_eq!(fit.get("k"), Some(0.0));
        assert!(fit.at_bound[4]);
        for (name, t) in [("beta", 0.99), ("gamma", 12.6), ("gamma_dp", 3.4)] {
            assert!((fit.get(name).unwrap() - t).abs() / t < 1e-6, "{name}");
        }
    }

    #[test]
    fn single_power_is_refused() {
        let p = truth();
        let r = fit_saturation_series(&series(&p, 1.0, &[1.0, 1.0]), &SaturationFitOptions::default());
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn prediction_low_power_limit() {
        let p = truth();
        let curve = predict_phase_vs_power(&p, 1.0, &[0.0]).unwrap();
        let lin = phase_extrema_numeric(&p, Drive::LinearResponse).unwrap();
        assert!((curve[0].1 - lin.phi_max).abs() < 1e-12);
    }

    #[test]
    fn prediction_is_monotone() {
        let p = truth();
        let powers: Vec<f64> = (0..40).map(|i| 10f64.powf(-2.0 + i as f64 * 0.1)).collect();
        let curve = predict_phase_vs_power(&p, 1.0, &powers).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].1.abs() <= w[0].1.abs() + 1e-12);
        }
    }

    #[test]
    fn half_saturation_matches_direct_scan() {
        let p = truth();
        let k = 1.0;
        let ps = p_sat(&p, k);
        let curve = predict_phase_vs_power(&p, k, &[ps]).unwrap();
        let omega = (k * ps).sqrt();
        let best = linspace(-5.0 * p.gamma2(), 5.0 * p.gamma2(), 200_001)
            .into_iter()
            .map(|d| scatter_response(&p, &DriveState::rabi(d, omega)).unwrap().phase().abs())
            .fold(0.0, f64::max);
        assert!((curve[0].1.abs() - best).abs() < 1e-8);
    }

    #[test]
    fn k_must_be_positive() {
        assert!(predict_phase_vs_power(&truth(), 0.0, &[1.0]).is_err());
    }
}
