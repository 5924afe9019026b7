//! Interferometer path-length imbalance from the fringe spectrum.
//!
//! A fringe `cos(2π f δL/c)` sampled versus laser frequency `f` is a
//! sinusoid whose "frequency" in the conjugate variable is `τ = δL/c`. The
//! trace is mean-subtracted, Hann-windowed and zero-padded eight-fold before
//! the FFT; the dominant non-DC peak is refined by a parabola through the
//! log-magnitudes of its neighbours.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::FringeTrace;
use crate::units::SPEED_OF_LIGHT;

const ZERO_PAD: usize = 8;
const DETECTION_RATIO: f64 = 5.0;
const TIE_FRACTION: f64 = 0.01;
const MIN_PERIODS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLengthEstimate {
    /// Path-length imbalance, m.
    pub delta_l: f64,
    /// Interpolated peak position in the conjugate variable, ns.
    pub tau_ns: f64,
    pub peak_magnitude: f64,
    pub median_magnitude: f64,
    /// Resolution of the padded FFT in δL, m.
    pub bin_width_m: f64,
    pub warnings: Vec<String>,
}

fn uniform_step(freq: &[f64]) -> Result<f64> {
    if freq.len() < 16 {
        return Err(Error::Grid(format!(
            "need at least 16 samples for a path-length estimate, got {}",
            freq.len()
        )));
    }
    let step = (freq[freq.len() - 1] - freq[0]) / (freq.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::Grid("frequency grid must be increasing".into()));
    }
    let tol = 1e-6 * step;
    if let Some(i) = freq
        .windows(2)
        .position(|w| ((w[1] - w[0]) - step).abs() > tol)
    {
        return Err(Error::Grid(format!(
            "frequency grid is not uniform at index {} (step {} vs mean {step})",
            i + 1,
            freq[i + 1] - freq[i]
        )));
    }
    Ok(step)
}

fn hann(n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / denom).cos())
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Estimate δL (m) from a fringe trace on a uniform frequency grid.
pub fn estimate_path_length_fft(trace: &FringeTrace) -> Result<PathLengthEstimate> {
    trace.validate()?;
    let df = uniform_step(&trace.freq)?;
    let n = trace.len();
    let mean = trace.counts.iter().sum::<f64>() / n as f64;
    let window = hann(n);
    let n_pad = n * ZERO_PAD;
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n_pad];
    for i in 0..n {
        buf[i] = Complex::new((trace.counts[i] - mean) * window[i], 0.0);
    }
    FftPlanner::new().plan_fft_forward(n_pad).process(&mut buf);
    let mag: Vec<f64> = buf[..n_pad / 2 + 1].iter().map(|c| c.norm()).collect();

    // Skip the DC lobe: walk down until the magnitude stops decreasing.
    let mut start = 1;
    while start + 1 < mag.len() && mag[start + 1] < mag[start] {
        start += 1;
    }
    let med = median(&mag[1..]);
    let peaks: Vec<usize> = (start.max(1)..mag.len() - 1)
        .filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])
        .collect();
    let Some(&best) = peaks.iter().max_by(|&&a, &&b| mag[a].total_cmp(&mag[b])) else {
        return Err(Error::NoFringe("spectrum has no non-DC peak".into()));
    };
    if !(mag[best] > DETECTION_RATIO * med) {
        return Err(Error::NoFringe(format!(
            "largest non-DC peak {:.3e} is not above {DETECTION_RATIO}x the median magnitude {:.3e}",
            mag[best], med
        )));
    }

    let mut warnings = Vec::new();
    let mut chosen = best;
    let rivals: Vec<usize> = peaks
        .iter()
        .copied()
        .filter(|&k| k != best && mag[k] >= (1.0 - TIE_FRACTION) * mag[best])
        .collect();
    if let Some(&lowest) = rivals.iter().min() {
        if lowest < best {
            chosen = lowest;
        }
        let msg = format!(
            "{} peak(s) within {}% of the dominant magnitude; choosing the lowest delay",
            rivals.len() + 1,
            TIE_FRACTION * 100.0
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let (a, b, c) = (
        mag[chosen - 1].max(f64::MIN_POSITIVE).ln(),
        mag[chosen].ln(),
        mag[chosen + 1].max(f64::MIN_POSITIVE).ln(),
    );
    let denom = a - 2.0 * b + c;
    let offset = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let bin = chosen as f64 + offset.clamp(-0.5, 0.5);

    // τ in ns because f is in GHz; c·τ with c in m/ns.
    let tau_ns = bin / (n_pad as f64 * df);
    let delta_l = SPEED_OF_LIGHT * 1e-9 * tau_ns;
    let span = df * (n - 1) as f64;
    if tau_ns * span < MIN_PERIODS {
        return Err(Error::NoFringe(format!(
            "only {:.2} fringe periods in the sweep, need at least {MIN_PERIODS}",
            tau_ns * span
        )));
    }
    Ok(PathLengthEstimate {
        delta_l,
        tau_ns,
        peak_magnitude: mag[chosen],
        median_magnitude: med,
        bin_width_m: SPEED_OF_LIGHT * 1e-9 / (n_pad as f64 * df),
        warnings,
    })
}
