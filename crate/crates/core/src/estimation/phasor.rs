//! Windowed extraction of transmission phasors from on/off fringe pairs.
//!
//! Inside each window the trace is fitted, by linear least squares, to
//!
//! ```text
//! Σ_k u^k (a_k + c_k cos θ + s_k sin θ),   θ = 2π (f − f_c) δL / c
//! ```
//!
//! with `u` the window coordinate normalized to [−1, 1] and `f_c` the window
//! centre. Order 0 is the plain sinusoid `a + b cos(θ + ψ)`; higher orders let
//! the offset and the complex fringe amplitude vary smoothly across the
//! window so the value at the centre is not biased by the curvature of the
//! emitter response. The centre phasor is `z = c_0 − i s_0 = b e^{iψ}` and
//! the on/off ratio `z_on / z_off` is `t e^{iφ₀}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::FringeTrace;
use crate::units::{fringe_period_ghz, geometric_phase, wrap_phase};

/// One extracted spectral point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasorPoint {
    /// Window-centre laser frequency, GHz.
    pub freq: f64,
    /// `ψ_on − ψ_off` wrapped to (−π, π].
    pub phase_shift: f64,
    pub phase_err: f64,
    /// `b_on / b_off`, estimates `|t|`.
    pub amp_ratio: f64,
    pub amp_err: f64,
    /// `(a_on − LO) / (a_off − LO)`, estimates `I_t`.
    pub offset_ratio: f64,
    pub offset_err: f64,
    /// Fringe amplitude in either trace is below the noise floor.
    #[serde(default)]
    pub low_contrast: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    /// Path-length imbalance δL, m.
    pub delta_l: f64,
    /// Window width in fringe periods (≥ 1).
    pub window_periods: f64,
    /// Hop between window centres in fringe periods.
    pub hop_periods: f64,
    /// Polynomial order of the in-window envelope (0 = constant phasor).
    pub envelope_order: usize,
    /// LO (plus dark) counts per bin, subtracted from the offsets.
    pub lo_counts: f64,
    /// A window is low-contrast when `b < threshold · σ_b`.
    pub low_contrast_threshold: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            delta_l: 2.78,
            window_periods: 6.0,
            hop_periods: 1.0,
            envelope_order: 6,
            lo_counts: 0.0,
            low_contrast_threshold: 3.0,
        }
    }
}

/// Offset and complex fringe amplitude at a window centre, with covariance
/// of `(a, c, s)`.
#[derive(Clone, Copy, Debug)]
struct WindowFit {
    offset: f64,
    phasor: Complex64,
    cov: [[f64; 3]; 3],
}

impl WindowFit {
    fn var_offset(&self) -> f64 {
        self.cov[0][0]
    }

    /// Variance of `b = |z|`.
    fn var_amp(&self) -> f64 {
        let (c, s) = (self.phasor.re, -self.phasor.im);
        let b2 = c * c + s * s;
        if b2 == 0.0 {
            return self.cov[1][1].max(self.cov[2][2]);
        }
        (c * c * self.cov[1][1] + s * s * self.cov[2][2] + 2.0 * c * s * self.cov[1][2]) / b2
    }

    /// Variance of `ψ = arg z`.
    fn var_phase(&self) -> f64 {
        let (c, s) = (self.phasor.re, -self.phasor.im);
        let b2 = c * c + s * s;
        if b2 == 0.0 {
            return f64::INFINITY;
        }
        (s * s * self.cov[1][1] + c * c * self.cov[2][2] - 2.0 * c * s * self.cov[1][2]) / (b2 * b2)
    }
}

fn fit_window(freq: &[f64], counts: &[f64], centre: f64, half: f64, delta_l: f64, order: usize) -> Result<WindowFit> {
    let n = freq.len();
    let p = 3 * (order + 1);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (r, (&f, &c)) in freq.iter().zip(counts).enumerate() {
        let u = (f - centre) / half;
        let theta = geometric_phase(f - centre, delta_l);
        let (sin, cos) = theta.sin_cos();
        // Legendre P_k(u) by recurrence.
        let (mut p_prev, mut p_k) = (0.0, 1.0);
        for k in 0..=order {
            x[(r, 3 * k)] = p_k;
            x[(r, 3 * k + 1)] = p_k * cos;
            x[(r, 3 * k + 2)] = p_k * sin;
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0) * u * p_k - kf * p_prev) / (kf + 1.0);
            p_prev = p_k;
            p_k = next;
        }
        y[r] = c;
    }
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Grid("window design matrix is singular; widen the window".into()))?;
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 0.0)
        .map_err(|e| Error::Grid(format!("window least squares failed: {e}")))?;
    let resid = &y - &x * &coef;
    let dof = n.saturating_sub(p).max(1);
    let s2 = resid.norm_squared() / dof as f64;

    // Centre values (u = 0) as linear combinations of the coefficients.
    let mut w = DMatrix::zeros(3, p);
    let (mut p_prev, mut p_k) = (0.0, 1.0);
    for k in 0..=order {
        for j in 0..3 {
            w[(j, 3 * k + j)] = p_k;
        }
        let kf = k as f64;
        let next = -kf * p_prev / (kf + 1.0);
        p_prev = p_k;
        p_k = next;
    }
    let centre_vals = &w * &coef;
    let cov_m = &w * inv * w.transpose() * s2;
    let mut cov = [[0.0; 3]; 3];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov_m[(i, j)];
        }
    }
    Ok(WindowFit {
        offset: centre_vals[0],
        phasor: Complex64::new(centre_vals[1], -centre_vals[2]),
        cov,
    })
}

/// Slide a window across matching on/off traces and emit one phasor per
/// window position.
pub fn extract_phasor_series(
    on: &FringeTrace,
    off: &FringeTrace,
    opts: &ExtractOptions,
) -> Result<Vec<PhasorPoint>> {
    on.validate()?;
    off.validate()?;
    if on.freq != off.freq {
        return Err(Error::Grid(format!(
            "on/off grids differ: on has {} points, off has {}",
            on.len(),
            off.len()
        )));
    }
    if !(opts.delta_l > 0.0 && opts.delta_l.is_finite()) {
        return Err(Error::invalid("delta_l must be > 0"));
    }
    if !(opts.window_periods >= 1.0) {
        return Err(Error::invalid(format!(
            "window must cover at least one fringe period, got {}",
            opts.window_periods
        )));
    }
    if !(opts.hop_periods > 0.0) {
        return Err(Error::invalid("hop_periods must be > 0"));
    }
    let freq = &on.freq;
    let n = freq.len();
    let period = fringe_period_ghz(opts.delta_l);
    let width = opts.window_periods * period;
    let hop = opts.hop_periods * period;
    let min_samples = 2 * 3 * (opts.envelope_order + 1) + 1;

    let mut points = Vec::new();
    let mut lo = 0usize;
    let mut start = freq[0];
    while start + width <= freq[n - 1] + 1e-12 * width.max(1.0) {
        let stop = start + width;
        while lo < n && freq[lo] < start {
            lo += 1;
        }
        let hi = lo + freq[lo..].iter().take_while(|&&f| f <= stop).count();
        if hi - lo < min_samples {
            return Err(Error::Grid(format!(
                "window [{start}, {stop}] GHz holds {} samples, need {min_samples}",
                hi - lo
            )));
        }
        let centre = 0.5 * (freq[lo] + freq[hi - 1]);
        let half = 0.5 * (freq[hi - 1] - freq[lo]);
        let w_on = fit_window(&freq[lo..hi], &on.counts[lo..hi], centre, half, opts.delta_l, opts.envelope_order)?;
        let w_off = fit_window(&freq[lo..hi], &off.counts[lo..hi], centre, half, opts.delta_l, opts.envelope_order)?;
        points.push(combine(centre, &w_on, &w_off, opts));
        start += hop;
    }
    if points.is_empty() {
        return Err(Error::Grid(format!(
            "sweep of {:.4} GHz is shorter than one window of {width:.4} GHz",
            freq[n - 1] - freq[0]
        )));
    }
    Ok(points)
}

fn combine(freq: f64, on: &WindowFit, off: &WindowFit, opts: &ExtractOptions) -> PhasorPoint {
    let b_on = on.phasor.norm();
    let b_off = off.phasor.norm();
    let phase_shift = wrap_phase((on.phasor * off.phasor.conj()).arg());
    let phase_err = (on.var_phase() + off.var_phase()).sqrt();

    let amp_ratio = b_on / b_off;
    let amp_err = (on.var_amp() / (b_off * b_off)
        + b_on * b_on * off.var_amp() / b_off.powi(4))
    .sqrt();

    let num = on.offset - opts.lo_counts;
    let den = off.offset - opts.lo_counts;
    let offset_ratio = num / den;
    let offset_err =
        (on.var_offset() / (den * den) + num * num * off.var_offset() / den.powi(4)).sqrt();

    let floor = opts.low_contrast_threshold;
    let low_contrast = b_on < floor * on.var_amp().sqrt() || b_off < floor * off.var_amp().sqrt();
    PhasorPoint {
        freq,
        phase_shift,
        phase_err,
        amp_ratio,
        amp_err,
        offset_ratio,
        offset_err,
        low_contrast,
    }
}
