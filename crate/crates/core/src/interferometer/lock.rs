//! Discrete-time PID lock of the interferometer path length.
//!
//! The error signal is the residual phase `drift − correction`; the
//! controller output becomes the correction applied at the next step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proportional (dimensionless), integral (1/s) and derivative (s) gains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    /// Stable for the default 0.1 s bin: closed-loop poles at 0.873 and −0.573.
    fn default() -> Self {
        PidGains {
            kp: 0.5,
            ki: 2.0,
            kd: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pid {
    gains: PidGains,
    dt: f64,
    integral: f64,
    prev_err: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains, dt: f64) -> Self {
        Pid {
            gains,
            dt,
            integral: 0.0,
            prev_err: None,
        }
    }

    pub fn update(&mut self, err: f64) -> f64 {
        self.integral += err * self.dt;
        let derivative = self.prev_err.map_or(0.0, |p| (err - p) / self.dt);
        self.prev_err = Some(err);
        self.gains.kp * err + self.gains.ki * self.integral + self.gains.kd * derivative
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_err = None;
    }
}

/// Residual phase `drift − correction` of a PID loop tracking `drift`.
///
/// Returns [`Error::UnstableGain`] as soon as the residual exceeds ten times
/// the peak drift amplitude.
pub fn lock_loop_residual(drift: &[f64], gains: PidGains, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if drift.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("drift"));
    }
    let amplitude = drift.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut pid = Pid::new(gains, dt);
    let mut correction = 0.0;
    let mut out = Vec::with_capacity(drift.len());
    for (step, &d) in drift.iter().enumerate() {
        let residual = d - correction;
        if residual.abs() > 10.0 * amplitude {
            return Err(Error::UnstableGain {
                step,
                residual,
                amplitude,
            });
        }
        out.push(residual);
        correction = pid.update(residual);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_drift_zero_residual() {
        let r = lock_loop_residual(&[0.0; 100], PidGains::default(), 0.1).unwrap();
        assert!(r.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn integral_action_removes_step() {
        let drift = vec![1.0; 400];
        let r = lock_loop_residual(&drift, PidGains::default(), 0.1).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r.last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn proportional_only_leaves_offset() {
        let gains = PidGains {
            kp: 0.5,
            ki: 0.0,
            kd: 0.0,
        };
        let r = lock_loop_residual(&vec![1.0; 200], gains, 0.1).unwrap();
        // c → kp D / (1 + kp)
        assert!((r.last().unwrap() - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn excessive_gain_is_reported() {
        let gains = PidGains {
            kp: 3.0,
            ki: 0.0,
            kd: 0.0,
        };
        let drift = vec![1.0; 100];
        assert!(matches!(
            lock_loop_residual(&drift, gains, 0.1),
            Err(Error::UnstableGain { .. })
        ));
    }

    #[test]
    fn derivative_term_uses_difference() {
        let mut pid = Pid::new(
            PidGains {
                kp: 0.0,
                ki: 0.0,
                kd: 1.0,
            },
            0.5,
        );
        assert_eq!(pid.update(1.0), 0.0);
        assert_eq!(pid.update(2.0), 2.0);
        pid.reset();
        assert_eq!(pid.update(5.0), 0.0);
    }

    #[test]
    fn rejects_bad_dt() {
        assert!(lock_loop_residual(&[0.0], PidGains::default(), 0.0).is_err());
    }
}
