//! Sinusoidal drift well inside the lock bandwidth is attenuated below 10%.
//! The attenuation is frozen in `tests/data/lock_sinusoid.json`; set
//! `QDPHASE_BLESS=1` to regenerate it.

use std::path::PathBuf;

use qdphase::interferometer::{lock_loop_residual, PidGains};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct Golden {
    gains: PidGains,
    dt: f64,
    amplitude: f64,
    frequency_hz: f64,
    steps: usize,
    settle_steps: usize,
    attenuation: f64,
}

fn attenuation(g: &Golden) -> f64 {
    let drift: Vec<f64> = (0..g.steps)
        .map(|i| g.amplitude * (std::f64::consts::TAU * g.frequency_hz * i as f64 * g.dt).sin())
        .collect();
    let r = lock_loop_residual(&drift, g.gains, g.dt).unwrap();
    r[g.settle_steps..].iter().fold(0.0f64, |m, x| m.max(x.abs())) / g.amplitude
}

#[test]
fn sinusoid_attenuation_matches_golden() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/lock_sinusoid.json");
    if std::env::var_os("QDPHASE_BLESS").is_some() {
        let mut g = Golden {
            gains: PidGains::default(),
            dt: 0.1,
            amplitude: 1.0,
            frequency_hz: 0.01,
            steps: 5000,
            settle_steps: 1000,
            attenuation: 0.0,
        };
        g.attenuation = attenuation(&g);
        std::fs::write(&path, serde_json::to_string_pretty(&g).unwrap() + "\n").unwrap();
    }
    let g: Golden = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let a = attenuation(&g);
    assert!((a - g.attenuation).abs() <= 1e-12, "{a} vs golden {}", g.attenuation);
    assert!(a < 0.1, "attenuation {a}");
}
