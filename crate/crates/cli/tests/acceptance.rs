//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use qdphase::estimation::{
    estimate_path_length_fft, fit_saturation_series, fit_two_dipole_spectra,
    predict_phase_vs_power, saturation_emitter, synthetic_spectrum, Combination, FitResult,
    LmOptions, SaturationFitOptions, SpectraFitOptions, SpectrumDataset,
};
use qdphase::interferometer::{apply_shot_noise, fringe_trace, linspace, EnvPhase, InterferometerConfig};
use qdphase::scattering::{
    bloch_oracle_steady_state, chiral_thresholds, critical_photon_flux, phase_extrema_analytic,
    phase_extrema_numeric, scatter_response, steady_state_bloch, Scatterer,
};
use qdphase::{Drive, DriveState, EmitterParams};
use qdphase_cli::commands::{apply_seed, Format};
use qdphase_cli::{execute, Command, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets.
const ORACLE_TOL: f64 = 1e-8;
const ORACLE_DRAWS: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const EXTREMUM_TOL: f64 = 1e-6;
const CHIRAL_IDENTITY_TOL: f64 = 1e-12;
const THRESHOLD_TOL: f64 = 1e-9;
const PATH_TRUE: f64 = 2.78;
const PATH_VISIBILITY: f64 = 0.65;
const PATH_COUNTS_PER_BIN: f64 = 1e5;
const PATH_REL_TOL: f64 = 0.005;
const PATH_SEEDS: u64 = 50;
const TABLE_SEEDS: u64 = 100;
const TABLE_MIN_PASS: usize = 90;
const TABLE_SIGMA_MULT: f64 = 3.0;
const TABLE_BUDGET: Duration = Duration::from_secs(120);
const PHI_MAX_DIPOLE2: f64 = 0.4565;
const PHI_MAX_TOL: f64 = 1e-3;
const NC_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_DRAWS {
        let p = EmitterParams::isotropic(
            rng.random_range(1.0..30.0),
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..=1.0),
        )
        .unwrap();
        let d = DriveState::rabi(rng.random_range(-50.0..50.0), rng.random_range(0.0..20.0));
        let a = steady_state_bloch(&p, &d).unwrap();
        let b = bloch_oracle_steady_state(&p, &d).unwrap();
        worst = worst
            .max((a.rho_ee - b.rho_ee).abs())
            .max((a.rho_ge - b.rho_ge).norm());
    }
    let t = start.elapsed();
    outcome(
        worst < ORACLE_TOL && t < ORACLE_BUDGET,
        format!("max deviation {worst:.2e} over {ORACLE_DRAWS} draws in {:.2} s", t.as_secs_f64()),
    )
}

fn analytic_extremum() -> Outcome {
    let betas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];
    let mut worst_phi = 0.0f64;
    let mut worst_delta = 0.0f64;
    for b in betas {
        let p = EmitterParams::isotropic(1.0, 0.0, b).unwrap();
        let a = phase_extrema_analytic(&p).unwrap();
        let n = phase_extrema_numeric(&p, Drive::LinearResponse).unwrap();
        let formula = (b / (2.0 * (1.0 - b).sqrt())).atan();
        worst_phi = worst_phi
            .max((n.phi_max.abs() - a.phi_max).abs())
            .max((a.phi_max - formula).abs());
        worst_delta = worst_delta
                        // either mirror image is a maximum of |arg t|
            .max((n.delta_star.abs() - a.delta_plus).abs())
            .max((a.delta_plus - (1.0 - b).sqrt() / 2.0).abs());
    }
    outcome(
        worst_phi < EXTREMUM_TOL && worst_delta < EXTREMUM_TOL,
        format!("max |phi| error {worst_phi:.2e} rad, max detuning error {worst_delta:.2e} over beta grid"),
    )
}

fn chiral_identities() -> Outcome {
    let mut worst = 0.0f64;
    for gamma in [0.5, 1.0, 9.4, 12.3] {
        for gamma_dp in [0.0, 0.7, 3.9] {
            let iso = EmitterParams::isotropic(gamma, gamma_dp, 1.0).unwrap();
            let chi = EmitterParams::chiral(gamma, gamma_dp, 0.5).unwrap();
            for omega in [0.0, 0.3, 2.0, 10.0] {
                for delta in linspace(-5.0 * gamma, 5.0 * gamma, 101) {
                    let d = DriveState::rabi(delta, omega);
                    let a = scatter_response(&iso, &d).unwrap();
                    let b = scatter_response(&chi, &d).unwrap();
                    worst = worst.max((a.t - b.t).norm()).max((a.i_t - b.i_t).abs());
                }
            }
        }
    }
    let gamma = 1.0;
    let p = EmitterParams::chiral(gamma, 0.0, 1.0).unwrap();
    let th = chiral_thresholds(&p).unwrap();
    let oc = th.omega_c.unwrap_or(f64::NAN);
    let gc = th.gamma_dp_c.unwrap_or(f64::NAN);
    let e_omega = (oc - gamma / (2.0 * 2f64.sqrt())).abs();
    let e_gamma = (gc - gamma / 2.0).abs();
    // The resonant phase jumps from π to 0 across each threshold.
    let eps = 1e-6;
    let res = |q: &EmitterParams, omega: f64| scatter_response(q, &DriveState::rabi(0.0, omega)).unwrap();
    let jump_omega = res(&p, oc - eps).t.re < 0.0
        && res(&p, oc + eps).t.re > 0.0
        && (res(&p, oc - eps).phase() - PI).abs() < 1e-9
        && res(&p, oc + eps).phase().abs() < 1e-9;
    let below = EmitterParams::chiral(gamma, gc - eps, 1.0).unwrap();
    let above = EmitterParams::chiral(gamma, gc + eps, 1.0).unwrap();
    let jump_gamma = res(&below, 0.0).t.re < 0.0 && res(&above, 0.0).t.re > 0.0;
    outcome(
        worst <= CHIRAL_IDENTITY_TOL && e_omega < THRESHOLD_TOL && e_gamma < THRESHOLD_TOL && jump_omega && jump_gamma,
        format!(
            "identity deviation {worst:.1e}; Omega_c error {e_omega:.1e}, gamma_dp_c error {e_gamma:.1e}; pi->0 jump seen: {}",
            jump_omega && jump_gamma
        ),
    )
}

fn path_length_recovery() -> Outcome {
    let integration_time = 0.1;
    // Equal arms; mean counts per bin = (p_lo + p_sig)·T.
    let rate = PATH_COUNTS_PER_BIN / integration_time / 2.0;
    let freqs = linspace(-4.0, 4.0, 4001);
    let scat = Scatterer::single(EmitterParams::isotropic(12.3, 3.9, 1.0).unwrap(), Drive::LinearResponse).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..PATH_SEEDS {
        let cfg = InterferometerConfig {
            delta_l: PATH_TRUE,
            visibility: PATH_VISIBILITY,
            p_lo: rate,
            p_sig: rate,
            integration_time,
            dark_rate: 0.0,
            phi_env: EnvPhase::Locked {
                sigma: 0.02,
                seed,
                gains: Default::default(),
            },
        };
        let t = fringe_trace(&cfg, &scat, &freqs, false).unwrap();
        let t = apply_shot_noise(&t, seed).unwrap();
        let est = estimate_path_length_fft(&t).unwrap();
        worst = worst.max((est.delta_l - PATH_TRUE).abs() / PATH_TRUE);
    }
    outcome(
        worst < PATH_REL_TOL,
        format!("worst relative error {:.3}% over {PATH_SEEDS} seeds", worst * 100.0),
    )
}

/// Generating values, each with its quoted uncertainty. β₂ has none quoted;
/// it borrows β₁'s.
const TABLE: [(&str, f64, f64); 6] = [
    ("beta_1", 0.94, 0.03),
    ("gamma_1", 9.4, 0.2),
    ("beta_2", 1.0, 0.03),
    ("gamma_2", 12.3, 0.2),
    ("gamma_dp", 3.9, 0.1),
    ("phi0", -0.25, 0.02),
];

fn table_emitters() -> Vec<EmitterParams> {
    vec![
        EmitterParams::isotropic(9.4, 3.9, 0.94).unwrap().with_f0(-15.0).with_phi0(-0.25),
        EmitterParams::isotropic(12.3, 3.9, 1.0).unwrap().with_f0(15.0).with_phi0(-0.25),
    ]
}

fn table_data(noise: f64, seed: Option<u64>) -> SpectrumDataset {
    let em = table_emitters();
    let line = |i: usize| {
        let f0 = em[i].f0;
        let freqs = linspace(f0 - 8.0, f0 + 8.0, 161);
        synthetic_spectrum(&em, i, Combination::Isolated, 0.0, &freqs, noise, noise, seed.map(|s| s * 2 + i as u64))
            .unwrap()
    };
    SpectrumDataset::pair(line(0), line(1))
}

fn table_fit(data: &SpectrumDataset, absolute_sigma: bool) -> FitResult {
    let opts = SpectraFitOptions {
        lm: LmOptions {
            absolute_sigma,
            ..Default::default()
        },
        ..Default::default()
    };
    fit_two_dipole_spectra(data, &opts).unwrap()
}

fn table_round_trip() -> Outcome {
    let start = Instant::now();
    // Formal uncertainties at unit noise fix the noise level at which every
    // formal σ is at most its quoted value.
    let unit = table_fit(&table_data(1.0, None), true);
    let noise = TABLE
        .iter()
        .filter_map(|&(n, _, q)| unit.sigma_of(n).filter(|s| *s > 0.0).map(|s| q / s))
        .fold(f64::INFINITY, f64::min);
    let mut passed = 0;
    for seed in 0..TABLE_SEEDS {
        let fit = table_fit(&table_data(noise, Some(seed)), false);
        let ok = fit.converged
            && TABLE
                .iter()
                .all(|&(n, v, q)| (fit.get(n).unwrap() - v).abs() <= TABLE_SIGMA_MULT * q);
        passed += ok as usize;
    }
    let t = start.elapsed();
    outcome(
        passed >= TABLE_MIN_PASS && t < TABLE_BUDGET,
        format!(
            "{passed}/{TABLE_SEEDS} seeds within 3x quoted sigma (channel noise {noise:.3e}) in {:.1} s",
            t.as_secs_f64()
        ),
    )
}

fn saturation_round_trip() -> Outcome {
    let truth = EmitterParams::isotropic(12.6, 3.4, 0.99).unwrap().with_phi0(-0.26);
    let k = 1.0;
    let p_sat = truth.gamma * truth.gamma2() / (4.0 * k);
    let powers: Vec<f64> = [0.1, 0.3, 1.0, 3.0, 10.0].iter().map(|x| x * p_sat).collect();
    let freqs = linspace(-8.0, 8.0, 81);
    let data: Vec<SpectrumDataset> = powers
        .iter()
        .enumerate()
        .map(|(j, &pw)| {
            let d = synthetic_spectrum(
                std::slice::from_ref(&truth),
                0,
                Combination::Isolated,
                k * pw,
                &freqs,
                0.02,
                0.02,
                Some(100 + j as u64),
            )
            .unwrap();
            SpectrumDataset {
                dipoles: vec![d],
                power: Some(pw),
            }
        })
        .collect();
    let fit = fit_saturation_series(&data, &SaturationFitOptions::default()).unwrap();
    let intervals = [
        ("beta", 0.57, 1.0),
        ("gamma", 7.7, 17.4),
        ("gamma_dp", 0.0, 7.4),
        ("phi0", -0.31, -0.2),
    ];
    let inside = intervals
        .iter()
        .all(|&(n, lo, hi)| (lo..=hi).contains(&fit.get(n).unwrap()));
    let curve_powers: Vec<f64> = (0..60).map(|i| p_sat * 10f64.powf(-2.0 + i as f64 * 0.05)).collect();
    let curve = predict_phase_vs_power(&saturation_emitter(&fit), fit.get("k").unwrap(), &curve_powers).unwrap();
    let monotone = curve.windows(2).all(|w| w[1].1.abs() < w[0].1.abs());
    let vals: Vec<String> = intervals
        .iter()
        .map(|&(n, _, _)| format!("{n}={:.3}", fit.get(n).unwrap()))
        .collect();
    outcome(
        fit.converged && inside && monotone,
        format!("{}; |phi_max|(P) strictly decreasing: {monotone}", vals.join(", ")),
    )
}

fn dipole_two_phi_max() -> Outcome {
    let p = EmitterParams::isotropic(12.3, 3.9, 1.0).unwrap();
    let x = phase_extrema_numeric(&p, Drive::LinearResponse).unwrap();
    let err = (x.phi_max.abs() - PHI_MAX_DIPOLE2).abs();
    outcome(
        err < PHI_MAX_TOL,
        format!("|phi|_max = {:.6} rad ({:.4} pi), error {err:.1e}", x.phi_max.abs(), x.phi_max.abs() / PI),
    )
}

fn critical_flux() -> Outcome {
    let a = critical_photon_flux(&EmitterParams::isotropic(1.0, 0.0, 1.0).unwrap()).unwrap();
    let b = critical_photon_flux(&EmitterParams::isotropic(1.0, 0.25, 1.0).unwrap()).unwrap();
    let ea = (a - 0.25).abs();
    let eb = (b - 0.375).abs();
    outcome(ea < NC_TOL && eb < NC_TOL, format!("n_c = {a} and {b}"))
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

/// simulate → extract → fit into `root`, returning each bundle's files.
fn pipeline(root: &Path, seed: u64) -> Vec<Vec<(String, Vec<u8>)>> {
    let mut cfg = RunConfig::default();
    apply_seed(&mut cfg, seed);
    let sim = root.join("sim");
    let ex = root.join("ex");
    let fit = root.join("fit");
    let run = |c: Command, out: &Path| {
        let o = execute(&c, &cfg, Format::Csv).unwrap();
        assert!(o.failure.is_none());
        o.bundle.write(out).unwrap();
    };
    run(Command::Simulate, &sim);
    run(
        Command::Extract {
            on: sim.join("trace_on.csv"),
            off: sim.join("trace_off.csv"),
        },
        &ex,
    );
    run(
        Command::Fit {
            phasors: vec![ex.join("phasors.csv")],
        },
        &fit,
    );
    [sim, ex, fit].iter().map(|d| files_of(d)).collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path(), 42);
    let rb = pipeline(b.path(), 42);
    let rc = pipeline(c.path(), 43);
    let n: usize = ra.iter().map(Vec::len).sum();
    outcome(
        ra == rb && ra != rc,
        format!("{n} files across simulate/extract/fit identical on rerun; other seed differs: {}", ra != rc),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("analytic extremum", analytic_extremum),
        ("chiral identities", chiral_identities),
        ("path-length recovery", path_length_recovery),
        ("table round trip", table_round_trip),
        ("saturation round trip", saturation_round_trip),
        ("dipole-2 phase extremum", dipole_two_phi_max),
        ("critical photon flux", critical_flux),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += !o.pass as usize;
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
