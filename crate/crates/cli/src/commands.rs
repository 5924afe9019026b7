//! Subcommand implementations. Each builds a [`Bundle`] in memory; writing
//! happens once at the end in [`crate::run`].

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use qdphase::estimation::{
    emitters_from_params, estimate_path_length_fft, extract_phasor_series, fit_saturation_series,
    fit_two_dipole_spectra, line_response, predict_phase_vs_power, saturation_emitter,
    Combination, DipoleSpectrum, ExtractOptions, FitResult, PathLengthEstimate, PhasorPoint,
    SaturationFitOptions, SpectraFitOptions, SpectrumDataset,
};
use qdphase::interferometer::{apply_shot_noise, fringe_trace, linspace, EnvPhase, FringeTrace, TraceMeta};
use qdphase::io::{
    csv_table, parse_phasor_csv_str, parse_trace_csv_str, phasors_to_csv, sidecar_path,
    trace_to_csv, FitSummary, PHASOR_SCHEMA_VERSION, TABLE_SCHEMA_VERSION,
};
use qdphase::scattering::{
    chiral_thresholds, critical_photon_flux, phase_extrema_numeric, scatter_response,
    ChiralThresholds, Scatterer,
};
use qdphase::units::wrap_phase;
use qdphase::{Drive, DriveState, EmitterParams};
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const EXTRACT_SCHEMA_VERSION: &str = "qdphase.extract/1";
pub const PATHLENGTH_SCHEMA_VERSION: &str = "qdphase.pathlength/1";
pub const CHIRAL_SCHEMA_VERSION: &str = "qdphase.chiral/1";

/// Format of tabular data products. Summaries are always JSON.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A command's outputs, plus the error to report after they are written.
#[derive(Debug)]
pub struct Outcome {
    pub bundle: Bundle,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(bundle: Bundle) -> Self {
        Outcome { bundle, failure: None }
    }
}

#[derive(Serialize)]
struct JsonTable<'a> {
    schema_version: &'a str,
    columns: &'a [&'a str],
    rows: &'a [Vec<f64>],
}

/// Trace as a single JSON document (`--format json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDoc {
    pub schema_version: String,
    #[serde(default)]
    pub meta: Option<TraceMeta>,
    pub freq: Vec<f64>,
    pub counts: Vec<f64>,
}

/// Phasor series as a single JSON document; keeps the low-contrast flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasorDoc {
    pub schema_version: String,
    pub points: Vec<PhasorPoint>,
}

fn add_table(b: &mut Bundle, stem: &str, fmt: Format, header: &[&str], rows: Vec<Vec<f64>>) -> CliResult<()> {
    let name = format!("{stem}.{}", fmt.ext());
    match fmt {
        Format::Csv => b.add(name, csv_table(TABLE_SCHEMA_VERSION, header, rows)),
        Format::Json => b.add_json(
            &name,
            &JsonTable {
                schema_version: TABLE_SCHEMA_VERSION,
                columns: header,
                rows: &rows,
            },
        )?,
    }
    Ok(())
}

fn add_trace(b: &mut Bundle, stem: &str, fmt: Format, t: &FringeTrace) -> CliResult<()> {
    match fmt {
        Format::Csv => {
            b.add(format!("{stem}.csv"), trace_to_csv(t));
            if let Some(m) = &t.meta {
                b.add_json(&format!("{stem}.json"), m)?;
            }
        }
        Format::Json => b.add_json(
            &format!("{stem}.json"),
            &TraceDoc {
                schema_version: qdphase::interferometer::TRACE_SCHEMA_VERSION.into(),
                meta: t.meta.clone(),
                freq: t.freq.clone(),
                counts: t.counts.clone(),
            },
        )?,
    }
    Ok(())
}

fn add_phasors(b: &mut Bundle, fmt: Format, pts: &[PhasorPoint]) -> CliResult<()> {
    match fmt {
        Format::Csv => b.add("phasors.csv", phasors_to_csv(pts)),
        Format::Json => b.add_json(
            "phasors.json",
            &PhasorDoc {
                schema_version: PHASOR_SCHEMA_VERSION.into(),
                points: pts.to_vec(),
            },
        )?,
    }
    Ok(())
}

fn read_input(path: &Path, b: &mut Bundle) -> CliResult<String> {
    let data = std::fs::read(path)
        .map_err(|e| CliError::bad(format!("cannot read {}: {e}", path.display())))?;
    b.record_input(path, &data);
    String::from_utf8(data).map_err(|_| CliError::bad(format!("{}: not UTF-8", path.display())))
}

fn in_file(path: &Path) -> impl Fn(qdphase::Error) -> CliError + '_ {
    move |e| CliError::bad(format!("{}: {e}", path.display()))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Read a trace from CSV (plus sidecar when present) or from a JSON document.
pub fn read_trace(path: &Path, b: &mut Bundle) -> CliResult<FringeTrace> {
    let text = read_input(path, b)?;
    if is_json(path) {
        let doc: TraceDoc = serde_json::from_str(&text)
            .map_err(|e| CliError::bad(format!("{}: {e}", path.display())))?;
        let mut t = FringeTrace::new(doc.freq, doc.counts).map_err(in_file(path))?;
        t.meta = doc.meta;
        return Ok(t);
    }
    let mut t = parse_trace_csv_str(&text).map_err(in_file(path))?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta_text = read_input(&side, b)?;
        t.meta = Some(
            serde_json::from_str(&meta_text)
                .map_err(|e| CliError::bad(format!("{}: {e}", side.display())))?,
        );
    }
    Ok(t)
}

pub fn read_phasors(path: &Path, b: &mut Bundle) -> CliResult<Vec<PhasorPoint>> {
    let text = read_input(path, b)?;
    if is_json(path) {
        let doc: PhasorDoc = serde_json::from_str(&text)
            .map_err(|e| CliError::bad(format!("{}: {e}", path.display())))?;
        if doc.schema_version != PHASOR_SCHEMA_VERSION {
            return Err(CliError::bad(format!(
                "{}: schema '{}' is not '{PHASOR_SCHEMA_VERSION}'",
                path.display(),
                doc.schema_version
            )));
        }
        return Ok(doc.points);
    }
    parse_phasor_csv_str(&text).map_err(in_file(path))
}

/// `--seed` replaces the noise seed and the environmental-phase seed.
pub fn apply_seed(cfg: &mut RunConfig, seed: u64) {
    cfg.noise.seed = seed;
    match &mut cfg.interferometer.phi_env {
        EnvPhase::RandomWalk { seed: s, .. } | EnvPhase::Locked { seed: s, .. } => *s = seed,
        EnvPhase::Constant { .. } | EnvPhase::Sinusoid { .. } => {}
    }
}

fn new_bundle(command: &str, cfg: &RunConfig) -> CliResult<Bundle> {
    let mut b = Bundle::new(command);
    b.add_json("config.json", cfg)?;
    Ok(b)
}

fn response_row(x: f64, r: &qdphase::ScatterResponse) -> Vec<f64> {
    vec![x, r.t.re, r.t.im, r.phase(), r.amplitude(), r.i_t]
}

pub fn simulate(cfg: &RunConfig, fmt: Format) -> CliResult<Outcome> {
    let mut b = new_bundle("simulate", cfg)?;
    let scat = Scatterer::new(cfg.emitters.clone(), cfg.drive)?;
    let sw = &cfg.sweep;
    if sw.points < 2 || !(sw.stop > sw.start) {
        return Err(CliError::bad(format!(
            "config key 'sweep': need stop > start and at least 2 points, got {}..{} with {}",
            sw.start, sw.stop, sw.points
        )));
    }
    let freqs = linspace(sw.start, sw.stop, sw.points);
    let seed = cfg.noise.seed;
    for (stem, on, s) in [
        ("trace_on", true, seed.wrapping_mul(2)),
        ("trace_off", false, seed.wrapping_mul(2).wrapping_add(1)),
    ] {
        let mut t = fringe_trace(&cfg.interferometer, &scat, &freqs, on)?;
        if cfg.noise.shot_noise {
            t = apply_shot_noise(&t, s)?;
        }
        add_trace(&mut b, stem, fmt, &t)?;
    }

    // Combined response on the sweep, phase including phi0.
    let rows = freqs
        .iter()
        .map(|&f| {
            let r = scat.response(f);
            vec![f, r.t.re, r.t.im, r.measured_phase(scat.phi0()), r.amplitude(), r.i_t]
        })
        .collect();
    add_table(
        &mut b,
        "spectrum",
        fmt,
        &["freq_ghz", "t_re", "t_im", "phase_rad", "amplitude", "i_t"],
        rows,
    )?;

    // Per-emitter curves versus detuning, without phi0.
    let mc = &cfg.model;
    if mc.points < 2 || !(mc.span_gamma > 0.0) {
        return Err(CliError::bad("config key 'model': need span_gamma > 0 and at least 2 points"));
    }
    let mut rows = Vec::new();
    for (i, e) in cfg.emitters.iter().enumerate() {
        for x in linspace(-mc.span_gamma, mc.span_gamma, mc.points) {
            let delta = x * e.gamma;
            let r = scatter_response(e, &DriveState { delta, drive: cfg.drive })?;
            let mut row = vec![i as f64, delta];
            row.extend(response_row(x, &r));
            rows.push(row);
        }
    }
    add_table(
        &mut b,
        "model",
        fmt,
        &["emitter", "delta_rad_ns", "delta_over_gamma", "t_re", "t_im", "phase_rad", "amplitude", "i_t"],
        rows,
    )?;
    Ok(Outcome::ok(b))
}

#[derive(Serialize)]
struct ExtractSummary {
    schema_version: &'static str,
    delta_l: f64,
    delta_l_source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pathlength: Option<PathLengthEstimate>,
    lo_counts: f64,
    lo_counts_source: &'static str,
    n_points: usize,
    low_contrast: Vec<usize>,
    warnings: Vec<String>,
}

fn grid_desc(path: &Path, t: &FringeTrace) -> String {
    format!(
        "{} ({} points, {} to {} GHz)",
        path.display(),
        t.len(),
        t.freq.first().copied().unwrap_or(f64::NAN),
        t.freq.last().copied().unwrap_or(f64::NAN)
    )
}

pub fn extract(cfg: &RunConfig, fmt: Format, on_path: &Path, off_path: &Path) -> CliResult<Outcome> {
    let mut b = new_bundle("extract", cfg)?;
    let on = read_trace(on_path, &mut b)?;
    let off = read_trace(off_path, &mut b)?;
    if on.freq != off.freq {
        return Err(CliError::bad(format!(
            "on/off frequency grids differ: on = {}, off = {}",
            grid_desc(on_path, &on),
            grid_desc(off_path, &off)
        )));
    }
    let mut warnings = Vec::new();
    let (delta_l, delta_l_source, pathlength) = match cfg.extract.delta_l {
        Some(d) => (d, "config", None),
        None => {
            let est = estimate_path_length_fft(&off).map_err(in_file(off_path))?;
            warnings.extend(est.warnings.iter().cloned());
            (est.delta_l, "fft", Some(est))
        }
    };
    let (lo_counts, lo_counts_source) = match (cfg.extract.lo_counts, &off.meta) {
        (Some(lo), _) => (lo, "config"),
        (None, Some(m)) => {
            let i = &m.interferometer;
            ((i.p_lo + i.dark_rate) * i.integration_time, "trace metadata")
        }
        (None, None) => {
            warnings.push("no LO level known; offset ratios assume zero LO counts".into());
            (0.0, "default")
        }
    };
    let opts = ExtractOptions {
        delta_l,
        window_periods: cfg.extract.window_periods,
        hop_periods: cfg.extract.hop_periods,
        envelope_order: cfg.extract.envelope_order,
        lo_counts,
        low_contrast_threshold: cfg.extract.low_contrast_threshold,
    };
    let pts = extract_phasor_series(&on, &off, &opts)?;
    let low_contrast: Vec<usize> = pts
        .iter()
        .enumerate()
        .filter(|(_, p)| p.low_contrast)
        .map(|(i, _)| i)
        .collect();
    if !low_contrast.is_empty() {
        log::warn!("{} low-contrast window(s)", low_contrast.len());
    }
    add_phasors(&mut b, fmt, &pts)?;
    b.add_json(
        "extract_summary.json",
        &ExtractSummary {
            schema_version: EXTRACT_SCHEMA_VERSION,
            delta_l,
            delta_l_source,
            pathlength,
            lo_counts,
            lo_counts_source,
            n_points: pts.len(),
            low_contrast,
            warnings,
        },
    )?;
    Ok(Outcome::ok(b))
}

#[derive(Serialize)]
struct PathLengthSummary {
    schema_version: &'static str,
    #[serde(flatten)]
    estimate: PathLengthEstimate,
}

pub fn pathlength(cfg: &RunConfig, input: &Path) -> CliResult<Outcome> {
    let mut b = new_bundle("pathlength", cfg)?;
    let t = read_trace(input, &mut b)?;
    let estimate = estimate_path_length_fft(&t).map_err(in_file(input))?;
    b.add_json(
        "pathlength.json",
        &PathLengthSummary {
            schema_version: PATHLENGTH_SCHEMA_VERSION,
            estimate,
        },
    )?;
    Ok(Outcome::ok(b))
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

const RESIDUAL_HEADER: [&str; 8] = [
    "dataset", "line", "channel", "freq_ghz", "value", "sigma", "model", "residual",
];

/// Rows of [`RESIDUAL_HEADER`]; channel 0 is phase, 1 is intensity.
fn residual_rows(
    dataset: usize,
    data: &SpectrumDataset,
    emitters: &[EmitterParams],
    phi0: f64,
    omega_sq: f64,
    comb: Combination,
) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for (i, d) in data.dipoles.iter().enumerate() {
        let model = |f: f64| line_response(emitters, i, comb, omega_sq, f);
        for c in &d.phase {
            let m = wrap_phase(model(c.freq).t.arg() + phi0);
            let r = wrap_phase(m - c.value) / c.sigma.max(qdphase::estimation::spectra::SIGMA_FLOOR);
            rows.push(vec![dataset as f64, i as f64, 0.0, c.freq, c.value, c.sigma, m, r]);
        }
        for c in &d.intensity {
            let m = model(c.freq).i_t;
            let r = (m - c.value) / c.sigma.max(qdphase::estimation::spectra::SIGMA_FLOOR);
            rows.push(vec![dataset as f64, i as f64, 1.0, c.freq, c.value, c.sigma, m, r]);
        }
    }
    rows
}

fn failure_of(kind: &str, fit: &FitResult) -> Option<CliError> {
    if fit.converged {
        return None;
    }
    let mut msg = format!(
        "{kind} fit stopped after {} iterations, chi2 = {:e}",
        fit.n_iter, fit.chi2
    );
    if !fit.flat_directions.is_empty() {
        msg.push_str(&format!(
            "; {} non-identifiable direction(s), see flat_directions in fit.json",
            fit.flat_directions.len()
        ));
    }
    for w in &fit.warnings {
        msg.push_str("; ");
        msg.push_str(w);
    }
    Some(CliError::FitFailed(msg))
}

/// Linear-response phase extremum and critical flux of an emitter, for the
/// summary's derived block.
fn derived_for(e: &EmitterParams, suffix: &str, summary: &mut FitSummary) {
    if let Ok(x) = phase_extrema_numeric(e, Drive::LinearResponse) {
        summary.derived.insert(format!("phi_max{suffix}"), x.phi_max);
        summary.derived.insert(format!("delta_star{suffix}"), x.delta_star);
    }
    if let Ok(nc) = critical_photon_flux(e) {
        summary.derived.insert(format!("n_c{suffix}"), nc);
    }
}

pub fn fit(cfg: &RunConfig, fmt: Format, inputs: &[PathBuf]) -> CliResult<Outcome> {
    let mut b = new_bundle("fit", cfg)?;
    if inputs.is_empty() || inputs.len() > 2 {
        return Err(CliError::bad(format!(
            "fit takes one or two phasor files, got {}",
            inputs.len()
        )));
    }
    let mut dipoles = Vec::new();
    for p in inputs {
        let pts = read_phasors(p, &mut b)?;
        if pts.is_empty() {
            return Err(CliError::bad(format!("{}: no phasor points", p.display())));
        }
        dipoles.push(DipoleSpectrum::from_phasors(label_of(p), &pts));
    }
    let data = SpectrumDataset { dipoles, power: None };
    let opts = SpectraFitOptions {
        combination: cfg.fit.combination,
        init: cfg.fit.init.clone(),
        bounds: cfg.fit.bounds.clone(),
        lm: cfg.fit.lm.clone(),
    };
    let fit = fit_two_dipole_spectra(&data, &opts)?;
    let n = data.dipoles.len();
    let emitters = emitters_from_params(&fit.params);
    let phi0 = fit.params[3 * n + 1];
    let mut summary = FitSummary::new("spectra", &fit);
    for (i, e) in emitters.iter().enumerate() {
        derived_for(e, &format!("_{}", i + 1), &mut summary);
    }
    b.add_json("fit.json", &summary)?;
    let rows = residual_rows(0, &data, &emitters, phi0, 0.0, opts.combination);
    add_table(&mut b, "residuals", fmt, &RESIDUAL_HEADER, rows)?;
    Ok(Outcome {
        failure: failure_of("spectra", &fit),
        bundle: b,
    })
}

pub fn fit_saturation(cfg: &RunConfig, fmt: Format, inputs: &[PathBuf], powers: &[f64]) -> CliResult<Outcome> {
    let mut b = new_bundle("fit-saturation", cfg)?;
    let powers = if powers.is_empty() { &cfg.saturation.powers[..] } else { powers };
    if inputs.len() != powers.len() {
        return Err(CliError::bad(format!(
            "{} phasor file(s) but {} power value(s)",
            inputs.len(),
            powers.len()
        )));
    }
    let mut data = Vec::with_capacity(inputs.len());
    for (p, &pw) in inputs.iter().zip(powers) {
        let pts = read_phasors(p, &mut b)?;
        if pts.is_empty() {
            return Err(CliError::bad(format!("{}: no phasor points", p.display())));
        }
        data.push(SpectrumDataset {
            dipoles: vec![DipoleSpectrum::from_phasors(label_of(p), &pts)],
            power: Some(pw),
        });
    }
    let opts = SaturationFitOptions {
        init: cfg.saturation.init.clone(),
        bounds: cfg.saturation.bounds.clone(),
        lm: cfg.saturation.lm.clone(),
    };
    let fit = fit_saturation_series(&data, &opts)?;
    let e = saturation_emitter(&fit);
    let k = fit.params[4];
    let mut summary = FitSummary::new("saturation", &fit);
    derived_for(&e, "", &mut summary);
    summary.derived.insert("k".into(), k);

    let mut curve_powers = if cfg.saturation.curve_powers.is_empty() {
        powers.to_vec()
    } else {
        cfg.saturation.curve_powers.clone()
    };
    curve_powers.sort_by(f64::total_cmp);
    curve_powers.dedup();
    if k > 0.0 {
        let rows = predict_phase_vs_power(&e, k, &curve_powers)?
            .into_iter()
            .map(|(p, phi)| vec![p, (k * p).sqrt(), phi])
            .collect();
        add_table(&mut b, "phi_max_vs_power", fmt, &["power", "omega_rad_ns", "phi_max_rad"], rows)?;
    } else {
        summary
            .warnings
            .push("calibration k is zero; no phi_max-vs-power curve written".into());
    }
    b.add_json("fit.json", &summary)?;

    let mut rows = Vec::new();
    for (j, d) in data.iter().enumerate() {
        rows.extend(residual_rows(
            j,
            d,
            std::slice::from_ref(&e),
            e.phi0,
            k * d.power.unwrap_or(0.0),
            Combination::Isolated,
        ));
    }
    add_table(&mut b, "residuals", fmt, &RESIDUAL_HEADER, rows)?;
    Ok(Outcome {
        failure: failure_of("saturation", &fit),
        bundle: b,
    })
}

#[derive(Serialize)]
struct ChiralSummary {
    schema_version: &'static str,
    gamma: f64,
    gamma_dp: f64,
    beta_dir: f64,
    thresholds: ChiralThresholds,
    /// Resonant low-power transmission.
    t0_re: f64,
    t0_im: f64,
    phase0: f64,
}

pub fn predict_chiral(cfg: &RunConfig, fmt: Format) -> CliResult<Outcome> {
    let mut b = new_bundle("predict-chiral", cfg)?;
    let c = &cfg.chiral;
    if c.points < 2 {
        return Err(CliError::bad("config key 'chiral.points': need at least 2"));
    }
    let p = EmitterParams::chiral(c.gamma, c.gamma_dp, c.beta_dir)?;
    let thresholds = chiral_thresholds(&p)?;
    let r0 = scatter_response(&p, &DriveState::linear(0.0))?;
    b.add_json(
        "chiral.json",
        &ChiralSummary {
            schema_version: CHIRAL_SCHEMA_VERSION,
            gamma: c.gamma,
            gamma_dp: c.gamma_dp,
            beta_dir: c.beta_dir,
            thresholds,
            t0_re: r0.t.re,
            t0_im: r0.t.im,
            phase0: r0.phase(),
        },
    )?;
    let header = |x: &'static str| [x, "t_re", "t_im", "phase_rad", "amplitude", "i_t"];

    let rows = linspace(0.0, c.gamma, c.points)
        .into_iter()
        .map(|o| Ok(response_row(o, &scatter_response(&p, &DriveState::rabi(0.0, o))?)))
        .collect::<CliResult<Vec<_>>>()?;
    add_table(&mut b, "chiral_vs_omega", fmt, &header("omega_rad_ns"), rows)?;

    let rows = linspace(0.0, c.gamma, c.points)
        .into_iter()
        .map(|g| {
            let q = EmitterParams::chiral(c.gamma, g, c.beta_dir)?;
            Ok(response_row(g, &scatter_response(&q, &DriveState::linear(0.0))?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    add_table(&mut b, "chiral_vs_gamma_dp", fmt, &header("gamma_dp_rad_ns"), rows)?;

    let rows = linspace(0.0, 1.0, c.points)
        .into_iter()
        .map(|bd| {
            let q = EmitterParams::chiral(c.gamma, c.gamma_dp, bd)?;
            Ok(response_row(bd, &scatter_response(&q, &DriveState::linear(0.0))?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    add_table(&mut b, "chiral_vs_beta_dir", fmt, &header("beta_dir"), rows)?;
    Ok(Outcome::ok(b))
}
