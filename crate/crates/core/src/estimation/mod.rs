//! Phasor extraction, path-length estimation and model fitting.

pub mod lm;
pub mod pathlength;
pub mod phasor;
pub mod saturation;
pub mod spectra;

pub use lm::{fd_step, jacobian_central, lm_minimize, Bounds, FitResult, LmOptions};
pub use pathlength::{estimate_path_length_fft, PathLengthEstimate};
pub use phasor::{extract_phasor_series, ExtractOptions, PhasorPoint};
pub use saturation::{
    fit_saturation_series, predict_phase_vs_power, saturation_emitter, SaturationFitOptions,
    SATURATION_PARAMS,
};
pub use spectra::{
    default_spectra_bounds, emitters_from_params, fit_two_dipole_spectra, line_response, spectra_param_names,
    synthetic_spectrum, ChannelPoint, Combination, DipoleSpectrum, SpectraFitOptions,
    SpectrumDataset,
};
