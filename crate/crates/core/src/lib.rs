//! Forward and inverse modeling of the nonlinear phase shift imprinted by a
//! single two-level emitter on light in a photonic waveguide.
//!
//! The crate is split along the measurement chain:
//!
//! * [`scattering`]: steady-state emitter response, complex transmission
//!   (isotropic and chiral coupling), phase extrema and saturation thresholds,
//!   plus a Runge-Kutta Lindblad integrator used as an independent oracle.
//! * [`interferometer`]: Mach-Zehnder fringe synthesis with finite
//!   visibility, environmental phase, a discrete PID lock model and Poisson
//!   counting noise.
//! * [`estimation`]: windowed phasor extraction, FFT path-length estimation,
//!   a bounded Levenberg-Marquardt engine, joint two-dipole spectral fits and
//!   power-series saturation fits.
//! * [`io`]: strict CSV/JSON file formats for traces, phasors and fit results.
//!
//! Rates and detunings are carried as rad/ns throughout; laser frequencies are
//! GHz. See [`units`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimation;
pub mod interferometer;
pub mod io;
pub mod scattering;
pub mod units;

pub use error::{Error, Result};
pub use scattering::{
    BlochSteadyState, Coupling, Drive, DriveState, EmitterParams, ScatterResponse,
};
