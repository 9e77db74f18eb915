//! 3DVAR data assimilation for the two-dimensional incompressible
//! Navier-Stokes equation on a periodic torus.
//!
//! The crate is layered bottom-up:
//!
//! - [`spectral`]: divergence-free Fourier fields, projections, norms and
//!   physical-space transforms.
//! - [`nse`]: dealiased pseudo-spectral nonlinearity and the ETD4RK stepper.
//! - [`obs`]: truth trajectories and noisy spectral observations.
//! - [`filter`]: the diagonal gain operator and the 3DVAR update.
//! - [`diagnostics`]: error series, accuracy bounds and CSV/JSON output.
//! - [`harness`]: experiment configuration and orchestration.

pub mod diagnostics;
pub mod error;
mod fft;
pub mod filter;
pub mod harness;
pub mod nse;
pub mod obs;
pub mod spectral;

pub use error::{Error, Result};
pub use nse::{
    etd4rk_step, evolve, forcing_field, nonlinear_term, steady_state, EtdCoefficients, ForcingSpec,
    Solver, SolverConfig,
};
pub use spectral::{
    from_physical, project_high, project_low, sobolev_norm, stokes_eigenvalue, to_physical,
    ProjectionCutoff, SpectralField, SpectralGrid, VelocityGrid, Wavevector,
};
pub use diagnostics::{energy_spectrum, error_series, lower_bound, upper_bound, ErrorSeries, ExperimentResult, Summary};
pub use filter::{assimilate_step, make_gain, tikhonov_minimizer, FilterParams, GainOperator};
pub use harness::{run_experiment, run_sweep, run_twin, ExperimentConfig, SweepAxis};
pub use obs::{generate_truth, observe, spin_up, NoiseKind, NoiseModel, ObservationRecord};
