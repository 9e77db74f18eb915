//! The 3DVAR analysis step.
//!
//! With `A0 = ell A`, model covariance `C = delta^2 A0^(-2 zeta)` and
//! observation covariance `Gamma = sigma^2 A0^(-2 beta)`, the Tikhonov
//! minimizer is the operator-convex combination
//! `u' = B Psi(u) + (I - B) y`, where `B` is diagonal with
//! `b_k = eta^2 m_k^(2 alpha) / (1 + eta^2 m_k^(2 alpha))` on the observed
//! modes (`m_k = ell a_k`, `eta = sigma/delta`, `alpha = zeta - beta`) and
//! `b_k = 1` on the unobserved ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nse::Solver;
use crate::obs::ObservationRecord;
use crate::spectral::{ProjectionCutoff, SpectralField, SpectralGrid, Wavevector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Ratio `sigma / delta` of observational to model uncertainty.
    pub eta: f64,
    /// `zeta - beta`; positive trusts the model at small scales.
    pub alpha: f64,
    /// Normalizer in `A0 = ell A`.
    pub ell: f64,
    pub cutoff: ProjectionCutoff,
    /// Observational noise scale.
    pub sigma: f64,
    /// Exponent of the observation covariance `sigma^2 A0^(-2 beta)`.
    pub beta_exp: f64,
}

impl FilterParams {
    /// Parameters with `ell = 1/lambda_1` and white observation noise.
    pub fn new(eta: f64, alpha: f64, cutoff: ProjectionCutoff, sigma: f64, grid: &SpectralGrid) -> Self {
        FilterParams {
            eta,
            alpha,
            ell: 1.0 / grid.lambda1(),
            cutoff,
            sigma,
            beta_exp: 0.0,
        }
    }

    pub fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::domain(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::domain(format!("ell must be positive, got {}", self.ell)));
        }
        if !self.alpha.is_finite() || !self.beta_exp.is_finite() {
            return Err(Error::domain("alpha and beta must be finite"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if let ProjectionCutoff::Finite { ratio } = self.cutoff {
            // re-run the constructor check for deserialized values
            ProjectionCutoff::from_ratio(ratio)?;
        }
        let _ = grid;
        Ok(())
    }

    /// Eigenvalue `m_k = ell a_k` of `A0`.
    pub fn a0_eigenvalue(&self, k: Wavevector, grid: &SpectralGrid) -> f64 {
        self.ell * grid.lambda1() * k.norm_sq() as f64
    }

    /// Diagonal of `Gamma = sigma^2 A0^(-2 beta)` at `k`.
    pub fn gamma_k(&self, k: Wavevector, grid: &SpectralGrid) -> f64 {
        let s2 = self.sigma * self.sigma;
        if self.beta_exp == 0.0 {
            s2
        } else {
            s2 * self.a0_eigenvalue(k, grid).powf(-2.0 * self.beta_exp)
        }
    }
}

/// Eigenvalue of `B0(eta) = (I + eta^2 A0^(2 alpha))^(-1) eta^2 A0^(2 alpha)` at `k`.
pub fn b_eigenvalue(k: Wavevector, p: &FilterParams, grid: &SpectralGrid) -> Result<f64> {
    if k.is_zero() {
        return Err(Error::domain("gain eigenvalue of the zero wavevector"));
    }
    if p.eta == 0.0 {
        return Ok(0.0);
    }
    let x = p.eta * p.eta * p.a0_eigenvalue(k, grid).powf(2.0 * p.alpha);
    Ok(if x.is_infinite() { 1.0 } else { x / (1.0 + x) })
}

/// Diagonal gain `B` on the stored lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct GainOperator {
    grid: SpectralGrid,
    b: Vec<f64>,
}

impl GainOperator {
    /// `B = value * I`.
    pub fn constant(grid: SpectralGrid, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::domain(format!("gain must lie in [0, 1], got {value}")));
        }
        Ok(GainOperator {
            grid,
            b: vec![value; grid.len()],
        })
    }

    pub fn from_diagonal(grid: SpectralGrid, b: Vec<f64>) -> Result<Self> {
        if b.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: b.len(),
            });
        }
        if let Some(bad) = b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("gain must lie in [0, 1], got {bad}")));
        }
        Ok(GainOperator { grid, b })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.b
    }

    pub fn at(&self, k: Wavevector) -> f64 {
        self.b[self.grid.index(k)]
    }

    /// `B u + (I - B) y`, coefficientwise.
    pub fn combine(&self, forecast: &SpectralField, data: &SpectralField) -> SpectralField {
        assert_eq!(forecast.grid(), &self.grid);
        assert_eq!(data.grid(), &self.grid);
        let mut out = forecast.clone();
        for ((o, y), &b) in out.coeffs_mut().iter_mut().zip(data.coeffs()).zip(&self.b) {
            *o = *o * b + y * (1.0 - b);
        }
        out
    }
}

/// `B` for fixed parameters: `b_k` from [`b_eigenvalue`] on `W_lambda`, one
/// on its complement.
pub fn make_gain(p: &FilterParams, grid: &SpectralGrid) -> Result<GainOperator> {
    p.validate(grid)?;
    let mut b = vec![1.0; grid.len()];
    for (i, k) in grid.retained() {
        if p.cutoff.observes(k) {
            b[i] = b_eigenvalue(k, p, grid)?;
        }
    }
    Ok(GainOperator { grid: *grid, b })
}

/// One cycle `u' = B Psi(u) + (I - B) y` with `Psi` = `n_substeps` solver steps.
pub fn assimilate_step(
    u_hat: &SpectralField,
    y: &ObservationRecord,
    gain: &GainOperator,
    solver: &mut Solver,
    n_substeps: u64,
) -> Result<SpectralField> {
    let forecast = solver.evolve(u_hat, n_substeps)?;
    Ok(gain.combine(&forecast, &y.data))
}

fn covariances(k: Wavevector, p: &FilterParams, grid: &SpectralGrid) -> (f64, f64) {
    let gamma = p.gamma_k(k, grid);
    // C = delta^2 A0^(-2 zeta), delta = sigma / eta, zeta = alpha + beta
    let delta = p.sigma / p.eta;
    let zeta = p.alpha + p.beta_exp;
    let c = delta * delta * p.a0_eigenvalue(k, grid).powf(-2.0 * zeta);
    (gamma, c)
}

fn check_tikhonov(p: &FilterParams, grid: &SpectralGrid) -> Result<()> {
    p.validate(grid)?;
    if p.eta == 0.0 {
        return Err(Error::domain("eta = 0 makes the model covariance degenerate"));
    }
    if p.sigma == 0.0 {
        return Err(Error::domain("sigma = 0 makes the observation covariance degenerate"));
    }
    Ok(())
}

/// `I(u) = 1/2 |y - P_lambda u|_Gamma^2 + 1/2 |u - prior|_C^2`.
pub fn tikhonov_objective(
    u: &SpectralField,
    y: &ObservationRecord,
    prior_mean: &SpectralField,
    p: &FilterParams,
) -> Result<f64> {
    let grid = *u.grid();
    check_tikhonov(p, &grid)?;
    let mut data = 0.0;
    let mut model = 0.0;
    for (i, k) in grid.retained() {
        let (gamma, c) = covariances(k, p, &grid);
        if p.cutoff.observes(k) {
            data += (y.data.coeffs()[i] - u.coeffs()[i]).norm_sqr() / gamma;
        }
        model += (u.coeffs()[i] - prior_mean.coeffs()[i]).norm_sqr() / c;
    }
    Ok(0.5 * (data + model))
}

/// Closed-form minimizer of [`tikhonov_objective`]:
/// `u = (I - K) prior + K y` with `K = C P* (Gamma + P C P*)^(-1) P`.
pub fn tikhonov_minimizer(
    y: &ObservationRecord,
    prior_mean: &SpectralField,
    p: &FilterParams,
) -> Result<SpectralField> {
    let grid = *prior_mean.grid();
    check_tikhonov(p, &grid)?;
    let mut out = prior_mean.clone();
    for (i, k) in grid.retained() {
        if !p.cutoff.observes(k) {
            continue;
        }
        let (gamma, c) = covariances(k, p, &grid);
        let gain = if c.is_infinite() { 1.0 } else { c / (gamma + c) };
        let prior = prior_mean.coeffs()[i];
        out.coeffs_mut()[i] = prior + (y.data.coeffs()[i] - prior) * gain;
    }
    Ok(out)
}
