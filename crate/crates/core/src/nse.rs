//! Forward model: the projected Navier-Stokes equation
//! `du/dt = -nu A u - B(u, u) + f` advanced by Cox-Matthews ETD4RK.
//!
//! The Stokes part is diagonal in the `psi_k` basis and integrated exactly;
//! `f - B(u, u)` enters through the exponential Runge-Kutta stages.
//! `B(u, u) = P(u . grad u)` is evaluated pseudo-spectrally on the padded
//! grid from the six fields `u_i`, `d_j u_i`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::spectral::{leray_from_packed_into, unit_perp, SpectralField, SpectralGrid, Wavevector};

/// States with `|u|` above this are treated as blown up.
pub const BLOWUP_NORM: f64 = 1e6;

/// Largest `nu * a_max * dt` accepted, keeping `exp` finite.
const MAX_STIFFNESS: f64 = 700.0;

/// Steady forcing `f = grad_perp psi`, `psi = amplitude * cos(2 pi k_f.x / L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub k_f: Wavevector,
    pub amplitude: f64,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec {
            k_f: Wavevector::new(5, 5),
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub forcing: ForcingSpec,
    pub grid: SpectralGrid,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nu: 0.01,
            dt: 0.005,
            forcing: ForcingSpec::default(),
            grid: SpectralGrid::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::domain(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("time step must be positive, got {}", self.dt)));
        }
        let h = (self.grid.n_modes / 2 - 1) as f64;
        let a_max = self.grid.lambda1() * 2.0 * h * h;
        if self.nu * a_max * self.dt > MAX_STIFFNESS {
            return Err(Error::domain(format!(
                "nu * a_max * dt = {} exceeds {MAX_STIFFNESS}",
                self.nu * a_max * self.dt
            )));
        }
        Ok(())
    }
}

/// `f = grad_perp(amplitude * cos(2 pi k_f.x / L))`, which is supported on
/// `+-k_f` with `f_{k_f} = i * amplitude * pi |k_f| / L`.
pub fn forcing_field(spec: &ForcingSpec, grid: &SpectralGrid) -> Result<SpectralField> {
    if spec.k_f.is_zero() {
        return Err(Error::domain("forcing wavevector must be nonzero"));
    }
    if !grid.is_retained(spec.k_f) {
        return Err(Error::domain(format!(
            "forcing wavevector {} is not representable on {} modes",
            spec.k_f, grid.n_modes
        )));
    }
    let mut f = SpectralField::zeros(*grid);
    let mag = spec.amplitude * std::f64::consts::PI * (spec.k_f.norm_sq() as f64).sqrt()
        / grid.domain_length;
    f.set_pair(spec.k_f, Complex64::new(0.0, mag))?;
    Ok(f)
}

/// Explicit steady state `u* = (nu A)^{-1} f`. Exact for single-mode forcing,
/// where `B(u*, u*) = 0`.
pub fn steady_state(cfg: &SolverConfig) -> Result<SpectralField> {
    cfg.validate()?;
    let f = forcing_field(&cfg.forcing, &cfg.grid)?;
    let l1 = cfg.grid.lambda1();
    Ok(f.map_modes(|k, c| c / (cfg.nu * l1 * k.norm_sq() as f64)))
}

/// `phi_j(z) = sum_{n>=0} z^n / (n+j)!` for `j = 0..=3`.
///
/// Uses the power series for `|z| < 2` and the recurrence
/// `phi_{j+1} = (phi_j - 1/j!) / z` otherwise.
pub fn phi(j: usize, z: f64) -> f64 {
    assert!(j <= 3, "phi_{j} not provided");
    if z.abs() < 2.0 {
        let mut fact = 1.0;
        for i in 1..=j {
            fact *= i as f64;
        }
        // term_n = z^n / (n+j)!
        let mut term = 1.0 / fact;
        let mut sum = term;
        for n in 1..60 {
            term *= z / (n + j) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let mut p = z.exp();
        let mut inv_fact = 1.0;
        for i in 0..j {
            p = (p - inv_fact) / z;
            inv_fact /= (i + 1) as f64;
        }
        p
    }
}

/// Per-mode exponential and ETD4RK weights for a fixed step.
#[derive(Clone, Debug, PartialEq)]
pub struct EtdCoefficients {
    pub dt: f64,
    /// `exp(-nu a_k dt / 2)`
    pub e_half: Vec<f64>,
    /// `exp(-nu a_k dt)`
    pub e_full: Vec<f64>,
    /// stage weight `(dt/2) phi_1(z/2)`
    pub q: Vec<f64>,
    /// `dt (phi_1 - 3 phi_2 + 4 phi_3)(z)`
    pub f1: Vec<f64>,
    /// `dt (phi_2 - 2 phi_3)(z)`
    pub f2: Vec<f64>,
    /// `dt (4 phi_3 - phi_2)(z)`
    pub f3: Vec<f64>,
}

impl EtdCoefficients {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid;
        let h = cfg.dt;
        let len = grid.len();
        let mut c = EtdCoefficients {
            dt: h,
            e_half: vec![0.0; len],
            e_full: vec![0.0; len],
            q: vec![0.0; len],
            f1: vec![0.0; len],
            f2: vec![0.0; len],
            f3: vec![0.0; len],
        };
        for (i, k) in grid.retained() {
            let z = -cfg.nu * grid.lambda1() * k.norm_sq() as f64 * h;
            let (p1, p2, p3) = (phi(1, z), phi(2, z), phi(3, z));
            c.e_half[i] = (0.5 * z).exp();
            c.e_full[i] = z.exp();
            c.q[i] = 0.5 * h * phi(1, 0.5 * z);
            c.f1[i] = h * (p1 - 3.0 * p2 + 4.0 * p3);
            c.f2[i] = h * (p2 - 2.0 * p3);
            c.f3[i] = h * (4.0 * p3 - p2);
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug)]
struct ModeFactors {
    index: usize,
    // psi_k direction
    e1: f64,
    e2: f64,
    // 2 pi k_j / L
    d1: f64,
    d2: f64,
}

/// Reusable buffers and FFT plans for evaluating `B(u, u)`.
#[derive(Clone, Debug)]
pub struct Advection {
    grid: SpectralGrid,
    fft: Fft2,
    modes: Vec<ModeFactors>,
    spec: [Vec<Complex64>; 4],
    phys: [Vec<Complex64>; 3],
}

impl Advection {
    pub fn new(grid: SpectralGrid) -> Self {
        let n = grid.n_modes;
        let m = grid.padded_size();
        let scale = grid.wavenumber_scale();
        let modes = grid
            .retained()
            .map(|(index, k)| {
                let (e1, e2) = unit_perp(k);
                ModeFactors {
                    index,
                    e1,
                    e2,
                    d1: scale * k.k1 as f64,
                    d2: scale * k.k2 as f64,
                }
            })
            .collect();
        let zs = |len| vec![Complex64::new(0.0, 0.0); len];
        Advection {
            grid,
            fft: Fft2::new(n, m),
            modes,
            spec: [zs(n * n), zs(n * n), zs(n * n), zs(n * n)],
            phys: [zs(m * m), zs(m * m), zs(m * m)],
        }
    }

    /// Writes the basis coefficients of `B(u, u) = P(u . grad u)` into `out`.
    pub fn apply(&mut self, u: &[Complex64], out: &mut [Complex64]) {
        let i = Complex64::i();
        let [s1, s2, s3, product] = &mut self.spec;
        for mf in &self.modes {
            let c = u[mf.index];
            let v1 = c * mf.e1;
            let v2 = c * mf.e2;
            // packed pairs of real fields: (u1, u2), (d1 u1, d2 u1), (d1 u2, d2 u2)
            s1[mf.index] = v1 + i * v2;
            s2[mf.index] = i * v1 * mf.d1 - v1 * mf.d2;
            s3[mf.index] = i * v2 * mf.d1 - v2 * mf.d2;
        }
        let [p1, p2, p3] = &mut self.phys;
        self.fft.inverse(s1, p1);
        self.fft.inverse(s2, p2);
        self.fft.inverse(s3, p3);
        for ((a, b), c) in p1.iter_mut().zip(p2.iter()).zip(p3.iter()) {
            let w1 = a.re * b.re + a.im * b.im;
            let w2 = a.re * c.re + a.im * c.im;
            *a = Complex64::new(w1, w2);
        }
        self.fft.forward(p1, product);
        leray_from_packed_into(&self.grid, product, out);
    }
}

/// `B(u, u)` for a single field. Allocates plans; use [`Advection`] in loops.
pub fn nonlinear_term(u: &SpectralField) -> SpectralField {
    let grid = *u.grid();
    let mut adv = Advection::new(grid);
    let mut out = SpectralField::zeros(grid);
    adv.apply(u.coeffs(), out.coeffs_mut());
    out
}

/// ETD4RK integrator for one configuration. Owns its scratch space, so each
/// trajectory needs its own `Solver`.
#[derive(Clone, Debug)]
pub struct Solver {
    cfg: SolverConfig,
    coeffs: EtdCoefficients,
    forcing: Vec<Complex64>,
    advection: Option<Advection>,
    stages: [Vec<Complex64>; 7],
    steps: u64,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        let coeffs = EtdCoefficients::new(&cfg)?;
        Self::with_coefficients(cfg, coeffs)
    }

    pub fn with_coefficients(cfg: SolverConfig, coeffs: EtdCoefficients) -> Result<Self> {
        cfg.validate()?;
        if coeffs.e_full.len() != cfg.grid.len() || coeffs.dt != cfg.dt {
            return Err(Error::domain("ETD coefficients do not match the solver config"));
        }
        let forcing = forcing_field(&cfg.forcing, &cfg.grid)?.into_coeffs();
        let len = cfg.grid.len();
        let z = || vec![Complex64::new(0.0, 0.0); len];
        Ok(Solver {
            cfg,
            coeffs,
            forcing,
            advection: Some(Advection::new(cfg.grid)),
            stages: [z(), z(), z(), z(), z(), z(), z()],
            steps: 0,
        })
    }

    /// Drops the advection term, leaving `du/dt = -nu A u + f`.
    pub fn without_advection(mut self) -> Self {
        self.advection = None;
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn coefficients(&self) -> &EtdCoefficients {
        &self.coeffs
    }

    /// Number of steps taken since construction or the last reset.
    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn reset_step_count(&mut self) {
        self.steps = 0;
    }

    /// `out = f - B(u, u)`.
    fn rhs(advection: &mut Option<Advection>, forcing: &[Complex64], u: &[Complex64], out: &mut [Complex64]) {
        match advection {
            Some(adv) => {
                adv.apply(u, out);
                for (o, f) in out.iter_mut().zip(forcing) {
                    *o = f - *o;
                }
            }
            None => out.copy_from_slice(forcing),
        }
    }

    fn step_in_place(&mut self, u: &mut [Complex64]) -> Result<()> {
        let c = &self.coeffs;
        let [nu, a, na, b, nb, cs, nc] = &mut self.stages;
        let adv = &mut self.advection;
        let f = &self.forcing;

        Self::rhs(adv, f, u, nu);
        for i in 0..u.len() {
            a[i] = u[i] * c.e_half[i] + nu[i] * c.q[i];
        }
        Self::rhs(adv, f, a, na);
        for i in 0..u.len() {
            b[i] = u[i] * c.e_half[i] + na[i] * c.q[i];
        }
        Self::rhs(adv, f, b, nb);
        for i in 0..u.len() {
            cs[i] = a[i] * c.e_half[i] + (nb[i] * 2.0 - nu[i]) * c.q[i];
        }
        Self::rhs(adv, f, cs, nc);
        let mut energy = 0.0;
        for i in 0..u.len() {
            u[i] = u[i] * c.e_full[i]
                + nu[i] * c.f1[i]
                + (na[i] + nb[i]) * (2.0 * c.f2[i])
                + nc[i] * c.f3[i];
            energy += u[i].norm_sqr();
        }
        self.steps += 1;
        if !energy.is_finite() {
            return Err(Error::Blowup {
                step: self.steps,
                reason: "non-finite coefficient".into(),
            });
        }
        if energy.sqrt() > BLOWUP_NORM {
            return Err(Error::Blowup {
                step: self.steps,
                reason: format!("|u| = {:.3e} exceeds {BLOWUP_NORM:e}", energy.sqrt()),
            });
        }
        Ok(())
    }

    pub fn step(&mut self, u: &SpectralField) -> Result<SpectralField> {
        self.check_grid(u)?;
        let mut out = u.clone();
        self.step_in_place(out.coeffs_mut())?;
        Ok(out)
    }

    /// `n_steps` composed steps; zero steps is the identity.
    pub fn evolve(&mut self, u: &SpectralField, n_steps: u64) -> Result<SpectralField> {
        let mut out = u.clone();
        self.evolve_in_place(&mut out, n_steps)?;
        Ok(out)
    }

    pub fn evolve_in_place(&mut self, u: &mut SpectralField, n_steps: u64) -> Result<()> {
        self.check_grid(u)?;
        for _ in 0..n_steps {
            self.step_in_place(u.coeffs_mut())?;
        }
        Ok(())
    }

    /// Evaluates `-nu A u - B(u, u) + f`.
    pub fn tendency(&mut self, u: &SpectralField) -> Result<SpectralField> {
        self.check_grid(u)?;
        let mut out = SpectralField::zeros(self.cfg.grid);
        Self::rhs(&mut self.advection, &self.forcing, u.coeffs(), out.coeffs_mut());
        let nu = self.cfg.nu;
        let l1 = self.cfg.grid.lambda1();
        let grid = self.cfg.grid;
        for (i, k) in grid.retained() {
            out.coeffs_mut()[i] -= u.coeffs()[i] * (nu * l1 * k.norm_sq() as f64);
        }
        Ok(out)
    }

    fn check_grid(&self, u: &SpectralField) -> Result<()> {
        if *u.grid() != self.cfg.grid {
            return Err(Error::GridMismatch("state and solver grids differ".into()));
        }
        Ok(())
    }
}

/// One ETD4RK step with precomputed coefficients.
pub fn etd4rk_step(u: &SpectralField, cfg: &SolverConfig, coeffs: &EtdCoefficients) -> Result<SpectralField> {
    Solver::with_coefficients(*cfg, coeffs.clone())?.step(u)
}

/// `Psi(u, n_steps * dt)`.
pub fn evolve(u: &SpectralField, n_steps: u64, cfg: &SolverConfig) -> Result<SpectralField> {
    Solver::new(*cfg)?.evolve(u, n_steps)
}
