//! Solver and filter self-checks run by `nsda validate`.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{gaussian_draw, truth_initial_condition, ExperimentConfig};
use crate::diagnostics::{lower_bound, upper_bound};
use crate::error::Result;
use crate::filter::{assimilate_step, make_gain, tikhonov_minimizer, FilterParams};
use crate::nse::{nonlinear_term, steady_state, Solver, SolverConfig};
use crate::obs::{observe, NoiseModel};
use crate::spectral::{sobolev_norm, ProjectionCutoff, SpectralField, SpectralGrid, Wavevector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let t0 = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// `B(u, u)` by summing over every triad `p + q = k` of the truncated
/// lattice, with no FFTs: `P[(u . grad) u]` projected onto `psi_k`.
pub fn direct_convolution(u: &SpectralField) -> SpectralField {
    let grid = *u.grid();
    let scale = 2.0 * std::f64::consts::PI / grid.domain_length;
    let vec_of = |k: Wavevector, c: Complex64| {
        let n = (k.norm_sq() as f64).sqrt();
        [c * (k.k2 as f64 / n), c * (-(k.k1 as f64) / n)]
    };
    let modes: Vec<(Wavevector, [Complex64; 2])> = grid
        .retained()
        .map(|(i, k)| (k, vec_of(k, u.coeffs()[i])))
        .collect();
    let mut out = SpectralField::zeros(grid);
    let targets: Vec<Wavevector> = grid.half_lattice().map(|(_, k)| k).collect();
    for k in targets {
        let mut w = [Complex64::new(0.0, 0.0); 2];
        for (p, up) in &modes {
            let q = Wavevector::new(k.k1 - p.k1, k.k2 - p.k2);
            if !grid.is_retained(q) {
                continue;
            }
            let uq = vec_of(q, u.get(q));
            let adv = Complex64::i() * scale * (up[0] * q.k1 as f64 + up[1] * q.k2 as f64);
            w[0] += adv * uq[0];
            w[1] += adv * uq[1];
        }
        let e = vec_of(k, Complex64::new(1.0, 0.0));
        out.set_pair(k, w[0] * e[0].re + w[1] * e[1].re).expect("retained");
    }
    out
}

fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    (a - b).max_abs()
}

/// Nonlinear term against [`direct_convolution`] on an `N = 8` lattice.
pub fn check_dealiasing() -> Result<f64> {
    let grid = SpectralGrid::new(8, 2.0, 2)?;
    let u = gaussian_draw(&grid, 11, 0, |k| 1.0 / k.norm_sq() as f64);
    Ok(max_diff(&nonlinear_term(&u), &direct_convolution(&u)))
}

/// Errors `(dt, |u_dt(T) - u_ref(T)|)` of ETD4RK over `horizon` for the
/// step sizes `horizon / n`, and the orders between successive pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderStudy {
    pub errors: Vec<(f64, f64)>,
    pub orders: Vec<f64>,
}

/// `base` supplies everything but the step size.
pub fn etd_order_study(
    state: &SpectralField,
    base: &SolverConfig,
    horizon: f64,
    steps: &[u64],
    reference_steps: u64,
) -> Result<OrderStudy> {
    let run = |n: u64| -> Result<SpectralField> {
        let cfg = SolverConfig {
            dt: horizon / n as f64,
            ..*base
        };
        Solver::new(cfg)?.evolve(state, n)
    };
    let reference = run(reference_steps)?;
    let errors = steps
        .iter()
        .map(|&n| Ok((horizon / n as f64, (&run(n)? - &reference).energy().sqrt())))
        .collect::<Result<Vec<_>>>()?;
    let orders = errors
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    Ok(OrderStudy { errors, orders })
}

/// Step counts and reference used for the order check over `T = 0.1`.
pub const ORDER_STEPS: [u64; 3] = [8, 16, 32];
pub const ORDER_REFERENCE_STEPS: u64 = 256;
pub const ORDER_RANGE: (f64, f64) = (3.5, 4.5);

/// An attractor-adjacent state at `nu = 0.01`: the truth initial condition
/// evolved for `t` time units.
pub fn attractor_adjacent_state(seed: u64, t: f64) -> Result<SpectralField> {
    let mut cfg = ExperimentConfig::default();
    cfg.noise.seed = seed;
    let start = truth_initial_condition(&cfg)?;
    let solver_cfg = cfg.solver_config()?;
    let n = (t / solver_cfg.dt).round() as u64;
    Solver::new(solver_cfg)?.evolve(&start, n)
}

pub fn check_order() -> Result<(bool, String)> {
    let state = attractor_adjacent_state(0, 20.0)?;
    let base = SolverConfig {
        nu: 0.01,
        grid: *state.grid(),
        ..Default::default()
    };
    let study = etd_order_study(&state, &base, 0.1, &ORDER_STEPS, ORDER_REFERENCE_STEPS)?;
    let (lo, hi) = ORDER_RANGE;
    Ok((
        study.orders.iter().all(|p| *p >= lo && *p <= hi),
        format!("observed orders {:?}", study.orders),
    ))
}

/// Outcome of the steady-state check at `nu = 0.05`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteadyStateStudy {
    pub residual: f64,
    pub initial_distance_h1: f64,
    pub final_distance_h1: f64,
    /// First unit-time sample with `||u - u*|| <= 1e-3`.
    pub return_time: Option<f64>,
}

pub const STEADY_NU: f64 = 0.05;
pub const STEADY_HORIZON: f64 = 200.0;
pub const STEADY_TOLERANCE: f64 = 1e-3;
pub const STEADY_RESIDUAL: f64 = 1e-10;

pub fn steady_state_study(seed: u64) -> Result<SteadyStateStudy> {
    let cfg = SolverConfig {
        nu: STEADY_NU,
        ..Default::default()
    };
    let grid = cfg.grid;
    let u_star = steady_state(&cfg)?;
    let mut solver = Solver::new(cfg)?;
    let residual = solver.tendency(&u_star)?.energy().sqrt();

    let shape = |k: Wavevector| 1.0 / (k.norm_sq() as f64).powi(2);
    let total: f64 = grid.retained().map(|(_, k)| shape(k)).sum();
    let pert = gaussian_draw(&grid, seed, 0, |k| shape(k) / total);
    let pert = pert.scale(0.1 * u_star.energy().sqrt() / pert.energy().sqrt());
    let mut u = &u_star + &pert;
    let initial = sobolev_norm(&(&u - &u_star), 1.0)?;

    let per_unit = (1.0 / cfg.dt).round() as u64;
    let mut return_time = None;
    let mut dist = initial;
    for s in 1..=(STEADY_HORIZON as u64) {
        solver.evolve_in_place(&mut u, per_unit)?;
        dist = sobolev_norm(&(&u - &u_star), 1.0)?;
        if dist <= STEADY_TOLERANCE {
            return_time = Some(s as f64);
            break;
        }
    }
    Ok(SteadyStateStudy {
        residual,
        initial_distance_h1: initial,
        final_distance_h1: dist,
        return_time,
    })
}

pub fn check_steady_state() -> Result<(bool, String)> {
    let s = steady_state_study(0)?;
    Ok((
        s.residual <= STEADY_RESIDUAL && s.return_time.is_some(),
        format!(
            "residual {:.2e}, H1 distance {:.3e} -> {:.3e}, return time {:?}",
            s.residual, s.initial_distance_h1, s.final_distance_h1, s.return_time
        ),
    ))
}

/// `max |tikhonov_minimizer - assimilate_step|` over random inputs, for
/// complete and partial observations.
pub fn check_tikhonov_equivalence() -> Result<f64> {
    let grid = SpectralGrid::default();
    let mut worst: f64 = 0.0;
    for (i, cutoff) in [ProjectionCutoff::Complete, ProjectionCutoff::from_ratio(25.0)?]
        .into_iter()
        .enumerate()
    {
        for alpha in [1.0, -1.0, 0.5] {
            let p = FilterParams::new(0.4, alpha, cutoff, 0.04, &grid);
            let gain = make_gain(&p, &grid)?;
            let u = gaussian_draw(&grid, 5 + i as u64, 0, |k| 1.0 / k.norm_sq() as f64);
            let y = observe(&u, cutoff, &NoiseModel::gaussian(0.04, 3), 1);
            let mut solver = Solver::new(SolverConfig::default())?.without_advection();
            let step = assimilate_step(&u, &y, &gain, &mut solver, 0)?;
            let tik = tikhonov_minimizer(&y, &u, &p)?;
            worst = worst.max(max_diff(&step, &tik));
        }
    }
    Ok(worst)
}

/// `|lower - upper| / upper` at `eta = 1e-6`, complete observations.
pub fn check_bound_coincidence() -> Result<f64> {
    let grid = SpectralGrid::default();
    let sigma = 0.04;
    let p = FilterParams::new(1e-6, 1.0, ProjectionCutoff::Complete, sigma, &grid);
    let gain = make_gain(&p, &grid)?;
    let lo = lower_bound(&gain, sigma, ProjectionCutoff::Complete);
    let up = upper_bound(&SpectralField::zeros(grid), sigma, ProjectionCutoff::Complete);
    Ok((up - lo).abs() / up)
}

pub const EXACT_TOLERANCE: f64 = 1e-12;
pub const COINCIDENCE_TOLERANCE: f64 = 1e-6;

/// The full battery. `quick` skips the long steady-state return check.
pub fn run_battery(quick: bool) -> Vec<CheckOutcome> {
    let mut out = vec![
        timed("dealiasing", || {
            let d = check_dealiasing()?;
            Ok((d <= EXACT_TOLERANCE, format!("max deviation from direct convolution {d:.3e}")))
        }),
        timed("etd4rk_order", check_order),
    ];
    if !quick {
        out.push(timed("steady_state", check_steady_state));
    }
    out.push(timed("tikhonov_equivalence", || {
        let d = check_tikhonov_equivalence()?;
        Ok((d <= EXACT_TOLERANCE, format!("max deviation {d:.3e}")))
    }));
    out.push(timed("bound_coincidence", || {
        let d = check_bound_coincidence()?;
        Ok((d <= COINCIDENCE_TOLERANCE, format!("relative gap {d:.3e}")))
    }));
    out
}
