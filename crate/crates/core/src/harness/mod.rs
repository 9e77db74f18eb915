//! Experiment orchestration: spin-up, truth, observations, the initial
//! estimate, the filter loop, twin runs and parameter sweeps.

mod config;
pub mod validate;

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    apply_override, AssimilationSection, CutoffSetting, ExperimentConfig, FilterSection, GridSection, InitSection,
    NoiseModelName, NoiseSection, OutputSection, SolverSection, SweepAxis,
};

use crate::diagnostics::{error_series, lower_bound_with, write_csv, ExperimentResult, Summary};
use crate::error::{Error, Result};
use crate::filter::{make_gain, GainOperator};
use crate::nse::{steady_state, Solver};
use crate::obs::{generate_truth, observe, spin_up, ObservationRecord};
use crate::spectral::{SpectralField, SpectralGrid, Wavevector};

/// RNG stream of the truth initial condition (noise uses streams `1..=J`).
const TRUTH_STREAM: u64 = u64::MAX;
/// RNG stream of the initial-estimate draw.
const ESTIMATE_STREAM: u64 = u64::MAX - 1;
/// Admissible range of `|U_hat_0 - U_0| / |U_0|`.
pub const INITIAL_RATIO_RANGE: (f64, f64) = (0.1, 10.0);

/// Complex Gaussian field with `E|u_k|^2 = variance(k)`, reality-constrained.
pub fn gaussian_draw(grid: &SpectralGrid, seed: u64, stream: u64, variance: impl Fn(Wavevector) -> f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut u = SpectralField::zeros(*grid);
    let half: Vec<Wavevector> = grid.half_lattice().map(|(_, k)| k).collect();
    for k in half {
        let s = (0.5 * variance(k)).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        u.set_pair(k, Complex64::new(re * s, im * s)).expect("half lattice is retained");
    }
    u
}

/// Spin-up starting point: the steady state plus a broadband perturbation
/// carrying a tenth of its energy.
pub fn truth_initial_condition(cfg: &ExperimentConfig) -> Result<SpectralField> {
    let solver = cfg.solver_config()?;
    let grid = solver.grid;
    let base = steady_state(&solver)?;
    let shape = |k: Wavevector| 1.0 / (k.norm_sq() as f64).powi(2);
    let total: f64 = grid.retained().map(|(_, k)| shape(k)).sum();
    let target = 0.1 * base.energy();
    let pert = gaussian_draw(&grid, cfg.noise.seed, TRUTH_STREAM, |k| target * shape(k) / total);
    Ok(&base + &pert)
}

/// A spun-up truth trajectory `u_0, ..., u_J`, reusable by every experiment
/// that agrees on grid, solver, assimilation, spin-up and seed settings.
#[derive(Clone, Debug)]
pub struct TruthRun {
    key: TruthKey,
    pub spin_elapsed: f64,
    pub spin_converged: bool,
    pub trajectory: Vec<SpectralField>,
}

#[derive(Clone, Debug, PartialEq)]
struct TruthKey {
    grid: GridSection,
    solver: SolverSection,
    assimilation: AssimilationSection,
    t_spin: f64,
    spin_window: usize,
    seed: u64,
}

impl TruthKey {
    fn of(cfg: &ExperimentConfig) -> Self {
        TruthKey {
            grid: cfg.grid.clone(),
            solver: cfg.solver.clone(),
            assimilation: cfg.assimilation.clone(),
            t_spin: cfg.init.t_spin,
            spin_window: cfg.init.spin_window,
            seed: cfg.noise.seed,
        }
    }
}

impl TruthRun {
    pub fn is_compatible(&self, cfg: &ExperimentConfig) -> bool {
        self.key == TruthKey::of(cfg)
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.trajectory[0].grid()
    }
}

fn with_context(e: Error, what: &str) -> Error {
    match e {
        Error::Blowup { step, reason } => Error::Blowup {
            step,
            reason: format!("{what}: {reason}"),
        },
        other => other,
    }
}

/// Spin-up and truth generation.
pub fn prepare_truth(cfg: &ExperimentConfig) -> Result<TruthRun> {
    cfg.validate()?;
    let mut solver = Solver::new(cfg.solver_config()?)?;
    let start = truth_initial_condition(cfg)?;
    let spin = spin_up(&start, &mut solver, cfg.init.t_spin, cfg.init.spin_window).map_err(|e| with_context(e, "spin-up"))?;
    if !spin.converged {
        log::warn!("spin-up did not reach the stationarity criterion after t = {}", spin.elapsed);
    }
    let trajectory = generate_truth(&spin.state, &mut solver, cfg.assimilation.h_substeps, cfg.assimilation.steps)
        .map_err(|e| with_context(e, "truth generation"))?;
    Ok(TruthRun {
        key: TruthKey::of(cfg),
        spin_elapsed: spin.elapsed,
        spin_converged: spin.converged,
        trajectory,
    })
}

/// Observations `y_1..y_J` (index 0 holds `None`).
pub fn make_observations(cfg: &ExperimentConfig, truth: &TruthRun) -> Result<Vec<Option<ObservationRecord>>> {
    let cutoff = cfg.cutoff()?;
    let noise = cfg.noise_model()?;
    Ok(truth
        .trajectory
        .iter()
        .enumerate()
        .map(|(j, u)| (j > 0).then(|| observe(u, cutoff, &noise, j as u64)))
        .collect())
}

/// Initial estimate `U_hat_0 ~ N(0, kappa A0^(2 alpha))` and the realized
/// `(kappa, |U_hat_0 - U_0| / |U_0|)`.
pub fn initial_estimate(cfg: &ExperimentConfig, u0: &SpectralField, seed: u64) -> Result<(SpectralField, f64, f64)> {
    let grid = *u0.grid();
    let p = cfg.filter_params()?;
    let shape = |k: Wavevector| p.a0_eigenvalue(k, &grid).powf(2.0 * p.alpha);
    let kappa = match cfg.init.kappa {
        Some(k) => k,
        None => {
            let total: f64 = grid.retained().map(|(_, k)| shape(k)).sum();
            cfg.norm_target().powi(2) * u0.energy() / total
        }
    };
    let draw = gaussian_draw(&grid, seed, ESTIMATE_STREAM, |k| kappa * shape(k));
    let norm = u0.energy().sqrt();
    let ratio = (&draw - u0).energy().sqrt() / norm;
    let (lo, hi) = INITIAL_RATIO_RANGE;
    if !(ratio >= lo && ratio <= hi) {
        return Err(Error::config(format!(
            "initial estimate error ratio {ratio:.3} outside [{lo}, {hi}] (kappa = {kappa:e})"
        )));
    }
    Ok((draw, kappa, ratio))
}

/// Runs the filter from `u_hat_0`, returning `u_hat_0, ..., u_hat_J`.
pub fn run_filter(
    u_hat0: &SpectralField,
    observations: &[Option<ObservationRecord>],
    gain: &GainOperator,
    solver: &mut Solver,
    h_substeps: u64,
) -> Result<Vec<SpectralField>> {
    let mut out = Vec::with_capacity(observations.len());
    out.push(u_hat0.clone());
    let mut u = u_hat0.clone();
    for (j, y) in observations.iter().enumerate().skip(1) {
        let y = y
            .as_ref()
            .ok_or_else(|| Error::domain(format!("missing observation at step {j}")))?;
        solver
            .evolve_in_place(&mut u, h_substeps)
            .map_err(|e| with_context(e, &format!("filter forecast to step {j}")))?;
        u = gain.combine(&u, &y.data);
        out.push(u.clone());
    }
    Ok(out)
}

fn check_truth(cfg: &ExperimentConfig, truth: &TruthRun) -> Result<()> {
    if truth.is_compatible(cfg) {
        Ok(())
    } else {
        Err(Error::config("truth run was generated with different grid/solver/assimilation/seed settings"))
    }
}

fn filter_estimates(cfg: &ExperimentConfig, truth: &TruthRun, obs: &[Option<ObservationRecord>], seed: u64) -> Result<(Vec<SpectralField>, f64, f64)> {
    let gain = make_gain(&cfg.filter_params()?, truth.grid())?;
    let (u_hat0, kappa, ratio) = initial_estimate(cfg, &truth.trajectory[0], seed)?;
    let mut solver = Solver::new(cfg.solver_config()?)?;
    let est = run_filter(&u_hat0, obs, &gain, &mut solver, cfg.assimilation.h_substeps)?;
    Ok((est, kappa, ratio))
}

/// Full experiment against a precomputed truth.
pub fn run_with_truth(cfg: &ExperimentConfig, truth: &TruthRun) -> Result<ExperimentResult> {
    check_truth(cfg, truth)?;
    let obs = make_observations(cfg, truth)?;
    let (est, kappa, ratio) = filter_estimates(cfg, truth, &obs, cfg.estimate_seed())?;
    build_result(cfg, truth, &obs, &est, kappa, ratio)
}

fn build_result(
    cfg: &ExperimentConfig,
    truth: &TruthRun,
    obs: &[Option<ObservationRecord>],
    est: &[SpectralField],
    kappa: f64,
    ratio: f64,
) -> Result<ExperimentResult> {
    let grid = *truth.grid();
    let params = cfg.filter_params()?;
    let gain = make_gain(&params, &grid)?;
    let series = error_series(
        &truth.trajectory,
        est,
        obs,
        &gain,
        &params,
        cfg.observation_interval(),
        &cfg.traced_modes()?,
    )?;
    let mut result = ExperimentResult::new(cfg.to_json(), series);
    let meta = &mut result.metadata;
    meta.insert("spin_up_time".into(), truth.spin_elapsed.into());
    meta.insert("spin_up_converged".into(), truth.spin_converged.into());
    meta.insert("kappa".into(), kappa.into());
    meta.insert("initial_error_ratio".into(), ratio.into());
    meta.insert("truth_energy_initial".into(), truth.trajectory[0].energy().into());
    let tr_gamma: f64 = grid
        .retained()
        .filter(|(_, k)| params.cutoff.observes(*k))
        .map(|(_, k)| params.gamma_k(k, &grid))
        .sum();
    meta.insert("trace_gamma".into(), tr_gamma.into());
    meta.insert(
        "lower_bound".into(),
        lower_bound_with(&gain, params.cutoff, |k| params.gamma_k(k, &grid)).into(),
    );
    log::info!("initial estimate: kappa = {kappa:e}, |U_hat_0 - U_0| / |U_0| = {ratio:.3}");
    Ok(result)
}

/// Spin-up, truth, observations, initial draw and `J` assimilation cycles.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let truth = prepare_truth(cfg)?;
    run_with_truth(cfg, &truth)
}

/// Two filters on the same observations, the second started from a draw
/// with `second_seed`. The result carries `|u_hat_j - w_hat_j|^2`.
pub fn run_twin_with_truth(cfg: &ExperimentConfig, truth: &TruthRun, second_seed: u64) -> Result<ExperimentResult> {
    check_truth(cfg, truth)?;
    let obs = make_observations(cfg, truth)?;
    let (est, kappa, ratio) = filter_estimates(cfg, truth, &obs, cfg.estimate_seed())?;
    let (twin, _, twin_ratio) = filter_estimates(cfg, truth, &obs, second_seed)?;
    let mut result = build_result(cfg, truth, &obs, &est, kappa, ratio)?;
    result.series.attach_twin(&twin, &est)?;
    result.summary = Summary::from_series(&result.series);
    result.metadata.insert("twin_seed".into(), second_seed.into());
    result.metadata.insert("twin_initial_error_ratio".into(), twin_ratio.into());
    Ok(result)
}

pub fn run_twin(cfg: &ExperimentConfig, second_seed: u64) -> Result<ExperimentResult> {
    let truth = prepare_truth(cfg)?;
    run_twin_with_truth(cfg, &truth, second_seed)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub outcome: std::result::Result<Summary, String>,
}

/// Seed of sweep member `index`.
pub fn sweep_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Independent experiments with `axis` set to each value, run in parallel.
/// Member `i` uses seed `base + i`. Failures are recorded, not propagated.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Vec<SweepEntry> {
    let mut entries: Vec<SweepEntry> = values
        .par_iter()
        .enumerate()
        .map(|(index, &value)| {
            let seed = sweep_seed(base.noise.seed, index);
            let outcome = axis
                .apply(base, value)
                .and_then(|mut cfg| {
                    cfg.noise.seed = seed;
                    cfg.init.estimate_seed = base.init.estimate_seed.map(|s| sweep_seed(s, index));
                    run_experiment(&cfg)
                })
                .map(|r| r.summary)
                .map_err(|e| e.to_string());
            SweepEntry {
                index,
                value,
                seed,
                outcome,
            }
        })
        .collect();
    entries.sort_by_key(|e| e.index);
    entries
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

/// One row per sweep member.
pub fn write_sweep_csv<W: std::io::Write>(mut w: W, axis: SweepAxis, entries: &[SweepEntry]) -> Result<()> {
    writeln!(
        w,
        "index,{},seed,status,plateau_median,plateau_median_h1,plateau_lower,plateau_upper,fraction_below_upper,first_below_upper,fitted_rate,max_err_h0",
        axis.name()
    )?;
    for e in entries {
        match &e.outcome {
            Ok(s) => writeln!(
                w,
                "{},{:.16e},{},ok,{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
                e.index,
                e.value,
                e.seed,
                s.plateau_median,
                s.plateau_median_h1,
                s.plateau_lower,
                s.plateau_upper,
                s.fraction_below_upper,
                s.first_below_upper.map(|j| j.to_string()).unwrap_or_default(),
                opt(s.fitted_rate),
                s.max_err_h0
            )?,
            Err(msg) => writeln!(w, "{},{:.16e},{},\"error: {}\",,,,,,,,", e.index, e.value, e.seed, msg.replace('"', "'"))?,
        }
    }
    Ok(())
}

/// Writes the series CSV and summary JSON named in `cfg.outputs` under `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv = std::fs::File::create(dir.join(&cfg.outputs.csv))?;
    write_csv(std::io::BufWriter::new(csv), &result.series)?;
    let json = serde_json::to_string_pretty(&result.summary_json())?;
    std::fs::write(dir.join(&cfg.outputs.json), json + "\n")?;
    Ok(())
}

/// Metadata map for truth-only runs.
pub fn truth_metadata(truth: &TruthRun) -> BTreeMap<String, serde_json::Value> {
    let mut m = BTreeMap::new();
    m.insert("spin_up_time".into(), truth.spin_elapsed.into());
    m.insert("spin_up_converged".into(), truth.spin_converged.into());
    m
}
