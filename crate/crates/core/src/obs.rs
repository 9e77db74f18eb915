//! Truth trajectories and noisy spectral observations `y_j = P_lambda u_j + xi_j`.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nse::Solver;
use crate::spectral::{
    project_high, project_low, read_coeff_lines, ProjectionCutoff, SpectralField, SpectralGrid,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// `E|xi_k|^2 = sigma^2` for every observed wavevector.
    Gaussian { sigma: f64 },
    /// `|xi| <= epsilon` pathwise.
    BoundedUniform { epsilon: f64 },
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::Gaussian { sigma },
            seed,
        }
    }

    pub fn bounded(epsilon: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::BoundedUniform { epsilon },
            seed,
        }
    }

    pub fn none() -> Self {
        NoiseModel {
            kind: NoiseKind::None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::Gaussian { sigma: s } | NoiseKind::BoundedUniform { epsilon: s }
                if !(s >= 0.0 && s.is_finite()) =>
            {
                Err(Error::domain(format!("noise scale must be finite and >= 0, got {s}")))
            }
            _ => Ok(()),
        }
    }

    /// Noise scale: `sigma`, `epsilon` or zero.
    pub fn scale(&self) -> f64 {
        match self.kind {
            NoiseKind::Gaussian { sigma } => sigma,
            NoiseKind::BoundedUniform { epsilon } => epsilon,
            NoiseKind::None => 0.0,
        }
    }

    /// Draws `xi_j` on `W_lambda`. The stream is keyed by `(seed, j)` and
    /// modes are visited in storage order, so any record can be regenerated
    /// on its own.
    pub fn sample(&self, grid: &SpectralGrid, cutoff: ProjectionCutoff, j: u64) -> SpectralField {
        let mut xi = SpectralField::zeros(*grid);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(j);
        let half: Vec<_> = grid.half_lattice().filter(|(_, k)| cutoff.observes(*k)).collect();
        match self.kind {
            NoiseKind::None => {}
            NoiseKind::Gaussian { sigma } => {
                let s = sigma / std::f64::consts::SQRT_2;
                for (_, k) in half {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    xi.set_pair(k, Complex64::new(re * s, im * s))
                        .expect("half lattice is retained");
                }
            }
            NoiseKind::BoundedUniform { epsilon } => {
                for &(_, k) in &half {
                    let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    xi.set_pair(k, v).expect("half lattice is retained");
                }
                let norm = xi.energy().sqrt();
                // radius uniform on (0, epsilon]
                let radius = epsilon * (1.0 - rng.random::<f64>());
                if norm > 0.0 {
                    xi = xi.scale(radius / norm);
                }
            }
        }
        xi
    }
}

/// Observation `y_j` on `W_lambda`, zero-extended to the full lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationRecord {
    pub step: u64,
    pub data: SpectralField,
    pub cutoff: ProjectionCutoff,
}

/// `y_j = P_lambda u + xi_j`.
pub fn observe(u: &SpectralField, cutoff: ProjectionCutoff, noise: &NoiseModel, j: u64) -> ObservationRecord {
    let xi = noise.sample(u.grid(), cutoff, j);
    let data = &project_low(u, cutoff) + &xi;
    ObservationRecord { step: j, data, cutoff }
}

impl ObservationRecord {
    /// Support and reality invariants; returns the largest violation.
    pub fn invariant_defect(&self) -> f64 {
        project_high(&self.data, self.cutoff).max_abs().max(self.data.reality_defect())
    }
}

/// Result of [`spin_up`]: final state plus the sampled energy record.
#[derive(Clone, Debug)]
pub struct SpinUp {
    pub state: SpectralField,
    /// `(t, |u(t)|^2)` sampled once per unit time.
    pub energy: Vec<(f64, f64)>,
    pub elapsed: f64,
    pub converged: bool,
}

/// Relative drift tolerated between the last two window means.
pub const SPIN_UP_DRIFT: f64 = 0.05;

/// Evolves for `t_spin`, then keeps going until the means of `E = |u|^2` over
/// the last two windows of `window` unit-time samples agree to within 5%.
/// Gives up at `4 t_spin` and reports `converged = false`.
pub fn spin_up(u_init: &SpectralField, solver: &mut Solver, t_spin: f64, window: usize) -> Result<SpinUp> {
    if !(t_spin > 0.0) {
        return Err(Error::domain(format!("spin-up time must be positive, got {t_spin}")));
    }
    if window == 0 {
        return Err(Error::domain("spin-up window must be at least one sample"));
    }
    let dt = solver.config().dt;
    let per_sample = (1.0 / dt).round().max(1.0) as u64;
    let sample_dt = per_sample as f64 * dt;
    let min_samples = (t_spin / sample_dt).ceil() as usize;
    let max_samples = (4.0 * t_spin / sample_dt).ceil() as usize;

    let mut u = u_init.clone();
    let mut energy = vec![(0.0, u.energy())];
    let mut converged = false;
    for s in 1..=max_samples {
        solver.evolve_in_place(&mut u, per_sample)?;
        energy.push((s as f64 * sample_dt, u.energy()));
        if s >= min_samples && s >= 2 * window && stationary(&energy, window) {
            converged = true;
            break;
        }
    }
    let elapsed = energy.last().map(|e| e.0).unwrap_or(0.0);
    Ok(SpinUp {
        state: u,
        energy,
        elapsed,
        converged,
    })
}

fn stationary(energy: &[(f64, f64)], window: usize) -> bool {
    let n = energy.len();
    let mean = |s: &[(f64, f64)]| s.iter().map(|e| e.1).sum::<f64>() / s.len() as f64;
    let recent = mean(&energy[n - window..]);
    let before = mean(&energy[n - 2 * window..n - window]);
    if recent == 0.0 && before == 0.0 {
        return true;
    }
    (recent - before).abs() <= SPIN_UP_DRIFT * before.abs().max(recent.abs())
}

/// `u_0, ..., u_J` with `u_j = Psi(u_{j-1})` over `h_substeps` steps.
pub fn generate_truth(u0: &SpectralField, solver: &mut Solver, h_substeps: u64, n_obs: usize) -> Result<Vec<SpectralField>> {
    if n_obs == 0 {
        return Err(Error::domain("need at least one assimilation step"));
    }
    let mut out = Vec::with_capacity(n_obs + 1);
    out.push(u0.clone());
    let mut u = u0.clone();
    for _ in 0..n_obs {
        solver.evolve_in_place(&mut u, h_substeps)?;
        out.push(u.clone());
    }
    Ok(out)
}

const OBSSEQ_TAG: &str = "OBSSEQ v1";

/// Writes `OBSSEQ v1` followed by one `RECORD` block per observation, each
/// listing `k1 k2 re im` for the retained wavevectors of `W_lambda`.
pub fn write_observations<W: Write>(mut w: W, records: &[ObservationRecord], noise: &NoiseModel) -> Result<()> {
    let first = records.first().ok_or_else(|| Error::domain("no observations to write"))?;
    let grid = *first.data.grid();
    let cutoff = first.cutoff;
    let lambda = match cutoff {
        ProjectionCutoff::Complete => "complete".to_string(),
        ProjectionCutoff::Finite { .. } => format!("{:.17e}", cutoff.lambda(&grid)),
    };
    writeln!(
        w,
        "{OBSSEQ_TAG} n_modes={} L={:.17e} lambda={lambda} sigma={:.17e} seed={} J={}",
        grid.n_modes,
        grid.domain_length,
        noise.scale(),
        noise.seed,
        records.len()
    )?;
    for r in records {
        if r.cutoff != cutoff || *r.data.grid() != grid {
            return Err(Error::domain("observation records disagree on grid or cutoff"));
        }
        let count = grid.retained().filter(|(_, k)| cutoff.observes(*k)).count();
        writeln!(w, "RECORD j={} count={count}", r.step)?;
        r.data
            .write_coeff_lines(&mut w, |k| grid.is_retained(k) && cutoff.observes(k))?;
    }
    Ok(())
}

/// Header fields of an observation-sequence file.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationHeader {
    pub n_modes: usize,
    pub domain_length: f64,
    pub cutoff_lambda: Option<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub count: usize,
}

pub fn read_observations<R: BufRead>(r: R, grid: &SpectralGrid) -> Result<(ObservationHeader, Vec<ObservationRecord>)> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty observation file".into(),
    })?;
    let header = header?;
    let header = parse_header(&header)?;
    if header.n_modes != grid.n_modes || header.domain_length != grid.domain_length {
        return Err(Error::GridMismatch(format!(
            "observation file has n_modes={} L={}",
            header.n_modes, header.domain_length
        )));
    }
    let cutoff = match header.cutoff_lambda {
        None => ProjectionCutoff::Complete,
        Some(lambda) => {
            // recover the exact integer ratio written from an integer multiple of lambda_1
            let ratio = lambda / grid.lambda1();
            let rounded = ratio.round();
            let ratio = if (ratio - rounded).abs() <= 1e-9 * ratio { rounded } else { ratio };
            ProjectionCutoff::from_ratio(ratio)?
        }
    };
    let mut records = Vec::with_capacity(header.count);
    while let Some((lineno, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: lineno,
            msg: msg.to_string(),
        };
        let rest = line.strip_prefix("RECORD ").ok_or_else(|| bad("expected RECORD line"))?;
        let mut step = None;
        let mut count = None;
        for tok in rest.split_whitespace() {
            match tok.split_once('=') {
                Some(("j", v)) => step = v.parse::<u64>().ok(),
                Some(("count", v)) => count = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let (step, count) = step.zip(count).ok_or_else(|| bad("RECORD needs j and count"))?;
        let mut data = SpectralField::zeros(*grid);
        read_coeff_lines(&mut data, lines.by_ref().take(count), None)?;
        if project_high(&data, cutoff).max_abs() > 0.0 {
            return Err(bad("record has coefficients outside W_lambda"));
        }
        records.push(ObservationRecord { step, data, cutoff });
    }
    if records.len() != header.count {
        return Err(Error::LengthMismatch {
            expected: header.count,
            got: records.len(),
        });
    }
    Ok((header, records))
}

fn parse_header(line: &str) -> Result<ObservationHeader> {
    let bad = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let rest = line
        .strip_prefix(OBSSEQ_TAG)
        .ok_or_else(|| bad("expected `OBSSEQ v1` header"))?;
    let mut n = None;
    let mut l = None;
    let mut lambda = None;
    let mut sigma = None;
    let mut seed = None;
    let mut count = None;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("n_modes", v)) => n = v.parse::<usize>().ok(),
            Some(("L", v)) => l = v.parse::<f64>().ok(),
            Some(("lambda", "complete")) => lambda = Some(None),
            Some(("lambda", v)) => lambda = v.parse::<f64>().ok().map(Some),
            Some(("sigma", v)) => sigma = v.parse::<f64>().ok(),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            Some(("J", v)) => count = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    Ok(ObservationHeader {
        n_modes: n.ok_or_else(|| bad("missing n_modes"))?,
        domain_length: l.ok_or_else(|| bad("missing L"))?,
        cutoff_lambda: lambda.ok_or_else(|| bad("missing lambda"))?,
        sigma: sigma.ok_or_else(|| bad("missing sigma"))?,
        seed: seed.ok_or_else(|| bad("missing seed"))?,
        count: count.ok_or_else(|| bad("missing J"))?,
    })
}
