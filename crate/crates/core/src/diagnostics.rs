//! Error series, accuracy bounds, spectra and tabular output.
//!
//! The two comparators for the filter error `|u_hat_j - u_j|^2` are
//!
//! - the lower bound `tr((I - B) Gamma (I - B)*)`, which any filter of the
//!   form `B Psi(u) + (I - B) y` incurs on average from the noise alone;
//! - the upper bound `tr(Gamma) + |Q_lambda u_j|^2`, the error of simply
//!   taking the observations as the estimate.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterParams, GainOperator};
use crate::obs::ObservationRecord;
use crate::spectral::{project_high, sobolev_norm_sq, ProjectionCutoff, SpectralField, SpectralGrid, Wavevector};

/// `tr(Gamma)` for white noise: `sigma^2` times the number of observed
/// retained wavevectors (`k` and `-k` counted separately).
pub fn trace_gamma(grid: &SpectralGrid, sigma: f64, cutoff: ProjectionCutoff) -> f64 {
    let m = grid.retained().filter(|(_, k)| cutoff.observes(*k)).count();
    sigma * sigma * m as f64
}

/// `sum_{k in W_lambda} (1 - b_k)^2 sigma^2`.
pub fn lower_bound(gain: &GainOperator, sigma: f64, cutoff: ProjectionCutoff) -> f64 {
    lower_bound_with(gain, cutoff, |_| sigma * sigma)
}

/// Lower bound for a general diagonal `Gamma`.
pub fn lower_bound_with(gain: &GainOperator, cutoff: ProjectionCutoff, gamma: impl Fn(Wavevector) -> f64) -> f64 {
    let grid = *gain.grid();
    grid.retained()
        .filter(|(_, k)| cutoff.observes(*k))
        .map(|(i, k)| {
            let r = 1.0 - gain.diagonal()[i];
            r * r * gamma(k)
        })
        .sum()
}

/// `tr(Gamma) + |Q_lambda u_j|^2` (the second term vanishes for complete
/// observations).
pub fn upper_bound(truth_j: &SpectralField, sigma: f64, cutoff: ProjectionCutoff) -> f64 {
    let tr = trace_gamma(truth_j.grid(), sigma, cutoff);
    match cutoff {
        ProjectionCutoff::Complete => tr,
        _ => tr + project_high(truth_j, cutoff).energy(),
    }
}

/// Shell energies `sum_{|k|^2 = s} |u_k|^2`, keyed by `s`.
pub fn energy_spectrum(u: &SpectralField) -> BTreeMap<i64, f64> {
    let mut shells = BTreeMap::new();
    for (i, k) in u.grid().retained() {
        let e = u.coeffs()[i].norm_sqr();
        if e > 0.0 {
            *shells.entry(k.norm_sq()).or_insert(0.0) += e;
        }
    }
    shells
}

/// Values of `u_hat_k`, `u_k` and `y_k` at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeTrace {
    pub k: Wavevector,
    pub hat: [f64; 2],
    pub truth: [f64; 2],
    /// `None` before the first observation.
    pub obs: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub j: usize,
    pub t: f64,
    pub err_h0: f64,
    pub err_h1: f64,
    pub lower: f64,
    pub upper: f64,
    pub energy: f64,
    pub twin_err: Option<f64>,
    pub modes: Vec<ModeTrace>,
}

/// Per-step diagnostics, `j = 0` being the initial estimate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub rows: Vec<StepRecord>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn err_h0(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_h0).collect()
    }

    pub fn err_h1(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_h1).collect()
    }

    pub fn twin(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.twin_err).collect()
    }

    /// Attaches `|u_hat_j - w_hat_j|^2` for a second filter.
    pub fn attach_twin(&mut self, other: &[SpectralField], estimates: &[SpectralField]) -> Result<()> {
        if other.len() != self.rows.len() || estimates.len() != self.rows.len() {
            return Err(Error::LengthMismatch {
                expected: self.rows.len(),
                got: other.len().min(estimates.len()),
            });
        }
        for ((row, a), b) in self.rows.iter_mut().zip(estimates).zip(other) {
            row.twin_err = Some((a - b).energy());
        }
        Ok(())
    }
}

/// Builds the per-step series. `observations[j]` pairs with step `j`;
/// pass `None` where no observation exists (the initial step).
pub fn error_series(
    truth: &[SpectralField],
    estimates: &[SpectralField],
    observations: &[Option<ObservationRecord>],
    gain: &GainOperator,
    params: &FilterParams,
    step_time: f64,
    traced: &[Wavevector],
) -> Result<ErrorSeries> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    if observations.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: observations.len(),
        });
    }
    let grid = *gain.grid();
    for k in traced {
        if !grid.is_retained(*k) {
            return Err(Error::domain(format!("traced mode {k} is not retained")));
        }
    }
    let lower = lower_bound_with(gain, params.cutoff, |k| params.gamma_k(k, &grid));
    let tr_gamma: f64 = grid
        .retained()
        .filter(|(_, k)| params.cutoff.observes(*k))
        .map(|(_, k)| params.gamma_k(k, &grid))
        .sum();
    let rows = truth
        .iter()
        .zip(estimates)
        .zip(observations)
        .enumerate()
        .map(|(j, ((u, est), obs))| {
            let diff = est - u;
            let upper = match params.cutoff {
                ProjectionCutoff::Complete => tr_gamma,
                cut => tr_gamma + project_high(u, cut).energy(),
            };
            let c = |z: num_complex::Complex64| [z.re, z.im];
            StepRecord {
                j,
                t: j as f64 * step_time,
                err_h0: diff.energy(),
                err_h1: sobolev_norm_sq(&diff, 1.0),
                lower,
                upper,
                energy: u.energy(),
                twin_err: None,
                modes: traced
                    .iter()
                    .map(|&k| ModeTrace {
                        k,
                        hat: c(est.get(k)),
                        truth: c(u.get(k)),
                        obs: obs.as_ref().map(|y| c(y.data.get(k))),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(ErrorSeries { rows })
}

/// Summary statistics, recomputable from an [`ErrorSeries`] alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Median of `err_h0` over the final third of the steps `j >= 1`.
    pub plateau_median: f64,
    pub plateau_median_h1: f64,
    /// Median of the lower bound over the same window.
    pub plateau_lower: f64,
    pub plateau_upper: f64,
    /// Fraction of steps `j >= 1` with `err_h0` below the upper bound.
    pub fraction_below_upper: f64,
    /// First `j >= 1` with `err_h0` below the upper bound.
    pub first_below_upper: Option<usize>,
    /// Geometric contraction rate of the twin gap `|u_hat_j - w_hat_j|`.
    pub fitted_rate: Option<f64>,
    pub max_err_h0: f64,
}

/// Median; `NaN` for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Gap threshold below which twin gaps are excluded from the rate fit.
pub const TWIN_FIT_FLOOR: f64 = 1e-12;

/// `exp` of the least-squares slope of `ln gap_j` against `j`, over steps
/// with `gap_j > 1e-12`. Needs at least two usable points.
pub fn fit_geometric_rate(gaps: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > TWIN_FIT_FLOOR && g.is_finite())
        .map(|(j, g)| (j as f64, g.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some((sxy / sxx).exp())
}

impl Summary {
    pub fn from_series(series: &ErrorSeries) -> Summary {
        let steps: Vec<&StepRecord> = series.rows.iter().filter(|r| r.j >= 1).collect();
        let start = steps.len() - steps.len() / 3;
        let tail = &steps[start.min(steps.len())..];
        let pick = |f: fn(&StepRecord) -> f64| median(&tail.iter().map(|r| f(r)).collect::<Vec<_>>());
        let below = steps.iter().filter(|r| r.err_h0 < r.upper).count();
        let fitted_rate = series
            .twin()
            .and_then(|g| fit_geometric_rate(&g.iter().map(|x| x.sqrt()).collect::<Vec<_>>()));
        Summary {
            plateau_median: pick(|r| r.err_h0),
            plateau_median_h1: pick(|r| r.err_h1),
            plateau_lower: pick(|r| r.lower),
            plateau_upper: pick(|r| r.upper),
            fraction_below_upper: if steps.is_empty() { f64::NAN } else { below as f64 / steps.len() as f64 },
            first_below_upper: steps.iter().find(|r| r.err_h0 < r.upper).map(|r| r.j),
            fitted_rate,
            max_err_h0: steps.iter().map(|r| r.err_h0).fold(0.0, f64::max),
        }
    }
}

/// Everything an experiment produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: serde_json::Value,
    pub series: ErrorSeries,
    pub summary: Summary,
    /// Run facts that are not configuration (spin-up length, realized
    /// initial-error ratio, ...).
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ExperimentResult {
    pub fn new(config: serde_json::Value, series: ErrorSeries) -> Self {
        let summary = Summary::from_series(&series);
        ExperimentResult {
            config,
            series,
            summary,
            metadata: BTreeMap::new(),
        }
    }

    /// JSON object with the config echo, summary and metadata (no series).
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "summary": self.summary,
            "metadata": self.metadata,
        })
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with one row per step: `j,t,err_h0,err_h1,lower,upper,energy`, then
/// `twin_err` when present, then `mode_<k1>_<k2>_{re,im}_{hat,true,obs}` per
/// traced mode. Floats carry 17 significant digits.
pub fn write_csv<W: Write>(mut w: W, series: &ErrorSeries) -> Result<()> {
    let has_twin = series.rows.iter().any(|r| r.twin_err.is_some());
    let modes: Vec<Wavevector> = series
        .rows
        .first()
        .map(|r| r.modes.iter().map(|m| m.k).collect())
        .unwrap_or_default();
    let mut header = vec!["j", "t", "err_h0", "err_h1", "lower", "upper", "energy"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    if has_twin {
        header.push("twin_err".into());
    }
    for k in &modes {
        for what in ["hat", "true", "obs"] {
            for part in ["re", "im"] {
                header.push(format!("mode_{}_{}_{part}_{what}", k.k1, k.k2));
            }
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for r in &series.rows {
        let mut cols = vec![
            r.j.to_string(),
            fmt17(r.t),
            fmt17(r.err_h0),
            fmt17(r.err_h1),
            fmt17(r.lower),
            fmt17(r.upper),
            fmt17(r.energy),
        ];
        if has_twin {
            cols.push(r.twin_err.map(fmt17).unwrap_or_default());
        }
        for m in &r.modes {
            cols.extend(m.hat.iter().map(|x| fmt17(*x)));
            cols.extend(m.truth.iter().map(|x| fmt17(*x)));
            match m.obs {
                Some(o) => cols.extend(o.iter().map(|x| fmt17(*x))),
                None => cols.extend([String::new(), String::new()]),
            }
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::make_gain;
    use num_complex::Complex64;

    #[test]
    fn bounds_for_trivial_gains() {
        let g = SpectralGrid::default();
        let sigma = 0.04;
        let zero = GainOperator::constant(g, 0.0).unwrap();
        let m = g.n_retained() as f64;
        assert!((lower_bound(&zero, sigma, ProjectionCutoff::Complete) - m * sigma * sigma).abs() < 1e-12);
        let id = GainOperator::constant(g, 1.0).unwrap();
        assert_eq!(lower_bound(&id, sigma, ProjectionCutoff::Complete), 0.0);
    }

    #[test]
    fn lower_bound_by_enumeration() {
        let g = SpectralGrid::default();
        let (eta, sigma) = (0.04, 0.04);
        let cut = ProjectionCutoff::from_ratio(4.0).unwrap();
        let p = FilterParams::new(eta, 1.0, cut, sigma, &g);
        let gain = make_gain(&p, &g).unwrap();
        // W_lambda for lambda = 4 lambda_1: |k|^2 in {1, 2}, i.e. 4 + 4 wavevectors
        let mut oracle = 0.0;
        for k1 in -3i32..=3 {
            for k2 in -3i32..=3 {
                let n2 = (k1 * k1 + k2 * k2) as f64;
                if n2 == 0.0 || n2 >= 4.0 {
                    continue;
                }
                let b = eta * eta * n2 * n2 / (1.0 + eta * eta * n2 * n2);
                oracle += (1.0 - b) * (1.0 - b) * sigma * sigma;
            }
        }
        assert!((lower_bound(&gain, sigma, cut) - oracle).abs() < 1e-16);
        assert!((trace_gamma(&g, sigma, cut) - 8.0 * sigma * sigma).abs() < 1e-16);
    }

    #[test]
    fn upper_bound_cases() {
        let g = SpectralGrid::default();
        let sigma = 0.04;
        let mut u = SpectralField::zeros(g);
        u.set_pair(Wavevector::new(1, 0), Complex64::new(1.0, 0.0)).unwrap();
        let tr = g.n_retained() as f64 * sigma * sigma;
        assert!((upper_bound(&u, sigma, ProjectionCutoff::Complete) - tr).abs() < 1e-12);
        let cut = ProjectionCutoff::from_ratio(4.0).unwrap();
        assert!((upper_bound(&u, sigma, cut) - trace_gamma(&g, sigma, cut)).abs() < 1e-16);
        u.set_pair(Wavevector::new(3, 0), Complex64::new(0.5, 0.0)).unwrap();
        assert!((upper_bound(&u, sigma, cut) - trace_gamma(&g, sigma, cut) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bounds_coincide_as_eta_vanishes() {
        let g = SpectralGrid::default();
        let sigma = 0.04;
        let p = FilterParams::new(1e-6, 1.0, ProjectionCutoff::Complete, sigma, &g);
        let gain = make_gain(&p, &g).unwrap();
        let lo = lower_bound(&gain, sigma, ProjectionCutoff::Complete);
        let up = upper_bound(&SpectralField::zeros(g), sigma, ProjectionCutoff::Complete);
        assert!((up - lo).abs() <= 1e-6 * up);
        assert!(lo < up);
    }

    #[test]
    fn spectrum_shells() {
        let g = SpectralGrid::default();
        let mut u = SpectralField::zeros(g);
        u.set_pair(Wavevector::new(3, 4), Complex64::new(1.0, 2.0)).unwrap();
        let s = energy_spectrum(&u);
        assert_eq!(s.len(), 1);
        assert!((s[&25] - 10.0).abs() < 1e-14);
        u.set_pair(Wavevector::new(5, 0), Complex64::new(1.0, 0.0)).unwrap();
        u.set_pair(Wavevector::new(1, 1), Complex64::new(0.0, 0.1)).unwrap();
        let s = energy_spectrum(&u);
        assert_eq!(s.len(), 2);
        assert!((s.values().sum::<f64>() - u.energy()).abs() < 1e-14);
    }

    #[test]
    fn median_and_rate() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        let gaps: Vec<f64> = (0..30).map(|j| 2.0 * 0.7f64.powi(j)).collect();
        assert!((fit_geometric_rate(&gaps).unwrap() - 0.7).abs() < 1e-12);
        assert!(fit_geometric_rate(&[0.0; 10]).is_none());
    }

    #[test]
    fn csv_layout() {
        let g = SpectralGrid::default();
        let p = FilterParams::new(0.04, 1.0, ProjectionCutoff::Complete, 0.04, &g);
        let gain = make_gain(&p, &g).unwrap();
        let mut u = SpectralField::zeros(g);
        u.set_pair(Wavevector::new(5, 5), Complex64::new(0.1, 0.2)).unwrap();
        let truth = vec![u.clone(), u.clone()];
        let obs = vec![None, Some(ObservationRecord { step: 1, data: u.clone(), cutoff: ProjectionCutoff::Complete })];
        let modes = [Wavevector::new(5, 5), Wavevector::new(7, 7)];
        let mut series = error_series(&truth, &truth, &obs, &gain, &p, 0.5, &modes).unwrap();
        assert!(series.rows.iter().all(|r| r.err_h0 == 0.0 && r.err_h1 == 0.0));
        series.attach_twin(&truth, &truth).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &series).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("j,t,err_h0,err_h1,lower,upper,energy,twin_err,mode_5_5_re_hat,mode_5_5_im_hat,mode_5_5_re_true"));
        assert!(header.ends_with("mode_7_7_re_obs,mode_7_7_im_obs"));
        let row1: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
        assert_eq!(row1.len(), 8 + 12);
        assert_eq!(row1[1], "5.0000000000000000e-1");
        assert!(error_series(&truth, &truth[..1], &obs, &gain, &p, 0.5, &modes).is_err());
    }
}
