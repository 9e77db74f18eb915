//! Experiment configuration: a sectioned TOML file plus `section.key=value`
//! overrides. Every default is the baseline experiment, so an empty file is
//! a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::nse::{ForcingSpec, SolverConfig};
use crate::obs::{NoiseKind, NoiseModel};
use crate::spectral::{ProjectionCutoff, SpectralGrid, Wavevector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_modes: usize,
    pub domain_length: f64,
    pub pad_factor: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = SpectralGrid::default();
        GridSection {
            n_modes: g.n_modes,
            domain_length: g.domain_length,
            pad_factor: g.pad_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub nu: f64,
    pub dt: f64,
    pub forcing_k: [i32; 2],
    pub forcing_amplitude: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let f = ForcingSpec::default();
        SolverSection {
            nu: 0.01,
            dt: 0.005,
            forcing_k: [f.k_f.k1, f.k_f.k2],
            forcing_amplitude: f.amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssimilationSection {
    /// Solver steps per observation interval.
    pub h_substeps: u64,
    /// Number of assimilation cycles `J`.
    pub steps: usize,
}

impl Default for AssimilationSection {
    fn default() -> Self {
        AssimilationSection {
            h_substeps: 100,
            steps: 200,
        }
    }
}

/// `lambda / lambda_1`, or the string `"complete"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutoffSetting {
    Ratio(f64),
    Named(String),
}

impl CutoffSetting {
    pub fn resolve(&self) -> Result<ProjectionCutoff> {
        match self {
            CutoffSetting::Ratio(r) => ProjectionCutoff::from_ratio(*r),
            CutoffSetting::Named(s) if s.eq_ignore_ascii_case("complete") => Ok(ProjectionCutoff::Complete),
            CutoffSetting::Named(s) => Err(Error::config(format!(
                "filter.lambda_over_lambda1 must be a number or \"complete\", got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub eta: f64,
    pub alpha: f64,
    /// Length scale in `A0 = ell A`; defaults to `1 / lambda_1`.
    pub ell: Option<f64>,
    pub lambda_over_lambda1: CutoffSetting,
    /// Assumed observation noise level (`Gamma = sigma^2 I`).
    pub sigma: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            eta: 0.04,
            alpha: 1.0,
            ell: None,
            lambda_over_lambda1: CutoffSetting::Named("complete".into()),
            sigma: 0.04,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModelName {
    Gaussian,
    BoundedUniform,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub model: NoiseModelName,
    /// `sigma` (Gaussian) or `epsilon` (bounded); defaults to `filter.sigma`.
    pub scale: Option<f64>,
    /// Master seed for the truth, the noise and the initial estimate.
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            model: NoiseModelName::Gaussian,
            scale: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    /// Variance scale of the initial-estimate draw. `None` picks it so that
    /// `E|U_hat_0|^2 = norm_target^2 |U_0|^2`.
    pub kappa: Option<f64>,
    /// Ratio `|U_hat_0| / |U_0|` aimed for when `kappa` is unset. Defaults
    /// to 3 for `alpha > 0`. For `alpha <= 0` the draw concentrates on the
    /// most energetic modes and a 3x draw exceeds the explicit stability
    /// limit of the default step, so the default drops to 1.5.
    pub norm_target: Option<f64>,
    pub t_spin: f64,
    /// Samples (unit time each) per stationarity window.
    pub spin_window: usize,
    /// Seed of the initial-estimate draw; defaults to `noise.seed`.
    pub estimate_seed: Option<u64>,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            kappa: None,
            norm_target: None,
            t_spin: 50.0,
            spin_window: 10,
            estimate_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub csv: String,
    pub json: String,
    pub traced_modes: Vec<[i32; 2]>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            csv: "series.csv".into(),
            json: "summary.json".into(),
            traced_modes: vec![[5, 5], [7, 7]],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub solver: SolverSection,
    pub assimilation: AssimilationSection,
    pub filter: FilterSection,
    pub noise: NoiseSection,
    pub init: InitSection,
    pub outputs: OutputSection,
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

/// Applies one `section.key=value` override to a raw table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {assignment:?} is not of the form section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::config(format!("override key {path:?} is not of the form section.key")))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(Error::config(format!("{section} is not a section")));
    };
    sec.insert(key.to_string(), parse_value(value.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn spectral_grid(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(self.grid.n_modes, self.grid.domain_length, self.grid.pad_factor)
            .map_err(|e| Error::config(e.to_string()))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            nu: self.solver.nu,
            dt: self.solver.dt,
            forcing: ForcingSpec {
                k_f: Wavevector::new(self.solver.forcing_k[0], self.solver.forcing_k[1]),
                amplitude: self.solver.forcing_amplitude,
            },
            grid: self.spectral_grid()?,
        };
        cfg.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn cutoff(&self) -> Result<ProjectionCutoff> {
        self.filter
            .lambda_over_lambda1
            .resolve()
            .map_err(|e| Error::config(e.to_string()))
    }

    pub fn filter_params(&self) -> Result<FilterParams> {
        let grid = self.spectral_grid()?;
        let mut p = FilterParams::new(self.filter.eta, self.filter.alpha, self.cutoff()?, self.filter.sigma, &grid);
        if let Some(ell) = self.filter.ell {
            p.ell = ell;
        }
        p.validate(&grid).map_err(|e| Error::config(e.to_string()))?;
        Ok(p)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let scale = self.noise.scale.unwrap_or(self.filter.sigma);
        let kind = match self.noise.model {
            NoiseModelName::Gaussian => NoiseKind::Gaussian { sigma: scale },
            NoiseModelName::BoundedUniform => NoiseKind::BoundedUniform { epsilon: scale },
            NoiseModelName::None => NoiseKind::None,
        };
        let m = NoiseModel {
            kind,
            seed: self.noise.seed,
        };
        m.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(m)
    }

    pub fn traced_modes(&self) -> Result<Vec<Wavevector>> {
        let grid = self.spectral_grid()?;
        self.outputs
            .traced_modes
            .iter()
            .map(|&[a, b]| {
                let k = Wavevector::new(a, b);
                if grid.is_retained(k) {
                    Ok(k)
                } else {
                    Err(Error::config(format!("traced mode {k} is not a retained wavevector")))
                }
            })
            .collect()
    }

    pub fn norm_target(&self) -> f64 {
        self.init
            .norm_target
            .unwrap_or(if self.filter.alpha > 0.0 { 3.0 } else { 1.5 })
    }

    pub fn estimate_seed(&self) -> u64 {
        self.init.estimate_seed.unwrap_or(self.noise.seed)
    }

    /// Checks every derived object, reporting failures as config errors.
    pub fn validate(&self) -> Result<()> {
        self.solver_config()?;
        self.filter_params()?;
        self.noise_model()?;
        self.traced_modes()?;
        if self.assimilation.h_substeps == 0 {
            return Err(Error::config("assimilation.h_substeps must be at least 1"));
        }
        if self.assimilation.steps == 0 {
            return Err(Error::config("assimilation.steps must be at least 1"));
        }
        if !(self.init.t_spin > 0.0 && self.init.t_spin.is_finite()) {
            return Err(Error::config("init.t_spin must be positive"));
        }
        if self.init.spin_window == 0 {
            return Err(Error::config("init.spin_window must be at least 1"));
        }
        for (name, v) in [("init.kappa", self.init.kappa), ("init.norm_target", self.init.norm_target)] {
            if let Some(k) = v {
                if !(k > 0.0 && k.is_finite()) {
                    return Err(Error::config(format!("{name} must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Time between observations.
    pub fn observation_interval(&self) -> f64 {
        self.assimilation.h_substeps as f64 * self.solver.dt
    }
}

/// Parameters accepted by [`super::run_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Eta,
    Alpha,
    LambdaOverLambda1,
    Nu,
    HSubsteps,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepAxis::Eta),
            "alpha" => Ok(SweepAxis::Alpha),
            "lambda_over_lambda1" => Ok(SweepAxis::LambdaOverLambda1),
            "nu" => Ok(SweepAxis::Nu),
            "h_substeps" => Ok(SweepAxis::HSubsteps),
            _ => Err(Error::config(format!(
                "unknown sweep axis {s:?} (expected eta, alpha, lambda_over_lambda1, nu or h_substeps)"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Eta => "eta",
            SweepAxis::Alpha => "alpha",
            SweepAxis::LambdaOverLambda1 => "lambda_over_lambda1",
            SweepAxis::Nu => "nu",
            SweepAxis::HSubsteps => "h_substeps",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Eta => cfg.filter.eta = value,
            SweepAxis::Alpha => cfg.filter.alpha = value,
            SweepAxis::LambdaOverLambda1 => cfg.filter.lambda_over_lambda1 = CutoffSetting::Ratio(value),
            SweepAxis::Nu => cfg.solver.nu = value,
            SweepAxis::HSubsteps => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config(format!("h_substeps must be a positive integer, got {value}")));
                }
                cfg.assimilation.h_substeps = value as u64;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_baseline() {
        let cfg = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.solver.nu, 0.01);
        assert_eq!(cfg.observation_interval(), 0.5);
        assert_eq!(cfg.cutoff().unwrap(), ProjectionCutoff::Complete);
        assert_eq!(cfg.noise_model().unwrap(), NoiseModel::gaussian(0.04, 0));
    }

    #[test]
    fn overrides_and_file_values() {
        let text = "[filter]\neta = 4.0\nlambda_over_lambda1 = 100\n[noise]\nmodel = \"bounded_uniform\"\n";
        let cfg = ExperimentConfig::from_toml_str(
            text,
            &["noise.scale=0.01".into(), "filter.alpha=-1".into(), "outputs.csv=run.csv".into()],
        )
        .unwrap();
        assert_eq!(cfg.filter.eta, 4.0);
        assert_eq!(cfg.filter.alpha, -1.0);
        assert_eq!(cfg.cutoff().unwrap(), ProjectionCutoff::from_ratio(100.0).unwrap());
        assert_eq!(cfg.noise_model().unwrap(), NoiseModel::bounded(0.01, 0));
        assert_eq!(cfg.outputs.csv, "run.csv");
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = |text: &str, sets: &[&str]| {
            let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
            matches!(ExperimentConfig::from_toml_str(text, &sets), Err(Error::Config(_)))
        };
        assert!(bad("[filter]\nbogus = 1\n", &[]));
        assert!(bad("", &["filter.eta"]));
        assert!(bad("", &["eta=1"]));
        assert!(bad("", &["assimilation.h_substeps=0"]));
        assert!(bad("", &["filter.lambda_over_lambda1=1"]));
        assert!(bad("", &["filter.lambda_over_lambda1=partial"]));
        assert!(bad("", &["grid.n_modes=31"]));
        assert!(bad("", &["solver.nu=-1"]));
        assert!(bad("", &["outputs.traced_modes=[[16,0]]"]));
        assert!(bad("not toml [", &[]));
    }

    #[test]
    fn sweep_axis_parsing() {
        let base = ExperimentConfig::default();
        let c = "h_substeps".parse::<SweepAxis>().unwrap().apply(&base, 50.0).unwrap();
        assert_eq!(c.assimilation.h_substeps, 50);
        assert!(SweepAxis::HSubsteps.apply(&base, 2.5).is_err());
        assert!("sigma".parse::<SweepAxis>().is_err());
    }
}
