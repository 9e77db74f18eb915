//! Benchmark fixtures shared by the criterion benches.

use nsda_core::harness::{gaussian_draw, ExperimentConfig};
use nsda_core::{SpectralField, SpectralGrid};

/// A broadband field with attractor-like energy on the baseline grid.
pub fn sample_state(grid: &SpectralGrid) -> SpectralField {
    gaussian_draw(grid, 1, 0, |k| 0.05 / (k.norm_sq() as f64).powi(2))
}

pub fn baseline() -> ExperimentConfig {
    ExperimentConfig::default()
}
