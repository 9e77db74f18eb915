#![allow(dead_code)]

use nsda_core::{SpectralField, SpectralGrid, Wavevector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random reality-constrained field with `|u_k| ~ amp * |k|^-decay`.
pub fn random_field(grid: SpectralGrid, seed: u64, amp: f64, decay: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = SpectralField::zeros(grid);
    let half: Vec<Wavevector> = grid.half_lattice().map(|(_, k)| k).collect();
    for k in half {
        let s = amp * (k.norm_sq() as f64).powf(-0.5 * decay);
        let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * s;
        u.set_pair(k, v).unwrap();
    }
    u
}

/// `B(u, u)` by direct summation over all triads `p + q = k`:
/// `w(k) = sum (u(p) . i K q) u(q)`, then projected onto `psi_k`.
pub fn convolution_oracle(u: &SpectralField) -> SpectralField {
    let grid = *u.grid();
    let scale = 2.0 * std::f64::consts::PI / grid.domain_length;
    let modes: Vec<(Wavevector, [Complex64; 2])> = grid
        .retained()
        .map(|(i, k)| {
            let n = (k.norm_sq() as f64).sqrt();
            let c = u.coeffs()[i];
            (k, [c * (k.k2 as f64 / n), c * (-(k.k1 as f64) / n)])
        })
        .collect();
    let mut out = SpectralField::zeros(grid);
    for (idx, k) in grid.retained() {
        let mut w = [Complex64::new(0.0, 0.0); 2];
        for (p, up) in &modes {
            let q = Wavevector::new(k.k1 - p.k1, k.k2 - p.k2);
            if !grid.is_retained(q) {
                continue;
            }
            let uq = {
                let c = u.get(q);
                let n = (q.norm_sq() as f64).sqrt();
                [c * (q.k2 as f64 / n), c * (-(q.k1 as f64) / n)]
            };
            let i = Complex64::i();
            let adv = up[0] * i * scale * q.k1 as f64 + up[1] * i * scale * q.k2 as f64;
            w[0] += adv * uq[0];
            w[1] += adv * uq[1];
        }
        let n = (k.norm_sq() as f64).sqrt();
        out.set_pair(k, w[0] * (k.k2 as f64 / n) + w[1] * (-(k.k1 as f64) / n)).unwrap();
        let _ = idx;
    }
    out
}

pub fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
