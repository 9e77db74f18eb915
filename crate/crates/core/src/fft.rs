//! Two-dimensional FFTs between a truncated spectral lattice and a
//! (possibly padded) physical grid.
//!
//! Spectral arrays are `n x n`, row-major over `(k1, k2)` in FFT order
//! (index `i` holds wavenumber `i` for `i < n/2`, `i - n` otherwise).
//! Physical arrays are `m x m` and stored *transposed*, row-major over
//! `(x2, x1)`. Only pointwise operations are ever applied in physical space,
//! so the layout never leaks out of this module and the transpose saves one
//! copy per transform.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    n: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    work_inv: Vec<Complex64>,
    work_fwd: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

const BLOCK: usize = 16;

/// `dst[c * rows + r] = src[r * cols + c]` for a `rows x cols` source.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl Clone for Fft2 {
    fn clone(&self) -> Self {
        Fft2::new(self.n, self.m)
    }
}

impl Fft2 {
    pub fn new(n: usize, m: usize) -> Self {
        assert!(m >= n && n.is_multiple_of(2));
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft2 {
            n,
            m,
            forward,
            inverse,
            work_inv: vec![Complex64::new(0.0, 0.0); m * m],
            work_fwd: vec![Complex64::new(0.0, 0.0); m * m],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// Unnormalized inverse transform: `out(x) = sum_k spec_k exp(+2 pi i k.x / L)`.
    ///
    /// Entries of `spec` on the Nyquist row/column are ignored.
    pub fn inverse(&mut self, spec: &[Complex64], out: &mut [Complex64]) {
        let (n, m) = (self.n, self.m);
        debug_assert_eq!(spec.len(), n * n);
        debug_assert_eq!(out.len(), m * m);
        let half = n / 2;
        let zero = Complex64::new(0.0, 0.0);

        // work[k1pad][k2pad]; rows without a retained k1 stay zero forever
        let work = &mut self.work_inv;
        for i1 in (0..n).filter(|&i| i != half) {
            let p1 = if i1 < half { i1 } else { i1 + m - n };
            let src = &spec[i1 * n..(i1 + 1) * n];
            let dst = &mut work[p1 * m..(p1 + 1) * m];
            dst[..half].copy_from_slice(&src[..half]);
            dst[half..m - half + 1].fill(zero);
            dst[m - half + 1..].copy_from_slice(&src[half + 1..]);
        }
        // transform along k2 for the populated row blocks
        self.inverse
            .process_with_scratch(&mut work[..half * m], &mut self.scratch);
        self.inverse
            .process_with_scratch(&mut work[(m - half + 1) * m..], &mut self.scratch);

        // out[x2][k1pad], then transform along k1
        transpose(work, out, m, m);
        self.inverse.process_with_scratch(out, &mut self.scratch);
    }

    /// Forward transform normalized by `1/m^2`, truncated to the `n x n`
    /// lattice. Nyquist entries of `spec` are set to zero. `input` is
    /// clobbered.
    pub fn forward(&mut self, input: &mut [Complex64], spec: &mut [Complex64]) {
        let (n, m) = (self.n, self.m);
        debug_assert_eq!(spec.len(), n * n);
        debug_assert_eq!(input.len(), m * m);
        let half = n / 2;
        let norm = 1.0 / (m * m) as f64;

        // input[x2][x1] -> input[x2][k1]
        self.forward.process_with_scratch(input, &mut self.scratch);

        // gather retained k1 columns into work[i1][x2]
        let work = &mut self.work_fwd;
        for x0 in (0..m).step_by(BLOCK) {
            for i1 in 0..n {
                let p1 = if i1 < half { i1 } else { i1 + m - n };
                for x2 in x0..(x0 + BLOCK).min(m) {
                    work[i1 * m + x2] = input[x2 * m + p1];
                }
            }
        }
        self.forward
            .process_with_scratch(&mut work[..n * m], &mut self.scratch);

        for i1 in 0..n {
            let row = &work[i1 * m..(i1 + 1) * m];
            let dst = &mut spec[i1 * n..(i1 + 1) * n];
            dst[..half].iter_mut().zip(&row[..half]).for_each(|(d, r)| *d = r * norm);
            dst[half..].iter_mut().zip(&row[m - half..]).for_each(|(d, r)| *d = r * norm);
        }
        let zero = Complex64::new(0.0, 0.0);
        for j in 0..n {
            spec[half * n + j] = zero;
            spec[j * n + half] = zero;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_inverse(n: usize, m: usize, spec: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        let wn = |i: usize| if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
        for x2 in 0..m {
            for x1 in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for i1 in 0..n {
                    for i2 in 0..n {
                        if i1 == n / 2 || i2 == n / 2 {
                            continue;
                        }
                        let phase = 2.0 * std::f64::consts::PI
                            * (wn(i1) * x1 as f64 + wn(i2) * x2 as f64)
                            / m as f64;
                        acc += spec[i1 * n + i2] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[x2 * m + x1] = acc;
            }
        }
        out
    }

    #[test]
    fn inverse_matches_direct_sum() {
        let (n, m) = (6, 12);
        let spec: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut fft = Fft2::new(n, m);
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        fft.inverse(&spec, &mut out);
        let expect = direct_inverse(n, m, &spec);
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_inverts_inverse() {
        let (n, m) = (8, 16);
        let mut spec: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.71).sin(), (i as f64 * 0.29).cos()))
            .collect();
        for j in 0..n {
            spec[n / 2 * n + j] = Complex64::new(0.0, 0.0);
            spec[j * n + n / 2] = Complex64::new(0.0, 0.0);
        }
        let mut fft = Fft2::new(n, m);
        let mut phys = vec![Complex64::new(0.0, 0.0); m * m];
        fft.inverse(&spec, &mut phys);
        let mut back = vec![Complex64::new(0.0, 0.0); n * n];
        fft.forward(&mut phys, &mut back);
        for (a, b) in spec.iter().zip(&back) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
