//! Divergence-free Fourier representation on the torus `[0, L)^2`.
//!
//! A velocity field is stored through its coefficients `u_k` on the basis
//! `psi_k(x) = k_perp/|k| exp(2 pi i k.x / L)`, `k_perp = (k2, -k1)`. Basis
//! functions are orthonormal for the domain-averaged inner product, so
//! `|u|^2 = sum_k |u_k|^2` equals the grid mean of `|u(x)|^2`.
//!
//! Real-valued fields satisfy `u_{-k} = -conj(u_k)`. The Nyquist row and
//! column (`k_i = -n/2`) have no partner in the lattice and are pinned to
//! zero, as is the mean mode.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;

/// Integer wavevector `k = (k1, k2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wavevector {
    pub k1: i32,
    pub k2: i32,
}

impl Wavevector {
    pub const fn new(k1: i32, k2: i32) -> Self {
        Wavevector { k1, k2 }
    }

    pub fn norm_sq(self) -> i64 {
        let (a, b) = (self.k1 as i64, self.k2 as i64);
        a * a + b * b
    }

    pub fn is_zero(self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    pub fn neg(self) -> Self {
        Wavevector::new(-self.k1, -self.k2)
    }
}

impl fmt::Display for Wavevector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub n_modes: usize,
    pub domain_length: f64,
    pub pad_factor: usize,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        SpectralGrid {
            n_modes: 32,
            domain_length: 2.0,
            pad_factor: 2,
        }
    }
}

impl SpectralGrid {
    pub fn new(n_modes: usize, domain_length: f64, pad_factor: usize) -> Result<Self> {
        let grid = SpectralGrid {
            n_modes,
            domain_length,
            pad_factor,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 4 || !self.n_modes.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "n_modes must be even and >= 4, got {}",
                self.n_modes
            )));
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::domain(format!(
                "domain length must be positive, got {}",
                self.domain_length
            )));
        }
        // padded half-width must exceed 3/2 of the retained half-width
        if 2 * self.pad_factor * self.n_modes <= 3 * self.n_modes {
            return Err(Error::domain(format!(
                "pad_factor {} does not dealias quadratic products",
                self.pad_factor
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_modes * self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.n_modes == 0
    }

    pub fn padded_size(&self) -> usize {
        self.pad_factor * self.n_modes
    }

    /// First Stokes eigenvalue `4 pi^2 / L^2`.
    pub fn lambda1(&self) -> f64 {
        4.0 * PI * PI / (self.domain_length * self.domain_length)
    }

    /// Wavenumber scale `2 pi / L`.
    pub fn wavenumber_scale(&self) -> f64 {
        2.0 * PI / self.domain_length
    }

    /// Whether `k` lies in the stored lattice `-n/2 <= k_i < n/2`.
    pub fn in_lattice(&self, k: Wavevector) -> bool {
        let h = (self.n_modes / 2) as i32;
        (-h..h).contains(&k.k1) && (-h..h).contains(&k.k2)
    }

    /// Whether `k` carries a (possibly nonzero) coefficient: in the lattice,
    /// nonzero and off the Nyquist row/column.
    pub fn is_retained(&self, k: Wavevector) -> bool {
        let h = (self.n_modes / 2) as i32;
        !k.is_zero() && k.k1.abs() < h && k.k2.abs() < h
    }

    /// Storage index of a lattice wavevector (FFT order, row-major).
    pub fn index(&self, k: Wavevector) -> usize {
        debug_assert!(self.in_lattice(k));
        let n = self.n_modes as i32;
        let i1 = k.k1.rem_euclid(n) as usize;
        let i2 = k.k2.rem_euclid(n) as usize;
        i1 * self.n_modes + i2
    }

    pub fn wavevector(&self, index: usize) -> Wavevector {
        let n = self.n_modes;
        let wn = |i: usize| if i < n / 2 { i as i32 } else { i as i32 - n as i32 };
        Wavevector::new(wn(index / n), wn(index % n))
    }

    /// Retained wavevectors with their storage indices, in storage order.
    pub fn retained(&self) -> impl Iterator<Item = (usize, Wavevector)> + '_ {
        (0..self.len())
            .map(move |i| (i, self.wavevector(i)))
            .filter(move |&(_, k)| self.is_retained(k))
    }

    /// One representative of each conjugate pair `{k, -k}`.
    pub fn half_lattice(&self) -> impl Iterator<Item = (usize, Wavevector)> + '_ {
        self.retained()
            .filter(|(_, k)| k.k1 > 0 || (k.k1 == 0 && k.k2 > 0))
    }

    pub fn n_retained(&self) -> usize {
        let r = self.n_modes - 1;
        r * r - 1
    }
}

/// Stokes eigenvalue `a_k = 4 pi^2 |k|^2 / L^2`.
pub fn stokes_eigenvalue(k: Wavevector, grid: &SpectralGrid) -> Result<f64> {
    if k.is_zero() {
        return Err(Error::domain("Stokes eigenvalue of the zero wavevector"));
    }
    Ok(grid.lambda1() * k.norm_sq() as f64)
}

/// Observation cutoff `lambda`. Finite cutoffs are held as `lambda/lambda_1`
/// so that the membership test `|k|^2 < lambda/lambda_1` is exact for the
/// integer multiples used in practice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProjectionCutoff {
    Complete,
    Finite { ratio: f64 },
}

impl ProjectionCutoff {
    /// Cutoff `lambda = ratio * lambda_1`; `ratio` must exceed 1.
    pub fn from_ratio(ratio: f64) -> Result<Self> {
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::domain(format!(
                "cutoff lambda/lambda_1 must be finite and > 1, got {ratio}"
            )));
        }
        Ok(ProjectionCutoff::Finite { ratio })
    }

    pub fn from_lambda(lambda: f64, grid: &SpectralGrid) -> Result<Self> {
        Self::from_ratio(lambda / grid.lambda1())
    }

    pub fn lambda(&self, grid: &SpectralGrid) -> f64 {
        match self {
            ProjectionCutoff::Complete => f64::INFINITY,
            ProjectionCutoff::Finite { ratio } => ratio * grid.lambda1(),
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, ProjectionCutoff::Complete)
    }

    /// `k` belongs to the observed subspace `W_lambda`.
    pub fn observes(&self, k: Wavevector) -> bool {
        match self {
            ProjectionCutoff::Complete => true,
            ProjectionCutoff::Finite { ratio } => (k.norm_sq() as f64) < *ratio,
        }
    }
}

impl fmt::Display for ProjectionCutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionCutoff::Complete => write!(f, "complete"),
            ProjectionCutoff::Finite { ratio } => write!(f, "{ratio}"),
        }
    }
}

/// Truncated coefficients of a divergence-free, mean-free field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: SpectralGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: SpectralGrid) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Builds a field from raw storage, zeroing the mean and Nyquist slots.
    pub fn from_coeffs(grid: SpectralGrid, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            if !grid.is_retained(grid.wavevector(i)) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Ok(SpectralField { grid, coeffs })
    }

    pub(crate) fn from_raw(grid: SpectralGrid, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        SpectralField { grid, coeffs }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, k: Wavevector) -> Complex64 {
        if self.grid.in_lattice(k) {
            self.coeffs[self.grid.index(k)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Sets `u_k = value` and `u_{-k} = -conj(value)`.
    pub fn set_pair(&mut self, k: Wavevector, value: Complex64) -> Result<()> {
        if !self.grid.is_retained(k) {
            return Err(Error::domain(format!("wavevector {k} is not retained")));
        }
        let i = self.grid.index(k);
        let j = self.grid.index(k.neg());
        self.coeffs[i] = value;
        self.coeffs[j] = -value.conj();
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest violation of `u_{-k} = -conj(u_k)` over the lattice.
    pub fn reality_defect(&self) -> f64 {
        self.grid
            .retained()
            .map(|(i, k)| (self.coeffs[i] + self.coeffs[self.grid.index(k.neg())].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Restores the reality constraint by averaging each pair.
    pub fn symmetrize(&mut self) {
        let grid = self.grid;
        for (i, k) in grid.half_lattice() {
            let j = grid.index(k.neg());
            let v = 0.5 * (self.coeffs[i] - self.coeffs[j].conj());
            self.coeffs[i] = v;
            self.coeffs[j] = -v.conj();
        }
    }

    /// `|u|^2 = sum_k |u_k|^2`.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Real inner product `Re sum_k conj(u_k) v_k`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        SpectralField::from_raw(self.grid, self.coeffs.iter().map(|c| c * s).collect())
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
    }

    /// Coefficientwise map over the stored lattice.
    pub fn map_modes(&self, mut f: impl FnMut(Wavevector, Complex64) -> Complex64) -> SpectralField {
        let grid = self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let k = grid.wavevector(i);
                if grid.is_retained(k) {
                    f(k, c)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        SpectralField::from_raw(grid, coeffs)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn check_grid(&self, other: &SpectralField) {
        assert_eq!(self.grid, other.grid, "spectral fields on different grids");
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;

    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.check_grid(rhs);
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        SpectralField::from_raw(self.grid, coeffs)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.check_grid(rhs);
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
        SpectralField::from_raw(self.grid, coeffs)
    }
}

/// Sobolev norm `||u||_s = (sum_k a_k^s |u_k|^2)^(1/2)`.
pub fn sobolev_norm(u: &SpectralField, s: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::NonFinite("sobolev_norm input".into()));
    }
    Ok(sobolev_norm_sq(u, s).sqrt())
}

pub(crate) fn sobolev_norm_sq(u: &SpectralField, s: f64) -> f64 {
    let grid = u.grid();
    let l1 = grid.lambda1();
    grid.retained()
        .map(|(i, k)| {
            let c = u.coeffs()[i].norm_sqr();
            if c == 0.0 {
                0.0
            } else if s == 0.0 {
                c
            } else {
                (l1 * k.norm_sq() as f64).powf(s) * c
            }
        })
        .sum()
}

/// `P_lambda u`: keeps modes with `a_k < lambda`.
pub fn project_low(u: &SpectralField, cut: ProjectionCutoff) -> SpectralField {
    match cut {
        ProjectionCutoff::Complete => u.clone(),
        _ => u.map_modes(|k, c| if cut.observes(k) { c } else { Complex64::new(0.0, 0.0) }),
    }
}

/// `Q_lambda u = u - P_lambda u`.
pub fn project_high(u: &SpectralField, cut: ProjectionCutoff) -> SpectralField {
    u.map_modes(|k, c| if cut.observes(k) { Complex64::new(0.0, 0.0) } else { c })
}

/// Real velocity samples on a uniform grid, stored row-major over `(x1, x2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    pub size: usize,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl VelocityGrid {
    pub fn zeros(size: usize) -> Self {
        VelocityGrid {
            size,
            u1: vec![0.0; size * size],
            u2: vec![0.0; size * size],
        }
    }

    /// Grid point `x = (i1, i2) * L / size`.
    pub fn at(&self, i1: usize, i2: usize) -> (f64, f64) {
        let i = i1 * self.size + i2;
        (self.u1[i], self.u2[i])
    }

    /// Grid mean of `|u(x)|^2`.
    pub fn mean_square(&self) -> f64 {
        let s: f64 = self
            .u1
            .iter()
            .zip(&self.u2)
            .map(|(a, b)| a * a + b * b)
            .sum();
        s / (self.size * self.size) as f64
    }
}

/// Evaluates `u = sum_k u_k psi_k` on the unpadded (`n x n`) or padded grid.
pub fn to_physical(u: &SpectralField, padded: bool) -> VelocityGrid {
    let grid = *u.grid();
    let n = grid.n_modes;
    let m = if padded { grid.padded_size() } else { n };
    let mut fft = Fft2::new(n, m);

    // pack u1 + i u2, both real in physical space
    let packed: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let k = grid.wavevector(i);
            if !grid.is_retained(k) {
                return Complex64::new(0.0, 0.0);
            }
            let (e1, e2) = unit_perp(k);
            let c = u.coeffs()[i];
            c * e1 + Complex64::i() * c * e2
        })
        .collect();
    let mut phys = vec![Complex64::new(0.0, 0.0); m * m];
    fft.inverse(&packed, &mut phys);

    let mut out = VelocityGrid::zeros(m);
    // phys is laid out [x2][x1]
    for x2 in 0..m {
        for x1 in 0..m {
            let v = phys[x2 * m + x1];
            out.u1[x1 * m + x2] = v.re;
            out.u2[x1 * m + x2] = v.im;
        }
    }
    out
}

/// Forward transform followed by the Leray projection onto `psi_k`.
/// Accepts either the unpadded or the padded grid size.
pub fn from_physical(v: &VelocityGrid, grid: &SpectralGrid) -> Result<SpectralField> {
    let n = grid.n_modes;
    let m = v.size;
    if m < n || v.u1.len() != m * m || v.u2.len() != m * m {
        return Err(Error::GridMismatch(format!(
            "velocity grid of size {m} incompatible with {n} modes"
        )));
    }
    let mut fft = Fft2::new(n, m);
    let mut phys = vec![Complex64::new(0.0, 0.0); m * m];
    for x1 in 0..m {
        for x2 in 0..m {
            phys[x2 * m + x1] = Complex64::new(v.u1[x1 * m + x2], v.u2[x1 * m + x2]);
        }
    }
    let mut packed = vec![Complex64::new(0.0, 0.0); n * n];
    fft.forward(&mut phys, &mut packed);
    Ok(leray_from_packed(grid, &packed))
}

/// `k_perp / |k|` as real components.
#[inline]
pub(crate) fn unit_perp(k: Wavevector) -> (f64, f64) {
    let norm = (k.norm_sq() as f64).sqrt();
    (k.k2 as f64 / norm, -(k.k1 as f64) / norm)
}

/// Splits the transform of a packed field `a + i b` (both real) into the
/// spectra of `a` and `b`, then projects the vector coefficient onto `psi_k`.
pub(crate) fn leray_from_packed(grid: &SpectralGrid, packed: &[Complex64]) -> SpectralField {
    let mut out = SpectralField::zeros(*grid);
    leray_from_packed_into(grid, packed, out.coeffs_mut());
    out
}

pub(crate) fn leray_from_packed_into(grid: &SpectralGrid, packed: &[Complex64], out: &mut [Complex64]) {
    let n = grid.n_modes;
    let zero = Complex64::new(0.0, 0.0);
    let half_i = Complex64::new(0.0, -0.5);
    for i1 in 0..n {
        let j1 = (n - i1) % n;
        for i2 in 0..n {
            let i = i1 * n + i2;
            let k = grid.wavevector(i);
            if !grid.is_retained(k) {
                out[i] = zero;
                continue;
            }
            let c = packed[i];
            let cm = packed[j1 * n + (n - i2) % n].conj();
            let a = 0.5 * (c + cm);
            let b = half_i * (c - cm);
            let (e1, e2) = unit_perp(k);
            out[i] = a * e1 + b * e2;
        }
    }
}

const SNAPSHOT_TAG: &str = "SPECFIELD v1";

impl SpectralField {
    /// Writes the snapshot text format: header line, then `k1 k2 re im` for
    /// every lattice index with `k1` outer, both ascending from `-n/2`.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{SNAPSHOT_TAG} n_modes={} L={:.17e}",
            self.grid.n_modes, self.grid.domain_length
        )?;
        self.write_coeff_lines(&mut w, |_| true)?;
        Ok(())
    }

    pub(crate) fn write_coeff_lines<W: Write>(
        &self,
        w: &mut W,
        keep: impl Fn(Wavevector) -> bool,
    ) -> Result<()> {
        let h = (self.grid.n_modes / 2) as i32;
        for k1 in -h..h {
            for k2 in -h..h {
                let k = Wavevector::new(k1, k2);
                if !keep(k) {
                    continue;
                }
                let c = self.get(k);
                writeln!(w, "{k1} {k2} {:.17e} {:.17e}", c.re, c.im)?;
            }
        }
        Ok(())
    }

    /// Reads a snapshot, rejecting files whose `n_modes` or `L` differ from
    /// `grid`.
    pub fn read_snapshot<R: BufRead>(r: R, grid: &SpectralGrid) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty snapshot".into(),
        })?;
        let header = header?;
        let (n, l) = parse_snapshot_header(&header)?;
        if n != grid.n_modes || l != grid.domain_length {
            return Err(Error::GridMismatch(format!(
                "snapshot has n_modes={n} L={l}, expected n_modes={} L={}",
                grid.n_modes, grid.domain_length
            )));
        }
        let mut field = SpectralField::zeros(*grid);
        read_coeff_lines(&mut field, lines.map(|(i, l)| (i + 1, l)), None)?;
        Ok(field)
    }

    /// Header values `(n_modes, L)` of a snapshot without reading the body.
    pub fn peek_snapshot_grid(header: &str) -> Result<(usize, f64)> {
        parse_snapshot_header(header)
    }
}

fn parse_snapshot_header(header: &str) -> Result<(usize, f64)> {
    let rest = header.strip_prefix(SNAPSHOT_TAG).ok_or(Error::Parse {
        line: 1,
        msg: format!("expected `{SNAPSHOT_TAG}` header"),
    })?;
    let mut n = None;
    let mut l = None;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("n_modes", v)) => n = v.parse::<usize>().ok(),
            Some(("L", v)) => l = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    match (n, l) {
        (Some(n), Some(l)) => Ok((n, l)),
        _ => Err(Error::Parse {
            line: 1,
            msg: "header missing n_modes or L".into(),
        }),
    }
}

/// Parses `k1 k2 re im` lines into `field`. Stops after `limit` lines if given.
pub(crate) fn read_coeff_lines<I>(field: &mut SpectralField, lines: I, limit: Option<usize>) -> Result<()>
where
    I: Iterator<Item = (usize, std::io::Result<String>)>,
{
    let grid = *field.grid();
    let mut count = 0;
    for (lineno, line) in lines {
        if limit.is_some_and(|lim| count >= lim) {
            break;
        }
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: lineno,
            msg: format!("{msg}: `{line}`"),
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(bad("expected `k1 k2 re im`"));
        }
        let k1: i32 = toks[0].parse().map_err(|_| bad("bad k1"))?;
        let k2: i32 = toks[1].parse().map_err(|_| bad("bad k2"))?;
        let re: f64 = toks[2].parse().map_err(|_| bad("bad real part"))?;
        let im: f64 = toks[3].parse().map_err(|_| bad("bad imaginary part"))?;
        let k = Wavevector::new(k1, k2);
        if !grid.in_lattice(k) {
            return Err(bad("wavevector outside lattice"));
        }
        if grid.is_retained(k) {
            let i = grid.index(k);
            field.coeffs_mut()[i] = Complex64::new(re, im);
        }
        count += 1;
    }
    Ok(())
}
