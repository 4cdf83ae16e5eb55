//! Periodic grids and Fourier-space machinery.
//!
//! The real line is replaced by a torus of length `L` with `N` retained
//! modes `k_m = m k0`, `k0 = 2 pi / L`, `m in [-N/2, N/2)`, stored in FFT
//! order. Coefficients approximate the continuous unitary transform
//!
//! ```text
//!   f^(k) = (2 pi)^(-1/2) int f(x) exp(-i k x) dx
//!   f(x)  = (2 pi)^(-1/2) int f^(k) exp(i k x) dk
//! ```
//!
//! so that `sum_k |f^(k)|_2 dk` is the Riemann sum of the Wiener norm and
//! products map to `(2 pi)^(-1)`-weighted convolutions.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::system::{SystemSpec, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    length: f64,
    n: usize,
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Grid> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("N must be a power of two >= 2, got {n}")));
        }
        Ok(Grid { length, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Mode spacing `k0 = 2 pi / L`, also the quadrature weight in `k`.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn dk(&self) -> f64 {
        self.k0()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Integer mode number at storage index `idx`.
    #[inline]
    pub fn mode(&self, idx: usize) -> i64 {
        let h = self.n / 2;
        if idx < h {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Storage index of mode `m`, if retained.
    #[inline]
    pub fn index_of(&self, m: i64) -> Option<usize> {
        let h = (self.n / 2) as i64;
        if m >= -h && m < h {
            Some(if m >= 0 { m as usize } else { (m + self.n as i64) as usize })
        } else {
            None
        }
    }

    #[inline]
    pub fn k(&self, idx: usize) -> f64 {
        self.mode(idx) as f64 * self.k0()
    }

    pub fn k_values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.k(i)).collect()
    }

    /// Physical sample point `x_m = -L/2 + m L / N`.
    #[inline]
    pub fn x(&self, idx: usize) -> f64 {
        -0.5 * self.length + idx as f64 * self.dx()
    }

    /// Same torus with a different number of modes.
    pub fn with_modes(&self, n: usize) -> Result<Grid> {
        Grid::new(self.length, n)
    }
}

/// Which variables a field holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    UHat,
    Z,
}

/// A `C^n`-valued function of the retained modes, stored mode-major:
/// `data[idx * n + component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub n: usize,
    pub data: Vec<C64>,
    pub repr: Representation,
}

impl SpectralField {
    pub fn zeros(grid: Grid, n: usize) -> SpectralField {
        SpectralField {
            grid,
            n,
            data: vec![ZERO; grid.n() * n],
            repr: Representation::UHat,
        }
    }

    pub fn from_data(grid: Grid, n: usize, data: Vec<C64>) -> Result<SpectralField> {
        if data.len() != grid.n() * n {
            return Err(Error::SizeMismatch { expected: grid.n() * n, got: data.len() });
        }
        Ok(SpectralField { grid, n, data, repr: Representation::UHat })
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[C64] {
        &self.data[idx * self.n..(idx + 1) * self.n]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: usize) -> &mut [C64] {
        &mut self.data[idx * self.n..(idx + 1) * self.n]
    }

    /// Value at mode `m`; zero outside the retained band.
    pub fn at_mode(&self, m: i64) -> Option<&[C64]> {
        self.grid.index_of(m).map(|i| self.at(i))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    /// `f(k) -> conj(f(-k))`, the spectrum of the complex conjugate field.
    /// The unpaired Nyquist mode maps to zero.
    pub fn conj_mirror(&self) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid, self.n);
        out.repr = self.repr;
        for i in 0..self.grid.n() {
            if let Some(j) = self.grid.index_of(-self.grid.mode(i)) {
                for (o, v) in out.at_mut(i).iter_mut().zip(self.at(j)) {
                    *o = v.conj();
                }
            }
        }
        out
    }

    /// Largest deviation from `f(-k) = conj f(k)`, relative to `max |f|`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let scale = self.data.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let h = (self.grid.n() / 2) as i64;
        let mut worst = 0.0_f64;
        for m in -h + 1..h {
            let a = self.at_mode(m).unwrap();
            let b = self.at_mode(-m).unwrap();
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y.conj()).norm());
            }
        }
        worst / scale
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        if self.grid != other.grid || self.n != other.n {
            return Err(Error::GridMismatch);
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(SpectralField { grid: self.grid, n: self.n, data, repr: self.repr })
    }

    /// Copies this field into `target`, a grid with the same `k0` and at
    /// least as many modes, shifting every mode by `shift`. Modes that land
    /// outside `target` are dropped; returns their summed `|.|_2`.
    pub fn add_shifted_into(&self, target: &mut SpectralField, shift: i64, phase: C64, conjugate: bool) -> f64 {
        let mut lost = 0.0;
        for i in 0..self.grid.n() {
            let (src_mode, v) = if conjugate {
                // mirrored conjugate: g(k) = conj f(-k)
                (self.grid.mode(i), self.at_mode(-self.grid.mode(i)))
            } else {
                (self.grid.mode(i), Some(self.at(i)))
            };
            let Some(v) = v else { continue };
            match target.grid.index_of(src_mode + shift) {
                Some(t) => {
                    let dst = target.at_mut(t);
                    for (d, s) in dst.iter_mut().zip(v) {
                        *d += phase * if conjugate { s.conj() } else { *s };
                    }
                }
                None => lost += v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            }
        }
        lost
    }
}

/// Cached FFT plans for one grid size and its 2x zero-padded extension.
#[derive(Clone)]
pub struct FftEngine {
    grid: Grid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fwd_pad: Arc<dyn Fft<f64>>,
    inv_pad: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FftEngine(N = {})", self.grid.n())
    }
}

impl FftEngine {
    pub fn new(grid: Grid) -> FftEngine {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        FftEngine {
            grid,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            fwd_pad: planner.plan_fft_forward(2 * n),
            inv_pad: planner.plan_fft_inverse(2 * n),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of physical samples on the dealiasing grid.
    pub fn padded_len(&self) -> usize {
        2 * self.grid.n()
    }

    /// Spectrum (one component, FFT order, `N` entries) to `M` physical
    /// samples, `M = N` or `2N`. `buf` holds the spectrum on entry for
    /// `M = N`; for `M = 2N` the spectrum is read from `spec`.
    fn to_physical(&self, spec: &[C64], out: &mut [C64], padded: bool) {
        let n = self.grid.n();
        let m = if padded { 2 * n } else { n };
        debug_assert_eq!(spec.len(), n);
        debug_assert_eq!(out.len(), m);
        let scale = self.grid.dk() / (2.0 * PI).sqrt();
        out.fill(ZERO);
        for i in 0..n {
            let mode = self.grid.mode(i);
            let slot = mode.rem_euclid(m as i64) as usize;
            // exp(i k_m x_0) with x_0 = -L/2 is (-1)^m
            let sign = if mode & 1 == 0 { scale } else { -scale };
            out[slot] = spec[i] * sign;
        }
        if padded {
            self.inv_pad.process(out);
        } else {
            self.inv.process(out);
        }
    }

    /// Physical samples (`M = N` or `2N`) back to the `N` retained modes.
    /// `samples` is overwritten.
    fn to_spectral(&self, samples: &mut [C64], spec: &mut [C64], padded: bool) {
        let n = self.grid.n();
        let m = samples.len();
        debug_assert_eq!(m, if padded { 2 * n } else { n });
        if padded {
            self.fwd_pad.process(samples);
        } else {
            self.fwd.process(samples);
        }
        let dx = self.grid.length() / m as f64;
        let scale = dx / (2.0 * PI).sqrt();
        for i in 0..n {
            let mode = self.grid.mode(i);
            let slot = mode.rem_euclid(m as i64) as usize;
            let sign = if mode & 1 == 0 { scale } else { -scale };
            spec[i] = samples[slot] * sign;
        }
    }

    /// Physical samples of every component, component-major:
    /// `out[c * M + x]`.
    pub fn field_to_physical(&self, f: &SpectralField, padded: bool) -> Vec<C64> {
        let n = self.grid.n();
        let m = if padded { 2 * n } else { n };
        let mut out = vec![ZERO; f.n * m];
        let mut comp = vec![ZERO; n];
        for c in 0..f.n {
            for i in 0..n {
                comp[i] = f.data[i * f.n + c];
            }
            self.to_physical(&comp, &mut out[c * m..(c + 1) * m], padded);
        }
        out
    }

    /// Inverse of [`FftEngine::field_to_physical`]; truncates to the
    /// retained modes when `padded`.
    pub fn field_from_physical(&self, samples: &mut [C64], ncomp: usize, padded: bool) -> SpectralField {
        let n = self.grid.n();
        let m = samples.len() / ncomp;
        debug_assert_eq!(m, if padded { 2 * n } else { n });
        let mut out = SpectralField::zeros(self.grid, ncomp);
        let mut comp = vec![ZERO; n];
        for c in 0..ncomp {
            self.to_spectral(&mut samples[c * m..(c + 1) * m], &mut comp, padded);
            for i in 0..n {
                out.data[i * ncomp + c] = comp[i];
            }
        }
        out
    }

    /// Component-major physical samples into a preallocated buffer.
    pub fn physical_into(&self, f: &[C64], ncomp: usize, out: &mut [C64], scratch: &mut [C64], padded: bool) {
        let n = self.grid.n();
        let m = if padded { 2 * n } else { n };
        for c in 0..ncomp {
            for i in 0..n {
                scratch[i] = f[i * ncomp + c];
            }
            self.to_physical(&scratch[..n], &mut out[c * m..(c + 1) * m], padded);
        }
    }

    /// Component-major samples (overwritten) to a mode-major spectrum.
    pub fn spectral_into(&self, samples: &mut [C64], ncomp: usize, out: &mut [C64], scratch: &mut [C64], padded: bool) {
        let n = self.grid.n();
        let m = if padded { 2 * n } else { n };
        for c in 0..ncomp {
            self.to_spectral(&mut samples[c * m..(c + 1) * m], &mut scratch[..n], padded);
            for i in 0..n {
                out[i * ncomp + c] = scratch[i];
            }
        }
    }

    /// Physical samples of a field known to be real, point-major:
    /// `out[x * ncomp + c]`. Components are paired into one complex
    /// transform, `a + i b`. `buf` needs `N + M` entries.
    pub fn real_physical_into(&self, f: &[C64], ncomp: usize, out: &mut [f64], buf: &mut [C64], padded: bool) {
        let n = self.grid.n();
        let m = if padded { 2 * n } else { n };
        let (spec, phys) = buf.split_at_mut(n);
        let phys = &mut phys[..m];
        for c in (0..ncomp).step_by(2) {
            let pair = c + 1 < ncomp;
            for i in 0..n {
                let b = if pair { f[i * ncomp + c + 1] } else { ZERO };
                spec[i] = f[i * ncomp + c] + C64::new(-b.im, b.re);
            }
            self.to_physical(spec, phys, padded);
            for (x, v) in phys.iter().enumerate() {
                out[x * ncomp + c] = v.re;
                if pair {
                    out[x * ncomp + c + 1] = v.im;
                }
            }
        }
    }

    /// Inverse of [`FftEngine::real_physical_into`]: real point-major samples
    /// to a mode-major spectrum of `N` modes.
    pub fn real_spectral_into(&self, samples: &[f64], ncomp: usize, out: &mut [C64], buf: &mut [C64], padded: bool) {
        let n = self.grid.n();
        let m = if padded { 2 * n } else { n };
        let (spec, phys) = buf.split_at_mut(n);
        let phys = &mut phys[..m];
        for c in (0..ncomp).step_by(2) {
            let pair = c + 1 < ncomp;
            for (x, v) in phys.iter_mut().enumerate() {
                let b = if pair { samples[x * ncomp + c + 1] } else { 0.0 };
                *v = C64::new(samples[x * ncomp + c], b);
            }
            self.to_spectral(phys, spec, padded);
            // real inputs have Hermitian spectra: split R = F_a + i F_b
            for i in 0..n {
                let mirror = self.grid.index_of(-self.grid.mode(i)).unwrap_or(i);
                let r = spec[i];
                let rm = spec[mirror].conj();
                out[i * ncomp + c] = (r + rm) * 0.5;
                if pair {
                    let d = (r - rm) * 0.5;
                    out[i * ncomp + c + 1] = C64::new(d.im, -d.re);
                }
            }
        }
    }
}

/// Samples `f(x_m)` (mode-major `[x][component]`) to spectral coefficients.
pub fn forward_fft(grid: Grid, ncomp: usize, samples: &[C64]) -> Result<SpectralField> {
    if samples.len() != grid.n() * ncomp {
        return Err(Error::SizeMismatch { expected: grid.n() * ncomp, got: samples.len() });
    }
    let eng = FftEngine::new(grid);
    let n = grid.n();
    let mut cm = vec![ZERO; n * ncomp];
    for x in 0..n {
        for c in 0..ncomp {
            cm[c * n + x] = samples[x * ncomp + c];
        }
    }
    Ok(eng.field_from_physical(&mut cm, ncomp, false))
}

/// Spectral coefficients to physical samples, mode-major `[x][component]`.
pub fn inverse_fft(f: &SpectralField) -> Vec<C64> {
    physical_samples(f, f.grid.n())
}

/// Physical samples of `f` on a finer grid of `m >= N` points (spectral
/// interpolation), mode-major `[x][component]`.
pub fn physical_samples(f: &SpectralField, m: usize) -> Vec<C64> {
    let fine = f.grid.with_modes(m).expect("power of two");
    let mut padded = SpectralField::zeros(fine, f.n);
    f.add_shifted_into(&mut padded, 0, C64::new(1.0, 0.0), false);
    let eng = FftEngine::new(fine);
    let cm = eng.field_to_physical(&padded, false);
    let mut out = vec![ZERO; m * f.n];
    for c in 0..f.n {
        for x in 0..m {
            out[x * f.n + c] = cm[c * m + x];
        }
    }
    out
}

/// `||f||_W = sum_k |f^(k)|_2 dk`.
pub fn wiener_norm(f: &SpectralField) -> f64 {
    l1_norm(&f.data, f.n, f.grid.dk())
}

/// Discrete `L^1` norm of a mode-major spectrum.
pub fn l1_norm(data: &[C64], ncomp: usize, dk: f64) -> f64 {
    data.chunks(ncomp)
        .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .sum::<f64>()
        * dk
}

/// `||f||_{W^s} = sum_{m <= s} ||D^m f||_W` in one dimension.
pub fn ws_norm(f: &SpectralField, s: u32) -> Result<f64> {
    if s > 2 {
        return Err(Error::UnsupportedOrder(s));
    }
    let dk = f.grid.dk();
    let mut total = 0.0;
    for (i, v) in f.data.chunks(f.n).enumerate() {
        let a = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let k = f.grid.k(i).abs();
        total += a * (0..=s).map(|m| k.powi(m as i32)).sum::<f64>();
    }
    Ok(total * dk)
}

/// `(D f)(k) = i k f(k)`.
pub fn apply_dmu(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    for i in 0..f.grid.n() {
        let ik = C64::new(0.0, f.grid.k(i));
        for z in out.at_mut(i) {
            *z *= ik;
        }
    }
    out
}

/// Dealiased pseudospectral evaluation of the Fourier transform of
/// `T(f1, f2, f3)`: each argument is interpolated to `2N` points, `T` is
/// applied pointwise and the product is truncated back to `N` modes.
pub fn trilinear_conv(
    spec: &SystemSpec,
    f1: &SpectralField,
    f2: &SpectralField,
    f3: &SpectralField,
) -> Result<SpectralField> {
    trilinear_conv_with(&FftEngine::new(f1.grid), spec, f1, f2, f3, Exec::default())
}

pub fn trilinear_conv_with(
    eng: &FftEngine,
    spec: &SystemSpec,
    f1: &SpectralField,
    f2: &SpectralField,
    f3: &SpectralField,
    exec: Exec,
) -> Result<SpectralField> {
    check_args(spec, eng.grid(), &[f1, f2, f3])?;
    let n = spec.n;
    let m = eng.padded_len();
    let p1 = eng.field_to_physical(f1, true);
    let p2 = eng.field_to_physical(f2, true);
    let p3 = eng.field_to_physical(f3, true);
    let mut prod = vec![ZERO; n * m];
    pointwise_product(spec, &p1, &p2, &p3, &mut prod, n, m, exec);
    Ok(eng.field_from_physical(&mut prod, n, true))
}

/// Pointwise `out(x) = T(a(x), b(x), c(x))` on component-major buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pointwise_product(
    spec: &SystemSpec,
    a: &[C64],
    b: &[C64],
    c: &[C64],
    out: &mut [C64],
    n: usize,
    m: usize,
    exec: Exec,
) {
    // work on mode-major copies so each point is contiguous
    let gather = |src: &[C64]| {
        let mut v = vec![ZERO; n * m];
        for comp in 0..n {
            for x in 0..m {
                v[x * n + comp] = src[comp * m + x];
            }
        }
        v
    };
    let (a, b, c) = (gather(a), gather(b), gather(c));
    let mut mm = vec![ZERO; n * m];
    exec.for_each_block(&mut mm, n, |x, o| {
        spec.t.eval_add(&a[x * n..(x + 1) * n], &b[x * n..(x + 1) * n], &c[x * n..(x + 1) * n], o);
    });
    for comp in 0..n {
        for x in 0..m {
            out[comp * m + x] = mm[x * n + comp];
        }
    }
}

/// Largest `N` accepted by [`trilinear_conv_direct`].
pub const DIRECT_MAX_N: usize = 32;

/// Direct triple sum over `k1 + k2 + k3 = k` with all three modes retained:
/// `(2 pi)^(-1) dk^2 sum T(f1(k1), f2(k2), f3(k3))`.
pub fn trilinear_conv_direct(
    spec: &SystemSpec,
    f1: &SpectralField,
    f2: &SpectralField,
    f3: &SpectralField,
) -> Result<SpectralField> {
    let grid = f1.grid;
    check_args(spec, grid, &[f1, f2, f3])?;
    if grid.n() > DIRECT_MAX_N {
        return Err(Error::TooLarge { n: grid.n(), max: DIRECT_MAX_N });
    }
    let n = spec.n;
    let weight = grid.dk() * grid.dk() / (2.0 * PI);
    let h = (grid.n() / 2) as i64;
    let mut out = SpectralField::zeros(grid, n);
    for k in -h..h {
        let mut acc = vec![ZERO; n];
        for k1 in -h..h {
            for k2 in -h..h {
                let k3 = k - k1 - k2;
                if k3 < -h || k3 >= h {
                    continue;
                }
                spec.t.eval_add(
                    f1.at_mode(k1).unwrap(),
                    f2.at_mode(k2).unwrap(),
                    f3.at_mode(k3).unwrap(),
                    &mut acc,
                );
            }
        }
        let dst = out.at_mut(grid.index_of(k).unwrap());
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a * weight;
        }
    }
    Ok(out)
}

fn check_args(spec: &SystemSpec, grid: Grid, fields: &[&SpectralField]) -> Result<()> {
    for f in fields {
        if f.grid != grid {
            return Err(Error::GridMismatch);
        }
        if f.n != spec.n {
            return Err(Error::SizeMismatch { expected: spec.n, got: f.n });
        }
    }
    Ok(())
}

/// `C_T / (2 pi)`: the constant in `||T(f,g,h)||_L1 <= C ||f||_L1 ||g||_L1 ||h||_L1`
/// (one space dimension), using the rigorous upper bound for `C_T`.
pub fn c_conv(spec: &SystemSpec) -> f64 {
    spec.c_t_upper() / (2.0 * PI)
}
