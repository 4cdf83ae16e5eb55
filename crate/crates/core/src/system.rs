//! Semilinear hyperbolic systems
//!
//! ```text
//!   d/dt u + sum_l A_l d_l u + (1/eps) E u = eps T(u, u, u)
//!   u(0, x) = p(x) exp(i kappa.x / eps) + c.c.
//! ```
//!
//! with symmetric `A_l`, skew-symmetric `E` and a trilinear `T`, plus the
//! carrier data `(omega, kappa, ker L(omega, kappa))` and the envelope profile.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigen::hermitian_eigh;
use crate::error::{Error, Result};
use crate::spectral::Grid;

pub type C64 = Complex64;

/// Callable trilinear map: writes `T(a, b, c)` into `out`.
pub type TrilinearFn = dyn Fn(&[C64], &[C64], &[C64], &mut [C64]) + Send + Sync;

/// The cubic nonlinearity. Built-in systems use the closed-form variants,
/// user systems supply a dense coefficient tensor or a callable.
#[derive(Clone)]
pub enum Trilinear {
    /// `T == 0`, the linear problem.
    Zero,
    /// `T(a, b, c) = (a^T b) M c`, whose diagonal is `|u|^2 M u`.
    NormSquaredTimes(DMatrix<f64>),
    /// `T(a, b, c) = a_s b_s c_s e_t`: the Kerr term of the Lorentz model.
    CubicComponent { source: usize, target: usize },
    /// Dense tensor, `T(a,b,c)_i = sum t[i][p][q][r] a_p b_q c_r`, row-major.
    Tensor { n: usize, coeffs: Vec<f64> },
    Custom(Arc<TrilinearFn>),
}

impl fmt::Debug for Trilinear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trilinear::Zero => write!(f, "Zero"),
            Trilinear::NormSquaredTimes(m) => write!(f, "NormSquaredTimes({m:?})"),
            Trilinear::CubicComponent { source, target } => {
                write!(f, "CubicComponent {{ source: {source}, target: {target} }}")
            }
            Trilinear::Tensor { n, .. } => write!(f, "Tensor {{ n: {n} }}"),
            Trilinear::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Trilinear {
    pub fn is_zero(&self) -> bool {
        matches!(self, Trilinear::Zero)
    }

    /// Adds `T(a, b, c)` to `out`.
    #[inline]
    pub fn eval_add(&self, a: &[C64], b: &[C64], c: &[C64], out: &mut [C64]) {
        match self {
            Trilinear::Zero => {}
            Trilinear::NormSquaredTimes(m) => {
                let n = a.len();
                let mut ab = C64::new(0.0, 0.0);
                for i in 0..n {
                    ab += a[i] * b[i];
                }
                for i in 0..n {
                    let mut s = C64::new(0.0, 0.0);
                    for j in 0..n {
                        s += c[j] * m[(i, j)];
                    }
                    out[i] += ab * s;
                }
            }
            Trilinear::CubicComponent { source, target } => {
                out[*target] += a[*source] * b[*source] * c[*source];
            }
            Trilinear::Tensor { n, coeffs } => {
                let n = *n;
                for i in 0..n {
                    let mut s = C64::new(0.0, 0.0);
                    for p in 0..n {
                        for q in 0..n {
                            let apbq = a[p] * b[q];
                            let base = ((i * n + p) * n + q) * n;
                            for r in 0..n {
                                let t = coeffs[base + r];
                                if t != 0.0 {
                                    s += apbq * c[r] * t;
                                }
                            }
                        }
                    }
                    out[i] += s;
                }
            }
            Trilinear::Custom(f) => {
                let mut tmp = [C64::new(0.0, 0.0); 16];
                let n = out.len();
                if n <= tmp.len() {
                    f(a, b, c, &mut tmp[..n]);
                    for i in 0..n {
                        out[i] += tmp[i];
                    }
                } else {
                    let mut v = vec![C64::new(0.0, 0.0); n];
                    f(a, b, c, &mut v);
                    for i in 0..n {
                        out[i] += v[i];
                    }
                }
            }
        }
    }

    /// `T(u, u, u)` for many real points at once: `u` and `out` are
    /// point-major with `n` components per point.
    pub fn eval_real_batch(&self, n: usize, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), out.len());
        match self {
            Trilinear::Zero => out.fill(0.0),
            Trilinear::NormSquaredTimes(m) => {
                let rows: Vec<f64> = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
                for (v, o) in u.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                    let uu: f64 = v.iter().map(|x| x * x).sum();
                    for (oi, row) in o.iter_mut().zip(rows.chunks_exact(n)) {
                        *oi = uu * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            Trilinear::CubicComponent { source, target } => {
                for (v, o) in u.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                    for x in o.iter_mut() {
                        *x = 0.0;
                    }
                    o[*target] = v[*source] * v[*source] * v[*source];
                }
            }
            _ => {
                for (v, o) in u.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                    self.eval_real_diag(v, o);
                }
            }
        }
    }

    /// Writes `T(u, u, u)` for a real `u` into `out`.
    #[inline]
    pub fn eval_real_diag(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Trilinear::Zero => out.fill(0.0),
            Trilinear::NormSquaredTimes(m) => {
                let uu: f64 = u.iter().map(|x| x * x).sum();
                out.fill(0.0);
                // column-major storage
                for (col, uj) in m.as_slice().chunks_exact(u.len()).zip(u) {
                    let s = uu * uj;
                    for (o, a) in out.iter_mut().zip(col) {
                        *o += a * s;
                    }
                }
            }
            Trilinear::CubicComponent { source, target } => {
                out.fill(0.0);
                out[*target] = u[*source] * u[*source] * u[*source];
            }
            Trilinear::Tensor { n, coeffs } => {
                let n = *n;
                for i in 0..n {
                    let mut s = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            let base = ((i * n + p) * n + q) * n;
                            let upq = u[p] * u[q];
                            for r in 0..n {
                                s += coeffs[base + r] * upq * u[r];
                            }
                        }
                    }
                    out[i] = s;
                }
            }
            Trilinear::Custom(_) => {
                let n = u.len();
                let z: Vec<C64> = u.iter().map(|x| C64::new(*x, 0.0)).collect();
                let mut o = vec![C64::new(0.0, 0.0); n];
                self.eval_add(&z, &z, &z, &mut o);
                for (d, s) in out.iter_mut().zip(o) {
                    *d = s.re;
                }
            }
        }
    }
}

/// A system of the form above. Immutable once built; share freely.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub name: String,
    pub d: usize,
    pub n: usize,
    pub a: Vec<DMatrix<f64>>,
    pub e: DMatrix<f64>,
    pub t: Trilinear,
}

impl SystemSpec {
    /// Builds and validates a system.
    pub fn new(name: impl Into<String>, a: Vec<DMatrix<f64>>, e: DMatrix<f64>, t: Trilinear) -> Result<Self> {
        let spec = SystemSpec {
            name: name.into(),
            d: a.len(),
            n: e.nrows(),
            a,
            e,
            t,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks symmetry of every `A_l`, skew-symmetry of `E`, and trilinearity
    /// plus conjugation equivariance of `T` on pseudo-random vectors.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 || self.d == 0 {
            return Err(Error::InvalidSystem("empty system".into()));
        }
        if !self.e.is_square() {
            return Err(Error::InvalidSystem("E must be square".into()));
        }
        for (l, al) in self.a.iter().enumerate() {
            if al.nrows() != n || al.ncols() != n {
                return Err(Error::InvalidSystem(format!("A_{} is not {n}x{n}", l + 1)));
            }
            if (al - al.transpose()).amax() != 0.0 {
                return Err(Error::InvalidSystem(format!("A_{} is not symmetric", l + 1)));
            }
        }
        if (&self.e + self.e.transpose()).amax() != 0.0 {
            return Err(Error::InvalidSystem("E is not skew-symmetric".into()));
        }
        match &self.t {
            Trilinear::NormSquaredTimes(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::InvalidSystem(format!("M is not {n}x{n}")));
                }
            }
            Trilinear::CubicComponent { source, target } => {
                if *source >= n || *target >= n {
                    return Err(Error::InvalidSystem("cubic component index out of range".into()));
                }
            }
            Trilinear::Tensor { n: tn, coeffs } => {
                if *tn != n || coeffs.len() != n * n * n * n {
                    return Err(Error::InvalidSystem(format!("T tensor must have {} entries", n.pow(4))));
                }
            }
            Trilinear::Zero | Trilinear::Custom(_) => {}
        }
        let defect = self.trilinearity_defect(8);
        if !(defect <= 1e-12) {
            return Err(Error::InvalidSystem(format!(
                "T fails trilinearity/conjugation checks (defect {defect:.3e})"
            )));
        }
        Ok(())
    }

    /// Largest relative violation of slot-wise linearity and of
    /// `T(conj a, conj b, conj c) = conj T(a, b, c)` over `trials` samples.
    pub fn trilinearity_defect(&self, trials: usize) -> f64 {
        let n = self.n;
        // fixed seed keeps validation reproducible
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
        let mut next = move || rng.random_range(-1.0..1.0);
        let vec = |next: &mut dyn FnMut() -> f64| -> Vec<C64> { (0..n).map(|_| C64::new(next(), next())).collect() };
        let mut worst = 0.0_f64;
        for _ in 0..trials {
            let a = vec(&mut next);
            let a2 = vec(&mut next);
            let b = vec(&mut next);
            let c = vec(&mut next);
            let s = C64::new(next(), next());
            let base = self.eval_t(&a, &b, &c);
            let scale = 1.0 + base.iter().map(|z| z.norm()).fold(0.0, f64::max);

            let conj = |v: &[C64]| v.iter().map(|z| z.conj()).collect::<Vec<_>>();
            let tc = self.eval_t(&conj(&a), &conj(&b), &conj(&c));
            for (x, y) in tc.iter().zip(&base) {
                worst = worst.max((x - y.conj()).norm() / scale);
            }
            // additivity and homogeneity in each slot
            let mix: Vec<C64> = a.iter().zip(&a2).map(|(x, y)| x * s + y).collect();
            let t_a2 = self.eval_t(&a2, &b, &c);
            for slot in 0..3 {
                let (lhs, rhs): (Vec<C64>, Vec<C64>) = match slot {
                    0 => (self.eval_t(&mix, &b, &c), base.iter().zip(&t_a2).map(|(x, y)| x * s + y).collect()),
                    1 => (
                        self.eval_t(&b, &mix, &c),
                        self.eval_t(&b, &a, &c)
                            .iter()
                            .zip(&self.eval_t(&b, &a2, &c))
                            .map(|(x, y)| x * s + y)
                            .collect(),
                    ),
                    _ => (
                        self.eval_t(&b, &c, &mix),
                        self.eval_t(&b, &c, &a)
                            .iter()
                            .zip(&self.eval_t(&b, &c, &a2))
                            .map(|(x, y)| x * s + y)
                            .collect(),
                    ),
                };
                let sc = 1.0 + rhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for (x, y) in lhs.iter().zip(&rhs) {
                    worst = worst.max((x - y).norm() / sc);
                }
            }
        }
        worst
    }

    /// `A(beta) = sum_l beta_l A_l`.
    pub fn assemble_a(&self, beta: &[f64]) -> DMatrix<f64> {
        assert_eq!(beta.len(), self.d, "beta must have d = {} components", self.d);
        let mut out = DMatrix::zeros(self.n, self.n);
        for (b, al) in beta.iter().zip(&self.a) {
            out += al * *b;
        }
        out
    }

    /// `L(alpha, beta) = -alpha I + A(beta) - i E`, Hermitian.
    pub fn assemble_l(&self, alpha: f64, beta: &[f64]) -> DMatrix<C64> {
        let a = self.assemble_a(beta);
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let diag = if i == j { -alpha } else { 0.0 };
            C64::new(a[(i, j)] + diag, -self.e[(i, j)])
        })
    }

    /// Complex trilinear extension of `T`.
    pub fn eval_t(&self, a: &[C64], b: &[C64], c: &[C64]) -> Vec<C64> {
        assert!(a.len() == self.n && b.len() == self.n && c.len() == self.n);
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        self.t.eval_add(a, b, c, &mut out);
        out
    }

    /// The same system with `T` replaced by zero.
    pub fn linearized(&self) -> SystemSpec {
        SystemSpec {
            name: format!("{} (linear)", self.name),
            t: Trilinear::Zero,
            ..self.clone()
        }
    }

    /// Operator-norm upper bound `C_T >= sup |T(a,b,c)|_2` over unit vectors,
    /// from `|T(e_p, e_q, e_r)|_2 <= C*` and `|v|_1 <= sqrt(n) |v|_2`.
    pub fn c_t_upper(&self) -> f64 {
        let n = self.n;
        let e = |i: usize| -> Vec<C64> {
            let mut v = vec![C64::new(0.0, 0.0); n];
            v[i] = C64::new(1.0, 0.0);
            v
        };
        let mut cstar = 0.0_f64;
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    let t = self.eval_t(&e(p), &e(q), &e(r));
                    cstar = cstar.max(t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
                }
            }
        }
        cstar * (n as f64).powf(1.5)
    }

    /// Sampled estimate of `C_T` (a lower bound for the true supremum).
    pub fn c_t_sampled(&self, samples: usize) -> f64 {
        let n = self.n;
        let mut rng = ChaCha8Rng::seed_from_u64(0x2545_f491_4f6c_dd1d);
        let mut next = move || rng.random_range(-1.0..1.0);
        let unit = |next: &mut dyn FnMut() -> f64| {
            let v: Vec<C64> = (0..n).map(|_| C64::new(next(), next())).collect();
            let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|z| z / nv).collect::<Vec<_>>()
        };
        let mut best = 0.0_f64;
        for _ in 0..samples {
            let a = unit(&mut next);
            let b = unit(&mut next);
            let c = unit(&mut next);
            let t = self.eval_t(&a, &b, &c);
            best = best.max(t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        }
        best
    }
}

/// Klein-Gordon system in one space dimension with `u = (u_1, u_2)`:
/// `A_1 = [[0, 1], [1, 0]]`, `E = [[0, -nu], [nu, 0]]`, `T = |u|^2 M u`.
pub fn builtin_klein_gordon(nu: f64, m: DMatrix<f64>) -> Result<SystemSpec> {
    if nu == 0.0 || !nu.is_finite() {
        return Err(Error::InvalidSystem("nu must be nonzero".into()));
    }
    if m.nrows() != 2 || m.ncols() != 2 {
        return Err(Error::InvalidSystem("M must be 2x2".into()));
    }
    if (&m + m.transpose()).amax() != 0.0 {
        return Err(Error::InvalidSystem("M must be skew-symmetric".into()));
    }
    let a1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let e = DMatrix::from_row_slice(2, 2, &[0.0, -nu, nu, 0.0]);
    SystemSpec::new("klein_gordon", vec![a1], e, Trilinear::NormSquaredTimes(m))
}

/// The default Klein-Gordon instance: `nu = 1`, `M = [[0, -1], [1, 0]]`.
pub fn klein_gordon_default() -> SystemSpec {
    builtin_klein_gordon(1.0, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).expect("valid built-in")
}

/// Maxwell-Lorentz with a Kerr polarization, one transverse polarization in
/// 1D. State `(B_z, E_y, Q_y, P_y)`:
///
/// ```text
///   dB/dt = -dE/dx
///   dE/dt = -dB/dx - Q/eps
///   dQ/dt = (E - P)/eps + eps P^3
///   dP/dt = Q/eps
/// ```
pub fn builtin_maxwell_lorentz_1d() -> SystemSpec {
    let mut a1 = DMatrix::zeros(4, 4);
    a1[(0, 1)] = 1.0;
    a1[(1, 0)] = 1.0;
    let mut e = DMatrix::zeros(4, 4);
    e[(1, 2)] = 1.0;
    e[(2, 1)] = -1.0;
    e[(2, 3)] = 1.0;
    e[(3, 2)] = -1.0;
    SystemSpec::new(
        "maxwell_lorentz_1d",
        vec![a1],
        e,
        Trilinear::CubicComponent { source: 3, target: 2 },
    )
    .expect("valid built-in")
}

/// Which eigenvalue of `A(kappa) - iE` is the carrier frequency.
#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchSelector {
    /// Smallest strictly positive eigenvalue.
    #[default]
    SmallestPositive,
    /// Index into the ascending eigenvalue list.
    Index(usize),
    /// Eigenvalue closest to the given value.
    Nearest(f64),
}

/// Carrier wave: `(kappa, omega)` with `det L(omega, kappa) = 0` and the
/// unit vector spanning `ker L(omega, kappa)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionData {
    pub kappa: Vec<f64>,
    pub omega: f64,
    pub eig_index: usize,
    pub kernel_vec: Vec<C64>,
}

/// Relative singular-value gap used to decide the kernel dimension.
pub const KERNEL_RTOL: f64 = 1e-8;

/// Picks the carrier frequency `omega` as an eigenvalue of `A(kappa) - iE`
/// and checks that `ker L(omega, kappa)` is one-dimensional.
pub fn find_dispersion(spec: &SystemSpec, kappa: &[f64], selector: BranchSelector) -> Result<DispersionData> {
    if kappa.len() != spec.d {
        return Err(Error::SizeMismatch { expected: spec.d, got: kappa.len() });
    }
    if kappa.iter().all(|k| *k == 0.0) {
        return Err(Error::ZeroWaveVector);
    }
    let (vals, vecs) = hermitian_eigh(&spec.assemble_l(0.0, kappa));
    let scale = vals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let idx = match selector {
        BranchSelector::SmallestPositive => vals
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > KERNEL_RTOL * scale)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::InvalidSystem("A(kappa) - iE has no positive eigenvalue".into()))?,
        BranchSelector::Index(i) => {
            if i >= vals.len() {
                return Err(Error::InvalidSystem(format!("branch index {i} out of range")));
            }
            i
        }
        BranchSelector::Nearest(w) => vals
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - w).abs().total_cmp(&(b.1 - w).abs()))
            .map(|(i, _)| i)
            .expect("n > 0"),
    };
    let omega = vals[idx];
    let sv = singular_values(&spec.assemble_l(omega, kappa));
    let dim = kernel_dimension(&sv);
    if dim != 1 {
        return Err(Error::KernelDimension { dim, singular_values: sv });
    }
    let mut kernel_vec: Vec<C64> = vecs.column(idx).iter().copied().collect();
    fix_phase(&mut kernel_vec);
    Ok(DispersionData {
        kappa: kappa.to_vec(),
        omega,
        eig_index: idx,
        kernel_vec,
    })
}

/// Singular values of a Hermitian matrix (absolute eigenvalues), ascending.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let (vals, _) = hermitian_eigh(m);
    let mut sv: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
    sv.sort_by(f64::total_cmp);
    sv
}

/// Number of singular values below `KERNEL_RTOL` relative to the largest.
pub fn kernel_dimension(sv: &[f64]) -> usize {
    let smax = sv.iter().fold(0.0_f64, |m, v| m.max(*v));
    let tol = KERNEL_RTOL * smax.max(1.0);
    sv.iter().filter(|s| **s <= tol).count()
}

/// Rotates `v` so its largest-magnitude entry is real and positive. Ties
/// (within 1e-10 relative) go to the lowest index.
pub fn fix_phase(v: &mut [C64]) {
    let vmax = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if vmax == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= vmax * (1.0 - 1e-10)).expect("nonempty");
    let rot = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

/// Envelope shape.
#[derive(Clone, Debug, PartialEq)]
pub enum ProfileKind {
    /// `amplitude * exp(-(x - center)^2 / (2 width^2))`.
    Gaussian { amplitude: f64, center: f64, width: f64 },
    /// Real scalar amplitude samples on the torus grid `x_m = -L/2 + m L/N`.
    Sampled { samples: Vec<f64> },
}

/// The envelope `p(x) = g(x) * polarization` in the initial data.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeProfile {
    pub kind: ProfileKind,
    pub polarization: Vec<C64>,
}

/// Tolerance for `|p(+-L/2)| / max|p|`.
pub const PERIODIZATION_TOL: f64 = 1e-12;

impl EnvelopeProfile {
    pub fn gaussian(amplitude: f64, center: f64, width: f64, polarization: Vec<C64>) -> Self {
        EnvelopeProfile {
            kind: ProfileKind::Gaussian { amplitude, center, width },
            polarization,
        }
    }

    /// Scalar amplitude `g(x)`.
    pub fn scalar(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::Gaussian { amplitude, center, width } => {
                let s = (x - center) / width;
                amplitude * (-0.5 * s * s).exp()
            }
            ProfileKind::Sampled { .. } => panic!("sampled profiles have no closed form; use samples()"),
        }
    }

    /// Physical samples of `p` on `grid`, mode-major `[x][component]`.
    pub fn samples(&self, grid: &Grid) -> Result<Vec<C64>> {
        let n = self.polarization.len();
        let g: Vec<f64> = match &self.kind {
            ProfileKind::Gaussian { .. } => (0..grid.n()).map(|m| self.scalar(grid.x(m))).collect(),
            ProfileKind::Sampled { samples } => {
                if samples.len() != grid.n() {
                    return Err(Error::SizeMismatch { expected: grid.n(), got: samples.len() });
                }
                samples.clone()
            }
        };
        let mut out = Vec::with_capacity(grid.n() * n);
        for gm in g {
            out.extend(self.polarization.iter().map(|p| p * gm));
        }
        Ok(out)
    }

    /// Checks polarization along `disp.kernel_vec` and decay at the torus
    /// boundary.
    pub fn validate(&self, disp: &DispersionData, grid: &Grid) -> Result<()> {
        let kv = &disp.kernel_vec;
        if kv.len() != self.polarization.len() {
            return Err(Error::SizeMismatch { expected: kv.len(), got: self.polarization.len() });
        }
        let pn = self.polarization.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if pn == 0.0 {
            return Err(Error::Polarization(1.0));
        }
        let overlap: C64 = kv.iter().zip(&self.polarization).map(|(k, p)| k.conj() * p).sum();
        let resid = self
            .polarization
            .iter()
            .zip(kv)
            .map(|(p, k)| (p - k * overlap).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / pn;
        if resid > 1e-10 {
            return Err(Error::Polarization(resid));
        }
        let ratio = match &self.kind {
            ProfileKind::Gaussian { .. } => {
                let half = grid.length() / 2.0;
                let peak = self.peak_abs();
                self.scalar(-half).abs().max(self.scalar(half).abs()) / peak
            }
            ProfileKind::Sampled { samples } => {
                let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
                if peak == 0.0 {
                    0.0
                } else {
                    samples[0].abs() / peak
                }
            }
        };
        if ratio > PERIODIZATION_TOL {
            return Err(Error::Periodization(ratio));
        }
        Ok(())
    }

    fn peak_abs(&self) -> f64 {
        match &self.kind {
            ProfileKind::Gaussian { amplitude, .. } => amplitude.abs(),
            ProfileKind::Sampled { samples } => samples.iter().fold(0.0_f64, |m, s| m.max(s.abs())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn real_diagonal_matches_complex_path() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let tensor = Trilinear::Tensor { n: 3, coeffs: (0..81).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let norm = Trilinear::NormSquaredTimes(DMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 - 1.5));
        let cubic = Trilinear::CubicComponent { source: 2, target: 0 };
        for t in [tensor, norm, cubic, Trilinear::Zero] {
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z: Vec<C64> = u.iter().map(|x| c(*x, 0.0)).collect();
            let mut want = vec![c(0.0, 0.0); 3];
            t.eval_add(&z, &z, &z, &mut want);
            let mut got = vec![7.0; 3];
            t.eval_real_diag(&u, &mut got);
            for (g, w) in got.iter().zip(&want) {
                assert!(w.im.abs() < 1e-14);
                assert_relative_eq!(*g, w.re, epsilon = 1e-12);
            }
            let twice: Vec<f64> = u.iter().chain(&u).copied().collect();
            let mut batch = vec![7.0; 6];
            t.eval_real_batch(3, &twice, &mut batch);
            for (b, g) in batch.iter().zip(got.iter().chain(&got)) {
                assert_relative_eq!(*b, *g, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn assemble_a_examples() {
        let kg = klein_gordon_default();
        let a = kg.assemble_a(&[1.0]);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(kg.assemble_a(&[0.0]).amax(), 0.0);

        let ml = builtin_maxwell_lorentz_1d();
        let a2 = ml.assemble_a(&[2.0]);
        let mut expect = DMatrix::zeros(4, 4);
        expect[(0, 1)] = 2.0;
        expect[(1, 0)] = 2.0;
        assert_eq!(a2, expect);
        assert_eq!((&a2 - a2.transpose()).amax(), 0.0);
    }

    #[test]
    fn assemble_l_examples() {
        let kg = klein_gordon_default();
        let l = kg.assemble_l(0.0, &[0.0]);
        assert_eq!(l[(0, 0)], c(0.0, 0.0));
        assert_eq!(l[(0, 1)], c(0.0, 1.0));
        assert_eq!(l[(1, 0)], c(0.0, -1.0));
        let (vals, _) = hermitian_eigh(&l);
        assert_relative_eq!(vals[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-14);

        // det L(sqrt 2, 1) = omega^2 - (kappa^2 + nu^2) = 0
        let l = kg.assemble_l(2f64.sqrt(), &[1.0]);
        let det = l[(0, 0)] * l[(1, 1)] - l[(0, 1)] * l[(1, 0)];
        assert!(det.norm() < 1e-14);

        let free = SystemSpec::new(
            "free",
            vec![DMatrix::zeros(2, 2)],
            DMatrix::zeros(2, 2),
            Trilinear::Zero,
        )
        .unwrap();
        assert_eq!(free.assemble_l(0.0, &[0.0]).iter().map(|z| z.norm()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn alpha_shift_is_exact() {
        let ml = builtin_maxwell_lorentz_1d();
        for &(alpha, beta) in &[(0.3, 0.7), (-2.5, 1.25), (1e3, -4.0)] {
            let d = ml.assemble_l(alpha, &[beta]) - ml.assemble_l(0.0, &[beta]);
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { -alpha } else { 0.0 };
                    assert_eq!(d[(i, j)], c(want, 0.0));
                }
            }
        }
    }

    #[test]
    fn eval_t_examples() {
        let kg = klein_gordon_default();
        let e1 = [c(1.0, 0.0), c(0.0, 0.0)];
        assert_eq!(kg.eval_t(&e1, &e1, &e1), vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let zero = [c(0.0, 0.0); 2];
        assert_eq!(kg.eval_t(&zero, &e1, &e1), vec![c(0.0, 0.0); 2]);
        // diagonal reproduces |u|^2 M u for real u
        let u = [c(0.3, 0.0), c(-1.7, 0.0)];
        let t = kg.eval_t(&u, &u, &u);
        let n2 = 0.09 + 2.89;
        assert_relative_eq!(t[0].re, n2 * 1.7, epsilon = 1e-14);
        assert_relative_eq!(t[1].re, n2 * 0.3, epsilon = 1e-14);

        let ml = builtin_maxwell_lorentz_1d();
        let u = [c(0.2, 0.0), c(-0.4, 0.0), c(1.1, 0.0), c(0.7, 0.0)];
        let t = ml.eval_t(&u, &u, &u);
        assert_eq!(t, vec![c(0.0, 0.0), c(0.0, 0.0), c(0.7f64.powi(3), 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn builtins_satisfy_invariants() {
        for spec in [klein_gordon_default(), builtin_maxwell_lorentz_1d()] {
            spec.validate().unwrap();
            assert!(spec.trilinearity_defect(32) < 1e-13);
        }
    }

    #[test]
    fn klein_gordon_rejects_bad_input() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(builtin_klein_gordon(0.0, m.clone()).is_err());
        assert!(builtin_klein_gordon(1.0, DMatrix::identity(2, 2)).is_err());
        // nu = 2: eigenvalues of L(0, beta) are +-sqrt(beta^2 + 4)
        let kg2 = builtin_klein_gordon(2.0, m).unwrap();
        for beta in [-3.0, 0.0, 0.5, 2.0] {
            let (vals, _) = hermitian_eigh(&kg2.assemble_l(0.0, &[beta]));
            let r = (beta * beta + 4.0_f64).sqrt();
            assert_relative_eq!(vals[0], -r, epsilon = 1e-13);
            assert_relative_eq!(vals[1], r, epsilon = 1e-13);
        }
    }

    #[test]
    fn maxwell_lorentz_spectrum_at_zero() {
        let ml = builtin_maxwell_lorentz_1d();
        let (vals, _) = hermitian_eigh(&ml.assemble_l(0.0, &[0.0]));
        let s2 = 2f64.sqrt();
        let want = [-s2, 0.0, 0.0, s2];
        for (v, w) in vals.iter().zip(want) {
            assert!((v - w).abs() < 1e-13, "{vals:?}");
        }
        // sampled eigenvalue branches are Lipschitz with constant <= |A_1|_2 = 1
        let mut prev = hermitian_eigh(&ml.assemble_l(0.0, &[-5.0])).0;
        let h = 0.01;
        for i in 1..=1000 {
            let beta = -5.0 + i as f64 * h;
            let cur = hermitian_eigh(&ml.assemble_l(0.0, &[beta])).0;
            for (a, b) in cur.iter().zip(&prev) {
                assert!((a - b).abs() <= h * (1.0 + 1e-9));
            }
            prev = cur;
        }
    }

    #[test]
    fn dispersion_klein_gordon() {
        let kg = klein_gordon_default();
        let disp = find_dispersion(&kg, &[1.0], BranchSelector::default()).unwrap();
        assert_relative_eq!(disp.omega, 2f64.sqrt(), epsilon = 1e-14);
        // kernel spanned by (kappa + i nu, omega)
        let want = [c(1.0, 1.0), c(2f64.sqrt(), 0.0)];
        let wn = 2.0;
        let overlap: C64 = want.iter().zip(&disp.kernel_vec).map(|(w, k)| w.conj() * k).sum();
        assert_relative_eq!(overlap.norm() / wn, 1.0, epsilon = 1e-13);
        let norm = disp.kernel_vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-12);
        let l = kg.assemble_l(disp.omega, &[1.0]);
        let lv = &l * nalgebra::DVector::from_vec(disp.kernel_vec.clone());
        assert!(lv.norm() <= 1e-10 * l.norm());

        assert!(matches!(
            find_dispersion(&kg, &[0.0], BranchSelector::default()),
            Err(Error::ZeroWaveVector)
        ));
    }

    #[test]
    fn dispersion_maxwell_lorentz() {
        let ml = builtin_maxwell_lorentz_1d();
        let disp = find_dispersion(&ml, &[1.0], BranchSelector::default()).unwrap();
        // light-like branch: omega^2 = (3 - sqrt 5)/2 for kappa = 1
        assert_relative_eq!(disp.omega, (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-13);
        let sv = singular_values(&ml.assemble_l(disp.omega, &[1.0]));
        assert!(sv[1] > 1e-8);
    }

    #[test]
    fn kernel_dimension_two_is_rejected() {
        // E = 0, A(kappa) of rank n - 2 and omega = 0 (eigenvalue 0 has multiplicity 2)
        let a1 = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let spec = SystemSpec::new("degenerate", vec![a1], DMatrix::zeros(3, 3), Trilinear::Zero).unwrap();
        let err = find_dispersion(&spec, &[1.0], BranchSelector::Nearest(0.0)).unwrap_err();
        assert!(matches!(err, Error::KernelDimension { dim: 2, .. }));
    }

    #[test]
    fn tensor_and_callable_match_builtin() {
        let kg = klein_gordon_default();
        let m = [[0.0, -1.0], [1.0, 0.0]];
        let mut coeffs = vec![0.0; 16];
        for i in 0..2 {
            for p in 0..2 {
                for r in 0..2 {
                    // (a.b) (M c)_i: q == p
                    coeffs[((i * 2 + p) * 2 + p) * 2 + r] += m[i][r];
                }
            }
        }
        let tensor = SystemSpec::new(
            "kg-tensor",
            kg.a.clone(),
            kg.e.clone(),
            Trilinear::Tensor { n: 2, coeffs },
        )
        .unwrap();
        let call = SystemSpec::new(
            "kg-callable",
            kg.a.clone(),
            kg.e.clone(),
            Trilinear::Custom(Arc::new(|a: &[C64], b: &[C64], c: &[C64], out: &mut [C64]| {
                let ab = a[0] * b[0] + a[1] * b[1];
                out[0] = -ab * c[1];
                out[1] = ab * c[0];
            })),
        )
        .unwrap();
        let a = [c(0.3, -0.2), c(1.0, 0.5)];
        let b = [c(-0.7, 0.1), c(0.2, 0.9)];
        let cc = [c(0.4, 0.4), c(-1.2, 0.0)];
        let t0 = kg.eval_t(&a, &b, &cc);
        for other in [&tensor, &call] {
            let t = other.eval_t(&a, &b, &cc);
            for (x, y) in t.iter().zip(&t0) {
                assert!((x - y).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn non_trilinear_callable_is_rejected() {
        let kg = klein_gordon_default();
        let bad = SystemSpec::new(
            "bad",
            kg.a.clone(),
            kg.e.clone(),
            Trilinear::Custom(Arc::new(|a: &[C64], _b: &[C64], _c: &[C64], out: &mut [C64]| {
                out[0] = a[0].conj();
                out[1] = C64::new(0.0, 0.0);
            })),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn c_t_bounds_are_ordered() {
        for spec in [klein_gordon_default(), builtin_maxwell_lorentz_1d()] {
            let lo = spec.c_t_sampled(2000);
            let hi = spec.c_t_upper();
            assert!(lo > 0.0 && lo <= hi);
        }
    }

    #[test]
    fn profile_validation() {
        let kg = klein_gordon_default();
        let disp = find_dispersion(&kg, &[1.0], BranchSelector::default()).unwrap();
        let grid = Grid::new(64.0 * std::f64::consts::PI, 256).unwrap();
        let p = EnvelopeProfile::gaussian(0.5, 0.0, 2.0, disp.kernel_vec.clone());
        p.validate(&disp, &grid).unwrap();

        let rotated: Vec<C64> = disp.kernel_vec.iter().map(|z| z * C64::from_polar(2.0, 0.7)).collect();
        EnvelopeProfile::gaussian(0.5, 0.0, 2.0, rotated).validate(&disp, &grid).unwrap();

        let off = EnvelopeProfile::gaussian(0.5, 0.0, 2.0, vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(off.validate(&disp, &grid), Err(Error::Polarization(_))));

        let wide = EnvelopeProfile::gaussian(0.5, 0.0, 20.0, disp.kernel_vec.clone());
        assert!(matches!(wide.validate(&disp, &grid), Err(Error::Periodization(_))));
    }
}
